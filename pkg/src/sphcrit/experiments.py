"""Monte Carlo ensembles and the statistical verdicts built on them.

One replicate samples a field, takes its critical-point census and the
excursion functionals, and is summarised in a :class:`ReplicateRecord`.
Ensembles are reduced to per-degree summaries in which every empirical
number sits next to its analytic prediction and a standard error.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from . import analytic, kernels
from .analytic import CHAOS_SIGN, Interval
from .critical import (
    FinderConfig,
    IncompleteCensusError,
    euler_characteristic_excursion,
    excursion_areas,
    filter_by_value,
    find_critical_points,
)
from .field import (
    QuadratureSpec,
    covariant_from_chart,
    fourth_chaos_statistic,
    h2_integral,
    replicate_seed,
    sample_coefficients,
    second_chaos_statistic,
)

MAX_EXCLUDED_FRACTION = 0.01
DEGENERATE_LEVEL_GAP = 0.05


class EnsembleAbort(RuntimeError):
    """Too many incomplete censuses: the finder is misconfigured."""


# configuration -------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    ells: tuple = (10,)
    interval: Interval = Interval.above(1.0)
    u_list: tuple = (0.0, 1.0)
    replicates: int = 100
    master_seed: int = 20240901
    finder: FinderConfig = FinderConfig()
    quadrature_factor: int = 2
    records_path: str = "records.csv"
    summary_path: str = "summary.json"

    def __post_init__(self):
        if self.replicates < 2:
            raise ValueError("replicate count must be >= 2")
        if not self.ells or min(self.ells) < 2:
            raise ValueError("every ell must be >= 2")
        if self.quadrature_factor < 1:
            raise ValueError("quadrature_factor must be >= 1")

    def to_dict(self) -> dict:
        return {
            "ells": list(self.ells),
            "interval": str(self.interval),
            "u_list": list(self.u_list),
            "replicates": self.replicates,
            "master_seed": self.master_seed,
            "finder": self.finder.to_dict(),
            "quadrature_factor": self.quadrature_factor,
            "records_path": self.records_path,
            "summary_path": self.summary_path,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "ells" in d:
            d["ells"] = tuple(int(x) for x in d["ells"])
        if "interval" in d:
            iv = d["interval"]
            d["interval"] = Interval.parse(iv) if isinstance(iv, str) else Interval(float(iv[0]), float(iv[1]))
        if "u_list" in d:
            d["u_list"] = tuple(float(u) for u in d["u_list"])
        if "finder" in d:
            d["finder"] = FinderConfig(**d["finder"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


# records -------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplicateRecord:
    index: int
    seed: int
    ell: int
    interval: str
    n_total: int
    n_max: int
    n_min: int
    n_saddle: int
    n_in_interval: int
    s_ell: float
    h2_integral: float
    h4_integral: float
    u_list: tuple
    areas: tuple
    euler_chars: tuple
    seeds_tried: int = 0
    newton_failures: int = 0
    dedupe_merges: int = 0
    refined: bool = False
    euler_ok: bool = True


_BASE_COLUMNS = ("index", "seed", "ell", "interval", "n_total", "n_max", "n_min", "n_saddle",
                 "n_in_interval", "s_ell", "h2_integral", "h4_integral")
_DIAG_COLUMNS = ("seeds_tried", "newton_failures", "dedupe_merges", "refined", "euler_ok")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def record_columns(u_list: Sequence[float]) -> list:
    cols = list(_BASE_COLUMNS)
    cols += [f"area_u={u:.17g}" for u in u_list]
    cols += [f"chi_u={u:.17g}" for u in u_list]
    return cols + list(_DIAG_COLUMNS)


def records_to_csv(records: Sequence[ReplicateRecord], u_list: Sequence[float] | None = None) -> str:
    """Fixed-column CSV; the u thresholds are encoded in the header."""
    if u_list is None:
        u_list = records[0].u_list if records else ()
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(record_columns(u_list))
    for r in records:
        row = [getattr(r, c) for c in _BASE_COLUMNS]
        row += list(r.areas) + list(r.euler_chars)
        row += [getattr(r, c) for c in _DIAG_COLUMNS]
        w.writerow([_fmt(x) for x in row])
    return out.getvalue()


def records_from_csv(text: str) -> list:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    u_list = tuple(float(h.split("=", 1)[1]) for h in header if h.startswith("area_u="))
    if header != record_columns(u_list):
        raise ValueError("unexpected record columns")
    k = len(u_list)
    nb = len(_BASE_COLUMNS)
    out = []
    for row in reader:
        base = dict(zip(_BASE_COLUMNS, row[:nb]))
        diag = dict(zip(_DIAG_COLUMNS, row[nb + 2 * k:]))
        out.append(ReplicateRecord(
            index=int(base["index"]), seed=int(base["seed"]), ell=int(base["ell"]),
            interval=base["interval"], n_total=int(base["n_total"]), n_max=int(base["n_max"]),
            n_min=int(base["n_min"]), n_saddle=int(base["n_saddle"]),
            n_in_interval=int(base["n_in_interval"]), s_ell=float(base["s_ell"]),
            h2_integral=float(base["h2_integral"]), h4_integral=float(base["h4_integral"]),
            u_list=u_list,
            areas=tuple(float(x) for x in row[nb:nb + k]),
            euler_chars=tuple(int(x) for x in row[nb + k:nb + 2 * k]),
            seeds_tried=int(diag["seeds_tried"]), newton_failures=int(diag["newton_failures"]),
            dedupe_merges=int(diag["dedupe_merges"]), refined=diag["refined"] == "1",
            euler_ok=diag["euler_ok"] == "1",
        ))
    return out


def run_replicate(ell: int, index: int, config: ExperimentConfig) -> ReplicateRecord | None:
    """One replicate; ``None`` when the census is incomplete."""
    seed = replicate_seed(config.master_seed, index)
    coeffs = sample_coefficients(ell, seed)
    try:
        census = find_critical_points(coeffs, config.finder)
    except IncompleteCensusError:
        return None
    n_max, n_min, n_saddle = census.counts
    spec = QuadratureSpec.default(ell)
    areas = excursion_areas(coeffs, config.u_list, QuadratureSpec.default(ell, config.quadrature_factor))
    chis = [euler_characteristic_excursion(census, u) for u in config.u_list]
    return ReplicateRecord(
        index=int(index), seed=int(seed), ell=int(ell), interval=str(config.interval),
        n_total=census.n_total, n_max=n_max, n_min=n_min, n_saddle=n_saddle,
        n_in_interval=filter_by_value(census, config.interval),
        s_ell=second_chaos_statistic(coeffs),
        h2_integral=h2_integral(coeffs, spec),
        h4_integral=fourth_chaos_statistic(coeffs, spec),
        u_list=tuple(config.u_list), areas=tuple(areas), euler_chars=tuple(chis),
        seeds_tried=census.seeds_tried, newton_failures=census.newton_failures,
        dedupe_merges=census.dedupe_merges, refined=census.refined, euler_ok=census.complete,
    )


def _work(args):
    ell, index, config = args
    return ell, index, run_replicate(ell, index, config)


# mergeable moments -------------------------------------------------------------------

class Moments:
    """Streaming mean and co-moment matrix of a fixed set of columns.

    Two accumulators combine with :meth:`merge` (the pairwise update of Chan,
    Golub and LeVeque), so partial ensembles can be reduced in any grouping.
    """

    def __init__(self, dim: int):
        self.n = 0
        self.mean = np.zeros(dim)
        self.comoment = np.zeros((dim, dim))

    @classmethod
    def from_rows(cls, rows) -> "Moments":
        rows = np.atleast_2d(np.asarray(rows, float))
        m = cls(rows.shape[1])
        if rows.shape[0]:
            m.n = rows.shape[0]
            m.mean = rows.mean(axis=0)
            d = rows - m.mean
            m.comoment = d.T @ d
        return m

    def merge(self, other: "Moments") -> "Moments":
        out = Moments(len(self.mean))
        n = self.n + other.n
        if n == 0:
            return out
        delta = other.mean - self.mean
        out.n = n
        out.mean = self.mean + delta * (other.n / n)
        out.comoment = self.comoment + other.comoment + np.outer(delta, delta) * (self.n * other.n / n)
        return out

    @property
    def cov(self) -> np.ndarray:
        return self.comoment / (self.n - 1)

    @property
    def corr(self) -> np.ndarray:
        c = self.cov
        sd = np.sqrt(np.diag(c))
        with np.errstate(invalid="ignore", divide="ignore"):
            r = c / np.outer(sd, sd)
        return np.clip(r, -1.0, 1.0)


# verdicts -------------------------------------------------------------------------------

def _select(records, ell):
    out = [r for r in records if r.ell == ell and r.euler_ok]
    return sorted(out, key=lambda r: r.index)


def _corr_se(r, n):
    return (1.0 - r * r) / math.sqrt(max(n - 3, 1))


def verify_reduction(records, ell: int, interval: Interval) -> dict:
    """Correlation and regression slope of the centred count on ``S_l``.

    Both signed and absolute values are reported; the predicted slope is
    ``CHAOS_SIGN * reduction_coefficient``.
    """
    p3 = analytic.interval_integral(analytic.density_p3, interval)
    if abs(p3) < 1e-6:
        raise ValueError("int_I p3 vanishes: the leading prediction is degenerate for this interval")
    rec = _select(records, ell)
    if len(rec) < 100:
        raise ValueError(f"need >= 100 included records at ell={ell}, have {len(rec)}")
    if any(r.interval != str(interval) for r in rec):
        raise ValueError("records were filtered with a different interval")
    data = np.array([[r.n_in_interval, r.s_ell] for r in rec], float)
    m = Moments.from_rows(data)
    n = m.n
    c = m.cov
    corr = float(m.corr[0, 1])
    slope = float(c[0, 1] / c[1, 1])
    resid = data[:, 0] - m.mean[0] - slope * (data[:, 1] - m.mean[1])
    slope_se = float(math.sqrt(resid @ resid / (n - 2) / m.comoment[1, 1]))
    predicted = CHAOS_SIGN * analytic.reduction_coefficient(ell, interval)
    return {
        "ell": ell,
        "n": n,
        "corr": corr,
        "corr_abs": abs(corr),
        "corr_stderr": _corr_se(corr, n),
        "slope": slope,
        "slope_abs": abs(slope),
        "slope_stderr": slope_se,
        "slope_predicted": predicted,
        "slope_ratio": abs(slope) / abs(predicted),
    }


def verify_clt(records, ell: int | None = None) -> dict:
    """Two-sided KS test of standardised interval counts against N(0, 1)."""
    rec = _select(records, ell) if ell is not None else sorted(
        (r for r in records if r.euler_ok), key=lambda r: (r.ell, r.index))
    if len(rec) < 200:
        raise ValueError(f"need >= 200 included records, have {len(rec)}")
    x = np.array([r.n_in_interval for r in rec], float)
    z = (x - x.mean()) / x.std(ddof=1)
    res = stats.kstest(z, "norm")
    return {"n": len(rec), "ks": float(res.statistic), "pvalue": float(res.pvalue)}


FUNCTIONALS = ("n_interval", "s_ell", "area", "chi")


def verify_full_correlation(records, ell: int, u: float) -> dict:
    """Pairwise correlations among the interval count, ``S_l``, area and Euler characteristic."""
    ubar = analytic.ubar_root()
    if min(abs(u), abs(abs(u) - ubar)) < DEGENERATE_LEVEL_GAP:
        warnings.warn(f"u={u} is near a level where leading coefficients vanish", RuntimeWarning)
    rec = _select(records, ell)
    if len(rec) < 100:
        raise ValueError(f"need >= 100 included records at ell={ell}, have {len(rec)}")
    try:
        k = [float(v) for v in rec[0].u_list].index(float(u))
    except ValueError:
        raise ValueError(f"threshold {u} not recorded") from None
    data = np.array([[r.n_in_interval, r.s_ell, r.areas[k], r.euler_chars[k]] for r in rec], float)
    m = Moments.from_rows(data)
    corr = m.corr
    off = np.abs(corr[np.triu_indices(4, 1)])
    return {
        "ell": ell,
        "u": float(u),
        "n": m.n,
        "labels": list(FUNCTIONALS),
        "matrix": corr.tolist(),
        "stderr": [[_corr_se(float(x), m.n) for x in row] for row in corr],
        "min_abs": float(np.nanmin(off)) if off.size else float("nan"),
        "predicted_abs_limit": 1.0,
    }


# diagnostics against the one- and two-point laws -----------------------------------------

def _basis_chart_jets(ell, theta, phi):
    """Chart jets of every real basis direction, shape ``(2 l + 1, n, 6)``.

    Row 0 is ``re_0``, rows ``1..l`` are ``re_m`` and rows ``l+1..2l`` are ``im_m``.
    """
    theta = np.atleast_1d(np.asarray(theta, float))
    phi = np.atleast_1d(np.asarray(phi, float))
    out = np.empty((2 * ell + 1, theta.size, 6))
    zero = np.zeros(ell + 1)
    for m in range(ell + 1):
        e = zero.copy()
        e[m] = 1.0
        out[m] = kernels.field_jets(ell, e, zero, theta, phi)
        if m:
            out[ell + m] = kernels.field_jets(ell, zero, e, theta, phi)
    return out


def _coefficient_draws(ell, n, rng):
    """Standard draws scaled to the coefficient law, columns as in ``_basis_chart_jets``."""
    z = rng.standard_normal((n, 2 * ell + 1))
    z[:, 1:] *= math.sqrt(0.5)
    return z


def _jackknife_cov_se(x, groups):
    """Grouped-jackknife standard errors of the covariance entries of ``x``."""
    n = x.shape[0]
    idx = np.array_split(np.arange(n), groups)
    full = np.cov(x, rowvar=False)
    reps = np.array([np.cov(np.delete(x, g, axis=0), rowvar=False) for g in idx])
    se = np.sqrt((groups - 1) / groups * np.sum((reps - reps.mean(axis=0)) ** 2, axis=0))
    return full, se


def covariance_diagnostic(ell: int, n: int = 100_000, seed: int = 0, theta: float = 0.5 * np.pi,
                          phi: float = 0.3, groups: int = 50) -> dict:
    """Empirical covariance of ``(d1 f, d2 f, h11, h12, h22)`` at one point.

    Returns the empirical and predicted 5x5 matrices, jackknife standard
    errors and z-scores over the 15 distinct entries.
    """
    if n < 10_000:
        raise ValueError("need n >= 1e4")
    chart = _basis_chart_jets(ell, theta, phi)[:, 0, :]
    basis = covariant_from_chart(np.full(chart.shape[0], theta), chart)[:, 1:]
    rng = np.random.Generator(np.random.PCG64(seed))
    jets = _coefficient_draws(ell, n, rng) @ basis
    emp, se = _jackknife_cov_se(jets, groups)
    pred = analytic.jet_covariance(ell).sigma
    z = (emp - pred) / se
    iu = np.triu_indices(5)
    return {
        "ell": ell,
        "n": n,
        "theta": float(theta),
        "empirical": emp,
        "predicted": pred,
        "stderr": se,
        "z": z,
        "max_abs_z": float(np.max(np.abs(z[iu]))),
        "cross_block_max_abs_z": float(np.max(np.abs(z[:2, 2:]))),
    }


def conditional_mean_diagnostic(ell: int, dphi: float, u1: float, u2: float, n: int = 100_000,
                                seed: int = 0) -> dict:
    """Regression estimate of the two-point conditional Hessian mean.

    Hessians at ``x = (pi/2, 0)`` and ``y = (pi/2, dphi)`` are regressed on
    the four gradient components; the fitted linear map applied to
    ``(u1, u2, u1, u2)`` estimates the conditional mean.  Standard errors
    are the ordinary least-squares ones, exact for this Gaussian model.
    """
    theta = np.full(2, 0.5 * np.pi)
    chart = _basis_chart_jets(ell, theta, np.array([0.0, dphi]))
    cov = covariant_from_chart(np.full(chart.shape[:2], 0.5 * np.pi), chart)
    rng = np.random.Generator(np.random.PCG64(seed))
    z = _coefficient_draws(ell, n, rng)
    grads = z @ np.concatenate([cov[:, 0, 1:3], cov[:, 1, 1:3]], axis=1)
    hess = z @ np.concatenate([cov[:, 0, 3:6], cov[:, 1, 3:6]], axis=1)
    target = np.array([u1, u2, u1, u2], float)
    coef, *_ = np.linalg.lstsq(grads, hess, rcond=None)
    est = target @ coef
    resid = hess - grads @ coef
    s2 = np.sum(resid * resid, axis=0) / (n - grads.shape[1])
    se = np.sqrt(target @ np.linalg.solve(grads.T @ grads, target) * s2)
    closed = analytic.conditional_mean(ell, dphi, u1, u2).mu
    return {"ell": ell, "dphi": float(dphi), "empirical": est, "predicted": closed,
            "stderr": se, "z": (est - closed) / se}


# ensembles ----------------------------------------------------------------------------------

@dataclass
class EnsembleResult:
    records: list
    summary: dict
    excluded: dict = field(default_factory=dict)


def _stats_block(values, predicted):
    v = np.asarray(values, float)
    n = v.size
    mean = float(v.mean())
    se = float(v.std(ddof=1) / math.sqrt(n))
    return {"empirical": mean, "predicted": float(predicted), "stderr": se}


def _variance_block(values, ell, interval):
    v = np.asarray(values, float)
    n = v.size
    var = float(v.var(ddof=1))
    m4 = float(np.mean((v - v.mean()) ** 4))
    se = math.sqrt(max(m4 - var * var, 0.0) / n)
    pred = analytic.variance_leading(ell, interval)
    return {"empirical": var, "stderr": se, "predicted_leading": pred,
            "ratio": var / pred if pred > 0 else None}


def summarize(records, config: ExperimentConfig, excluded: dict | None = None) -> dict:
    """Per-degree summary computed from records sorted by ``(ell, index)``."""
    excluded = excluded or {}
    blocks = {}
    for ell in config.ells:
        rec = _select(records, ell)
        if len(rec) < 2:
            continue
        n_in = [r.n_in_interval for r in rec]
        block = {
            "ell": ell,
            "interval": str(config.interval),
            "u_list": list(config.u_list),
            "n_records": len(rec),
            "mean_count": _stats_block(n_in, analytic.expected_count(ell, config.interval)),
            "mean_total": _stats_block([r.n_total for r in rec], analytic.expected_count(ell)),
            "variance": _variance_block(n_in, ell, config.interval),
        }
        n_ex = excluded.get(ell, 0)
        block["diagnostics"] = {
            "excluded": n_ex,
            "excluded_fraction": n_ex / (len(rec) + n_ex),
            "refined": sum(r.refined for r in rec),
            "newton_failures": sum(r.newton_failures for r in rec),
        }
        try:
            block["reduction"] = verify_reduction(rec, ell, config.interval)
        except ValueError as exc:
            block["reduction"] = {"skipped": str(exc)}
        try:
            block["clt"] = verify_clt(rec, ell)
        except ValueError as exc:
            block["clt"] = {"skipped": str(exc)}
        corr = {}
        for u in config.u_list:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                try:
                    corr[f"{u:.17g}"] = verify_full_correlation(rec, ell, u)
                except ValueError as exc:
                    corr[f"{u:.17g}"] = {"skipped": str(exc)}
        block["correlations"] = corr
        blocks[str(ell)] = block
    return {"master_seed": config.master_seed, "interval": str(config.interval),
            "u_list": list(config.u_list), "by_ell": blocks}


def run_ensemble(config: ExperimentConfig, threads: int = 1) -> EnsembleResult:
    """Run every ``(ell, index)`` replicate and summarise.

    Results do not depend on ``threads``: replicate seeds derive from the
    master seed and index, and records are sorted before summarising.

    Raises
    ------
    EnsembleAbort
        If more than 1% of the censuses at some degree are incomplete.
    """
    jobs = [(ell, i, config) for ell in config.ells for i in range(config.replicates)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_work, jobs, chunksize=max(1, len(jobs) // (8 * threads))))
    else:
        results = [_work(j) for j in jobs]
    records = []
    excluded = {ell: 0 for ell in config.ells}
    for ell, _, rec in results:
        if rec is None:
            excluded[ell] += 1
        else:
            records.append(rec)
    records.sort(key=lambda r: (r.ell, r.index))
    for ell, k in excluded.items():
        if k > MAX_EXCLUDED_FRACTION * config.replicates:
            raise EnsembleAbort(f"{k} of {config.replicates} censuses incomplete at ell={ell}")
    return EnsembleResult(records, summarize(records, config, excluded), excluded)


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isfinite(x):
            return float(f"{x:.17g}")
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def summary_to_json(summary: dict) -> str:
    return json.dumps(to_jsonable(summary), indent=2, sort_keys=True) + "\n"
