"""Critical points of one realization, and excursion-set functionals.

The finder seeds damped Newton iterations on the chart gradient
``(f_theta, f_phi)`` from a uniform ``(theta, phi)`` grid, keeps roots away
from the poles, and recovers the polar caps by running the same procedure
on the coefficients rotated by 90 degrees about the y-axis (which moves
both poles onto the equator).  Roots from both passes are merged, sorted by
``(theta, phi)`` and deduplicated.  The Morse-Euler identity
``n_max + n_min - n_saddle = 2`` certifies completeness.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import kernels
from .analytic import Interval
from .field import (
    HarmonicCoefficients,
    QuadratureSpec,
    SphericalPoint,
    covariant_from_chart,
    grid_evaluate,
    rotate_coefficients,
    rotation_matrix,
    sphere_quadrature,
)
from .legendre import legendre_jet

KINDS = ("maximum", "minimum", "saddle")
CAP_ROTATION = (0.0, 0.5 * np.pi, 0.0)
CSV_COLUMNS = ("theta", "phi", "value", "kind", "hess_det", "grad_residual")


class IncompleteCensusError(RuntimeError):
    """Raised when the Morse-Euler identity fails even after refinement."""

    def __init__(self, message: str, census: "CriticalCensus"):
        super().__init__(message)
        self.census = census


class DegenerateCensusError(ValueError):
    """A census containing numerically degenerate critical points."""


@dataclass(frozen=True)
class FinderConfig:
    """Tuning knobs of :func:`find_critical_points`.

    Parameters
    ----------
    kappa : float
        Seed rows per unit of ``ell``; the grid is ``ceil(kappa * ell)`` rows
        by twice as many columns.
    tol_factor : float
        Newton tolerance on the gradient norm, relative to ``sqrt(lambda)``.
    max_iter, max_halvings : int
        Newton iteration cap and step-halving cap per iteration.
    wander_cells : float
        A seed is abandoned once it moves this many grid cells away.
    dedupe_fraction : float
        Dedupe radius as a fraction of the seed spacing ``pi / n_theta``.
    cap_width : float
        Polar caps are ``theta < cap_width / ell`` (capped at ``pi / 4``).
    refine : bool
        Retry once with doubled ``kappa`` when the Euler identity fails.
    """

    kappa: float = 8.0
    tol_factor: float = 1e-10
    max_iter: int = 30
    max_halvings: int = 20
    wander_cells: float = 3.0
    dedupe_fraction: float = 0.1
    cap_width: float = 3.0
    refine: bool = True

    def __post_init__(self):
        if self.kappa < 2:
            raise ValueError("kappa must be at least 2")

    def tolerance(self, ell: int) -> float:
        return self.tol_factor * math.sqrt(ell * (ell + 1.0))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class CriticalPoint:
    position: SphericalPoint
    value: float
    kind: str
    hess_det: float
    grad_residual: float
    degenerate: bool = False


@dataclass
class CriticalCensus:
    ell: int
    points: list
    seeds_tried: int = 0
    newton_failures: int = 0
    dedupe_merges: int = 0
    degenerate: int = 0
    kappa: float = 8.0
    refined: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def counts(self) -> tuple:
        n_max = sum(p.kind == "maximum" for p in self.points)
        n_min = sum(p.kind == "minimum" for p in self.points)
        return n_max, n_min, len(self.points) - n_max - n_min

    @property
    def n_total(self) -> int:
        return len(self.points)

    @property
    def euler(self) -> int:
        n_max, n_min, n_saddle = self.counts
        return n_max + n_min - n_saddle

    @property
    def complete(self) -> bool:
        n_max, n_min, _ = self.counts
        return self.euler == 2 and n_max >= 1 and n_min >= 1

    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points])

    def kinds(self) -> np.ndarray:
        return np.array([p.kind for p in self.points])

    def diagnostics(self) -> dict:
        return {
            "seeds_tried": self.seeds_tried,
            "newton_failures": self.newton_failures,
            "dedupe_merges": self.dedupe_merges,
            "degenerate": self.degenerate,
            "kappa": self.kappa,
            "refined": self.refined,
        }


def hessian_scale(ell: int) -> float:
    """``3 P''(1) + P'(1)``, the natural size of the Hessian determinant."""
    jet = legendre_jet(ell, 1.0)
    return 3.0 * jet[2] + jet[1]


# seeding ---------------------------------------------------------------------

def _candidate_cells(g1, g2):
    """Nodes ``(i, j)`` whose cell ``[i, i+1] x [j, j+1]`` likely holds a root.

    A cell is a candidate when both gradient components change sign over its
    corners; local minima of the gradient norm are added as a safety net.
    The phi direction is periodic.
    """
    def corners(a):
        return (a[:-1, :], a[1:, :], np.roll(a[:-1, :], -1, axis=1), np.roll(a[1:, :], -1, axis=1))

    def straddles(a):
        c = corners(np.sign(a))
        lo = np.minimum.reduce(c)
        hi = np.maximum.reduce(c)
        return (lo <= 0) & (hi >= 0)

    cells = straddles(g1) & straddles(g2)
    norm = g1 * g1 + g2 * g2
    is_min = np.ones_like(norm, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            shifted = np.roll(np.roll(norm, di, axis=0), dj, axis=1)
            is_min &= norm <= shifted
    is_min[0, :] = False
    is_min[-1, :] = False
    ci, cj = np.nonzero(cells)
    mi, mj = np.nonzero(is_min)
    return (ci, cj), (mi, mj)


def _grid_gradient(coeffs, theta, n_phi):
    """Chart partials ``f_theta`` and ``f_phi`` on a grid, by row-wise FFT."""
    ell = coeffs.ell
    p, dp, _ = kernels.alf_table(ell, theta)
    # the doubled m > 0 weights cancel the halving inside irfft
    a = (coeffs.re + 1j * coeffs.im) * np.sqrt(4.0 * np.pi / (2 * ell + 1))
    m = np.arange(ell + 1)

    def synth(rows):
        spec = np.zeros((theta.shape[0], n_phi // 2 + 1), dtype=complex)
        spec[:, :ell + 1] = rows
        return np.fft.irfft(spec, n=n_phi, axis=1) * n_phi

    return synth(dp * a), synth(p * a * (1j * m))


def _seed_pass(coeffs, cfg, n_theta, rows, col_mask, theta_lo, theta_hi):
    """Run Newton from the candidate cells of the sub-grid ``rows``.

    Returns root coordinates and residuals of converged seeds, the number
    of seeds tried and the number of failures.
    """
    ell = coeffs.ell
    h = np.pi / n_theta
    n_phi = 2 * n_theta
    theta_rows = (rows + 0.5) * h
    ft, fp = _grid_gradient(coeffs, theta_rows, n_phi)
    (ci, cj), (mi, mj) = _candidate_cells(ft, fp)
    # cell seeds at the cell centre, minimum seeds at the node
    t_seed = np.concatenate([theta_rows[ci] + 0.5 * h, theta_rows[mi]])
    p_seed = np.concatenate([(cj + 0.5) * h, mj * h])
    if col_mask is not None:
        keep = col_mask(p_seed)
        t_seed, p_seed = t_seed[keep], p_seed[keep]
    inside = (t_seed > theta_lo) & (t_seed < theta_hi)
    t_seed, p_seed = t_seed[inside], p_seed[inside]
    if t_seed.size == 0:
        return np.empty(0), np.empty(0), np.empty(0), 0, 0
    wander = cfg.wander_cells * h
    th, ph, status, resid, _ = kernels.newton_polish(
        ell, coeffs.re, coeffs.im, t_seed, p_seed, cfg.tolerance(ell),
        cfg.max_iter, cfg.max_halvings, wander, wander, theta_lo, theta_hi)
    ok = status == kernels.CONVERGED
    return th[ok], ph[ok], resid[ok], int(t_seed.size), int(np.count_nonzero(~ok))


def _classify(ell, coeffs, theta, phi, scale):
    chart = kernels.field_jets(ell, coeffs.re, coeffs.im, theta, phi)
    cov = covariant_from_chart(theta, chart)
    det = cov[:, 3] * cov[:, 5] - cov[:, 4] ** 2
    # the chart Hessian sign convention is shared by both frames; at a
    # critical point det and trace are frame independent
    kind = np.where(det < 0, "saddle", np.where(cov[:, 3] < 0, "maximum", "minimum"))
    degenerate = np.abs(det) < 1e-8 * scale
    return cov[:, 0], kind, det, degenerate


def _unit(theta, phi):
    s = np.sin(theta)
    return np.stack([s * np.cos(phi), s * np.sin(phi), np.cos(theta)], axis=-1)


def _dedupe(vectors, resid, kind, radius):
    """Group same-kind points closer than ``radius``; return kept indices and merges.

    Copies of one root reached from different seeds agree to near machine
    precision, whereas a genuine close pair of critical points always mixes
    an extremum with a saddle; grouping by kind keeps such pairs apart.
    """
    n = len(vectors)
    if n == 0:
        return np.empty(0, dtype=int), 0
    tree = cKDTree(vectors)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    if pairs.size:
        pairs = pairs[kind[pairs[:, 0]] == kind[pairs[:, 1]]]
    if pairs.size == 0:
        return np.arange(n), 0
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    n_groups, labels = connected_components(graph, directed=False)
    # lexsort is stable: smallest residual first, ties by input order
    order = np.lexsort((np.arange(n), resid, labels))
    first = np.ones(n, dtype=bool)
    first[1:] = labels[order][1:] != labels[order][:-1]
    keep = np.sort(order[first])
    return keep, n - n_groups


def _census(coeffs: HarmonicCoefficients, cfg: FinderConfig) -> CriticalCensus:
    ell = coeffs.ell
    n_theta = int(math.ceil(cfg.kappa * ell))
    h = np.pi / n_theta
    cap = min(cfg.cap_width / ell, 0.25 * np.pi)
    pad = cfg.wander_cells + 1.0
    theta_lo = 0.5 * cap
    theta_hi = np.pi - theta_lo

    # main pass on the band away from the poles
    rows = np.arange(n_theta)
    centre = (rows + 0.5) * h
    main_rows = rows[(centre >= cap - pad * h) & (centre <= np.pi - cap + pad * h)
                     & (centre > theta_lo) & (centre < theta_hi)]
    th_m, ph_m, res_m, tried_m, fail_m = _seed_pass(coeffs, cfg, n_theta, main_rows, None,
                                                   theta_lo, theta_hi)
    in_band = (th_m >= cap) & (th_m <= np.pi - cap)
    th_m, ph_m, res_m = th_m[in_band], ph_m[in_band], res_m[in_band]

    # cap pass: the rotated field b(y) = f(g y) has the poles of f at y = (-+1, 0, 0)
    rot = rotate_coefficients(coeffs, CAP_ROTATION)
    g = rotation_matrix(CAP_ROTATION)
    reach = cap + pad * h
    cap_rows = rows[(np.abs(centre - 0.5 * np.pi) <= reach) & (centre > theta_lo) & (centre < theta_hi)]

    def near_poles(p):
        d = np.minimum(np.abs(np.angle(np.exp(1j * p))), np.abs(np.angle(np.exp(1j * (p - np.pi)))))
        return d <= reach

    th_c, ph_c, res_c, tried_c, fail_c = _seed_pass(rot, cfg, n_theta, cap_rows, near_poles,
                                                   theta_lo, theta_hi)
    y = _unit(th_c, ph_c)
    x = y @ g.T
    th_x = np.arccos(np.clip(x[:, 2], -1.0, 1.0))
    in_cap = (th_x < cap + 2 * h) | (th_x > np.pi - cap - 2 * h)
    th_c, ph_c, res_c, x = th_c[in_cap], ph_c[in_cap], res_c[in_cap], x[in_cap]

    # classify in the frame where each root was polished
    scale = hessian_scale(ell)
    value_m, kind_m, det_m, deg_m = _classify(ell, coeffs, th_m, ph_m, scale)
    value_c, kind_c, det_c, deg_c = _classify(ell, rot, th_c, ph_c, scale)

    # merge: positions in the original frame, deterministic order
    vectors = np.concatenate([_unit(th_m, ph_m), x])
    resid = np.concatenate([res_m, res_c])
    value = np.concatenate([value_m, value_c])
    kind = np.concatenate([kind_m, kind_c])
    det = np.concatenate([det_m, det_c])
    degen = np.concatenate([deg_m, deg_c])
    theta_x = np.arccos(np.clip(vectors[:, 2], -1.0, 1.0))
    phi_x = np.mod(np.arctan2(vectors[:, 1], vectors[:, 0]), 2.0 * np.pi)
    order = np.lexsort((phi_x, theta_x))
    vectors, resid, value, kind, det, degen, theta_x, phi_x = (
        a[order] for a in (vectors, resid, value, kind, det, degen, theta_x, phi_x))
    keep, merges = _dedupe(vectors, resid, kind, cfg.dedupe_fraction * h)

    pts = [CriticalPoint(SphericalPoint(float(theta_x[i]), float(phi_x[i])), float(value[i]),
                         str(kind[i]), float(det[i]), float(resid[i]), bool(degen[i]))
           for i in keep]
    return CriticalCensus(
        ell=ell,
        points=pts,
        seeds_tried=tried_m + tried_c,
        newton_failures=fail_m + fail_c,
        dedupe_merges=int(merges),
        degenerate=sum(p.degenerate for p in pts),
        kappa=cfg.kappa,
    )


def find_critical_points(coeffs: HarmonicCoefficients, config: FinderConfig | None = None) -> CriticalCensus:
    """Locate and classify all critical points of one realization.

    Raises
    ------
    IncompleteCensusError
        If the Morse-Euler identity fails at ``kappa`` and again at ``2 kappa``
        (or immediately when refinement is disabled).  The exception carries
        the last census.
    """
    if coeffs.ell < 1:
        raise ValueError("ell must be >= 1")
    cfg = config or FinderConfig()
    census = _census(coeffs, cfg)
    if census.complete:
        return census
    if cfg.refine:
        first = census
        census = _census(coeffs, FinderConfig(**{**cfg.to_dict(), "kappa": 2 * cfg.kappa}))
        census.refined = True
        census.extra["first_pass_counts"] = first.counts
        if census.complete:
            return census
    n_max, n_min, n_saddle = census.counts
    raise IncompleteCensusError(
        f"incomplete census: n_max={n_max} n_min={n_min} n_saddle={n_saddle} "
        f"(Euler characteristic {census.euler}, expected 2)", census)


# filtering and excursion functionals -------------------------------------------

def _require_complete(census):
    if not census.complete:
        raise IncompleteCensusError("census is incomplete", census)


def filter_by_value(census: CriticalCensus, interval: Interval) -> int:
    """Number of critical points with value in ``interval`` (endpoints included)."""
    _require_complete(census)
    if not census.points:
        return 0
    return int(np.count_nonzero(interval.contains(census.values())))


def excursion_area(coeffs: HarmonicCoefficients, u: float, spec: QuadratureSpec | None = None) -> float:
    """Area of ``{f >= u}`` by the indicator on a product quadrature grid.

    The default grid is twice the degree-exact Gauss-Legendre x trapezoid
    rule for ``ell``; coarser grids are rejected.
    """
    ell = coeffs.ell
    base = QuadratureSpec.default(ell)
    spec = spec or QuadratureSpec.default(ell, 2)
    if spec.n_theta < base.n_theta or spec.n_phi < base.n_phi:
        raise ValueError("quadrature grid below the module default")
    theta, _, w = sphere_quadrature(spec)
    f = grid_evaluate(coeffs, theta, spec.n_phi)
    return float(np.sum(w[:, None] * (f >= u)))


def excursion_areas(coeffs: HarmonicCoefficients, u_list: Iterable[float],
                    spec: QuadratureSpec | None = None) -> list:
    """Areas for several thresholds from one synthesis."""
    ell = coeffs.ell
    spec = spec or QuadratureSpec.default(ell, 2)
    theta, _, w = sphere_quadrature(spec)
    f = grid_evaluate(coeffs, theta, spec.n_phi)
    return [float(np.sum(w[:, None] * (f >= u))) for u in u_list]


def euler_characteristic_excursion(census: CriticalCensus, u: float) -> int:
    """Morse count ``#max - #saddle + #min`` over critical points with value >= u."""
    _require_complete(census)
    if census.degenerate:
        raise DegenerateCensusError(f"{census.degenerate} degenerate critical point(s)")
    if not census.points:
        return 0
    above = census.values() >= u
    kinds = census.kinds()[above]
    return int(np.count_nonzero(kinds == "maximum") + np.count_nonzero(kinds == "minimum")
               - np.count_nonzero(kinds == "saddle"))


# serialization -------------------------------------------------------------------

def census_to_csv(census: CriticalCensus, stream=None) -> str | None:
    """Write the census as CSV; returns the text when ``stream`` is None."""
    out = io.StringIO() if stream is None else stream
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for p in census.points:
        writer.writerow([f"{p.position.theta:.17g}", f"{p.position.phi:.17g}", f"{p.value:.17g}",
                         p.kind, f"{p.hess_det:.17g}", f"{p.grad_residual:.17g}"])
    return out.getvalue() if stream is None else None


def census_from_csv(text: str, ell: int) -> CriticalCensus:
    rows = list(csv.DictReader(io.StringIO(text)))
    pts = [CriticalPoint(SphericalPoint(float(r["theta"]), float(r["phi"])), float(r["value"]),
                         r["kind"], float(r["hess_det"]), float(r["grad_residual"])) for r in rows]
    return CriticalCensus(ell=ell, points=pts)
