import math
import warnings

import numpy as np
import pytest

from sphcrit.analytic import Interval, expected_count, reduction_coefficient, CHAOS_SIGN
from sphcrit.experiments import (
    EnsembleAbort,
    ExperimentConfig,
    Moments,
    ReplicateRecord,
    covariance_diagnostic,
    records_from_csv,
    records_to_csv,
    run_ensemble,
    run_replicate,
    summarize,
    summary_to_json,
    verify_clt,
    verify_full_correlation,
    verify_reduction,
)
from sphcrit.critical import FinderConfig

I1 = Interval.above(1.0)


def synthetic_records(n, ell=20, seed=0, u_list=(0.0, 1.0), interval=I1):
    """Records whose counts follow the reduction law exactly plus noise."""
    rng = np.random.default_rng(seed)
    slope = CHAOS_SIGN * reduction_coefficient(ell, interval)
    out = []
    for i in range(n):
        s = rng.normal(0, math.sqrt(2 * (2 * ell + 1)))
        count = int(round(expected_count(ell, interval) + slope * s + rng.normal(0, 2)))
        areas = tuple(2 * math.pi - 0.1 * s + rng.normal(0, 0.1) for _ in u_list)
        chis = tuple(int(rng.integers(-3, 4)) for _ in u_list)
        out.append(ReplicateRecord(i, i, ell, str(interval), count + 50, 10, 10, 18, count, s,
                                   4 * math.pi * s / (2 * ell + 1), 12 * math.pi, tuple(u_list),
                                   areas, chis))
    return out


# configuration ---------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(replicates=1)
    with pytest.raises(ValueError):
        ExperimentConfig(ells=(1, 10))
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"bogus": 1})


def test_config_json_round_trip():
    cfg = ExperimentConfig(ells=(5, 8), interval=Interval(-1.0, 2.5), u_list=(0.5,), replicates=7,
                           master_seed=3, finder=FinderConfig(kappa=10.0))
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    alt = ExperimentConfig.from_dict({"interval": [1.0, math.inf]})
    assert alt.interval == I1


# records and determinism ------------------------------------------------------------------

def test_records_csv_round_trip():
    cfg = ExperimentConfig(ells=(6,), replicates=3, u_list=(0.0, 1.0, -0.5))
    recs = [run_replicate(6, i, cfg) for i in range(3)]
    text = records_to_csv(recs, cfg.u_list)
    back = records_from_csv(text)
    assert back == recs
    assert records_to_csv(back) == text


def test_replicate_invariants():
    cfg = ExperimentConfig(ells=(8,), replicates=2)
    r = run_replicate(8, 0, cfg)
    assert r.n_in_interval <= r.n_total
    assert r.n_max + r.n_min - r.n_saddle == 2 and r.euler_ok
    assert r.h2_integral == pytest.approx(4 * math.pi * r.s_ell / 17, rel=1e-8)


def test_ensemble_deterministic_and_thread_independent():
    cfg = ExperimentConfig(ells=(5, 7), replicates=6)
    a = run_ensemble(cfg)
    b = run_ensemble(cfg)
    c = run_ensemble(cfg, threads=2)
    ta = records_to_csv(a.records, cfg.u_list)
    assert ta == records_to_csv(b.records, cfg.u_list) == records_to_csv(c.records, cfg.u_list)
    assert summary_to_json(a.summary) == summary_to_json(c.summary)


def test_ensemble_aborts_when_finder_fails():
    cfg = ExperimentConfig(ells=(40,), replicates=3, finder=FinderConfig(kappa=2.0, refine=False))
    with pytest.raises(EnsembleAbort):
        run_ensemble(cfg)


# moments -----------------------------------------------------------------------------

def test_moments_merge_associative():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(301, 4)) * [1, 10, 100, 0.1] + [5, -3, 1e3, 0]
    full = Moments.from_rows(x)
    halves = Moments.from_rows(x[:150]).merge(Moments.from_rows(x[150:]))
    parts = Moments.from_rows(x[:7]).merge(Moments.from_rows(x[7:200]).merge(Moments.from_rows(x[200:])))
    for m in (halves, parts):
        assert m.n == full.n
        assert np.allclose(m.mean, full.mean, rtol=1e-12, atol=0)
        assert np.allclose(m.cov, full.cov, rtol=1e-12, atol=1e-12 * np.abs(full.cov).max())
    assert np.allclose(full.cov, np.cov(x, rowvar=False), rtol=1e-12)
    assert np.all(np.abs(full.corr) <= 1)


def test_summary_permutation_invariant():
    recs = synthetic_records(120)
    cfg = ExperimentConfig(ells=(20,), replicates=120)
    shuffled = [recs[i] for i in np.random.default_rng(2).permutation(len(recs))]
    assert summary_to_json(summarize(recs, cfg)) == summary_to_json(summarize(shuffled, cfg))


def test_summary_pairs_every_number_with_prediction():
    block = summarize(synthetic_records(250), ExperimentConfig(ells=(20,), replicates=250))["by_ell"]["20"]
    for key in ("mean_count", "mean_total"):
        assert set(block[key]) == {"empirical", "predicted", "stderr"}
    assert {"empirical", "stderr", "predicted_leading", "ratio"} <= set(block["variance"])
    assert {"corr", "slope", "slope_predicted", "corr_stderr", "slope_stderr"} <= set(block["reduction"])
    assert {"ks", "pvalue"} <= set(block["clt"])
    assert block["diagnostics"]["excluded_fraction"] == 0


# verdicts ------------------------------------------------------------------------------

def test_verify_reduction_recovers_synthetic_slope():
    res = verify_reduction(synthetic_records(400), 20, I1)
    assert res["corr"] > 0.9
    assert abs(res["slope"] - res["slope_predicted"]) < 4 * res["slope_stderr"]


def test_verify_reduction_preconditions():
    with pytest.raises(ValueError):
        verify_reduction(synthetic_records(150, interval=Interval()), 20, Interval())
    with pytest.raises(ValueError):
        verify_reduction(synthetic_records(50), 20, I1)


def test_verify_clt_preconditions_and_null():
    with pytest.raises(ValueError):
        verify_clt(synthetic_records(150), 20)
    res = verify_clt(synthetic_records(300), 20)
    assert 0 <= res["ks"] <= 1 and 0 <= res["pvalue"] <= 1


def test_ks_pvalues_uniform_under_null():
    from scipy import stats
    rng = np.random.default_rng(5)
    p = []
    for k in range(200):
        recs = [ReplicateRecord(i, i, 10, str(I1), 0, 0, 0, 0, 0, 0.0, 0.0, 0.0, (), (), ())
                for i in range(200)]
        x = rng.normal(100, 5, 200)
        recs = [ReplicateRecord(**{**r.__dict__, "n_in_interval": float(v)}) for r, v in zip(recs, x)]
        p.append(verify_clt(recs, 10)["pvalue"])
    # standardising by the sample moments makes the test conservative; check the
    # p-values are spread over (0, 1) and not concentrated near 0
    assert np.mean(np.array(p) < 0.05) <= 0.05
    assert stats.kstest(p, "uniform").statistic < 0.5


def test_verify_full_correlation_warns_and_reports():
    recs = synthetic_records(150)
    with pytest.warns(RuntimeWarning):
        verify_full_correlation(recs, 20, 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        res = verify_full_correlation(recs, 20, 1.0)
    m = np.array(res["matrix"])
    assert m.shape == (4, 4) and np.allclose(m, m.T) and np.all(np.abs(m) <= 1)
    assert res["labels"] == ["n_interval", "s_ell", "area", "chi"]
    with pytest.raises(ValueError):
        verify_full_correlation(recs, 20, 2.0)


# covariance diagnostic -----------------------------------------------------------------

def test_covariance_diagnostic_ell5():
    res = covariance_diagnostic(5, n=100_000, seed=0)
    assert res["max_abs_z"] <= 4
    assert res["cross_block_max_abs_z"] <= 4


def test_covariance_diagnostic_latitude_independent():
    a = covariance_diagnostic(5, n=50_000, seed=1, theta=np.pi / 4)
    b = covariance_diagnostic(5, n=50_000, seed=2, theta=np.pi / 2)
    iu = np.triu_indices(5)
    joint = np.sqrt(a["stderr"] ** 2 + b["stderr"] ** 2)[iu]
    assert np.all(np.abs(a["empirical"] - b["empirical"])[iu] <= 3 * joint)


def test_covariance_diagnostic_requires_samples():
    with pytest.raises(ValueError):
        covariance_diagnostic(5, n=100)
