"""Why a pooled chi-square test of critical values is miscalibrated.

Pools the critical values of ``--replicates`` realizations at degree
``--ell``, bins them into ``--bins`` bins that are equiprobable under the
limiting critical-value density, and reports

* the pooled chi-square test (which treats every value as independent),
* the exact finite-degree bin probabilities, from a Monte Carlo of
  ``|det H|``-weighted field values under the one-point jet law,
* the per-bin dispersion index (replicate variance of bin counts over
  their mean; 1 for independent values),
* a replicate-level Wald / Hotelling test of the bin proportions, which
  uses the between-realization covariance instead of assuming independence.

Usage::

    python benchmarks/value_density_dispersion.py [--ell 50] [--replicates 200] [--seed 20241007]
"""
import argparse
import math

import numpy as np
from scipy import optimize, stats

from sphcrit import analytic as A
from sphcrit.analytic import Interval
from sphcrit.critical import find_critical_points
from sphcrit.field import replicate_seed, sample_coefficients


def equiprobable_edges(k):
    cdf = lambda x: A.interval_integral("pi_c", Interval(-math.inf, x))  # noqa: E731
    inner = [optimize.brentq(lambda x: cdf(x) - q, -8, 8, xtol=1e-12) for q in np.arange(1, k) / k]
    return np.array([-math.inf, *inner, math.inf])


def exact_bin_probabilities(ell, edges, draws=40_000_000, seed=0):
    """Bin probabilities of the finite-degree critical-value density."""
    lam = ell * (ell + 1.0)
    cov = np.zeros((4, 4))
    cov[0, 0] = 1.0
    cov[1:, 1:] = A.jet_covariance(ell).sigma[2:, 2:]
    cov[0, 1] = cov[1, 0] = cov[0, 3] = cov[3, 0] = -lam / 2
    # singular (h11 + h22 = -lambda f): factor through the eigendecomposition
    ev, U = np.linalg.eigh(cov)
    L = U * np.sqrt(np.clip(ev, 0, None))
    rng = np.random.default_rng(seed)
    w_bins = np.zeros(len(edges) - 1)
    total = 0.0
    for _ in range(draws // 1_000_000):
        x = rng.standard_normal((1_000_000, 4)) @ L.T
        w = np.abs(x[:, 1] * x[:, 3] - x[:, 2] ** 2)
        w_bins += np.histogram(x[:, 0], bins=edges, weights=w)[0]
        total += w.sum()
    return w_bins / total


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ell", type=int, default=50)
    ap.add_argument("--replicates", type=int, default=200)
    ap.add_argument("--bins", type=int, default=20)
    ap.add_argument("--seed", type=int, default=20241007, help="master seed")
    args = ap.parse_args()
    k = args.bins
    edges = equiprobable_edges(k)
    per_rep = np.array([
        np.histogram(find_critical_points(
            sample_coefficients(args.ell, replicate_seed(args.seed, i))).values(), bins=edges)[0]
        for i in range(args.replicates)])
    obs = per_rep.sum(axis=0)
    n_values = obs.sum()
    chi2, p = stats.chisquare(obs, np.full(k, n_values / k))
    print(f"pooled chi-square: {chi2:.1f} on {k - 1} dof, p = {p:.3g} ({n_values} values)")
    p_exact = exact_bin_probabilities(args.ell, edges)
    print("finite-degree bin probability / (1/k) - 1:", np.array2string(p_exact * k - 1, precision=4))
    print("observed bin share / (1/k) - 1:          ", np.array2string(obs / (n_values / k) - 1, precision=4))
    disp = per_rep.var(axis=0, ddof=1) / per_rep.mean(axis=0)
    print("dispersion index per bin:", np.array2string(disp, precision=2))
    prop = per_rep / per_rep.sum(axis=1, keepdims=True)
    n = len(prop)
    d = prop.mean(axis=0)[:-1] - 1.0 / k
    S = np.cov(prop[:, :-1], rowvar=False) / n
    W = float(d @ np.linalg.solve(S, d))
    F = (n - k + 1) / ((k - 1) * (n - 1)) * W
    print(f"replicate-level Wald: {W:.2f} on {k - 1} dof, p = {stats.chi2.sf(W, k - 1):.3g}; "
          f"Hotelling F p = {stats.f.sf(F, k - 1, n - k + 1):.3g}")


if __name__ == "__main__":
    main()
