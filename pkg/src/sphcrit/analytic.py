"""Closed-form predictions for critical points of random spherical harmonics.

Densities of critical values, interval integrals and the moment predictions
built from them, the one-point jet covariance and its Cholesky factor, the
two-point gradient covariance on the equator, conditional Hessian means, the
leading coefficients of the Lipschitz-Killing curvatures, and a Monte Carlo
estimator of the second-chaos coefficients ``M0, M1, M2``.

Sign conventions
----------------
``density_p3`` is implemented exactly as its defining formula.  Two derived
expressions disagree with it by a sign and are reconciled here by quadrature:

* Tail integral.  Integrating ``p3`` directly gives::

      int_u^inf p3 = -(1/2) sqrt(2/pi) u e^{-3u^2/2}
                     - (1/4) sqrt(2/pi) u (u^2 - 1) e^{-u^2/2}

  (:func:`half_interval_p3`).  The published half-interval form carries
  ``+`` on the second term; it is kept as :func:`half_interval_p3_published`
  because its zero away from the origin defines ``ubar``.
* Chaos coefficient.  ``-(5/4) p0 + (1/4) p2 == -p3`` pointwise.  The Monte
  Carlo estimate of ``M0``, which needs no sign convention, agrees with
  ``(1/8) int (-(5/4) p0 + (1/4) p2)``, i.e. with ``-(1/8) int p3``.
  Consequently the signed second-chaos slope of ``N(I)`` on
  ``S_l = sum (|a_lm|^2 - 1)`` is ``CHAOS_SIGN * reduction_coefficient``
  with ``CHAOS_SIGN = -1``; simulation confirms the sign (positive
  correlation for ``I = [1, inf)``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import hermite_e
from scipy import integrate, optimize

from .legendre import DomainError, legendre_derivatives

__all__ = [
    "Interval",
    "JetCovariance",
    "TwoPointGradientCovariance",
    "ConditionalMean",
    "MCoefficients",
    "CHAOS_SIGN",
    "density_pi_c",
    "density_p0",
    "density_p2",
    "density_p3",
    "density_mu",
    "DENSITIES",
    "interval_integral",
    "half_interval_p3",
    "half_interval_p3_published",
    "expected_count",
    "variance_leading",
    "variance_log_leading",
    "reduction_coefficient",
    "ubar_root",
    "jet_covariance",
    "jet_cholesky",
    "two_point_gradient_cov",
    "conditional_mean",
    "hermite",
    "lk_leading",
    "m_coefficients_oracle",
]

CHAOS_SIGN = -1.0

TRUNCATION = 12.0

_SQ8PI = math.sqrt(8.0 * math.pi)
_SQ2PI_INV = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class Interval:
    """Value window ``[lower, upper]``; either end may be infinite."""

    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise ValueError("interval bounds must not be NaN")
        if self.lower > self.upper:
            raise ValueError(f"empty interval [{self.lower}, {self.upper}]")

    @classmethod
    def parse(cls, text: str) -> "Interval":
        """Parse ``"lo:hi"``; ``-inf``/``inf`` and empty ends are accepted."""
        lo, sep, hi = text.partition(":")
        if not sep:
            raise ValueError(f"interval must look like 'lo:hi', got {text!r}")
        lo = lo.strip() or "-inf"
        hi = hi.strip() or "inf"
        return cls(float(lo), float(hi))

    @classmethod
    def real_line(cls) -> "Interval":
        return cls()

    @classmethod
    def above(cls, u: float) -> "Interval":
        return cls(float(u), math.inf)

    def contains(self, values) -> np.ndarray:
        # finite endpoints are included
        v = np.asarray(values, float)
        return (v >= self.lower) & (v <= self.upper)

    def __str__(self) -> str:
        return f"{self.lower!r}:{self.upper!r}"

    def to_list(self) -> list:
        return [self.lower, self.upper]


# densities -------------------------------------------------------------------
# written with the exponentials already combined so that no term overflows

def density_pi_c(t):
    t = np.asarray(t, float)
    t2 = t * t
    return math.sqrt(3.0) / _SQ8PI * (2.0 * np.exp(-1.5 * t2) + (t2 - 1.0) * np.exp(-0.5 * t2))


def density_p0(t):
    t = np.asarray(t, float)
    t2 = t * t
    return _SQ2PI_INV * (2.0 * np.exp(-1.5 * t2) + (t2 - 1.0) * np.exp(-0.5 * t2))


def density_p2(t):
    t = np.asarray(t, float)
    t2 = t * t
    return _SQ2PI_INV * ((t2 * t2 + t2 - 4.0) * np.exp(-0.5 * t2)
                         + 2.0 * (4.0 + 3.0 * t2) * np.exp(-1.5 * t2))


def density_p3(t):
    t = np.asarray(t, float)
    t2 = t * t
    return ((2.0 - 6.0 * t2) * np.exp(-1.5 * t2)
            - (1.0 - 4.0 * t2 + t2 * t2) * np.exp(-0.5 * t2)) / _SQ8PI


def density_mu(t):
    t = np.asarray(t, float)
    t2 = t * t
    t4 = t2 * t2
    return (_SQ2PI_INV / (8.0 * math.pi)) * (
        (-2.0 - 36.0 * t2 + 38.0 * t4) * np.exp(-1.5 * t2)
        + (1.0 + 17.0 * t2 - 11.0 * t4 + t4 * t2) * np.exp(-0.5 * t2))


DENSITIES: dict[str, Callable] = {
    "pi_c": density_pi_c,
    "p0_c": density_p0,
    "p2_c": density_p2,
    "p3_c": density_p3,
    "mu_c": density_mu,
}


def _density(which) -> Callable:
    if callable(which):
        return which
    try:
        return DENSITIES[which]
    except KeyError:
        raise ValueError(f"unknown density {which!r}; choose from {sorted(DENSITIES)}") from None


def interval_integral(which, interval: Interval) -> float:
    """Integral of a density over ``interval``; infinite ends cut at ``|t| = 12``."""
    fn = _density(which)
    lo = max(interval.lower, -TRUNCATION)
    hi = min(interval.upper, TRUNCATION)
    if hi <= lo:
        return 0.0
    # split at the origin and at +-1, +-2 where the densities change shape
    cuts = [x for x in (-2.0, -1.0, 0.0, 1.0, 2.0) if lo < x < hi]
    edges = [lo, *cuts, hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(lambda x: float(fn(x)), a, b, epsabs=1e-14, epsrel=1e-13, limit=200)
        total += val
    return total


def half_interval_p3(u: float) -> float:
    """``int_u^inf p3`` in closed form (antiderivative of :func:`density_p3`)."""
    u = float(u)
    return (-0.5 * _SQ2PI_INV * u * math.exp(-1.5 * u * u)
            - 0.25 * _SQ2PI_INV * u * (u * u - 1.0) * math.exp(-0.5 * u * u))


def half_interval_p3_published(u: float) -> float:
    """The published half-interval expression (opposite sign on the second term)."""
    u = float(u)
    return (-0.5 * _SQ2PI_INV * u * math.exp(-1.5 * u * u)
            + 0.25 * _SQ2PI_INV * u * (u * u - 1.0) * math.exp(-0.5 * u * u))


# moment predictions ------------------------------------------------------------

def _lam(ell: int) -> float:
    return ell * (ell + 1.0)


def expected_count(ell: int, interval: Interval = Interval()) -> float:
    """Leading-order mean number of critical points with value in ``interval``."""
    if ell < 1:
        raise DomainError("ell must be >= 1")
    return 2.0 / math.sqrt(3.0) * _lam(ell) * interval_integral(density_pi_c, interval)


def variance_leading(ell: int, interval: Interval) -> float:
    """``l^3 (int_I p3)^2``."""
    if ell < 2:
        raise DomainError("ell must be >= 2")
    return ell ** 3 * interval_integral(density_p3, interval) ** 2


def variance_log_leading(ell: int, interval: Interval) -> float:
    """``(int_I mu)^2 l^2 log l``; the relevant order when ``int_I p3`` vanishes."""
    if ell < 2:
        raise DomainError("ell must be >= 2")
    return interval_integral(density_mu, interval) ** 2 * ell ** 2 * math.log(ell)


def reduction_coefficient(ell: int, interval: Interval) -> float:
    """``((l+1)/2) (2l/(2l+1)) int_I p3``, the multiplier of ``S_l``.

    Carries the sign of ``int_I p3``; multiply by :data:`CHAOS_SIGN` for the
    signed slope of the counts on ``S_l``.
    """
    if ell < 1:
        raise DomainError("ell must be >= 1")
    return (ell + 1) / 2.0 * (2.0 * ell / (2.0 * ell + 1.0)) * interval_integral(density_p3, interval)


def ubar_root() -> float:
    """Positive root of ``-2 exp(-u^2) + (u^2 - 1)`` in ``[1, 1.5]``."""
    return optimize.brentq(lambda u: -2.0 * math.exp(-u * u) + (u * u - 1.0), 1.0, 1.5,
                           xtol=1e-15, rtol=4 * np.finfo(float).eps)


# jet covariance -----------------------------------------------------------------

@dataclass(frozen=True)
class JetCovariance:
    """Covariance of ``(d1 f, d2 f, h11, h12, h22)`` and its Cholesky factor."""

    ell: int
    sigma: np.ndarray
    cholesky: np.ndarray

    @property
    def entries(self) -> dict:
        """The factor's distinct entries ``lambda_1 .. lambda_5``."""
        L = self.cholesky
        return {"lambda1": L[0, 0], "lambda2": L[4, 2], "lambda3": L[2, 2],
                "lambda4": L[3, 3], "lambda5": L[4, 4]}


def _jet_sigma(ell: int) -> np.ndarray:
    d1 = _lam(ell) / 2.0
    lam = _lam(ell)
    d2 = lam * (lam - 2.0) / 8.0
    s = np.zeros((5, 5))
    s[0, 0] = s[1, 1] = d1
    s[2, 2] = s[4, 4] = 3.0 * d2 + d1
    s[3, 3] = d2
    s[2, 4] = s[4, 2] = d2 + d1
    return s


def jet_cholesky(ell: int) -> np.ndarray:
    """Closed-form lower-triangular ``L`` with ``L L^T = jet covariance``."""
    if ell < 2:
        raise DomainError("jet covariance is singular for ell = 1")
    lam = _lam(ell)
    r = math.sqrt(3.0 * lam - 2.0)
    L = np.zeros((5, 5))
    L[0, 0] = L[1, 1] = math.sqrt(lam) / math.sqrt(2.0)
    L[2, 2] = math.sqrt(lam) * r / (2.0 * math.sqrt(2.0))
    L[3, 3] = math.sqrt(lam) * math.sqrt(lam - 2.0) / (2.0 * math.sqrt(2.0))
    L[4, 2] = math.sqrt(lam) * (lam + 2.0) / (2.0 * math.sqrt(2.0) * r)
    L[4, 4] = lam * math.sqrt(lam - 2.0) / r
    return L


def jet_covariance(ell: int) -> JetCovariance:
    if ell < 2:
        raise DomainError("jet covariance is singular for ell = 1")
    return JetCovariance(int(ell), _jet_sigma(ell), jet_cholesky(ell))


# two-point quantities on the equator ------------------------------------------------

@dataclass(frozen=True)
class TwoPointGradientCovariance:
    """Covariance of ``(grad f(x), grad f(y))`` for equator points ``dphi`` apart."""

    ell: int
    dphi: float
    alpha1: float
    alpha2: float
    matrix: np.ndarray
    determinant: float

    def direct_determinant(self) -> float:
        return float(np.linalg.det(self.matrix))


def _check_dphi(dphi):
    if not 0.0 < dphi < math.pi:
        raise DomainError("separation must lie strictly inside (0, pi)")


def _alphas(ell, dphi):
    t = math.cos(dphi)
    d = legendre_derivatives(ell, t, 3)
    a1 = float(d[1])
    a2 = float(-d[2] * math.sin(dphi) ** 2 + d[1] * t)
    return a1, a2, d


def two_point_gradient_cov(ell: int, dphi: float) -> TwoPointGradientCovariance:
    _check_dphi(dphi)
    a1, a2, _ = _alphas(ell, dphi)
    p1 = _lam(ell) / 2.0
    A = np.diag([p1] * 4)
    A[0, 2] = A[2, 0] = a1
    A[1, 3] = A[3, 1] = a2
    det = (p1 * p1 - a1 * a1) * (p1 * p1 - a2 * a2)
    return TwoPointGradientCovariance(int(ell), float(dphi), a1, a2, A, det)


@dataclass(frozen=True)
class ConditionalMean:
    """Hessian means at ``x = (pi/2, 0)``, ``y = (pi/2, dphi)`` given both gradients.

    ``mu`` is ordered ``(h11(x), h12(x), h22(x), h11(y), h12(y), h22(y))`` and
    conditions on ``grad f(x) = grad f(y) = (u1, u2)``.
    """

    ell: int
    dphi: float
    u: tuple
    beta: tuple
    alpha: tuple
    mu: np.ndarray


def conditional_mean(ell: int, dphi: float, u1: float, u2: float) -> ConditionalMean:
    """Closed-form conditional mean of the two-point Hessian.

    The x-block matches the published vector.  In the y-block the gradient
    component pairing follows from differentiating the covariance kernel
    directly: ``h11(y)`` and ``h22(y)`` load on the longitudinal component and
    ``h12(y)`` on the colatitude component, each with the sign opposite to the
    x-block.
    """
    _check_dphi(dphi)
    a1, a2, d = _alphas(ell, dphi)
    s, c = math.sin(dphi), math.cos(dphi)
    b1 = s * d[2]
    b2 = s * c * d[2] + s * d[1]
    b3 = -s ** 3 * d[3] + 3.0 * s * c * d[2] + s * d[1]
    lam = _lam(ell)
    den1 = lam + 2.0 * a1
    den2 = lam + 2.0 * a2
    if den1 == 0.0 or den2 == 0.0:
        raise ZeroDivisionError("degenerate conditioning denominator")
    k1 = 2.0 * u1 / den1
    k2 = 2.0 * u2 / den2
    mu = np.array([b2 * k2, b1 * k1, b3 * k2, -b2 * k2, -b1 * k1, -b3 * k2])
    return ConditionalMean(int(ell), float(dphi), (float(u1), float(u2)),
                           (float(b1), float(b2), float(b3)), (a1, a2), mu)


# Lipschitz-Killing leading terms ------------------------------------------------------

def hermite(k: int, u):
    """Probabilists' Hermite polynomial ``H_k``."""
    coef = np.zeros(k + 1)
    coef[k] = 1.0
    return hermite_e.hermeval(u, coef)


def _phi(u):
    return np.exp(-0.5 * np.asarray(u, float) ** 2) / math.sqrt(2.0 * math.pi)


def lk_leading(k: int, u, ell: int | None = None):
    """u-dependent factor multiplying ``int H_2(f)`` in the k-th curvature.

    With ``ell`` given, the factor ``(lambda_l / 2)^{(2 - k)/2}`` is included.
    """
    u = np.asarray(u, float)
    if k == 0:
        val = 0.5 * hermite(2, u) * hermite(1, u) * _phi(u) / (2.0 * math.pi)
    elif k == 1:
        val = 0.5 * math.sqrt(math.pi / 8.0) * hermite(1, u) ** 2 * _phi(u)
    elif k == 2:
        val = 0.5 * hermite(0, u) * hermite(1, u) * _phi(u)
    else:
        raise ValueError("k must be 0, 1 or 2")
    if ell is not None:
        val = val * (_lam(ell) / 2.0) ** ((2 - k) / 2.0)
    return val


# chaos coefficients ------------------------------------------------------------------

@dataclass(frozen=True)
class MCoefficients:
    interval: Interval
    n: int
    M0: float
    M1: float
    M2: float
    se0: float
    se1: float
    se2: float

    @property
    def predicted_M0_abs(self) -> float:
        return abs(interval_integral(density_p3, self.interval)) / 8.0


_Z_COV = np.array([[3.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 3.0]])


def _m_integrands(z1, z2, z3, interval):
    y3 = z1 / math.sqrt(3.0)
    y4 = z2
    y5 = math.sqrt(3.0 / 8.0) * z3 - z1 / math.sqrt(24.0)
    absdet = np.abs(y3 * y5 / math.sqrt(8.0) + y3 * y3 / 8.0 - y4 * y4 / 8.0)
    ind = interval.contains((z1 + z3) / math.sqrt(8.0))
    w = absdet * ind
    r2 = math.sqrt(2.0)
    m0 = w * (-1.25 + (2.0 / 3.0) * y3 * y3 - (r2 / 3.0) * y3 * y5 + y5 * y5 / 12.0)
    m1 = w * (-y3 * y3 + y4 * y4 + r2 * y3 * y5)
    m2 = w * (y3 * y3 - 3.0 * y4 * y4 - 2.0 * r2 * y3 * y5 + 2.0 * y5 * y5)
    return m0, m1, m2


def m_coefficients_oracle(interval: Interval, n: int = 1_000_000, seed: int = 0,
                          chunk: int = 250_000) -> MCoefficients:
    """Monte Carlo estimate of ``M0, M1, M2`` with standard errors.

    Samples ``Z ~ N(0, [[3,0,1],[0,1,0],[1,0,3]])`` in antithetic pairs
    ``(Z, -Z)``; ``n`` counts pairs.
    """
    if n < 10_000:
        raise ValueError("need at least 1e4 samples")
    rng = np.random.Generator(np.random.PCG64(seed))
    L = np.linalg.cholesky(_Z_COV)
    sums = np.zeros(3)
    sq = np.zeros(3)
    done = 0
    while done < n:
        k = min(chunk, n - done)
        z = rng.standard_normal((k, 3)) @ L.T
        plus = _m_integrands(z[:, 0], z[:, 1], z[:, 2], interval)
        minus = _m_integrands(-z[:, 0], -z[:, 1], -z[:, 2], interval)
        for i in range(3):
            pair = 0.5 * (plus[i] + minus[i])
            sums[i] += pair.sum()
            sq[i] += np.dot(pair, pair)
        done += k
    mean = sums / n
    var = (sq / n - mean ** 2) * n / (n - 1)
    se = np.sqrt(var / n)
    return MCoefficients(interval, int(n), *map(float, mean), *map(float, se))
