"""Gaussian random spherical eigenfunctions of a single degree.

A realization is stored through its non-negative orders only; negative
orders follow from ``a_{l,-m} = (-1)^m conj(a_{lm})`` which keeps the field
real.  With ``Y_lm = Pbar_lm(cos theta) e^{i m phi}`` the field is::

    f(x) = sqrt(4 pi / (2l + 1)) * [a_0 Pbar_0 + 2 sum_{m>0} Re(a_m Y_m(x))]

and has covariance ``P_l(<x, y>)``.

Jets use the orthonormal frame ``(d/dtheta, (1/sin theta) d/dphi)``; the
covariant Hessian entries are::

    h11 = f_tt
    h12 = (f_tp - cot(theta) f_p) / sin(theta)
    h22 = (f_pp + sin(theta) cos(theta) f_t) / sin(theta)^2
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from . import kernels
from .legendre import POLE_EXCLUSION, DomainError

__all__ = [
    "HarmonicCoefficients",
    "SphericalPoint",
    "FieldJet",
    "QuadratureSpec",
    "sample_coefficients",
    "replicate_seed",
    "pole_margin",
    "evaluate",
    "evaluate_chart_jets",
    "evaluate_jet",
    "covariant_from_chart",
    "rotate_coefficients",
    "rotation_matrix",
    "grid_evaluate",
    "sphere_quadrature",
    "integrate_grid",
    "second_chaos_statistic",
    "h2_integral",
    "fourth_chaos_statistic",
]


@dataclass(frozen=True, eq=False)
class HarmonicCoefficients:
    """Coefficients ``a_lm`` for ``m = 0..l`` of one realization."""

    ell: int
    re: np.ndarray
    im: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        re = np.array(self.re, dtype=float)
        im = np.array(self.im, dtype=float)
        if self.ell < 1:
            raise DomainError(f"degree must be >= 1, got {self.ell}")
        if re.shape != (self.ell + 1,) or im.shape != (self.ell + 1,):
            raise ValueError("coefficient arrays must have length ell + 1")
        if im[0] != 0.0:
            raise ValueError("a_l0 must be real")
        re.setflags(write=False)
        im.setflags(write=False)
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    def __eq__(self, other):
        if not isinstance(other, HarmonicCoefficients):
            return NotImplemented
        return (self.ell == other.ell and self.seed == other.seed
                and np.array_equal(self.re, other.re) and np.array_equal(self.im, other.im))

    __hash__ = None

    def full(self) -> np.ndarray:
        """Complex coefficients for ``m = -l..l`` (index ``m + l``)."""
        ell = self.ell
        pos = self.re + 1j * self.im
        m = np.arange(1, ell + 1)
        neg = ((-1.0) ** m * np.conj(pos[1:]))[::-1]
        return np.concatenate([neg, pos])

    @classmethod
    def from_full(cls, ell: int, a: np.ndarray, seed=None, atol: float = 1e-9):
        a = np.asarray(a, dtype=complex)
        pos = a[ell:]
        scale = max(1.0, float(np.abs(a).max()))
        if abs(pos[0].imag) > atol * scale:
            raise ValueError("a_l0 has a non-negligible imaginary part")
        im = pos.imag.copy()
        im[0] = 0.0
        return cls(ell, pos.real.copy(), im, seed)

    def squared_norm(self) -> float:
        """``sum_{m=-l}^{l} |a_lm|^2``."""
        return float(self.re[0] ** 2 + 2.0 * np.sum(self.re[1:] ** 2 + self.im[1:] ** 2))

    def to_dict(self) -> dict:
        return {
            "ell": int(self.ell),
            "seed": None if self.seed is None else int(self.seed),
            "re": [float(x) for x in self.re],
            "im": [float(x) for x in self.im],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HarmonicCoefficients":
        return cls(int(d["ell"]), np.array(d["re"], float), np.array(d["im"], float), d.get("seed"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "HarmonicCoefficients":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class SphericalPoint:
    theta: float
    phi: float

    def unit_vector(self) -> np.ndarray:
        st = np.sin(self.theta)
        return np.array([st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)])

    @classmethod
    def from_vector(cls, v) -> "SphericalPoint":
        v = np.asarray(v, float)
        v = v / np.linalg.norm(v)
        return cls(float(np.arccos(np.clip(v[2], -1, 1))), float(np.mod(np.arctan2(v[1], v[0]), 2 * np.pi)))


@dataclass(frozen=True)
class FieldJet:
    value: float
    gradient: np.ndarray  # (d1 f, d2 f)
    hessian: np.ndarray  # (h11, h12, h22)

    def as_vector(self) -> np.ndarray:
        """``(d1 f, d2 f, h11, h12, h22)`` -- the ordering of the jet covariance."""
        return np.concatenate([self.gradient, self.hessian])


def sample_coefficients(ell: int, seed: int) -> HarmonicCoefficients:
    """Draw one realization; a deterministic function of ``(ell, seed)``."""
    if ell < 1:
        raise DomainError(f"degree must be >= 1, got {ell}")
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    rng = np.random.Generator(np.random.PCG64(seed))
    z = rng.standard_normal(2 * ell + 1)
    re = np.empty(ell + 1)
    im = np.zeros(ell + 1)
    re[0] = z[0]
    re[1:] = z[1:ell + 1] * np.sqrt(0.5)
    im[1:] = z[ell + 1:] * np.sqrt(0.5)
    return HarmonicCoefficients(ell, re, im, seed)


def replicate_seed(master_seed: int, index: int) -> int:
    """64-bit seed of replicate ``index``; independent of execution order."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def pole_margin(ell: int) -> float:
    return 0.5 / ell


def _check_theta(theta, margin):
    theta = np.asarray(theta, float)
    lo = max(margin, POLE_EXCLUSION)
    if np.any(theta < lo) or np.any(theta > np.pi - lo):
        raise DomainError("point violates the pole margin")


def evaluate_chart_jets(coeffs: HarmonicCoefficients, theta, phi, margin: float | None = None):
    """Chart partials ``(f, f_t, f_p, f_tt, f_tp, f_pp)`` at many points, shape ``(n, 6)``."""
    theta = np.atleast_1d(np.asarray(theta, float))
    phi = np.atleast_1d(np.asarray(phi, float))
    theta, phi = np.broadcast_arrays(theta, phi)
    _check_theta(theta, pole_margin(coeffs.ell) if margin is None else margin)
    return kernels.field_jets(coeffs.ell, coeffs.re, coeffs.im,
                              np.ascontiguousarray(theta.ravel()), np.ascontiguousarray(phi.ravel()))


def evaluate(coeffs: HarmonicCoefficients, theta, phi, margin: float | None = None):
    """Field values; scalar in, scalar out."""
    scalar = np.ndim(theta) == 0 and np.ndim(phi) == 0
    shape = np.broadcast_shapes(np.shape(theta), np.shape(phi))
    vals = evaluate_chart_jets(coeffs, theta, phi, margin)[:, 0]
    return float(vals[0]) if scalar else vals.reshape(shape)


def covariant_from_chart(theta, chart) -> np.ndarray:
    """Map chart partials to ``(f, d1 f, d2 f, h11, h12, h22)``."""
    theta = np.asarray(theta, float)
    s = np.sin(theta)
    c = np.cos(theta)
    f, ft, fp, ftt, ftp, fpp = (chart[..., k] for k in range(6))
    out = np.empty_like(chart)
    out[..., 0] = f
    out[..., 1] = ft
    out[..., 2] = fp / s
    out[..., 3] = ftt
    out[..., 4] = (ftp - (c / s) * fp) / s
    out[..., 5] = (fpp + s * c * ft) / (s * s)
    return out


def evaluate_jet(coeffs: HarmonicCoefficients, point, margin: float | None = None):
    """Value, frame gradient and covariant Hessian.

    ``point`` is a :class:`SphericalPoint` (returns a :class:`FieldJet`) or a
    pair of arrays ``(theta, phi)`` (returns an ``(n, 6)`` array ordered as
    in :func:`covariant_from_chart`).
    """
    if isinstance(point, SphericalPoint):
        chart = evaluate_chart_jets(coeffs, point.theta, point.phi, margin)
        cov = covariant_from_chart(np.array([point.theta]), chart)[0]
        return FieldJet(float(cov[0]), cov[1:3].copy(), cov[3:6].copy())
    theta, phi = point
    theta = np.atleast_1d(np.asarray(theta, float))
    chart = evaluate_chart_jets(coeffs, theta, phi, margin)
    return covariant_from_chart(np.broadcast_to(theta, (chart.shape[0],)), chart)


# rotations -----------------------------------------------------------------

def _rz(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _ry(b):
    c, s = np.cos(b), np.sin(b)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_matrix(angles: Sequence[float]) -> np.ndarray:
    """Active ZYZ rotation ``g = Rz(alpha) Ry(beta) Rz(gamma)``."""
    alpha, beta, gamma = angles
    return _rz(alpha) @ _ry(beta) @ _rz(gamma)


@lru_cache(maxsize=64)
def _y_rotation(ell: int, beta: float) -> np.ndarray:
    # generator of x -> R_y(beta) x acting on the Y_lm basis; real antisymmetric
    m = np.arange(-ell, ell)
    up = np.sqrt((ell - m) * (ell + m + 1.0)) / 2.0
    gen = np.diag(up, -1) - np.diag(up, 1)
    return expm(beta * gen)


def rotate_coefficients(coeffs: HarmonicCoefficients, angles: Sequence[float]) -> HarmonicCoefficients:
    """Coefficients of ``x -> f(g x)`` with ``g = rotation_matrix(angles)``."""
    alpha, beta, gamma = (float(a) for a in angles)
    ell = coeffs.ell
    m = np.arange(-ell, ell + 1)
    a = coeffs.full() * np.exp(1j * m * alpha)
    a = _y_rotation(ell, round(beta, 15)) @ a
    a = a * np.exp(1j * m * gamma)
    return HarmonicCoefficients.from_full(ell, a, coeffs.seed)


# grids and quadrature ------------------------------------------------------

@dataclass(frozen=True)
class QuadratureSpec:
    """Gauss-Legendre in ``cos(theta)`` times the trapezoid rule in ``phi``."""

    n_theta: int
    n_phi: int

    @classmethod
    def default(cls, ell: int, factor: int = 1) -> "QuadratureSpec":
        return cls(factor * (2 * ell + 2), factor * (4 * ell + 4))

    @property
    def exactness(self) -> int:
        """Largest spherical-polynomial degree integrated exactly."""
        return min(2 * self.n_theta - 1, self.n_phi - 1)


def sphere_quadrature(spec: QuadratureSpec):
    """Nodes ``theta (n_theta,)``, ``phi (n_phi,)`` and weights ``(n_theta,)`` per node."""
    x, w = np.polynomial.legendre.leggauss(spec.n_theta)
    theta = np.arccos(x[::-1])
    w = w[::-1] * (2.0 * np.pi / spec.n_phi)
    phi = 2.0 * np.pi * np.arange(spec.n_phi) / spec.n_phi
    return theta, phi, w


def grid_evaluate(coeffs: HarmonicCoefficients, theta, n_phi: int, jets: bool = False):
    """Row-wise synthesis on the grid ``theta x (2 pi k / n_phi)``.

    Returns field values of shape ``(len(theta), n_phi)``, or with
    ``jets=True`` the covariant jets of shape ``(len(theta), n_phi, 6)``.
    """
    ell = coeffs.ell
    theta = np.ascontiguousarray(np.atleast_1d(theta), dtype=float)
    if np.any(theta < POLE_EXCLUSION) or np.any(theta > np.pi - POLE_EXCLUSION):
        raise DomainError("grid row too close to a pole")
    if n_phi <= 2 * ell:
        raise ValueError("n_phi must exceed 2 * ell")
    p, dp, d2p = kernels.alf_table(ell, theta)
    w = np.full(ell + 1, 2.0)
    w[0] = 1.0
    a = (coeffs.re + 1j * coeffs.im) * w * np.sqrt(4.0 * np.pi / (2 * ell + 1))
    m = np.arange(ell + 1)

    def synth(rows):
        spec = np.zeros((theta.shape[0], n_phi // 2 + 1), dtype=complex)
        spec[:, :ell + 1] = rows
        # irfft halves every interior bin and we already doubled m > 0
        spec[:, 1:] *= 0.5
        return np.fft.irfft(spec, n=n_phi, axis=1) * n_phi

    f = synth(p * a)
    if not jets:
        return f
    ft = synth(dp * a)
    fp = synth(p * a * (1j * m))
    ftt = synth(d2p * a)
    ftp = synth(dp * a * (1j * m))
    fpp = synth(p * a * (-(m * m)))
    chart = np.stack([f, ft, fp, ftt, ftp, fpp], axis=-1)
    return covariant_from_chart(theta[:, None], chart)


def integrate_grid(values, spec: QuadratureSpec) -> float:
    """Quadrature of grid values of shape ``(n_theta, n_phi)`` laid out by :func:`sphere_quadrature`."""
    _, _, w = sphere_quadrature(spec)
    values = np.asarray(values, float)
    if values.shape != (spec.n_theta, spec.n_phi):
        raise ValueError("values do not match the quadrature grid")
    return float(np.sum(w[:, None] * values))


def _quadrature_values(coeffs, spec):
    theta, phi, w = sphere_quadrature(spec)
    return grid_evaluate(coeffs, theta, spec.n_phi), w


def second_chaos_statistic(coeffs: HarmonicCoefficients) -> float:
    """``S_l = sum_{m=-l}^{l} (|a_lm|^2 - 1)``."""
    return coeffs.squared_norm() - (2 * coeffs.ell + 1)


def h2_integral(coeffs: HarmonicCoefficients, spec: QuadratureSpec | None = None) -> float:
    """Quadrature of ``f^2 - 1`` over the sphere."""
    spec = spec or QuadratureSpec.default(coeffs.ell)
    if spec.exactness < 2 * coeffs.ell:
        raise ValueError("quadrature not exact for degree 2 l")
    f, w = _quadrature_values(coeffs, spec)
    return float(np.sum(w[:, None] * (f * f - 1.0)))


def fourth_chaos_statistic(coeffs: HarmonicCoefficients, spec: QuadratureSpec | None = None) -> float:
    """Quadrature of ``H_4(f) = f^4 - 6 f^2 + 3`` over the sphere."""
    spec = spec or QuadratureSpec.default(coeffs.ell)
    if spec.exactness < 4 * coeffs.ell:
        raise ValueError(f"quadrature exactness {spec.exactness} below 4 l = {4 * coeffs.ell}")
    f, w = _quadrature_values(coeffs, spec)
    f2 = f * f
    return float(np.sum(w[:, None] * (f2 * f2 - 6.0 * f2 + 3.0)))
