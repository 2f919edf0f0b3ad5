"""Legendre polynomials with derivatives, and normalized associated Legendre rows.

Two kernels live here:

* :func:`legendre_jet` -- ``P_l`` and its first four derivatives from the
  three-term recurrence in the degree, differentiated term by term so the
  evaluation stays exact at ``t = +-1``.
* :func:`associated_legendre_row` -- the fully normalized functions
  ``Pbar_lm(cos theta)`` for every order ``m = 0..l`` together with their
  first and second colatitude derivatives.  Normalization is
  ``int_0^pi Pbar_lm^2 sin(theta) dtheta = 1 / (2 pi)`` with the
  Condon-Shortley phase, so that ``Y_lm = Pbar_lm e^{i m phi}`` is
  orthonormal on the sphere.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

__all__ = [
    "DomainError",
    "LegendreJet",
    "AssociatedLegendreRow",
    "legendre_jet",
    "legendre_derivatives",
    "associated_legendre_row",
    "POLE_EXCLUSION",
]

#: colatitudes closer than this to a pole are rejected outright
POLE_EXCLUSION = 1e-8

MAX_ORDER = 4


class DomainError(ValueError):
    """Argument outside the domain where a kernel is defined."""


@dataclass(frozen=True)
class LegendreJet:
    degree: int
    argument: float
    values: np.ndarray  # (P, P', P'', P''', P'''')

    @property
    def value(self) -> float:
        return float(self.values[0])

    def __getitem__(self, order: int) -> float:
        return float(self.values[order])


@dataclass(frozen=True)
class AssociatedLegendreRow:
    degree: int
    colatitude: float
    values: np.ndarray
    dtheta: np.ndarray
    d2theta: np.ndarray


def legendre_derivatives(ell: int, t, order: int = MAX_ORDER) -> np.ndarray:
    """Derivatives ``d^k P_ell / dt^k`` for ``k = 0..order``.

    Parameters
    ----------
    ell : int
        Degree, ``ell >= 0``.
    t : array_like
        Arguments in ``[-1, 1]``.
    order : int
        Highest derivative order, at most 4.

    Returns
    -------
    ndarray, shape ``(order + 1,) + shape(t)``
    """
    if ell < 0:
        raise DomainError(f"degree must be non-negative, got {ell}")
    if not 0 <= order <= MAX_ORDER:
        raise DomainError(f"derivative order must lie in 0..{MAX_ORDER}")
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1.0 + 1e-12):
        raise DomainError("Legendre argument outside [-1, 1]")
    t = np.clip(t, -1.0, 1.0)

    prev = np.zeros((order + 1,) + t.shape)
    cur = np.zeros_like(prev)
    cur[0] = 1.0
    if ell == 0:
        return cur
    # (k+1) P_{k+1}^(d) = (2k+1) (t P_k^(d) + d P_k^(d-1)) - k P_{k-1}^(d)
    for k in range(ell):
        nxt = np.empty_like(cur)
        nxt[0] = ((2 * k + 1) * t * cur[0] - k * prev[0]) / (k + 1)
        for d in range(1, order + 1):
            nxt[d] = ((2 * k + 1) * (t * cur[d] + d * cur[d - 1]) - k * prev[d]) / (k + 1)
        prev, cur = cur, nxt
    return cur


def legendre_jet(ell: int, t: float) -> LegendreJet:
    """``P_ell`` and its derivatives through order four at a scalar ``t``."""
    vals = legendre_derivatives(ell, float(t), MAX_ORDER)
    return LegendreJet(degree=int(ell), argument=float(t), values=np.asarray(vals, dtype=float))


def associated_legendre_row(ell: int, theta: float) -> AssociatedLegendreRow:
    """Normalized associated Legendre values and theta-derivatives for all orders.

    The row is generated by the downward three-term recurrence in ``m``
    started from the sectoral end and normalized with the addition theorem;
    see :mod:`sphcrit.kernels`.
    """
    if ell < 1:
        raise DomainError(f"degree must be >= 1, got {ell}")
    theta = float(theta)
    if not POLE_EXCLUSION <= theta <= np.pi - POLE_EXCLUSION:
        raise DomainError(f"colatitude {theta!r} too close to a pole")
    p, dp, d2p = kernels.alf_table(int(ell), np.array([theta]))
    return AssociatedLegendreRow(
        degree=int(ell), colatitude=theta, values=p[0], dtheta=dp[0], d2theta=d2p[0]
    )
