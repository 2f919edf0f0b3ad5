"""Pure numpy implementation of the hot kernels.

Mirrors the compiled module ``_ckernels`` function for function; the public
entry point :mod:`sphcrit.kernels` picks one of the two at import time.

Chart jets are returned as columns ``(f, f_t, f_p, f_tt, f_tp, f_pp)`` where
``t`` is colatitude and ``p`` longitude.
"""
from __future__ import annotations

import numpy as np

_RESCALE_AT = 1e150

# Newton status codes, shared with the compiled kernel
CONVERGED = 0
MAX_ITER = 1
LINE_SEARCH = 2
WANDERED = 3
SINGULAR = 4


def _ladder(ell: int) -> np.ndarray:
    # c[m] = sqrt((l+m)(l-m+1)) for m = 0..l+1; c[l+1] = 0
    m = np.arange(ell + 2, dtype=float)
    return np.sqrt(np.clip((ell + m) * (ell - m + 1), 0.0, None))


def alf_table(ell: int, theta):
    theta = np.ascontiguousarray(theta, dtype=float)
    n = theta.shape[0]
    s = np.sin(theta)
    c = np.cos(theta)
    cot = c / s
    cm = _ladder(ell)

    p = np.zeros((n, ell + 2))
    p[:, ell] = -1.0 if ell % 2 else 1.0
    for m in range(ell, 0, -1):
        p[:, m - 1] = -(2.0 * m * cot * p[:, m] + cm[m + 1] * p[:, m + 1]) / cm[m]
        big = np.abs(p[:, m - 1]) > _RESCALE_AT
        if big.any():
            p[big, m - 1:] /= _RESCALE_AT
    total = p[:, 0] ** 2 + 2.0 * np.sum(p[:, 1:ell + 1] ** 2, axis=1)
    p *= np.sqrt((2 * ell + 1) / (4.0 * np.pi) / total)[:, None]

    dp = np.empty((n, ell + 1))
    dp[:, 0] = cm[1] * p[:, 1]
    if ell >= 1:
        mm = np.arange(1, ell + 1)
        dp[:, 1:] = 0.5 * (cm[mm + 1] * p[:, mm + 1] - cm[mm] * p[:, mm - 1])
    m2 = np.arange(ell + 1, dtype=float) ** 2
    lam = ell * (ell + 1.0)
    p = p[:, :ell + 1]
    d2p = -cot[:, None] * dp + (m2[None, :] / (s * s)[:, None] - lam) * p
    return p, dp, d2p


def field_jets(ell: int, re, im, theta, phi):
    re = np.asarray(re, dtype=float)
    im = np.asarray(im, dtype=float)
    theta = np.ascontiguousarray(theta, dtype=float)
    phi = np.ascontiguousarray(phi, dtype=float)
    p, dp, d2p = alf_table(ell, theta)
    m = np.arange(ell + 1, dtype=float)
    w = np.full(ell + 1, 2.0)
    w[0] = 1.0
    w *= np.sqrt(4.0 * np.pi / (2 * ell + 1))
    mphi = np.outer(phi, m)
    cs = np.cos(mphi)
    sn = np.sin(mphi)
    r = (re * w) * cs - (im * w) * sn
    q = -((re * w) * sn + (im * w) * cs)
    out = np.empty((theta.shape[0], 6))
    out[:, 0] = np.sum(p * r, axis=1)
    out[:, 1] = np.sum(dp * r, axis=1)
    out[:, 2] = np.sum(p * q * m, axis=1)
    out[:, 3] = np.sum(d2p * r, axis=1)
    out[:, 4] = np.sum(dp * q * m, axis=1)
    out[:, 5] = -np.sum(p * r * (m * m), axis=1)
    return out


def _grad_norm(jets, theta):
    s = np.sin(theta)
    return np.hypot(jets[:, 1], jets[:, 2] / s)


def newton_polish(ell, re, im, theta0, phi0, tol, max_iter, max_halvings,
                  max_dtheta, max_dphi, theta_lo, theta_hi):
    theta0 = np.ascontiguousarray(theta0, dtype=float)
    phi0 = np.ascontiguousarray(phi0, dtype=float)
    n = theta0.shape[0]
    theta = theta0.copy()
    phi = phi0.copy()
    status = np.full(n, MAX_ITER, dtype=np.int64)
    resid = np.full(n, np.inf)
    iters = np.zeros(n, dtype=np.int64)

    active = np.arange(n)
    jets = field_jets(ell, re, im, theta, phi)
    g = _grad_norm(jets, theta)
    for it in range(max_iter + 1):
        if active.size == 0:
            break
        done = g <= tol
        if done.any():
            idx = active[done]
            status[idx] = CONVERGED
            resid[idx] = g[done]
            iters[idx] = it
        keep = ~done
        active, jets, g = active[keep], jets[keep], g[keep]
        if it == max_iter or active.size == 0:
            resid[active] = g
            break

        ft, fp, ftt, ftp, fpp = jets[:, 1], jets[:, 2], jets[:, 3], jets[:, 4], jets[:, 5]
        det = ftt * fpp - ftp * ftp
        singular = det == 0.0
        safe = np.where(singular, 1.0, det)
        dth = -(fpp * ft - ftp * fp) / safe
        dph = -(ftt * fp - ftp * ft) / safe
        if singular.any():
            idx = active[singular]
            status[idx] = SINGULAR
            resid[idx] = g[singular]
            ok = ~singular
            active, jets, g, dth, dph = active[ok], jets[ok], g[ok], dth[ok], dph[ok]

        step = np.ones(active.size)
        pending = np.arange(active.size)
        new_jets = np.empty_like(jets)
        new_g = np.full(active.size, np.inf)
        accepted = np.zeros(active.size, dtype=bool)
        for _ in range(max_halvings + 1):
            if pending.size == 0:
                break
            ai = active[pending]
            th = theta[ai] + step[pending] * dth[pending]
            ph = phi[ai] + step[pending] * dph[pending]
            inside = (th > theta_lo) & (th < theta_hi)
            th_eval = np.where(inside, th, 0.5 * np.pi)
            tj = field_jets(ell, re, im, th_eval, ph)
            tg = np.where(inside, _grad_norm(tj, th_eval), np.inf)
            better = tg < g[pending]
            sel = pending[better]
            theta[active[sel]] = th[better]
            phi[active[sel]] = ph[better]
            new_jets[sel] = tj[better]
            new_g[sel] = tg[better]
            accepted[sel] = True
            pending = pending[~better]
            step[pending] *= 0.5

        failed = ~accepted
        if failed.any():
            idx = active[failed]
            status[idx] = LINE_SEARCH
            resid[idx] = g[failed]
            iters[idx] = it + 1
        ok = accepted
        active, jets, g = active[ok], new_jets[ok], new_g[ok]

        dphi = np.angle(np.exp(1j * (phi[active] - phi0[active])))
        wander = (np.abs(theta[active] - theta0[active]) > max_dtheta) | (np.abs(dphi) > max_dphi)
        if wander.any():
            idx = active[wander]
            status[idx] = WANDERED
            resid[idx] = g[wander]
            iters[idx] = it + 1
            ok = ~wander
            active, jets, g = active[ok], jets[ok], g[ok]
    else:
        resid[active] = g
    iters[status == MAX_ITER] = max_iter
    return theta, np.mod(phi, 2.0 * np.pi), status, resid, iters
