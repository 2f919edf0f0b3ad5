# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; same signatures and semantics as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt, fabs, hypot, fmod, M_PI

cnp.import_array()

cdef double RESCALE_AT = 1e150

cdef int CONVERGED = 0
cdef int MAX_ITER = 1
cdef int LINE_SEARCH = 2
cdef int WANDERED = 3
cdef int SINGULAR = 4


cdef inline void _ladder(int ell, double* cm) noexcept nogil:
    cdef int m
    cdef double v
    for m in range(ell + 2):
        v = (ell + m) * (ell - m + 1.0)
        cm[m] = sqrt(v) if v > 0 else 0.0


cdef void _alf_point(int ell, double theta, const double* cm,
                     double* p, double* dp, double* d2p) noexcept nogil:
    # p needs ell + 2 slots
    cdef double s = sin(theta)
    cdef double c = cos(theta)
    cdef double cot = c / s
    cdef double total, scale, lam = ell * (ell + 1.0)
    cdef int m, k
    p[ell + 1] = 0.0
    p[ell] = -1.0 if ell % 2 else 1.0
    for m in range(ell, 0, -1):
        p[m - 1] = -(2.0 * m * cot * p[m] + cm[m + 1] * p[m + 1]) / cm[m]
        if fabs(p[m - 1]) > RESCALE_AT:
            for k in range(m - 1, ell + 1):
                p[k] /= RESCALE_AT
    total = p[0] * p[0]
    for m in range(1, ell + 1):
        total += 2.0 * p[m] * p[m]
    scale = sqrt((2 * ell + 1) / (4.0 * M_PI) / total)
    for m in range(ell + 1):
        p[m] *= scale
    dp[0] = cm[1] * p[1]
    for m in range(1, ell + 1):
        dp[m] = 0.5 * (cm[m + 1] * p[m + 1] - cm[m] * p[m - 1])
    for m in range(ell + 1):
        d2p[m] = -cot * dp[m] + (m * m / (s * s) - lam) * p[m]


def alf_table(int ell, theta):
    cdef double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef Py_ssize_t n = th.shape[0], i
    cdef int m
    P = np.empty((n, ell + 1))
    DP = np.empty((n, ell + 1))
    D2P = np.empty((n, ell + 1))
    cdef double[:, ::1] pv = P, dpv = DP, d2pv = D2P
    cdef double[::1] cm = np.empty(ell + 2)
    cdef double[::1] pw = np.empty(ell + 2), dw = np.empty(ell + 1), d2w = np.empty(ell + 1)
    _ladder(ell, &cm[0])
    with nogil:
        for i in range(n):
            _alf_point(ell, th[i], &cm[0], &pw[0], &dw[0], &d2w[0])
            for m in range(ell + 1):
                pv[i, m] = pw[m]
                dpv[i, m] = dw[m]
                d2pv[i, m] = d2w[m]
    return P, DP, D2P


cdef void _jet_point(int ell, const double* are, const double* aim, const double* cm,
                     double theta, double phi, double* p, double* dp, double* d2p,
                     double* out) noexcept nogil:
    # are/aim are pre-scaled by sqrt(4 pi / (2l+1)) and the factor 2 for m > 0
    cdef double c1 = cos(phi), s1 = sin(phi)
    cdef double cm_ = 1.0, sm_ = 0.0, tmp
    cdef double r, q, f = 0, ft = 0, fp = 0, ftt = 0, ftp = 0, fpp = 0
    cdef int m
    _alf_point(ell, theta, cm, p, dp, d2p)
    for m in range(ell + 1):
        r = are[m] * cm_ - aim[m] * sm_
        q = -(are[m] * sm_ + aim[m] * cm_)
        f += p[m] * r
        ft += dp[m] * r
        fp += p[m] * q * m
        ftt += d2p[m] * r
        ftp += dp[m] * q * m
        fpp -= p[m] * r * m * m
        tmp = cm_ * c1 - sm_ * s1
        sm_ = sm_ * c1 + cm_ * s1
        cm_ = tmp
    out[0] = f
    out[1] = ft
    out[2] = fp
    out[3] = ftt
    out[4] = ftp
    out[5] = fpp


cdef inline double _gnorm(const double* jet, double theta) noexcept nogil:
    return hypot(jet[1], jet[2] / sin(theta))


def _scaled(int ell, re, im):
    w = np.full(ell + 1, 2.0)
    w[0] = 1.0
    w *= np.sqrt(4.0 * np.pi / (2 * ell + 1))
    return (np.ascontiguousarray(np.asarray(re, float) * w),
            np.ascontiguousarray(np.asarray(im, float) * w))


def field_jets(int ell, re, im, theta, phi):
    a_re, a_im = _scaled(ell, re, im)
    cdef double[::1] ar = a_re, ai = a_im
    cdef double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef double[::1] ph = np.ascontiguousarray(phi, dtype=np.float64)
    cdef Py_ssize_t n = th.shape[0], i
    out = np.empty((n, 6))
    cdef double[:, ::1] ov = out
    cdef double[::1] cm = np.empty(ell + 2)
    cdef double[::1] pw = np.empty(ell + 2), dw = np.empty(ell + 1), d2w = np.empty(ell + 1)
    _ladder(ell, &cm[0])
    with nogil:
        for i in range(n):
            _jet_point(ell, &ar[0], &ai[0], &cm[0], th[i], ph[i], &pw[0], &dw[0], &d2w[0], &ov[i, 0])
    return out


cdef inline double _wrap(double x) noexcept nogil:
    x = fmod(x + M_PI, 2.0 * M_PI)
    if x < 0:
        x += 2.0 * M_PI
    return x - M_PI


def newton_polish(int ell, re, im, theta0, phi0, double tol, int max_iter, int max_halvings,
                  double max_dtheta, double max_dphi, double theta_lo, double theta_hi):
    a_re, a_im = _scaled(ell, re, im)
    cdef double[::1] ar = a_re, ai = a_im
    cdef double[::1] t0 = np.ascontiguousarray(theta0, dtype=np.float64)
    cdef double[::1] p0 = np.ascontiguousarray(phi0, dtype=np.float64)
    cdef Py_ssize_t n = t0.shape[0], i
    theta = np.array(t0, copy=True)
    phi = np.array(p0, copy=True)
    status = np.empty(n, dtype=np.int64)
    resid = np.empty(n)
    iters = np.empty(n, dtype=np.int64)
    cdef double[::1] tv = theta, pv = phi, rv = resid
    cdef long long[::1] sv = status, iv = iters
    cdef double[::1] cm = np.empty(ell + 2)
    cdef double[::1] pw = np.empty(ell + 2), dw = np.empty(ell + 1), d2w = np.empty(ell + 1)
    cdef double jet[6]
    cdef double trial[6]
    cdef double th, ph, g, tg, det, dth, dph, step, nth, nph
    cdef int it, h, st, accepted
    _ladder(ell, &cm[0])
    with nogil:
        for i in range(n):
            th = t0[i]
            ph = p0[i]
            _jet_point(ell, &ar[0], &ai[0], &cm[0], th, ph, &pw[0], &dw[0], &d2w[0], jet)
            g = _gnorm(jet, th)
            st = MAX_ITER
            it = 0
            while True:
                if g <= tol:
                    st = CONVERGED
                    break
                if it == max_iter:
                    st = MAX_ITER
                    break
                det = jet[3] * jet[5] - jet[4] * jet[4]
                if det == 0.0:
                    st = SINGULAR
                    break
                dth = -(jet[5] * jet[1] - jet[4] * jet[2]) / det
                dph = -(jet[3] * jet[2] - jet[4] * jet[1]) / det
                step = 1.0
                accepted = 0
                for h in range(max_halvings + 1):
                    nth = th + step * dth
                    nph = ph + step * dph
                    if nth > theta_lo and nth < theta_hi:
                        _jet_point(ell, &ar[0], &ai[0], &cm[0], nth, nph, &pw[0], &dw[0], &d2w[0], trial)
                        tg = _gnorm(trial, nth)
                        if tg < g:
                            accepted = 1
                            break
                    step *= 0.5
                it += 1
                if not accepted:
                    st = LINE_SEARCH
                    break
                th = nth
                ph = nph
                g = tg
                for h in range(6):
                    jet[h] = trial[h]
                if fabs(th - t0[i]) > max_dtheta or fabs(_wrap(ph - p0[i])) > max_dphi:
                    st = WANDERED
                    break
            tv[i] = th
            pv[i] = fmod(ph, 2.0 * M_PI)
            if pv[i] < 0:
                pv[i] += 2.0 * M_PI
            rv[i] = g
            sv[i] = st
            iv[i] = it
    return theta, phi, status, resid, iters
