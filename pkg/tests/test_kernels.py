import os
import subprocess
import sys

import numpy as np
import pytest

from sphcrit import _pykernels, kernels
from sphcrit.kernels import available_backends

BACKENDS = available_backends()
needs_compiled = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled kernels not built")


def _inputs(ell, n=300, seed=0):
    rng = np.random.default_rng(seed)
    re = rng.standard_normal(ell + 1)
    im = rng.standard_normal(ell + 1)
    im[0] = 0.0
    return re, im, rng.uniform(0.05, np.pi - 0.05, n), rng.uniform(0, 2 * np.pi, n)


def test_fallback_always_available():
    assert BACKENDS["python"] is _pykernels
    assert kernels.BACKEND in BACKENDS


@needs_compiled
@pytest.mark.parametrize("ell", [1, 4, 30, 120])
def test_alf_and_jets_parity(ell):
    c = BACKENDS["cython"]
    re, im, th, ph = _inputs(ell)
    for a, b in zip(_pykernels.alf_table(ell, th), c.alf_table(ell, th)):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12 * np.abs(a).max())
    ja = _pykernels.field_jets(ell, re, im, th, ph)
    jb = c.field_jets(ell, re, im, th, ph)
    assert np.allclose(ja, jb, rtol=1e-11, atol=1e-12 * np.abs(ja).max())


@needs_compiled
@pytest.mark.parametrize("ell", [3, 25, 80])
def test_newton_parity(ell):
    c = BACKENDS["cython"]
    re, im, th, ph = _inputs(ell, 400, seed=ell)
    args = (ell, re, im, th, ph, 1e-10 * np.sqrt(ell * (ell + 1)), 30, 20, 0.3, 0.3, 0.02, np.pi - 0.02)
    a = _pykernels.newton_polish(*args)
    b = c.newton_polish(*args)
    same = a[2] == b[2]
    assert same.mean() > 0.99
    conv = same & (a[2] == kernels.CONVERGED)
    assert np.allclose(a[0][conv], b[0][conv], atol=1e-9)
    d = np.angle(np.exp(1j * (a[1][conv] - b[1][conv])))
    assert np.all(np.abs(d) < 1e-9)


def test_newton_finds_known_root():
    # ell = 1 with only a_10: f = sqrt(3) cos(theta) ... restricted to pole region; use
    # a_11 real: f = -sqrt(2) * 2 * Pbar_11 * cos(phi) has extrema on the equator at phi = 0, pi
    re = np.array([0.0, 1.0])
    im = np.zeros(2)
    th, ph, status, resid, _ = _pykernels.newton_polish(
        1, re, im, np.array([1.4]), np.array([0.2]), 1e-12, 30, 20, 1.0, 1.0, 0.1, np.pi - 0.1)
    assert status[0] == kernels.CONVERGED
    assert th[0] == pytest.approx(np.pi / 2, abs=1e-10)
    assert min(abs(ph[0]), abs(ph[0] - 2 * np.pi)) < 1e-10


def test_forced_fallback_env():
    code = "from sphcrit import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, SPHCRIT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
