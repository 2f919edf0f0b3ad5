"""Backend selection for the hot kernels.

The compiled extension ``sphcrit._ckernels`` is used when it imports; the
numpy implementation in :mod:`sphcrit._pykernels` is the fallback.  Set
``SPHCRIT_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

CONVERGED = _pykernels.CONVERGED
MAX_ITER = _pykernels.MAX_ITER
LINE_SEARCH = _pykernels.LINE_SEARCH
WANDERED = _pykernels.WANDERED
SINGULAR = _pykernels.SINGULAR

_impl = _pykernels
BACKEND = "python"

if os.environ.get("SPHCRIT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

alf_table = _impl.alf_table
field_jets = _impl.field_jets
newton_polish = _impl.newton_polish


def available_backends() -> dict:
    """Map backend name to kernel module, for benchmarks and parity tests."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
