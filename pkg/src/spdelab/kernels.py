"""Backend selection for the hot kernels.

The compiled core (``_ckernels``) is used when it was built; otherwise the
numpy fallback is imported.  Set ``SPDELAB_KERNELS=python`` to force the
fallback (the test-suite runs both).
"""
import os

from spdelab import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("SPDELAB_KERNELS", "").lower() != "python":
    try:
        from spdelab import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

mix64 = _impl.mix64
counter_normals = _impl.counter_normals
pair_sum = _impl.pair_sum
pair_max = _impl.pair_max


def available_backends():
    """Names and modules of every importable backend."""
    out = {"python": _pykernels}
    try:
        from spdelab import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
