"""Counter-based Gaussian draws.

A draw is a pure function of ``(seed, counters..., mode)``: there is no
generator state, so results do not depend on execution order, batching or
the number of worker processes.  Keys are chained through the SplitMix64
finalizer; normals come from Box-Muller on two 53-bit uniforms.
"""
import numpy as np

from spdelab import kernels

_MASK = (1 << 64) - 1

# domain-separation tags so unrelated consumers never share streams
NOISE = 0x6E6F697365
FIELD_SAMPLE = 0x6669656C64
EQUIV_SAMPLE = 0x6571756976


def stream_keys(seed: int, *counters) -> np.ndarray:
    """Chain ``seed`` with each counter (scalars or broadcastable int arrays)."""
    key = kernels.mix64(np.array([seed & _MASK], dtype=np.uint64))
    for c in counters:
        c = np.asarray(c)
        if np.any(c < 0):
            raise ValueError("counters must be non-negative")
        key = kernels.mix64(np.ravel(key ^ c.astype(np.uint64)))
    return key


def mode_keys(indices: np.ndarray) -> np.ndarray:
    """Keys for multi-indices of shape (J, d); independent of how many modes are kept."""
    idx = np.asarray(indices, dtype=np.uint64)
    if idx.ndim == 1:
        idx = idx[:, None]
    key = np.zeros(idx.shape[0], dtype=np.uint64)
    for c in range(idx.shape[1]):
        key = kernels.mix64(key ^ idx[:, c])
    return key


def normals(streams: np.ndarray, modes: np.ndarray) -> np.ndarray:
    """Standard normals of shape (len(streams), len(modes))."""
    return kernels.counter_normals(np.ravel(streams), np.ravel(modes))
