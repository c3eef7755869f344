"""Pure numpy implementations of the hot kernels.

Used when the compiled extension is unavailable (or forced via
``SPDELAB_KERNELS=python``).  Results agree with the Cython core to
rounding; the integer hashing is bit-identical.
"""
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53
_TWO_PI = 2.0 * np.pi

# pair blocks are processed in row slabs to bound memory at ~_BLOCK * P doubles
_BLOCK = 256


def mix64(x):
    """SplitMix64 finalizer on uint64 arrays (wrapping arithmetic)."""
    z = np.asarray(x, dtype=np.uint64) + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def counter_normals(stream_keys, mode_keys):
    """Standard normals indexed by (stream, mode).

    ``stream_keys`` has shape (n,), ``mode_keys`` shape (J,), both uint64.
    Entry (a, j) is a pure function of the two keys.
    """
    s = np.asarray(stream_keys, dtype=np.uint64)[:, None]
    m = np.asarray(mode_keys, dtype=np.uint64)[None, :]
    a = mix64(s ^ m)
    b = mix64(a)
    u1 = (a >> _S11).astype(np.float64) * _INV53
    u2 = (b >> _S11).astype(np.float64) * _INV53
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(_TWO_PI * u2)


def pair_sum(values, coords, power):
    """Sum over ordered pairs k != l of (v_k - v_l)^2 / |x_k - x_l|^power."""
    v = np.ascontiguousarray(values, dtype=np.float64)
    x = np.ascontiguousarray(coords, dtype=np.float64)
    P = v.shape[0]
    total = 0.0
    for start in range(0, P, _BLOCK):
        stop = min(start + _BLOCK, P)
        diff = x[start:stop, None, :] - x[None, :, :]
        dist2 = np.einsum("ijk,ijk->ij", diff, diff)
        rows = np.arange(start, stop)
        dist2[rows - start, rows] = 1.0
        num = (v[start:stop, None] - v[None, :]) ** 2
        num[rows - start, rows] = 0.0
        total += float(np.sum(num / dist2 ** (0.5 * power)))
    return total


def pair_max(values, coords, delta):
    """Max over pairs k != l of |v_k - v_l| / |x_k - x_l|^delta."""
    v = np.ascontiguousarray(values, dtype=np.float64)
    x = np.ascontiguousarray(coords, dtype=np.float64)
    P = v.shape[0]
    best = 0.0
    for start in range(0, P, _BLOCK):
        stop = min(start + _BLOCK, P)
        diff = x[start:stop, None, :] - x[None, :, :]
        dist2 = np.einsum("ijk,ijk->ij", diff, diff)
        rows = np.arange(start, stop)
        dist2[rows - start, rows] = 1.0
        q = np.abs(v[start:stop, None] - v[None, :]) / dist2 ** (0.5 * delta)
        q[rows - start, rows] = 0.0
        best = max(best, float(q.max()))
    return best
