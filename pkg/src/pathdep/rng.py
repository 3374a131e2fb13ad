"""Counter-based random numbers (Philox4x32-10), vectorized over counters.

Every draw is a pure function of ``(seed, path id, step, draw index, tag)``, so
results do not depend on how paths are split across workers.
"""

from __future__ import annotations

import numpy as np
from scipy import stats

__all__ = ["philox4x32", "uniforms", "normals", "poisson", "substream_seed", "TAG_NORMAL", "TAG_POISSON"]

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)

TAG_NORMAL = 1
TAG_POISSON = 2


def philox4x32(counter, key, rounds: int = 10) -> np.ndarray:
    """Philox4x32 block function.

    Parameters
    ----------
    counter : array_like of uint32, shape (..., 4)
    key : array_like of uint32, shape (2,) or (..., 2)

    Returns
    -------
    ndarray of uint32, shape (..., 4)
    """
    c = np.asarray(counter, dtype=np.uint32)
    k = np.asarray(key, dtype=np.uint32)
    c0, c1, c2, c3 = (c[..., i] for i in range(4))
    k0 = np.broadcast_to(k[..., 0], c0.shape).copy()
    k1 = np.broadcast_to(k[..., 1], c0.shape).copy()
    with np.errstate(over="ignore"):
        for _ in range(rounds):
            p0 = c0.astype(np.uint64) * _M0
            p1 = c2.astype(np.uint64) * _M1
            hi0, lo0 = (p0 >> _SHIFT).astype(np.uint32), (p0 & _MASK).astype(np.uint32)
            hi1, lo1 = (p1 >> _SHIFT).astype(np.uint32), (p1 & _MASK).astype(np.uint32)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
            k0 = k0 + _W0
            k1 = k1 + _W1
    return np.stack([c0, c1, c2, c3], axis=-1)


def _key(seed: int) -> np.ndarray:
    seed = int(seed)
    return np.array([seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF], dtype=np.uint32)


def _blocks(seed: int, path_ids, step: int, n_blocks: int, tag: int) -> np.ndarray:
    """Raw words for each path, shape (n_paths, 4 * n_blocks)."""
    ids = np.asarray(path_ids, dtype=np.uint32)
    ctr = np.empty((ids.size, n_blocks, 4), dtype=np.uint32)
    ctr[..., 0] = np.arange(n_blocks, dtype=np.uint32)[None, :]
    ctr[..., 1] = np.uint32(step)
    ctr[..., 2] = ids[:, None]
    ctr[..., 3] = np.uint32(tag)
    return philox4x32(ctr, _key(seed)).reshape(ids.size, 4 * n_blocks)


def uniforms(seed: int, path_ids, step: int, count: int, tag: int = TAG_NORMAL) -> np.ndarray:
    """Uniforms in the open interval (0, 1) with 53-bit resolution, shape (n_paths, count)."""
    n_blocks = (2 * count + 3) // 4
    w = _blocks(seed, path_ids, step, n_blocks, tag).astype(np.uint64)
    a, b = w[:, 0 : 2 * count : 2], w[:, 1 : 2 * count : 2]
    return ((a >> np.uint64(5)) * 67108864.0 + (b >> np.uint64(6)) + 0.5) / 9007199254740992.0


def normals(seed: int, path_ids, step: int, count: int) -> np.ndarray:
    """Standard normals by Box-Muller, shape (n_paths, count)."""
    half = (count + 1) // 2
    u = uniforms(seed, path_ids, step, 2 * half, TAG_NORMAL)
    u1, u2 = u[:, :half], u[:, half:]
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)], axis=1)
    return z[:, :count]


def poisson(seed: int, path_ids, step: int, means) -> np.ndarray:
    """Poisson counts with the given means (one column per mean) by CDF inversion."""
    means = np.asarray(means, dtype=float)
    out = np.zeros((np.size(path_ids), means.size), dtype=np.int64)
    if means.size == 0:
        return out
    u = uniforms(seed, path_ids, step, means.size, TAG_POISSON)
    for k, mu in enumerate(means):
        if mu <= 0:
            continue
        top = int(stats.poisson.ppf(1 - 1e-16, mu)) + 2
        cdf = stats.poisson.cdf(np.arange(top), mu)
        out[:, k] = np.minimum(np.searchsorted(cdf, u[:, k], side="left"), top)
    return out


def substream_seed(seed: int, *tags: int) -> int:
    """Derived 64-bit seed for nested or auxiliary runs."""
    state = np.random.SeedSequence([int(seed) & (2**64 - 1), *(int(t) for t in tags)]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)
