"""Counter-based random streams, one per (master seed, path index, stream).

Each stream is a Philox generator keyed by the master seed whose 256-bit
counter starts at ``[0, 0, stream, path_index]``.  Draws advance the low
word only, so streams never overlap and path ``i`` sees the same numbers no
matter how paths are batched or which thread generates them.
"""
from __future__ import annotations

import numpy as np

# stream identifiers
MODEL_NOISE = 0
CONTINUATION_NOISE = 1
ORTHOGONAL_NOISE = 2


def seed_key(seed: int) -> np.ndarray:
    return np.random.SeedSequence(int(seed)).generate_state(2, np.uint64)


def path_generator(seed: int, path_index: int, stream: int = MODEL_NOISE, key=None) -> np.random.Generator:
    if path_index < 0 or stream < 0:
        raise ValueError("path_index and stream must be non-negative")
    if key is None:
        key = seed_key(seed)
    counter = np.array([0, 0, stream, path_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def path_normals(seed: int, path_ids, n_draws: int, dim: int, stream: int = MODEL_NOISE) -> np.ndarray:
    """Standard normals of shape ``(n_draws, len(path_ids), dim)``.

    Column ``j`` depends only on ``(seed, path_ids[j], stream)``.
    """
    path_ids = np.asarray(path_ids, dtype=np.int64)
    out = np.empty((n_draws, path_ids.size, dim))
    key = seed_key(seed)
    for j, pid in enumerate(path_ids):
        out[:, j, :] = path_generator(seed, int(pid), stream, key).standard_normal((n_draws, dim))
    return out
