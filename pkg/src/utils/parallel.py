"""
Deterministic seed derivation and concurrent job execution.
"""
from typing import Any, Callable, List, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from .dataset import stable_digest

SeedKey = Union[int, str]

_SEED_MASK = (1 << 63) - 1


def _key_words(key: SeedKey) -> List[int]:
    if isinstance(key, str):
        digest = stable_digest(key.encode("utf-8"))
        return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    key = int(key)
    if key < 0:
        raise ValueError(f"Seed keys must be non-negative, got {key}")
    return [key & 0xFFFFFFFF, (key >> 32) & 0xFFFFFFFF]


def derive_seed(master: int, *keys: SeedKey) -> int:
    """Child seed from a master seed and a path of job keys (ints or strings)."""
    entropy = _key_words(master)
    for key in keys:
        entropy.extend(_key_words(key))
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) | (int(state[1]) << 32)) & _SEED_MASK)


def run_jobs(
    func: Callable[..., Any],
    arg_list: Sequence[Tuple[Any, ...]],
    n_jobs: int = 1,
) -> List[Any]:
    """
    Run ``func(*args)`` for every entry of ``arg_list``.

    Results come back in job order, so reductions are independent of scheduling.
    ``func`` must be a module-level function when ``n_jobs > 1``.
    """
    if n_jobs is None or n_jobs <= 1 or len(arg_list) <= 1:
        return [func(*args) for args in arg_list]
    return Parallel(n_jobs=n_jobs, backend="loky")(delayed(func)(*args) for args in arg_list)
