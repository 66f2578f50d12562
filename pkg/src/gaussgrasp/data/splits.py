from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .records import SampleRecord

SPLIT_MODES = ("image-wise", "object-wise")


class SplitError(ValueError):
    pass


def _n_test(n: int, fraction: float) -> int:
    # floor, but never leave either side empty
    return min(max(math.floor(n * fraction), 1), n - 1)


def make_splits(records: Sequence[SampleRecord], mode: str = "image-wise", test_fraction: float = 0.1,
                seed: int = 0) -> tuple[list[str], list[str]]:
    """Seeded train/test partition of sample ids.

    ``image-wise`` permutes samples; ``object-wise`` permutes object ids and
    lets every sample follow its object. Both id lists keep record order.
    """
    if not 0 < test_fraction < 1:
        raise SplitError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    if mode not in SPLIT_MODES:
        raise SplitError(f"unknown split mode {mode!r}")
    ids = [r.sample_id for r in records]
    if len(set(ids)) != len(ids):
        raise SplitError("duplicate sample ids")
    rng = np.random.default_rng(seed)

    if mode == "image-wise":
        if len(ids) < 2:
            raise SplitError("need at least 2 samples to split")
        perm = rng.permutation(len(ids))
        test = {ids[i] for i in perm[:_n_test(len(ids), test_fraction)]}
    else:
        objects = sorted({r.object_id for r in records})
        if len(objects) < 2:
            raise SplitError("object-wise split needs at least 2 distinct objects")
        perm = rng.permutation(len(objects))
        test_objects = {objects[i] for i in perm[:_n_test(len(objects), test_fraction)]}
        test = {r.sample_id for r in records if r.object_id in test_objects}

    return [i for i in ids if i not in test], [i for i in ids if i in test]


def make_kfold_splits(records: Sequence[SampleRecord], k: int, mode: str = "image-wise",
                      seed: int = 0) -> list[tuple[list[str], list[str]]]:
    if k < 2:
        raise SplitError("k-fold needs k >= 2")
    ids = [r.sample_id for r in records]
    keys = ids if mode == "image-wise" else sorted({r.object_id for r in records})
    if len(keys) < k:
        raise SplitError(f"cannot make {k} folds from {len(keys)} {mode} units")
    perm = np.random.default_rng(seed).permutation(len(keys))
    folds = np.array_split(perm, k)
    key_of = {r.sample_id: (r.sample_id if mode == "image-wise" else r.object_id) for r in records}
    out = []
    for fold in folds:
        test_keys = {keys[i] for i in fold}
        out.append(([i for i in ids if key_of[i] not in test_keys], [i for i in ids if key_of[i] in test_keys]))
    return out


def write_split_file(path: Path, ids: Iterable[str]) -> None:
    Path(path).write_text("".join(f"{i}\n" for i in ids))


def read_split_file(path: Path) -> list[str]:
    return [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]
