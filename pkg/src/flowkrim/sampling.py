"""Observation index sets and the entrywise sampling mapping."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True, eq=False)
class SamplingMask:
    """Boolean ``(N1, T)`` indicator of the observed entries.

    The set of ``(edge, time)`` pairs is available through :attr:`observed`.
    """

    indicator: np.ndarray

    def __post_init__(self):
        ind = np.asarray(self.indicator, dtype=bool)
        if ind.ndim != 2:
            raise ValueError("mask indicator must be 2-D")
        ind = ind.copy()
        ind.setflags(write=False)
        object.__setattr__(self, "indicator", ind)

    @classmethod
    def from_pairs(cls, shape, pairs) -> "SamplingMask":
        ind = np.zeros(shape, dtype=bool)
        for i, t in pairs:
            if not (0 <= i < shape[0] and 0 <= t < shape[1]):
                raise IndexError(f"observed index {(i, t)} outside shape {shape}")
            ind[i, t] = True
        return cls(ind)

    @classmethod
    def full(cls, shape) -> "SamplingMask":
        return cls(np.ones(shape, dtype=bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.indicator.shape

    @property
    def observed(self) -> set[tuple[int, int]]:
        return set(zip(*(ix.tolist() for ix in np.nonzero(self.indicator))))

    def __len__(self):
        return int(self.indicator.sum())

    def __eq__(self, other):
        return isinstance(other, SamplingMask) and np.array_equal(self.indicator, other.indicator)

    def __hash__(self):
        return hash((self.shape, self.indicator.tobytes()))


def _check(y, mask):
    y = np.asarray(y, dtype=float)
    if y.shape != mask.shape:
        raise ValueError(f"shape mismatch: matrix {y.shape} vs mask {mask.shape}")
    return y


def apply_mask(y, mask: SamplingMask) -> np.ndarray:
    y = _check(y, mask)
    return np.where(mask.indicator, y, 0.0)


def consistency_project(x, y, mask: SamplingMask) -> np.ndarray:
    """Copy of ``x`` with the observed entries overwritten by ``y``."""
    x = _check(x, mask)
    y = _check(y, mask)
    return np.where(mask.indicator, y, x)


def per_snapshot_count(n1: int, ratio: float) -> int:
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"sampling ratio must be in (0, 1], got {ratio}")
    # guard against 0.1 * 40 = 4.000000000000001
    return min(n1, math.ceil(round(n1 * ratio, 9)))


def sample_per_snapshot(n1: int, t: int, ratio: float, rng_seed) -> SamplingMask:
    """Observe ``ceil(n1 * ratio)`` uniformly chosen edges in every column.

    ``rng_seed`` is anything :func:`numpy.random.default_rng` accepts; pass
    ``SeedSequence.spawn`` children to split streams across runs.
    """
    k = per_snapshot_count(n1, ratio)
    rng = np.random.default_rng(rng_seed)
    ind = np.zeros((n1, t), dtype=bool)
    for col in range(t):
        ind[rng.choice(n1, size=k, replace=False), col] = True
    return SamplingMask(ind)


def save_mask(mask: SamplingMask, path) -> None:
    rows, cols = np.nonzero(mask.indicator)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\r\n")
        w.writerow(["edge", "time"])
        w.writerows(zip(rows.tolist(), cols.tolist()))


def load_mask(path, shape) -> SamplingMask:
    with open(path, newline="") as f:
        rdr = csv.reader(f)
        header = next(rdr, None)
        if header != ["edge", "time"]:
            raise ValueError(f"{path}: expected header 'edge,time'")
        pairs = [(int(a), int(b)) for a, b in rdr]
    return SamplingMask.from_pairs(tuple(shape), pairs)
