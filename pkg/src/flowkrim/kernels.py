"""Navigator data, max-min landmark selection and landmark kernel matrices."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from flowkrim.sampling import SamplingMask

KERNEL_FAMILIES = ("gaussian", "laplacian", "polynomial")


@dataclass(frozen=True)
class NavigatorSet:
    vectors: np.ndarray  # nu x N_nav, one navigator per column
    source_times: np.ndarray

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def __len__(self):
        return self.vectors.shape[1]


@dataclass(frozen=True)
class LandmarkSet:
    points: np.ndarray  # nu x N_l
    chosen: np.ndarray  # indices into the navigator set, in selection order

    def __len__(self):
        return self.points.shape[1]


@dataclass(frozen=True)
class KernelSpec:
    family: str = "gaussian"
    bandwidth: float | None = None  # None -> median heuristic
    degree: int = 2
    offset: float = 1.0

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.bandwidth is not None and self.bandwidth < 0:
            raise ValueError("bandwidth must be non-negative")
        if self.family == "polynomial" and (self.degree < 1 or self.offset < 0):
            raise ValueError("polynomial kernel needs degree >= 1 and offset >= 0")


def build_navigators(masked_y, mask: SamplingMask) -> NavigatorSet:
    """One navigator per column: its observed entries in edge order."""
    y = np.asarray(masked_y, dtype=float)
    ind = mask.indicator
    if y.shape != ind.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {ind.shape}")
    counts = ind.sum(axis=0)
    if counts.size == 0 or counts.min() != counts.max():
        raise ValueError(
            "navigators need the same number of observed entries in every column, "
            f"got counts in [{counts.min()}, {counts.max()}]"
        )
    if counts[0] == 0:
        raise ValueError("no observed entries")
    # column-major nonzero keeps increasing edge order within each column
    vecs = y.T[ind.T].reshape(y.shape[1], counts[0]).T
    return NavigatorSet(vecs.copy(), np.arange(y.shape[1]))


def select_landmarks(nav: NavigatorSet, n_l: int, rng_seed=None, first: int | None = None) -> LandmarkSet:
    """Greedy max-min (farthest point) selection.

    Starts from the navigator of largest norm (ties broken with ``rng_seed``)
    unless ``first`` is given.
    """
    pts = nav.vectors.T
    n = pts.shape[0]
    if not 1 <= n_l <= n:
        raise ValueError(f"n_l must be in [1, {n}], got {n_l}")
    if first is None:
        norms = np.linalg.norm(pts, axis=1)
        ties = np.flatnonzero(norms == norms.max())
        first = int(ties[0]) if len(ties) == 1 else int(np.random.default_rng(rng_seed).choice(ties))
    chosen = [int(first)]
    mind = np.linalg.norm(pts - pts[first], axis=1)
    mind[first] = -np.inf
    for _ in range(n_l - 1):
        nxt = int(np.argmax(mind))
        chosen.append(nxt)
        mind = np.minimum(mind, np.linalg.norm(pts - pts[nxt], axis=1))
        mind[chosen] = -np.inf
    idx = np.array(chosen)
    return LandmarkSet(nav.vectors[:, idx].copy(), idx)


def median_bandwidth(vectors) -> float:
    """Median pairwise Euclidean distance between the columns of ``vectors``."""
    v = np.asarray(vectors, dtype=float)
    if v.shape[1] < 2:
        return 1.0
    d = pdist(v.T)
    med = float(np.median(d))
    return med if med > 0 else 1.0


def kernel_values(a, b, spec: KernelSpec, bandwidth: float | None = None) -> np.ndarray:
    """Kernel between the columns of ``a`` and ``b``."""
    a = np.asarray(a, dtype=float).T
    b = np.asarray(b, dtype=float).T
    sigma = spec.bandwidth if bandwidth is None else bandwidth
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if spec.family == "gaussian":
            k = np.exp(-cdist(a, b, "sqeuclidean") / (2.0 * sigma**2))
        elif spec.family == "laplacian":
            k = np.exp(-cdist(a, b) / sigma)
        else:
            k = (a @ b.T + spec.offset) ** spec.degree
    return k


def kernel_matrix(landmarks: LandmarkSet, spec: KernelSpec, bandwidth: float | None = None) -> np.ndarray:
    """``K[k, k'] = kappa(l_k, l_k')``, symmetrized.

    ``bandwidth`` overrides ``spec.bandwidth``; if both are None the median
    heuristic over the landmarks is used.
    """
    if spec.family != "polynomial" and bandwidth is None and spec.bandwidth is None:
        bandwidth = median_bandwidth(landmarks.points)
    k = kernel_values(landmarks.points, landmarks.points, spec, bandwidth)
    if not np.all(np.isfinite(k)):
        raise ValueError(f"non-finite kernel values for {spec}")
    return 0.5 * (k + k.T)


def save_landmarks(lm: LandmarkSet, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\r\n")
        w.writerow(["landmark", "navigator"])
        w.writerows(enumerate(lm.chosen.tolist()))


def save_matrix(mat, path) -> None:
    np.savetxt(path, np.atleast_2d(mat), delimiter=",", fmt="%.17g", newline="\r\n")
