"""Error metric, parameter counts and factor sparsity."""

from __future__ import annotations

import numpy as np


def mae(x, y) -> float:
    """Mean absolute error over all N1*T entries."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return float(np.abs(x - y).sum() / x.size)


def param_count(n1: int, n_l: int, t: int, d: int, r: int) -> int:
    """Unknowns in the four factors: ``(N1 + N_l) d + (N_l + T) r``."""
    for name, v in (("n1", n1), ("n_l", n_l), ("t", t), ("d", d), ("r", r)):
        if int(v) < 1:
            raise ValueError(f"{name} must be a positive integer")
    return (n1 + n_l) * d + (n_l + t) * r


def sparsity_report(f, threshold: float = 1e-3) -> dict[str, float]:
    """Fraction of entries with magnitude above ``threshold`` in each factor."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    return {name: float(np.mean(np.abs(getattr(f, name)) > threshold))
            for name in ("u1", "u2", "v1", "v2")}
