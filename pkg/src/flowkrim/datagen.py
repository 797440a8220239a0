"""Synthetic edge flows mixing gradient (divergence) and cyclic components."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from flowkrim.simplicial import SimplicialComplex2


@dataclass(frozen=True)
class FlowSpec:
    n_gradient_modes: int = 3
    n_curl_modes: int = 1
    temporal_freqs: tuple[float, ...] = (1 / 24, 1 / 12, 1 / 8)
    noise_sigma: float = 0.0
    amplitude: float = 1.0
    offset: float = 0.0


def generate_flows(sc: SimplicialComplex2, t: int, spec: FlowSpec, seed=0) -> np.ndarray:
    """``N1 x t`` flows ``sum_i a_i(t) B1' g_i + sum_j b_j(t) B2 w_j + noise``.

    Mode ``m`` oscillates at ``temporal_freqs[m % len]`` (cycles per time
    step) with a random phase; its temporal profile is ``offset + sin(...)``.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    ng, nc = spec.n_gradient_modes, spec.n_curl_modes
    if ng < 0 or nc < 0 or ng + nc == 0:
        raise ValueError("need non-negative mode counts with at least one mode")
    if nc > 0 and sc.n2 == 0:
        raise ValueError("cyclic modes requested on a complex without triangles")
    if not spec.temporal_freqs:
        raise ValueError("temporal_freqs must not be empty")
    rng = np.random.default_rng(seed)
    times = np.arange(t)
    y = np.zeros((sc.n1, t))
    freqs = spec.temporal_freqs
    for m in range(ng + nc):
        if m < ng:
            pattern = sc.b1.T @ rng.standard_normal(sc.n0)
        else:
            pattern = sc.b2 @ rng.standard_normal(sc.n2)
        phase = rng.uniform(0.0, 2 * np.pi)
        profile = spec.offset + np.sin(2 * np.pi * freqs[m % len(freqs)] * times + phase)
        y += spec.amplitude * np.outer(pattern, profile)
    if spec.noise_sigma > 0:
        y += rng.normal(0.0, spec.noise_sigma, y.shape)
    return y


def save_flows(y, path) -> None:
    np.savetxt(path, np.atleast_2d(y), delimiter=",", fmt="%.17g", newline="\r\n")


def load_flows(path) -> np.ndarray:
    """Header-free CSV, one row per edge, one column per time instant."""
    rows = []
    width = None
    with open(path, newline="") as f:
        for lineno, rec in enumerate(csv.reader(f), 1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if width is None:
                width = len(rec)
            elif len(rec) != width:
                raise ValueError(f"{path}:{lineno}: ragged row with {len(rec)} fields, expected {width}")
            try:
                vals = [float(c) for c in rec]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric cell") from None
            if not np.all(np.isfinite(vals)):
                raise ValueError(f"{path}:{lineno}: NaN or infinite cell")
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data")
    return np.array(rows)
