"""FlowSSL (Hodge-penalty interpolation) and blind multi-layer factorization."""

from __future__ import annotations

import numpy as np

from flowkrim.sampling import SamplingMask
from flowkrim.simplicial import SimplicialComplex2, hodge_laplacian_1
from flowkrim.solver import SolverConfig, fit


def flow_ssl(y, mask: SamplingMask, sc: SimplicialComplex2, lambda_l: float = 1.0,
             lambda_u: float = 1.0) -> np.ndarray:
    """Impute each column by minimizing the divergence and curl penalties.

    The observed entries stay fixed and the free ones solve
    ``L_ff x_f = -L_fo x_o``; rank-deficient ``L_ff`` gets the minimum-norm
    least-squares solution.
    """
    if lambda_l <= 0 or lambda_u <= 0:
        raise ValueError("lambda_l and lambda_u must be positive")
    y = np.asarray(y, dtype=float)
    if y.shape != mask.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {mask.shape}")
    hl = hodge_laplacian_1(sc)
    lap = lambda_l * hl.lower + lambda_u * hl.upper
    ind = mask.indicator
    out = np.where(ind, y, 0.0)
    cache = {}
    for t in range(y.shape[1]):
        obs = ind[:, t]
        if obs.all():
            continue
        key = obs.tobytes()
        if key not in cache:
            free = np.flatnonzero(~obs)
            o = np.flatnonzero(obs)
            cache[key] = (free, o, np.linalg.pinv(lap[np.ix_(free, free)], hermitian=True),
                          lap[np.ix_(free, o)])
        free, o, pinv_ff, l_fo = cache[key]
        out[free, t] = -pinv_ff @ (l_fo @ y[o, t])
    return out


def mmf_fit(y, mask: SamplingMask, sc, n_landmarks: int, cfg: SolverConfig, seed=0, **kw):
    """The same solver with the kernel matrix replaced by the identity."""
    return fit(y, mask, sc, np.eye(int(n_landmarks)), cfg, init_seed=seed, **kw)
