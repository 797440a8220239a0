"""Damped parallel SCA solver for the kernel/landmark four-factor flow model.

The model is ``X ~ U1 @ U2 @ K @ V1 @ V2`` with Hodge-Laplacian penalties on
``X``, ridge penalties on ``U1, U2``, entrywise l1 penalties on ``V1, V2``,
observed-entry consistency on ``X`` and column-sum-to-one constraints on
``V1, V2``.  Every outer iteration solves five convex block sub-problems
against the same frozen iterate and damps the result with a diminishing step.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np
import scipy.linalg as sla

from flowkrim.kernels import KernelSpec
from flowkrim.sampling import SamplingMask, consistency_project
from flowkrim.simplicial import SimplicialComplex2, hodge_laplacian_1


class SolverDivergence(FloatingPointError):
    """Raised when the objective becomes non-finite; carries the diagnostics."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class KrimFactors:
    x: np.ndarray   # N1 x T
    u1: np.ndarray  # N1 x d
    u2: np.ndarray  # d x N_l
    v1: np.ndarray  # N_l x r
    v2: np.ndarray  # r x T

    def model(self, k) -> np.ndarray:
        return self.u1 @ (self.u2 @ (k @ (self.v1 @ self.v2)))

    def combine(self, other: "KrimFactors", gamma: float) -> "KrimFactors":
        """``gamma * other + (1 - gamma) * self``, blockwise."""
        return KrimFactors(
            *(gamma * b + (1.0 - gamma) * a for a, b in zip(self.astuple(), other.astuple()))
        )

    def astuple(self):
        return (self.x, self.u1, self.u2, self.v1, self.v2)

    def constraint_residuals(self, y=None, mask: SamplingMask | None = None) -> dict:
        res = {
            "v1_sum_err": float(np.max(np.abs(self.v1.sum(axis=0) - 1.0), initial=0.0)),
            "v2_sum_err": float(np.max(np.abs(self.v2.sum(axis=0) - 1.0), initial=0.0)),
        }
        if y is not None and mask is not None:
            diff = np.abs(self.x - y)[mask.indicator]
            res["x_obs_err"] = float(diff.max(initial=0.0))
        return res


@dataclass(frozen=True)
class SolverConfig:
    lambda1: float = 1e-3
    lambda2: float = 1e-3
    lambda_l: float = 0.0
    lambda_u: float = 0.0
    tau_x: float = 2.0
    tau_u: float = 2.0
    tau_v: float = 2.0
    d: int = 5
    r: int = 5
    n_landmarks: int = 50
    gamma0: float = 1.0
    zeta: float = 0.5
    max_outer_iters: int = 500
    outer_tol: float = 1e-6
    inner_max_iters: int = 200
    inner_tol: float = 1e-8
    kernel: KernelSpec = field(default_factory=KernelSpec)
    v_init: str = "random"
    parallel: bool = False

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda_l", "lambda_u"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        # zero proximal weights are allowed; the sub-problems stay well posed
        # as long as lambda2 + tau_u > 0 or the Gram matrices are nonsingular
        for name in ("tau_x", "tau_u", "tau_v"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("d", "r", "n_landmarks", "max_outer_iters", "inner_max_iters"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not 0 < self.gamma0 <= 1:
            raise ValueError("gamma0 must be in (0, 1]")
        if not 0 < self.zeta < 1:
            raise ValueError("zeta must be in (0, 1)")
        if self.v_init not in ("random", "uniform"):
            raise ValueError("v_init must be 'random' or 'uniform'")

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


# --------------------------------------------------------------------------
# objective


def objective(f: KrimFactors, k, sc: SimplicialComplex2 | None, cfg: SolverConfig) -> float:
    resid = f.x - f.model(k)
    val = 0.5 * np.sum(resid**2)
    if sc is not None:
        if cfg.lambda_l:
            val += 0.5 * cfg.lambda_l * np.sum((sc.b1 @ f.x) ** 2)
        if cfg.lambda_u and sc.n2:
            val += 0.5 * cfg.lambda_u * np.sum((sc.b2.T @ f.x) ** 2)
    val += 0.5 * cfg.lambda2 * (np.sum(f.u1**2) + np.sum(f.u2**2))
    val += cfg.lambda1 * (np.abs(f.v1).sum() + np.abs(f.v2).sum())
    return float(val)


# --------------------------------------------------------------------------
# X block


def x_system_matrix(sc: SimplicialComplex2 | None, n1: int, cfg: SolverConfig) -> np.ndarray:
    a = (1.0 + cfg.tau_x) * np.eye(n1)
    if sc is not None:
        hl = hodge_laplacian_1(sc)
        a += cfg.lambda_l * hl.lower + cfg.lambda_u * hl.upper
    return a


class XSolver:
    """Per-column constrained quadratic solves sharing one system matrix.

    Columns are grouped by their number of free entries so that the free
    sub-blocks can be inverted in one batched call and reused every
    iteration (the mask does not change during a fit).
    """

    def __init__(self, mask: SamplingMask, sc: SimplicialComplex2 | None, cfg: SolverConfig):
        self.mask = mask
        self.tau = cfg.tau_x
        n1, t = mask.shape
        a = x_system_matrix(sc, n1, cfg)
        np.linalg.cholesky(a)  # SPD check; raises LinAlgError otherwise
        ind = mask.indicator
        free_counts = (~ind).sum(axis=0)
        self.groups = []
        for m in np.unique(free_counts):
            if m == 0:
                continue
            cols = np.flatnonzero(free_counts == m)
            free = np.stack([np.flatnonzero(~ind[:, c]) for c in cols])
            obs = np.stack([np.flatnonzero(ind[:, c]) for c in cols]) if m < n1 else None
            a_ff = a[free[:, :, None], free[:, None, :]]
            inv_ff = np.linalg.inv(a_ff)
            a_fo = a[free[:, :, None], obs[:, None, :]] if obs is not None else None
            self.groups.append((cols, free, obs, inv_ff, a_fo))

    def solve(self, m, x_hat, y) -> np.ndarray:
        rhs = m + self.tau * x_hat
        out = np.where(self.mask.indicator, y, 0.0)
        for cols, free, obs, inv_ff, a_fo in self.groups:
            b = rhs[free, cols[:, None]]
            if obs is not None:
                b = b - np.einsum("gij,gj->gi", a_fo, y[obs, cols[:, None]])
            out[free, cols[:, None]] = np.einsum("gij,gj->gi", inv_ff, b)
        return out


def solve_x(prev: KrimFactors, y, mask: SamplingMask, k, sc, cfg: SolverConfig,
            x_solver: XSolver | None = None) -> np.ndarray:
    """Exact minimizer of the X sub-problem under observed-entry consistency."""
    if x_solver is None:
        x_solver = XSolver(mask, sc, cfg)
    return x_solver.solve(prev.model(k), prev.x, np.asarray(y, dtype=float))


# --------------------------------------------------------------------------
# U blocks


def solve_u1(prev: KrimFactors, k, cfg: SolverConfig) -> np.ndarray:
    e = prev.u2 @ (k @ (prev.v1 @ prev.v2))
    lhs = e @ e.T + (cfg.lambda2 + cfg.tau_u) * np.eye(e.shape[0])
    rhs = prev.x @ e.T + cfg.tau_u * prev.u1
    # U1 @ lhs = rhs with lhs symmetric
    return sla.solve(lhs, rhs.T, assume_a="pos").T


def solve_u2(prev: KrimFactors, k, cfg: SolverConfig) -> np.ndarray:
    """Solve ``(U1'U1) U2 (GG') + c U2 = U1'XG' + tau U2_hat`` by two eigendecompositions."""
    g = k @ (prev.v1 @ prev.v2)
    c = prev.u1.T @ prev.x @ g.T + cfg.tau_u * prev.u2
    lam, p = np.linalg.eigh(prev.u1.T @ prev.u1)
    mu, q = np.linalg.eigh(g @ g.T)
    lam = np.clip(lam, 0.0, None)
    mu = np.clip(mu, 0.0, None)
    denom = np.outer(lam, mu) + (cfg.lambda2 + cfg.tau_u)
    return p @ ((p.T @ c @ q) / denom) @ q.T


# --------------------------------------------------------------------------
# V blocks


def project_affine(v) -> np.ndarray:
    """Project every column onto ``{v : sum(v) = 1}``."""
    v = np.asarray(v, dtype=float)
    return v - (v.sum(axis=0) - 1.0) / v.shape[0]


def soft_threshold(w, thr):
    return np.sign(w) * np.maximum(np.abs(w) - thr, 0.0)


def prox_l1_affine(z, thr: float, max_iter: int = 200) -> np.ndarray:
    """Column-wise ``argmin_v thr*|v|_1 + 0.5|v - z|^2  s.t. sum(v) = 1``.

    The solution is ``soft_threshold(z - mu, thr)`` for the unique shift
    ``mu`` making the column sum to one.  The column sum is a monotone
    piecewise-linear function of ``mu``; it is located with safeguarded
    Newton steps, which are exact once the active set settles.
    """
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    if thr <= 0:
        return project_affine(z)
    zp, zn = z - thr, z + thr
    lo = z.min(axis=0) - thr - 1.0 / n  # sum >= 1 here
    hi = z.max(axis=0) - thr            # sum <= 0 here
    # first Newton step from lo, where every entry is active and positive
    mu = (zp.sum(axis=0) - 1.0) / n
    for _ in range(max_iter):
        pos = zp > mu
        neg = zn < mu
        cnt = pos.sum(axis=0) + neg.sum(axis=0)
        s = (zp * pos).sum(axis=0) + (zn * neg).sum(axis=0)
        g = s - cnt * mu
        ok = np.abs(g - 1.0) <= 1e-13 * np.maximum(1.0, np.abs(s))
        if ok.all():
            break
        lo = np.where(g > 1.0, mu, lo)
        hi = np.where(g < 1.0, mu, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = (s - 1.0) / cnt
        bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
        mu = np.where(ok, mu, np.where(bad, 0.5 * (lo + hi), cand))
    v = soft_threshold(z - mu, thr)
    # absorb the last rounding into the active coordinates
    err = v.sum(axis=0) - 1.0
    act = v != 0
    nact = act.sum(axis=0)
    fix = np.where(nact > 0, err / np.maximum(nact, 1), 0.0)
    return v - act * fix


@dataclass
class _VProblem:
    """``0.5|X - A V B|^2 + lam |V|_1 + tau/2 |V - V_hat|^2`` in Gram form."""

    ga: np.ndarray  # A'A
    gb: np.ndarray | None  # BB', None for the identity
    c: np.ndarray   # A'XB'
    xsq: float
    v_hat: np.ndarray
    lam: float
    tau: float

    def gram_op(self, v):
        av = self.ga @ v
        return av if self.gb is None else av @ self.gb

    def smooth_grad(self, v):
        return self.gram_op(v) - self.c + self.tau * (v - self.v_hat)

    def value(self, v):
        fit = 0.5 * self.xsq - np.sum(self.c * v) + 0.5 * np.sum(v * self.gram_op(v))
        return float(fit + self.lam * np.abs(v).sum() + 0.5 * self.tau * np.sum((v - self.v_hat) ** 2))


def v_problem(prev: KrimFactors, which: str, k, cfg: SolverConfig) -> _VProblem:
    if which == "v1":
        a = prev.u1 @ prev.u2 @ k
        b = prev.v2
        ga, gb = a.T @ a, b @ b.T
        c = a.T @ prev.x @ b.T
        v_hat = prev.v1
    elif which == "v2":
        a = prev.u1 @ prev.u2 @ k @ prev.v1
        ga, gb = a.T @ a, None
        c = a.T @ prev.x
        v_hat = prev.v2
    else:
        raise ValueError(f"which must be 'v1' or 'v2', got {which!r}")
    return _VProblem(ga, gb, c, float(np.sum(prev.x**2)), v_hat, cfg.lambda1, cfg.tau_v)


def _solve_v_problem(prob: _VProblem, max_iters: int, tol: float, info: dict | None = None):
    la = np.linalg.eigvalsh(prob.ga)
    lb = np.ones(1) if prob.gb is None else np.linalg.eigvalsh(prob.gb)
    big_l = max(la[-1], 0.0) * max(lb[-1], 0.0) + prob.tau
    small_m = max(la[0], 0.0) * max(lb[0], 0.0) + prob.tau
    beta = (np.sqrt(big_l) - np.sqrt(small_m)) / (np.sqrt(big_l) + np.sqrt(small_m))
    step = 1.0 / big_l

    start = project_affine(prob.v_hat)
    v = start
    w = v
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        v_new = prox_l1_affine(w - step * prob.smooth_grad(w), prob.lam * step)
        change = np.linalg.norm(v_new - v)
        w = v_new + beta * (v_new - v)
        v = v_new
        if change <= tol * max(1.0, np.linalg.norm(v)):
            converged = True
            break
    f_v, f_start = prob.value(v), prob.value(start)
    if f_start < f_v:
        v = start
    if info is not None:
        info.update(iters=it, converged=converged, objective=min(f_v, f_start))
    return v


def solve_v(prev: KrimFactors, which: str, k, cfg: SolverConfig, info: dict | None = None) -> np.ndarray:
    """Approximate minimizer of the V1 or V2 sub-problem.

    Accelerated proximal gradient whose prox is the exact l1 prox restricted
    to the column-sum-one hyperplane.  ``info`` (if given) receives the
    iteration count and a convergence flag.
    """
    prob = v_problem(prev, which, k, cfg)
    return _solve_v_problem(prob, cfg.inner_max_iters, cfg.inner_tol, info)


# --------------------------------------------------------------------------
# outer loop


def gamma_schedule(gamma0: float, zeta: float, n: int) -> float:
    if not 0 < gamma0 <= 1 or not 0 < zeta < 1:
        raise ValueError("need gamma0 in (0, 1] and zeta in (0, 1)")
    g = gamma0
    for _ in range(n):
        g = g * (1.0 - zeta * g)
    return g


def half_step(prev: KrimFactors, y, mask, k, sc, cfg: SolverConfig,
              x_solver: XSolver | None = None, info: dict | None = None) -> KrimFactors:
    """Solve the five block sub-problems against the same frozen ``prev``."""
    if x_solver is None:
        x_solver = XSolver(mask, sc, cfg)
    info1, info2 = {}, {}
    tasks = (
        lambda: solve_x(prev, y, mask, k, sc, cfg, x_solver),
        lambda: solve_u1(prev, k, cfg),
        lambda: solve_u2(prev, k, cfg),
        lambda: solve_v(prev, "v1", k, cfg, info1),
        lambda: solve_v(prev, "v2", k, cfg, info2),
    )
    if cfg.parallel:
        with ThreadPoolExecutor(max_workers=len(tasks)) as pool:
            out = [fut.result() for fut in [pool.submit(t) for t in tasks]]
    else:
        out = [t() for t in tasks]
    if info is not None:
        info["v1"] = info1
        info["v2"] = info2
    return KrimFactors(*out)


def sca_step(prev: KrimFactors, gamma_next: float, y, mask: SamplingMask, k, sc, cfg: SolverConfig,
             x_solver: XSolver | None = None, info: dict | None = None) -> KrimFactors:
    if not 0 < gamma_next <= 1:
        raise ValueError("gamma_next must be in (0, 1]")
    half = half_step(prev, y, mask, k, sc, cfg, x_solver, info)
    new = prev.combine(half, gamma_next)
    return replace(new, x=consistency_project(new.x, y, mask))


def column_mean_fill(y, mask: SamplingMask) -> np.ndarray:
    ind = mask.indicator
    cnt = ind.sum(axis=0)
    means = np.where(cnt > 0, np.where(ind, y, 0.0).sum(axis=0) / np.maximum(cnt, 1), 0.0)
    return np.where(ind, y, means[None, :])


def initial_factors(y, mask: SamplingMask, n_l: int, cfg: SolverConfig, seed) -> KrimFactors:
    """Feasible starting point.

    ``U1, U2`` are uniform on ``[-0.5, 0.5] / sqrt(d)``.  With ``v_init='random'``
    the columns of ``V1, V2`` are non-negative uniform draws normalized to
    sum to one; ``'uniform'`` sets every entry to ``1/N_l`` (resp. ``1/r``).
    """
    y = np.asarray(y, dtype=float)
    n1, t = y.shape
    d, r = cfg.d, cfg.r
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(d)
    u1 = rng.uniform(-0.5, 0.5, (n1, d)) * scale
    u2 = rng.uniform(-0.5, 0.5, (d, n_l)) * scale
    if cfg.v_init == "random":
        v1 = rng.uniform(0.0, 1.0, (n_l, r))
        v2 = rng.uniform(0.0, 1.0, (r, t))
        v1 /= v1.sum(axis=0)
        v2 /= v2.sum(axis=0)
    else:
        v1 = np.full((n_l, r), 1.0 / n_l)
        v2 = np.full((r, t), 1.0 / r)
    x = consistency_project(column_mean_fill(y, mask), y, mask)
    return KrimFactors(x, u1, u2, v1, v2)


DIAG_FIELDS = ("iter", "objective", "gamma", "v1_sum_err", "v2_sum_err", "x_obs_err",
               "v1_inner_iters", "v2_inner_iters", "wall_time")


@dataclass
class Diagnostics:
    rows: list = field(default_factory=list)
    stop_reason: str = ""
    inner_nonconverged: int = 0

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r["objective"] for r in self.rows])

    @property
    def iterations(self) -> int:
        return len(self.rows) - 1

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=DIAG_FIELDS, lineterminator="\r\n")
            w.writeheader()
            for row in self.rows:
                w.writerow({k: row.get(k, "") for k in DIAG_FIELDS})


def fit(y, mask: SamplingMask, sc, k, cfg: SolverConfig, init_seed=0, landmarks=None,
        init: KrimFactors | None = None, record_time: bool = True):
    """Run the damped SCA loop; returns ``(factors, diagnostics)``.

    ``factors.x`` is the imputed flow matrix.  ``landmarks`` is only used to
    check that ``k`` matches the landmark count.
    """
    y = np.asarray(y, dtype=float)
    k = np.asarray(k, dtype=float)
    if y.shape != mask.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {mask.shape}")
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError("kernel matrix must be square")
    if landmarks is not None and len(landmarks) != k.shape[0]:
        raise ValueError("kernel size does not match landmark count")
    if sc is not None and sc.n1 != y.shape[0]:
        raise ValueError(f"complex has {sc.n1} edges but data has {y.shape[0]} rows")
    y = np.where(mask.indicator, y, 0.0)

    cur = init if init is not None else initial_factors(y, mask, k.shape[0], cfg, init_seed)
    x_solver = XSolver(mask, sc, cfg)
    diag = Diagnostics()
    t0 = time.perf_counter()

    def record(n, obj, gamma, info):
        row = {"iter": n, "objective": obj, "gamma": gamma,
               **cur.constraint_residuals(y, mask),
               "v1_inner_iters": info.get("v1", {}).get("iters", 0),
               "v2_inner_iters": info.get("v2", {}).get("iters", 0),
               "wall_time": time.perf_counter() - t0 if record_time else 0.0}
        diag.rows.append(row)

    obj = objective(cur, k, sc, cfg)
    if not np.isfinite(obj):
        raise SolverDivergence("non-finite objective at initialization", diag)
    record(0, obj, cfg.gamma0, {})
    if obj == 0.0:
        diag.stop_reason = "zero objective"
        return cur, diag

    gamma = cfg.gamma0
    diag.stop_reason = "max_outer_iters"
    for n in range(1, cfg.max_outer_iters + 1):
        gamma = gamma * (1.0 - cfg.zeta * gamma)
        info = {}
        cur = sca_step(cur, gamma, y, mask, k, sc, cfg, x_solver, info)
        diag.inner_nonconverged += sum(not info[b].get("converged", True) for b in ("v1", "v2"))
        new_obj = objective(cur, k, sc, cfg)
        record(n, new_obj, gamma, info)
        if not np.isfinite(new_obj):
            diag.stop_reason = "non-finite objective"
            raise SolverDivergence(f"non-finite objective at iteration {n}", diag)
        if abs(obj - new_obj) <= cfg.outer_tol * max(abs(obj), np.finfo(float).tiny):
            obj = new_obj
            diag.stop_reason = "outer_tol"
            break
        obj = new_obj
    return cur, diag


def save_factors(f: KrimFactors, directory, prefix: str = "", rescale: bool = True) -> None:
    """Write U1, U2, V1, V2 as CSV; ``rescale`` maps |entries| to [0, 1] by the max."""
    from pathlib import Path

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("u1", "u2", "v1", "v2"):
        m = np.abs(getattr(f, name)) if rescale else getattr(f, name)
        if rescale:
            top = m.max(initial=0.0)
            m = m / top if top > 0 else m
        np.savetxt(out / f"{prefix}{name.upper()}.csv", m, delimiter=",", fmt="%.17g", newline="\r\n")
