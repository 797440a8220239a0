"""Batch experiments: sampling sweeps, repeated runs, grid search, CSV reports.

Config files are flat ``key = value`` text; ``#`` starts a comment and list
values are comma separated.  Recognised keys:

``name``              dataset label used in the parameter table
``network``           network file path or bundled name (``sioux_falls``)
``flows``             flow CSV (rows = edges); if absent, flows are generated
``gen.t``, ``gen.n_gradient_modes``, ``gen.n_curl_modes``,
``gen.temporal_freqs``, ``gen.noise_sigma``, ``gen.amplitude``,
``gen.offset``, ``gen.seed``, ``gen.out``
                      synthetic flow generator (see :mod:`flowkrim.datagen`)
``methods``           subset of ``krim, mmf, flow_ssl``
``ratios``            sampling ratios in (0, 1]
``runs``              independent runs per (method, ratio)
``seed``              master seed; every random stream is derived from it
``out``               output directory
``timing``            ``on``/``off``; ``off`` writes ``wall_ms = 0`` so reports
                      are byte-reproducible
``workers``           process count for independent runs / grid cells
``<method>.<param>``  hyperparameter for every ratio
``<method>@<ratio>.<param>``
                      hyperparameter for one ratio (overrides the above)
``grid.<method>.<param>``
                      grid axis (list of values)
``grid.runs``, ``grid.holdout``, ``grid.tune_on_truth``
                      grid-search protocol

Solver parameters are the :class:`~flowkrim.solver.SolverConfig` fields plus
``kernel`` (family), ``bandwidth`` (absolute) or ``bandwidth_scale``
(multiple of the median navigator distance), ``degree`` and ``offset``.
FlowSSL takes ``lambda_l`` and ``lambda_u``.
"""

from __future__ import annotations

import csv
import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from flowkrim.baselines import flow_ssl, mmf_fit
from flowkrim.datagen import FlowSpec, generate_flows, load_flows, save_flows
from flowkrim.kernels import (KernelSpec, build_navigators, kernel_matrix, median_bandwidth,
                              select_landmarks)
from flowkrim.metrics import mae, param_count, sparsity_report
from flowkrim.sampling import SamplingMask, apply_mask, sample_per_snapshot
from flowkrim.simplicial import load_network
from flowkrim.solver import SolverConfig, fit, save_factors

METHODS = ("krim", "mmf", "flow_ssl")
METHOD_LABELS = {"krim": "MultiL-KRIM", "mmf": "MMF", "flow_ssl": "FlowSSL"}

# published S-VAR parameter counts; reported only, S-VAR is not implemented
SVAR_PARAMS = {"Cherry Hills": 30000, "Sioux Falls": 15000}

TOP_KEYS = {"name", "network", "flows", "methods", "ratios", "runs", "seed", "out", "timing", "workers"}
GEN_KEYS = {"t", "n_gradient_modes", "n_curl_modes", "temporal_freqs", "noise_sigma",
            "amplitude", "offset", "seed", "out"}
GRID_KEYS = {"runs", "holdout", "tune_on_truth"}
KERNEL_KEYS = {"kernel", "bandwidth", "bandwidth_scale", "degree", "offset"}
SOLVER_KEYS = set(SolverConfig.field_names()) - {"kernel"}
METHOD_KEYS = {
    "krim": SOLVER_KEYS | KERNEL_KEYS,
    "mmf": SOLVER_KEYS,
    "flow_ssl": {"lambda_l", "lambda_u"},
}

STREAM_EVAL, STREAM_GRID = 0, 1


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# config


def _parse_scalar(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("on", "true", "yes"):
        return True
    if low in ("off", "false", "no"):
        return False
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def parse_config_text(text: str, source: str = "<config>") -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        items = [_parse_scalar(v) for v in val.split(",")] if "," in val else _parse_scalar(val)
        raw[key] = items
    return raw


def _as_list(v):
    return list(v) if isinstance(v, list) else [v]


def _ratio_key(r: float) -> str:
    return f"{float(r):g}"


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    network: str = "sioux_falls"
    flows: str | None = None
    gen: dict = field(default_factory=dict)
    methods: list = field(default_factory=lambda: list(METHODS))
    ratios: list = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5])
    runs: int = 30
    seed: int = 0
    out: str = "results"
    timing: bool = True
    workers: int = 1
    params: dict = field(default_factory=dict)        # method -> {param: value}
    ratio_params: dict = field(default_factory=dict)  # (method, ratio_key) -> {param: value}
    grid: dict = field(default_factory=dict)          # method -> {param: [values]}
    grid_runs: int = 3
    grid_holdout: float = 0.1
    tune_on_truth: bool = False
    base_dir: Path = field(default_factory=Path.cwd)

    def method_params(self, method: str, ratio: float) -> dict:
        p = dict(self.params.get(method, {}))
        p.update(self.ratio_params.get((method, _ratio_key(ratio)), {}))
        return p

    def resolve(self, p) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path


def _check_method_key(method, param, key):
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r} in key {key!r}")
    if param not in METHOD_KEYS[method]:
        raise ConfigError(f"unknown parameter {param!r} for method {method!r} in key {key!r}")


def config_from_dict(raw: dict, base_dir=None) -> ExperimentConfig:
    cfg = ExperimentConfig(base_dir=Path(base_dir) if base_dir else Path.cwd())
    for key, val in raw.items():
        head, _, rest = key.partition(".")
        if not rest:
            if key not in TOP_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            if key in ("methods", "ratios"):
                val = _as_list(val)
            if key in ("runs", "seed", "workers") and not isinstance(val, int):
                raise ConfigError(f"{key} must be an integer")
            setattr(cfg, key, str(val) if key in ("name", "network", "flows", "out") else val)
        elif head == "gen":
            if rest not in GEN_KEYS:
                raise ConfigError(f"unknown generator key {key!r}")
            cfg.gen[rest] = val
        elif head == "grid":
            if rest in GRID_KEYS:
                attr = {"runs": "grid_runs", "holdout": "grid_holdout"}.get(rest, rest)
                setattr(cfg, attr, val)
                continue
            method, _, param = rest.partition(".")
            _check_method_key(method, param, key)
            values = [v for v in _as_list(val) if v != ""]
            if not values:
                raise ConfigError(f"empty grid axis {key!r}")
            cfg.grid.setdefault(method, {})[param] = values
        else:
            if "@" in head:
                # the ratio itself contains a dot: method@0.3.param
                method, _, tail = key.partition("@")
                ratio, _, rest = tail.rpartition(".")
            else:
                method, ratio = head, ""
            _check_method_key(method, rest, key)
            if ratio:
                try:
                    rk = _ratio_key(float(ratio))
                except ValueError:
                    raise ConfigError(f"bad ratio in key {key!r}") from None
                cfg.ratio_params.setdefault((method, rk), {})[rest] = val
            else:
                cfg.params.setdefault(method, {})[rest] = val
    for m in cfg.methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; expected one of {METHODS}")
    for r in cfg.ratios:
        if not isinstance(r, (int, float)) or not 0 < r <= 1:
            raise ConfigError(f"sampling ratio {r!r} not in (0, 1]")
    if cfg.runs < 1:
        raise ConfigError("runs must be >= 1")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return config_from_dict(parse_config_text(path.read_text(), str(path)), path.parent)


# --------------------------------------------------------------------------
# data and method pipelines


def flow_spec_from(gen: dict) -> FlowSpec:
    kw = {}
    for k in ("n_gradient_modes", "n_curl_modes"):
        if k in gen:
            kw[k] = int(gen[k])
    for k in ("noise_sigma", "amplitude", "offset"):
        if k in gen:
            kw[k] = float(gen[k])
    if "temporal_freqs" in gen:
        kw["temporal_freqs"] = tuple(float(f) for f in _as_list(gen["temporal_freqs"]))
    return FlowSpec(**kw)


def load_data(cfg: ExperimentConfig):
    sc = load_network(cfg.resolve(cfg.network) if cfg.resolve(cfg.network).is_file() else cfg.network)
    if cfg.flows:
        y = load_flows(cfg.resolve(cfg.flows))
    else:
        y = generate_flows(sc, int(cfg.gen.get("t", 300)), flow_spec_from(cfg.gen),
                           seed=int(cfg.gen.get("seed", cfg.seed)))
    if y.shape[0] != sc.n1:
        raise ConfigError(f"flow matrix has {y.shape[0]} rows but network has {sc.n1} edges")
    return sc, y


def solver_config(params: dict) -> tuple[SolverConfig, float | None, float]:
    """Split method params into a SolverConfig, absolute bandwidth and bandwidth scale."""
    kw = {k: v for k, v in params.items() if k in SOLVER_KEYS}
    for k in ("d", "r", "n_landmarks", "max_outer_iters", "inner_max_iters"):
        if k in kw:
            kw[k] = int(kw[k])
    kspec = KernelSpec(
        family=str(params.get("kernel", "gaussian")),
        bandwidth=None,
        degree=int(params.get("degree", 2)),
        offset=float(params.get("offset", 1.0)),
    )
    bw = params.get("bandwidth")
    return SolverConfig(kernel=kspec, **kw), (float(bw) if bw is not None else None), float(
        params.get("bandwidth_scale", 1.0))


def krim_kernel(ym, mask, cfg: SolverConfig, bandwidth, bandwidth_scale, seed):
    nav = build_navigators(ym, mask)
    n_l = min(cfg.n_landmarks, len(nav))
    lm = select_landmarks(nav, n_l, rng_seed=seed)
    if cfg.kernel.family == "polynomial":
        sigma = None
    else:
        sigma = bandwidth if bandwidth is not None else bandwidth_scale * median_bandwidth(nav.vectors)
    return lm, kernel_matrix(lm, cfg.kernel, sigma)


def impute(method: str, y, mask: SamplingMask, sc, params: dict, seed, record_time=True):
    """Run one method; returns ``(x_hat, factors_or_None, diagnostics_or_None)``."""
    ym = apply_mask(y, mask)
    if method == "flow_ssl":
        x = flow_ssl(ym, mask, sc, float(params.get("lambda_l", 1.0)), float(params.get("lambda_u", 1.0)))
        return x, None, None
    cfg, bw, bw_scale = solver_config(params)
    if method == "krim":
        lm, k = krim_kernel(ym, mask, cfg, bw, bw_scale, seed)
        f, diag = fit(ym, mask, sc, k, cfg, init_seed=seed, landmarks=lm, record_time=record_time)
    elif method == "mmf":
        n_l = min(cfg.n_landmarks, y.shape[1])
        f, diag = mmf_fit(ym, mask, sc, n_l, cfg, seed=seed, record_time=record_time)
    else:
        raise ConfigError(f"unknown method {method!r}")
    return f.x, f, diag


def run_seeds(master_seed: int, stream: int, ratio_index: int, run: int):
    """Independent (mask, init) seeds for one run; identical across methods."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(stream, ratio_index, run))
    mask_ss, init_ss = ss.spawn(2)
    return mask_ss, int(init_ss.generate_state(1)[0])


def method_param_count(method, params, n1, t) -> int:
    if method == "flow_ssl":
        return 0
    cfg, _, _ = solver_config(params)
    return param_count(n1, min(cfg.n_landmarks, t), t, cfg.d, cfg.r)


# --------------------------------------------------------------------------
# run


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _run_task(args):
    method, ratio, run, y, sc, params, mask_seed, init_seed, timing = args
    mask = sample_per_snapshot(y.shape[0], y.shape[1], ratio, mask_seed)
    t0 = time.perf_counter()
    try:
        x, f, diag = impute(method, y, mask, sc, params, init_seed, record_time=timing)
        err = mae(x, y)
        status = "ok" if math.isfinite(err) else "non-finite mae"
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        x, f, diag, err, status = None, None, None, float("nan"), f"error: {exc}"
    wall_ms = (time.perf_counter() - t0) * 1e3 if timing else 0.0
    return {"method": method, "ratio": ratio, "run": run, "mae": err, "wall_ms": wall_ms,
            "status": status, "factors": f}


def _map(fn, tasks, workers):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


@dataclass
class ExperimentResult:
    runs: list
    summary: list
    sparsity: list
    out_dir: Path


def summarize(rows) -> list[dict]:
    groups = {}
    for r in rows:
        groups.setdefault((r["method"], r["ratio"]), []).append(r)
    out = []
    for (method, ratio), grp in groups.items():
        vals = [g["mae"] for g in grp if g["status"] == "ok"]
        n = len(vals)
        mean = math.fsum(vals) / n if n else float("nan")
        std = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (n - 1)) if n > 1 else 0.0
        out.append({"method": method, "ratio": ratio, "runs": n, "mae_mean": mean, "mae_std": std,
                    "failed": len(grp) - n})
    return out


def param_table_rows(name, n1, t, cfg: ExperimentConfig):
    def count(method):
        if method not in cfg.methods:
            return ""
        return method_param_count(method, cfg.method_params(method, cfg.ratios[0]), n1, t)

    return [(name, SVAR_PARAMS.get(name, ""), count("mmf"), count("krim"))]


def write_param_table(rows, path) -> None:
    _write_csv(path, ["Datasets", "S-VAR", "MMF", "MultiL-KRIM"], rows)


def published_param_table_rows():
    """Both published datasets at their reported sizes (N_l, d = r chosen to match)."""
    return [
        ("Cherry Hills", SVAR_PARAMS["Cherry Hills"], param_count(40, 150, 300, 10, 10),
         param_count(40, 150, 300, 10, 10)),
        ("Sioux Falls", SVAR_PARAMS["Sioux Falls"], param_count(38, 50, 300, 5, 5),
         param_count(38, 50, 300, 5, 5)),
    ]


def run_experiment(config, out_dir=None) -> ExperimentResult:
    """Sweep methods x ratios x runs and write the CSV reports.

    Writes ``runs.csv``, ``summary.csv``, ``sparsity.csv``, ``params.csv`` and
    ``heatmaps/<method>_s<ratio>_<factor>.csv`` for the lowest-MAE
    factorization run at each ratio.
    """
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    out = Path(out_dir) if out_dir is not None else cfg.resolve(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    sc, y = load_data(cfg)

    tasks = []
    for ri, ratio in enumerate(cfg.ratios):
        for run in range(cfg.runs):
            mask_seed, init_seed = run_seeds(cfg.seed, STREAM_EVAL, ri, run)
            for method in cfg.methods:
                tasks.append((method, ratio, run, y, sc, cfg.method_params(method, ratio),
                              mask_seed, init_seed, cfg.timing))
    results = _map(_run_task, tasks, cfg.workers)

    _write_csv(out / "runs.csv", ["method", "ratio", "run", "mae", "wall_ms", "status"],
               [(r["method"], r["ratio"], r["run"], r["mae"], r["wall_ms"], r["status"]) for r in results])
    summary = summarize(results)
    _write_csv(out / "summary.csv", ["method", "ratio", "runs", "mae_mean", "mae_std", "failed"],
               [tuple(s.values()) for s in summary])

    sparsity = []
    for r in results:
        if r["factors"] is not None:
            sp = sparsity_report(r["factors"], 1e-3)
            sparsity.append({"method": r["method"], "ratio": r["ratio"], "run": r["run"], **sp})
    _write_csv(out / "sparsity.csv", ["method", "ratio", "run", "u1", "u2", "v1", "v2"],
               [tuple(s.values()) for s in sparsity])

    heat = out / "heatmaps"
    for method in ("krim", "mmf"):
        for ratio in cfg.ratios:
            cands = [r for r in results if r["method"] == method and r["ratio"] == ratio
                     and r["factors"] is not None and r["status"] == "ok"]
            if cands:
                best = min(cands, key=lambda r: (r["mae"], r["run"]))
                save_factors(best["factors"], heat, prefix=f"{method}_s{_ratio_key(ratio)}_")

    write_param_table(param_table_rows(cfg.name, y.shape[0], y.shape[1], cfg), out / "params.csv")
    for r in results:
        r.pop("factors")
    return ExperimentResult(results, summary, sparsity, out)


# --------------------------------------------------------------------------
# grid search


def holdout_split(mask: SamplingMask, frac: float, seed) -> tuple[SamplingMask, SamplingMask]:
    """Move ``max(1, round(frac * nu))`` observed entries per column to a validation set."""
    ind = mask.indicator
    counts = ind.sum(axis=0)
    nu = int(counts.max())
    if counts.min() != nu:
        raise ValueError("holdout needs the same observation count in every column")
    h = max(1, int(round(frac * nu)))
    if h >= nu:
        raise ValueError(f"cannot hold out {h} of {nu} observed entries per column")
    rng = np.random.default_rng(seed)
    train = ind.copy()
    val = np.zeros_like(ind)
    for t in range(ind.shape[1]):
        pick = rng.choice(np.flatnonzero(ind[:, t]), size=h, replace=False)
        train[pick, t] = False
        val[pick, t] = True
    return SamplingMask(train), SamplingMask(val)


def _grid_task(args):
    method, ratio, cell, y, sc, params, mask_seed, init_seed, holdout, on_truth = args
    mask = sample_per_snapshot(y.shape[0], y.shape[1], ratio, mask_seed)
    if on_truth:
        train, score_ind = mask, np.ones(y.shape, dtype=bool)
    else:
        train, val = holdout_split(mask, holdout, np.random.SeedSequence(init_seed, spawn_key=(7,)))
        score_ind = val.indicator
    try:
        x, _, _ = impute(method, y, train, sc, params, init_seed, record_time=False)
        return float(np.abs(x - y)[score_ind].mean())
    except (FloatingPointError, np.linalg.LinAlgError):
        return float("inf")


def grid_cells(axes: dict) -> list[dict]:
    keys = sorted(axes)
    if not keys:
        return [{}]
    return [dict(zip(keys, vals)) for vals in itertools.product(*(axes[k] for k in keys))]


def select_best(scored, n1, t, method) -> dict:
    """Lowest score; ties go to the smaller parameter count, then the cell order."""
    def key(item):
        params, cell, score = item
        return (score, method_param_count(method, params, n1, t),
                tuple(_sort_token(cell[k]) for k in sorted(cell)))
    return min(scored, key=key)


def _sort_token(v):
    return (0, v, "") if isinstance(v, (int, float)) else (1, 0, str(v))


def grid_search(config, out_dir=None, tune_on_truth: bool | None = None) -> dict:
    """Exhaustive search per (method, ratio).

    Scores are mean MAE on a held-out 10% of the observed entries (or on the
    full ground truth with ``tune_on_truth``) over ``grid.runs`` runs drawn
    from a seed stream separate from :func:`run_experiment`'s.  Writes
    ``grid.csv`` and ``best.cfg``; returns ``{(method, ratio): cell}``.
    """
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    on_truth = cfg.tune_on_truth if tune_on_truth is None else tune_on_truth
    out = Path(out_dir) if out_dir is not None else cfg.resolve(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    sc, y = load_data(cfg)
    n1, t = y.shape

    best, rows = {}, []
    for method in cfg.methods:
        axes = cfg.grid.get(method, {})
        if any(len(v) == 0 for v in axes.values()):
            raise ConfigError(f"empty grid axis for {method}")
        cells = grid_cells(axes)
        for ri, ratio in enumerate(cfg.ratios):
            tasks, meta = [], []
            for cell in cells:
                params = {**cfg.method_params(method, ratio), **cell}
                for run in range(cfg.grid_runs):
                    mask_seed, init_seed = run_seeds(cfg.seed, STREAM_GRID, ri, run)
                    tasks.append((method, ratio, cell, y, sc, params, mask_seed, init_seed,
                                  cfg.grid_holdout, on_truth))
                meta.append((params, cell))
            scores = _map(_grid_task, tasks, cfg.workers)
            scored = []
            for i, (params, cell) in enumerate(meta):
                vals = scores[i * cfg.grid_runs:(i + 1) * cfg.grid_runs]
                score = math.fsum(vals) / len(vals)
                scored.append((params, cell, score))
                rows.append((method, ratio, ";".join(f"{k}={_fmt(v)}" for k, v in sorted(cell.items())),
                             method_param_count(method, params, n1, t), score))
            best[(method, ratio)] = select_best(scored, n1, t, method)[1]

    _write_csv(out / "grid.csv", ["method", "ratio", "cell", "param_count", "score"], rows)
    with open(out / "best.cfg", "w") as f:
        for (method, ratio), cell in best.items():
            for k, v in sorted(cell.items()):
                f.write(f"{method}@{_ratio_key(ratio)}.{k} = {_fmt(v)}\n")
    return best


def generate(config, out_path=None) -> Path:
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    sc = load_network(cfg.resolve(cfg.network) if cfg.resolve(cfg.network).is_file() else cfg.network)
    y = generate_flows(sc, int(cfg.gen.get("t", 300)), flow_spec_from(cfg.gen),
                       seed=int(cfg.gen.get("seed", cfg.seed)))
    path = Path(out_path) if out_path else cfg.resolve(cfg.gen.get("out", "flows.csv"))
    path.parent.mkdir(parents=True, exist_ok=True)
    save_flows(y, path)
    return path
