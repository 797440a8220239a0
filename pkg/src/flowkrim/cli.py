"""``impute`` command line: run, grid, gen, info, table."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from flowkrim import experiment
from flowkrim.simplicial import boundary_check, hodge_laplacian_1, load_network


def _spectrum_line(name, mat, tol=1e-9):
    ev = np.linalg.eigvalsh(mat) if mat.size else np.zeros(0)
    if ev.size == 0:
        return f"{name}: empty"
    zeros = int(np.sum(np.abs(ev) <= tol))
    return f"{name}: min={ev[0]:.6g} max={ev[-1]:.6g} trace={np.trace(mat):.6g} zero_eigs={zeros}"


def cmd_info(args):
    sc = load_network(args.network)
    hl = hodge_laplacian_1(sc)
    print(f"N0={sc.n0} N1={sc.n1} N2={sc.n2}")
    print(f"boundary B1*B2 = 0: {boundary_check(sc)}")
    print(_spectrum_line("L1_lower", hl.lower))
    print(_spectrum_line("L1_upper", hl.upper))
    print(_spectrum_line("L1", hl.full))
    harmonic = int(np.sum(np.abs(np.linalg.eigvalsh(hl.full)) <= 1e-9))
    print(f"harmonic dimension: {harmonic}")
    return 0


def cmd_run(args):
    res = experiment.run_experiment(args.config, args.out)
    print(f"wrote reports to {res.out_dir}")
    for s in res.summary:
        print(f"{s['method']:>9} s={s['ratio']:<4g} mae={s['mae_mean']:.6g} +/- {s['mae_std']:.3g} "
              f"(runs={s['runs']}, failed={s['failed']})")
    return 0


def cmd_grid(args):
    best = experiment.grid_search(args.config, args.out, tune_on_truth=True if args.tune_on_truth else None)
    for (method, ratio), cell in best.items():
        cell_s = ", ".join(f"{k}={v}" for k, v in sorted(cell.items())) or "(no axes)"
        print(f"{method:>9} s={ratio:<4g} {cell_s}")
    return 0


def cmd_gen(args):
    path = experiment.generate(args.config, args.out)
    print(f"wrote {path}")
    return 0


def cmd_table(args):
    experiment.write_param_table(experiment.published_param_table_rows(), args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="impute", description="Edge-flow imputation experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="sampling sweep with repeated runs")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: config 'out')")
    r.set_defaults(func=cmd_run)

    g = sub.add_parser("grid", help="hyperparameter grid search")
    g.add_argument("config")
    g.add_argument("--out")
    g.add_argument("--tune-on-truth", action="store_true",
                   help="score cells against the full ground truth instead of held-out observations")
    g.set_defaults(func=cmd_grid)

    ge = sub.add_parser("gen", help="write synthetic flows to CSV")
    ge.add_argument("config")
    ge.add_argument("--out", help="output CSV (default: config 'gen.out')")
    ge.set_defaults(func=cmd_gen)

    i = sub.add_parser("info", help="complex sizes and Laplacian spectra")
    i.add_argument("network", help="network file or bundled name")
    i.set_defaults(func=cmd_info)

    t = sub.add_parser("table", help="parameter-count table for the published dataset sizes")
    t.add_argument("out")
    t.set_defaults(func=cmd_table)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (experiment.ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"impute: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
