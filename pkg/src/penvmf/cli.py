"""Command-line entry point: ``penvmf <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 bad input data, 4 fit failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .degeneracy import divergence_sequence, verify_ball_count_bounds
from .em import EmConfig, FitFailureError, fit
from .model import VmfMixture, check_penalty_conditions, sample_mixture, sample_uniform_sphere
from .simulation import run_experiment
from .sphere import max_density_estimate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FIT = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(float(v)) for v in text.split(",") if v.strip()]


def _reference_truth(d: int, seed: int, kappas=(10.0, 1.0), weights=(0.5, 0.5)) -> VmfMixture:
    means = sample_uniform_sphere(d, len(kappas), np.random.default_rng([seed, d]))
    return VmfMixture(list(weights), means, list(kappas))


def _model_or_truth(args) -> VmfMixture:
    if args.model:
        return io.read_model(args.model)
    return _reference_truth(args.d, args.seed)


def cmd_fit(args) -> int:
    x = io.read_dataset(args.data, renormalize=args.renormalize)
    if args.p > x.shape[0]:
        raise UsageError(f"p={args.p} exceeds the number of observations n={x.shape[0]}")
    penalty = io.parse_penalty(args.psi).resolve(x)
    cfg = EmConfig(
        p=args.p,
        max_iters=args.max_iters,
        tol=args.tol,
        kappa_update=args.kappa_update,
        init=args.init,
        restarts=args.restarts,
        penalty=penalty,
        seed=args.seed,
    )
    rep = fit(x, cfg)
    meta = {
        "pll": rep.pll,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "seed": args.seed,
        "psi_n": rep.psi_n,
        "penalty_rule": penalty.rule,
        "kappa_update": cfg.kappa_update,
        "init": cfg.init,
        "restarts": cfg.restarts,
        "renormalized": bool(args.renormalize),
        "n": int(x.shape[0]),
    }
    out = args.out or "model.json"
    io.write_model(out, rep.mixture, meta)
    print(f"pll={rep.pll:.10g} iterations={rep.iterations} converged={rep.converged} psi_n={rep.psi_n:.6g} -> {out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    if args.n < 1:
        raise UsageError("n must be at least 1")
    if args.model:
        mix = io.read_model(args.model)
    else:
        if args.kappas is None or args.means is None:
            raise UsageError("give --model, or --kappas and --means (and optionally --weights)")
        kappas = _floats(args.kappas)
        means = [_floats(m) for m in args.means.split(";")]
        weights = _floats(args.weights) if args.weights else [1.0 / len(kappas)] * len(kappas)
        try:
            mix = VmfMixture(weights, means, kappas)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    x, labels = sample_mixture(mix, args.n, args.seed)
    out = args.out or "sample.csv"
    io.write_dataset(out, x)
    if args.labels:
        io.write_labels(args.labels, labels)
    print(f"wrote {args.n} points in d={mix.dim} -> {out}")
    return EXIT_OK


def _write_cell_csv(path: Path, result) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate"] + result.columns)
        for i, row in enumerate(result.errors):
            w.writerow([i] + [format(v, ".17g") for v in row])


def cmd_simulate(args) -> int:
    name, specs = io.load_experiment_specs(args.spec)
    out = Path(args.out or f"sim_{name}")
    out.mkdir(parents=True, exist_ok=True)
    blocks, summary = [], []
    for spec in specs:
        res = run_experiment(spec, workers=max(1, args.threads))
        _write_cell_csv(out / f"{name}_d{spec.d}_n{spec.n}.csv", res)
        blocks.append(res.format_table())
        summary.append((spec, res))
        if res.n_failed:
            blocks.append(f"    ({res.n_failed} replicates failed and were excluded)")
    with open(out / f"{name}_table.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["d", "n", "stat"] + summary[0][1].columns)
        for spec, res in summary:
            w.writerow([spec.d, spec.n, "mean"] + [format(v, ".6f") for v in res.mean])
            w.writerow([spec.d, spec.n, "std"] + [format(v, ".6f") for v in res.std])
    text = "\n\n".join(blocks)
    (out / f"{name}_table.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_degeneracy(args) -> int:
    if args.data:
        x = io.read_dataset(args.data, renormalize=args.renormalize)
        base = io.read_model(args.model) if args.model else fit(x, EmConfig(p=2, seed=args.seed)).mixture
    else:
        base = _model_or_truth(args)
        x, _ = sample_mixture(base, args.n, args.seed)
    l, m = _ints(args.anchor)
    if args.q_max < 1:
        raise UsageError("q-max must be at least 1")
    try:
        tr = divergence_sequence(x, base, (l, m), args.q_max, io.parse_penalty(args.psi))
    except IndexError as exc:
        raise UsageError(str(exc)) from exc
    out = args.out or "trace.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q", "loglik", "penalized_loglik"])
        for q, a, b in zip(tr.q_values, tr.loglik, tr.penalized_loglik):
            w.writerow([int(q), format(a, ".17g"), format(b, ".17g")])
    print(
        f"rows={len(tr.q_values)} growth={tr.growth:.4f} "
        f"penalized_argmax_q={int(tr.q_values[tr.penalized_argmax])} -> {out}"
    )
    return EXIT_OK


def cmd_check_penalty(args) -> int:
    mix = _model_or_truth(args)
    M = args.M if args.M is not None else max_density_estimate(mix)
    cfg = io.parse_penalty(args.psi)
    if cfg.rule == "circular_variance":
        raise UsageError("check-penalty needs a data-free rule: zeta=<z>, fixed=<psi> or none")
    rep = check_penalty_conditions(cfg, mix.dim, _floats(args.n_grid), M)
    print(f"d={mix.dim} M={M:.6g} psi={args.psi}")
    print(f"C1 {'pass' if rep.c1 else 'FAIL'}")
    print(f"C2 {'pass' if rep.c2 else 'FAIL'}")
    from_n = "never" if rep.c3_from_n is None else f"{rep.c3_from_n:g}"
    print(f"C3 {'pass' if rep.c3 else 'FAIL'} (holds from n={from_n})")
    return EXIT_OK


def cmd_verify_lemmas(args) -> int:
    mix = _model_or_truth(args)
    rep = verify_ball_count_bounds(mix, _ints(args.n_values), args.mode, args.trials, args.seed)
    rows = rep.rows
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "trial", "regime", "epsilon", "sup_fraction", "bound", "centers", "violated"])
            for r in rows:
                w.writerow([r.n, r.trial, r.regime, format(r.epsilon, ".6g"), format(r.sup_fraction, ".6g"),
                            format(r.bound, ".6g"), r.centers, int(r.violated)])
    worst = rep.worst_ratio() if rows else math.nan
    print(f"M={rep.M:.6g} checks={len(rows)} violations={len(rep.violations)} "
          f"worst_ratio={worst:.4f} {'PASS' if rep.passed else 'FAIL'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master random seed")
    common.add_argument("--threads", type=int, default=1, help="worker processes where supported")
    common.add_argument("--out", default=None, help="output file or directory")

    parser = argparse.ArgumentParser(prog="penvmf", description="Penalized vMF mixture estimation tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit a mixture to a dataset")
    p.add_argument("data")
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--psi", default="zeta=1.0", help="zeta=<z>, fixed=<psi>, circvar or none")
    p.add_argument("--kappa-update", choices=["approx", "exact"], default="approx")
    p.add_argument("--init", choices=["kmeans", "random", "scatter"], default="kmeans")
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--renormalize", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sample", parents=[common], help="draw from a mixture")
    p.add_argument("--model")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--weights", help="comma-separated")
    p.add_argument("--kappas", help="comma-separated")
    p.add_argument("--means", help="semicolon-separated vectors, e.g. '1,0,0;0,1,0'")
    p.add_argument("--labels", help="write component labels to this file")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("simulate", parents=[common], help="run a simulation config")
    p.add_argument("spec")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("degeneracy", parents=[common], help="likelihood along a degenerating path")
    p.add_argument("--data")
    p.add_argument("--model")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--anchor", default="0,0", help="component,observation")
    p.add_argument("--q-max", type=int, default=10**5)
    p.add_argument("--psi", default="zeta=1.0")
    p.add_argument("--renormalize", action="store_true")
    p.set_defaults(func=cmd_degeneracy)

    p = sub.add_parser("check-penalty", parents=[common], help="check the penalty conditions numerically")
    p.add_argument("--psi", default="zeta=1.0")
    p.add_argument("--model")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--M", type=float, default=None, help="density bound; estimated from the model if omitted")
    p.add_argument("--n-grid", default="1e3,1e4,1e5,1e6")
    p.set_defaults(func=cmd_check_penalty)

    p = sub.add_parser("verify-lemmas", parents=[common], help="Monte-Carlo ball-count bounds")
    p.add_argument("--model")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--n-values", default="100000")
    p.add_argument("--mode", choices=["fixed_regime", "uniform_regime", "small_regime"], default="fixed_regime")
    p.add_argument("--trials", type=int, default=20)
    p.set_defaults(func=cmd_verify_lemmas)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except io.DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FitFailureError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
