"""Command-line interface.

Subcommands: generate (dataset to disk), train, eval, baseline, bounds,
experiment (full pipeline), report (re-aggregate replicate outputs).
Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import datagen, estimator, graphops, harness, theory
from .errors import AllZeroGraph, CdgmError


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage errors exit 1 instead of 2."""

    def error(self, message):
        raise UsageError(message)


def _parse_scalar(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def parse_config_file(path) -> harness.ExperimentConfig:
    """Flat key-value experiment config; '#' starts a comment.

    Dotted keys (dnn.*, lasso.*, gen.*) collect into per-method override
    dicts; list-valued keys are comma-separated.
    """
    kv = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"bad config line (need key = value): {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        kv[key] = value

    cfg = {"dnn": {}, "lasso": {}, "generator": {}}
    list_keys = {"seeds": int, "thresholds": float, "methods": str}
    tuple_keys = {"block1", "block2"}
    for key, value in kv.items():
        if key.startswith("dnn."):
            sub = key[4:]
            if sub in tuple_keys:
                cfg["dnn"][sub] = tuple(int(v) for v in value.split(",") if v)
            else:
                cfg["dnn"][sub] = _parse_scalar(value)
        elif key.startswith("lasso."):
            cfg["lasso"][key[6:]] = _parse_scalar(value)
        elif key.startswith("gen."):
            cfg["generator"][key[4:]] = _parse_scalar(value)
        elif key in list_keys:
            cast = list_keys[key]
            cfg[key] = tuple(cast(v.strip()) for v in value.split(",") if v.strip())
        elif key in ("setting", "out_dir"):
            cfg[key] = value
        elif key in ("replicates", "n_train", "n_val", "n_test"):
            cfg[key] = int(value)
        elif key == "pseudo_moral":
            cfg[key] = value.lower() == "true"
        else:
            raise UsageError(f"unknown config key {key!r}")
    if "setting" not in cfg:
        raise UsageError("config must define 'setting'")
    # rename to the estimator's parameter names
    if "lr" in cfg["dnn"]:
        cfg["dnn"]["base_lr"] = cfg["dnn"].pop("lr")
    try:
        return harness.ExperimentConfig(**cfg)
    except (CdgmError, TypeError) as exc:
        raise UsageError(str(exc)) from exc


def _split_sizes(n: int, splits_arg: str | None) -> tuple[int, int, int]:
    if splits_arg:
        parts = tuple(int(v) for v in splits_arg.split(","))
        if len(parts) != 3:
            raise UsageError("--splits needs train,val,test")
        return parts
    if n <= 2000:
        raise UsageError("default splits need n > 2000; pass --splits")
    return (n - 2000, 1000, 1000)


def cmd_generate(args) -> int:
    spec = datagen.make_setting(args.setting, seed=args.seed,
                                noise_sd=args.noise_sd, p=args.p)
    splits = _split_sizes(args.n, args.splits)
    ds = datagen.generate_dataset(spec, args.n, splits)
    datagen.save_dataset(ds, args.out, csv=args.csv)
    print(f"wrote {args.n} samples for {args.setting} to {args.out}")
    return 0


def cmd_train(args) -> int:
    ds = datagen.load_dataset(args.data)
    overrides = {"family": args.family, "seed": args.seed}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.lr is not None:
        overrides["base_lr"] = args.lr
    cfg = estimator.default_train_config(ds.spec.setting, **overrides)
    model, history = estimator.train(ds, cfg)
    out = Path(args.out)
    estimator.save_model(model, out)
    (out / "history.json").write_text(json.dumps({
        "train_loss": history.train_loss,
        "val_loss": history.val_loss,
        "init_val_loss": history.init_val_loss,
        "best_epoch": history.best_epoch,
        "wall_time_s": history.wall_time_s,
    }, indent=2) + "\n")
    best_val = min([history.init_val_loss] + history.val_loss)
    print(f"trained {args.family} model for {ds.spec.setting}; "
          f"best epoch {history.best_epoch}, val MSE {best_val:.6g}")
    return 0


def cmd_eval(args) -> int:
    ds = datagen.load_dataset(args.data)
    model = estimator.load_model(args.model)
    Xte, Zte = ds.part("test")
    graphs = estimator.estimate_graphs(model, Zte)
    truths = harness.truth_vectors(ds.spec, Zte, args.pseudo_moral)
    thresholds = tuple(float(t) for t in args.thresholds.split(","))
    per_sample = harness.evaluate_graphs(graphs, truths, thresholds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {k: math.fsum(v) / len(v) for k, v in per_sample.items()}
    (out / "eval.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    counts, edges = graphops.magnitude_histogram(graphs)
    lines = ["bin_low,bin_high,count"]
    for i, c in enumerate(counts):
        lines.append(f"{edges[i]:.10g},{edges[i+1]:.10g},{c}")
    (out / "histogram.csv").write_text("\n".join(lines) + "\n")
    if args.edge_list_tau is not None:
        edge_dir = out / "edges"
        edge_dir.mkdir(exist_ok=True)
        for i, g in enumerate(graphs):
            try:
                g = graphops.normalize(g)
            except AllZeroGraph:
                pass
            skel = graphops.threshold_and(g, args.edge_list_tau)
            graphops.write_edge_list(skel, edge_dir / f"sample_{i:05d}.csv")
    for key in sorted(summary):
        print(f"{key}: {summary[key]:.4f}")
    return 0


def cmd_baseline(args) -> int:
    ds = datagen.load_dataset(args.data)
    cfg = harness.ExperimentConfig(
        setting=ds.spec.setting, seeds=(ds.seed,), methods=("nodewise-lasso",),
        n_train=ds.splits[0], n_val=ds.splits[1], n_test=ds.splits[2],
        pseudo_moral=args.pseudo_moral,
        lasso={"n_lambdas": args.n_lambdas, "lambda_min_ratio": args.lambda_min_ratio,
               "export_paths": args.export_paths},
        out_dir=args.out)
    res = harness.fit_eval_lasso(cfg, ds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {k: math.fsum(v) / len(v) for k, v in res["per_sample"].items()}
    summary["best_lambdas"] = res["best_lambdas"]
    (out / "baseline.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for key in ("auroc", "auprc"):
        print(f"{key}: {summary[key]:.4f}")
    return 0


def cmd_bounds(args) -> int:
    ns = [int(float(v)) for v in args.n.split(",")]
    ps = [int(v) for v in args.p.split(",")]
    print("order-level diagnostics (hidden constants set to 1); "
          "values indicate scaling, not certified bounds")
    header = f"{'n':>12} {'p':>6} {'gen_term':>12} {'rate':>12} {'rate_smooth':>12} {'depth':>6} {'width':>8}"
    print(header)
    for n in ns:
        for p in ps:
            inp = theory.BoundInputs(n=n, p=p, q=args.q, smoothness=args.m,
                                     strong_convexity=args.alpha, delta=args.delta,
                                     pseudo_dim=args.pseudo_dim)
            gen = theory.generalization_error_term(inp)
            rate = theory.excess_risk_rate(inp, mode="lipschitz")
            rate_s = theory.excess_risk_rate(inp, mode="smooth")
            if 0.0 < rate < 1.0:
                depth, width = theory.network_size_for_rate(args.m, args.q, rate)
                size = f"{depth:>6d} {width:>8d}"
            else:
                size = f"{'-':>6} {'-':>8}"
            print(f"{n:>12d} {p:>6d} {gen:>12.4e} {rate:>12.4e} {rate_s:>12.4e} {size}")
    return 0


def cmd_experiment(args) -> int:
    cfg = parse_config_file(args.config)
    reports = harness.run_experiment(cfg)
    for method, rep in reports.items():
        print(f"{method}: auroc {rep.mean['auroc']:.4f} ({rep.std['auroc']:.4f})  "
              f"auprc {rep.mean['auprc']:.4f} ({rep.std['auprc']:.4f})")
    print(f"artifacts in {cfg.out_dir}")
    return 0


def cmd_report(args) -> int:
    reps = harness.load_replicates(args.dir)
    if not reps:
        raise CdgmError(f"no replicate artifacts under {args.dir}")
    methods = tuple(reps[0]["methods"].keys())
    thresholds = []
    for key in next(iter(reps[0]["methods"].values()))["per_sample"]:
        if key.startswith("f1@"):
            thresholds.append(float(key[3:]))
    cfg = harness.ExperimentConfig(
        setting=reps[0]["setting"], replicates=len(reps),
        seeds=tuple(r["seed"] for r in reps), methods=methods,
        n_train=int(reps[0].get("n_train", 10_000)),
        thresholds=tuple(sorted(thresholds)), out_dir=args.dir)
    path = harness.write_report(cfg, reps, args.dir)
    print(f"wrote {path}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="cdgm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic dataset")
    g.add_argument("--setting", required=True, choices=datagen.SETTING_IDS)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--splits", default=None, help="train,val,test sizes")
    g.add_argument("--noise-sd", type=float, default=1.0, dest="noise_sd")
    g.add_argument("--p", type=int, default=None, help="node-count override")
    g.add_argument("--csv", action="store_true")
    g.set_defaults(fn=cmd_generate)

    t = sub.add_parser("train", help="fit the coefficient network")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--family", choices=("dnn", "linear"), default="dnn")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="score a trained model on the test split")
    e.add_argument("--data", required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--pseudo-moral", action="store_true", dest="pseudo_moral")
    e.add_argument("--thresholds", default="0.01,0.025,0.05,0.075,0.1")
    e.add_argument("--edge-list-tau", type=float, default=None, dest="edge_list_tau",
                   help="also write skeleton edge lists thresholded at this level")
    e.set_defaults(fn=cmd_eval)

    b = sub.add_parser("baseline", help="nodewise lasso per covariate cluster")
    b.add_argument("--data", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--n-lambdas", type=int, default=50, dest="n_lambdas")
    b.add_argument("--lambda-min-ratio", type=float, default=0.001,
                   dest="lambda_min_ratio")
    b.add_argument("--export-paths", action="store_true", dest="export_paths",
                   help="write one penalty-path CSV per cluster")
    b.add_argument("--pseudo-moral", action="store_true", dest="pseudo_moral")
    b.set_defaults(fn=cmd_baseline)

    d = sub.add_parser("bounds", help="closed-form scaling diagnostics")
    d.add_argument("--n", default="10000", help="comma list, scientific ok")
    d.add_argument("--p", default="50", help="comma list")
    d.add_argument("--q", type=int, default=2)
    d.add_argument("--m", type=float, default=2.0)
    d.add_argument("--alpha", type=float, default=0.5)
    d.add_argument("--delta", type=float, default=0.05)
    d.add_argument("--pseudo-dim", type=float, default=100.0, dest="pseudo_dim")
    d.set_defaults(fn=cmd_bounds)

    x = sub.add_parser("experiment", help="full multi-replicate pipeline")
    x.add_argument("--config", required=True)
    x.set_defaults(fn=cmd_experiment)

    r = sub.add_parser("report", help="re-aggregate replicate artifacts")
    r.add_argument("--dir", required=True)
    r.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
