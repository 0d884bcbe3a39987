"""Experiment orchestration: seeded replicates, method fitting, scoring,
and report artifacts.

One replicate generates a dataset, fits each requested method, scores the
estimated graphs sample by sample against regenerated ground truth, and
records the results. Covariate-aware methods are scored on the test
split; the penalty-path baseline is fit and scored on the training
samples within each covariate cluster.
"""

from __future__ import annotations

import concurrent.futures
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, datagen, estimator, graphops, metrics
from .errors import AllZeroGraph, ShapeMismatch

VALID_METHODS = ("dnn", "reggmm", "nodewise-lasso")
DEFAULT_THRESHOLDS = (0.01, 0.025, 0.05, 0.075, 0.1)


@dataclass
class ExperimentConfig:
    setting: str
    replicates: int = 1
    seeds: tuple[int, ...] = (0,)
    n_train: int = 10_000
    n_val: int = 1_000
    n_test: int = 1_000
    methods: tuple[str, ...] = ("dnn",)
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    pseudo_moral: bool = False
    out_dir: str = "runs"
    dnn: dict = field(default_factory=dict)
    lasso: dict = field(default_factory=dict)
    generator: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.setting not in datagen.SETTING_IDS:
            raise ShapeMismatch(f"unknown setting {self.setting!r}")
        if self.replicates < 1:
            raise ShapeMismatch("replicate count must be >= 1")
        self.seeds = tuple(int(s) for s in self.seeds)
        if len(self.seeds) != self.replicates:
            raise ShapeMismatch("one seed per replicate required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ShapeMismatch("replicate seeds must be distinct")
        self.methods = tuple(self.methods)
        for m in self.methods:
            if m not in VALID_METHODS:
                raise ShapeMismatch(f"unknown method {m!r}")
        thr = tuple(float(t) for t in self.thresholds)
        if any(t < 0 for t in thr) or any(b < a for a, b in zip(thr, thr[1:])):
            raise ShapeMismatch("thresholds must be nonnegative and ascending")
        self.thresholds = thr


def truth_vectors(spec, Z, pseudo: bool) -> list[np.ndarray]:
    """Upper-triangle ground-truth label vector per sample."""
    iu = np.triu_indices(spec.p, k=1)
    return [datagen.truth_skeleton(spec, z, pseudo=pseudo)[iu] for z in Z]


def _grouped_rank_metric(fn, score_vecs, label_vecs) -> list[float]:
    """Per-sample metric values, computing each distinct case once."""
    cache = {}
    out = []
    for s, l in zip(score_vecs, label_vecs):
        key = (s.tobytes(), l.tobytes())
        if key not in cache:
            cache[key] = fn(s, l)
        out.append(cache[key])
    return out


def evaluate_graphs(graphs, truths, thresholds) -> dict:
    """Per-sample metrics for covariate-specific graph estimates.

    ``graphs``: (n, p, p) coefficient graphs; ``truths``: list of boolean
    skeletons (or upper-triangle vectors). Returns per-sample lists for
    auroc/auprc plus f1/ba at every threshold on normalized graphs under
    the AND rule.
    """
    graphs = np.asarray(graphs)
    p = graphs.shape[1]
    iu = np.triu_indices(p, k=1)
    label_vecs = []
    skels = []
    for t in truths:
        t = np.asarray(t)
        if t.ndim == 2:
            skels.append(t.astype(bool))
            label_vecs.append(t.astype(bool)[iu])
        else:
            vec = t.astype(bool)
            full = np.zeros((p, p), dtype=bool)
            full[iu] = vec
            skels.append(full | full.T)
            label_vecs.append(vec)

    score_vecs = [graphops.symmetric_scores(g)[iu] for g in graphs]
    result = {
        "auroc": _grouped_rank_metric(metrics.auroc, score_vecs, label_vecs),
        "auprc": _grouped_rank_metric(metrics.auprc, score_vecs, label_vecs),
    }
    for tau in thresholds:
        f1s, bas = [], []
        for g, skel in zip(graphs, skels):
            try:
                g_norm = graphops.normalize(g)
            except AllZeroGraph:
                g_norm = np.asarray(g, dtype=np.float64)
            pred = graphops.threshold_and(g_norm, tau)
            f1, ba = metrics.f1_ba(pred, skel)
            f1s.append(f1)
            bas.append(ba)
        result[f"f1@{tau:g}"] = f1s
        result[f"ba@{tau:g}"] = bas
    return result


def fit_eval_dnn(cfg: ExperimentConfig, ds: datagen.Dataset, seed: int,
                 family: str) -> dict:
    overrides = dict(cfg.dnn)
    overrides.setdefault("seed", seed)
    overrides["family"] = family
    train_cfg = estimator.default_train_config(cfg.setting, **overrides)
    model, history = estimator.train(ds, train_cfg)
    Xte, Zte = ds.part("test")
    graphs = estimator.estimate_graphs(model, Zte)
    truths = truth_vectors(ds.spec, Zte, cfg.pseudo_moral)
    per_sample = evaluate_graphs(graphs, truths, cfg.thresholds)
    hist_counts, hist_edges = graphops.magnitude_histogram(graphs)
    return {
        "per_sample": per_sample,
        "histogram": {"counts": hist_counts.tolist(),
                      "edges": np.round(hist_edges, 12).tolist()},
        "best_epoch": history.best_epoch,
        "final_val_loss": history.val_loss[-1] if history.val_loss else None,
    }


def fit_eval_lasso(cfg: ExperimentConfig, ds: datagen.Dataset) -> dict:
    """Cluster-partitioned penalty-path baseline, scored on training samples."""
    Xtr, Ztr = ds.part("train")
    labels = datagen.cluster_labels(ds.spec, Ztr)
    truths = truth_vectors(ds.spec, Ztr, cfg.pseudo_moral)
    p = ds.spec.p
    iu = np.triu_indices(p, k=1)
    opts = dict(cfg.lasso)
    n_lambdas = int(opts.get("n_lambdas", 50))
    min_ratio = float(opts.get("lambda_min_ratio", 0.001))
    tol = float(opts.get("tol", 1e-10))
    max_iter = int(opts.get("max_iter", 100_000))
    export_paths = bool(opts.get("export_paths", False))

    per_sample = {"auroc": np.empty(len(Xtr)), "auprc": np.empty(len(Xtr))}
    tau_keys = [f"f1@{t:g}" for t in cfg.thresholds] + [f"ba@{t:g}" for t in cfg.thresholds]
    for k in tau_keys:
        per_sample[k] = np.empty(len(Xtr))
    best_lambdas = {}

    for cluster in sorted(set(labels.tolist())):
        members = np.nonzero(labels == cluster)[0]
        path = baselines.nodewise_lasso_graphs(
            Xtr[members], n_lambdas=n_lambdas, lambda_min_ratio=min_ratio,
            tol=tol, max_iter=max_iter)
        if export_paths:
            out = Path(cfg.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            baselines.write_path_csv(path, out / f"lasso_path_cluster{cluster}.csv")
        cluster_truths = [truths[i] for i in members]
        cluster_skels = []
        for vec in cluster_truths:
            full = np.zeros((p, p), dtype=bool)
            full[iu] = vec
            cluster_skels.append(full | full.T)

        for metric_name in ("auroc", "auprc"):
            fn = {"auroc": metrics.auroc, "auprc": metrics.auprc}[metric_name]

            def per_lambda_values(w):
                scores = graphops.symmetric_scores(w)[iu]
                return _grouped_rank_metric(fn, [scores] * len(members), cluster_truths)

            best_val, best_lam, best_vals = -np.inf, None, None
            for lam, w in zip(path.lambdas, path.graphs):
                vals = per_lambda_values(w)
                mean_val = math.fsum(vals) / len(vals)
                if mean_val > best_val:
                    best_val, best_lam, best_vals = mean_val, float(lam), vals
            per_sample[metric_name][members] = best_vals
            best_lambdas[f"{metric_name}_cluster{cluster}"] = best_lam
            if metric_name == "auroc":
                auroc_graph = path.graphs[int(np.argwhere(path.lambdas == best_lam)[0][0])]

        try:
            g_norm = graphops.normalize(auroc_graph)
        except AllZeroGraph:
            g_norm = auroc_graph
        for tau in cfg.thresholds:
            pred = graphops.threshold_and(g_norm, tau)
            pairs = [metrics.f1_ba(pred, skel) for skel in cluster_skels]
            per_sample[f"f1@{tau:g}"][members] = [v[0] for v in pairs]
            per_sample[f"ba@{tau:g}"][members] = [v[1] for v in pairs]

    return {
        "per_sample": {k: v.tolist() for k, v in per_sample.items()},
        "best_lambdas": best_lambdas,
    }


def run_replicate(cfg: ExperimentConfig, index: int) -> dict:
    """Generate one replicate's data, fit every method, return raw results."""
    seed = cfg.seeds[index]
    spec = datagen.make_setting(cfg.setting, seed=seed, **cfg.generator)
    n = cfg.n_train + cfg.n_val + cfg.n_test
    ds = datagen.generate_dataset(spec, n, (cfg.n_train, cfg.n_val, cfg.n_test))
    out = {"setting": cfg.setting, "replicate": index, "seed": seed,
           "n_train": cfg.n_train, "methods": {}}
    for method in cfg.methods:
        t0 = time.perf_counter()
        try:
            if method == "dnn":
                res = fit_eval_dnn(cfg, ds, seed, family="dnn")
            elif method == "reggmm":
                res = fit_eval_dnn(cfg, ds, seed, family="linear")
            else:
                res = fit_eval_lasso(cfg, ds)
            res["status"] = "ok"
        except Exception as exc:  # record the failure, keep the run going
            res = {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}
        res["runtime_s"] = time.perf_counter() - t0
        if "per_sample" in res:
            res["per_sample"] = {k: list(map(float, v)) for k, v in res["per_sample"].items()}
        out["methods"][method] = res
    return out


def _fmt(value) -> str:
    if value is None or (isinstance(value, float) and not np.isfinite(value)):
        return ""
    return f"{value:.10g}"


def write_report(cfg: ExperimentConfig, replicate_results: list[dict], out_dir) -> Path:
    """Per-replicate report rows plus an aggregate summary.

    report.csv: one row per (replicate, method, threshold) with the
    sample-averaged metrics. summary.csv: replicate mean and standard
    deviation per method and threshold.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_lines = [",".join(metrics.REPORT_COLUMNS)]
    summary_lines = ["setting,method,threshold,auroc_mean,auroc_std,auprc_mean,"
                     "auprc_std,f1_mean,f1_std,ba_mean,ba_std,replicates"]

    for method in cfg.methods:
        ok = [r for r in replicate_results if r["methods"][method]["status"] == "ok"]
        for rep in replicate_results:
            res = rep["methods"][method]
            if res["status"] != "ok":
                continue
            ps = res["per_sample"]
            au = math.fsum(ps["auroc"]) / len(ps["auroc"])
            ap = math.fsum(ps["auprc"]) / len(ps["auprc"])
            for tau in cfg.thresholds:
                f1 = math.fsum(ps[f"f1@{tau:g}"]) / len(ps[f"f1@{tau:g}"])
                ba = math.fsum(ps[f"ba@{tau:g}"]) / len(ps[f"ba@{tau:g}"])
                report_lines.append(",".join([
                    cfg.setting, str(rep["replicate"]), method, str(cfg.n_train),
                    _fmt(tau), _fmt(au), _fmt(ap), _fmt(f1), _fmt(ba),
                    _fmt(res["runtime_s"]),
                ]))
        if not ok:
            continue
        agg = metrics.aggregate([r["methods"][method]["per_sample"] for r in ok])
        for tau in cfg.thresholds:
            summary_lines.append(",".join([
                cfg.setting, method, _fmt(tau),
                _fmt(agg.mean["auroc"]), _fmt(agg.std["auroc"]),
                _fmt(agg.mean["auprc"]), _fmt(agg.std["auprc"]),
                _fmt(agg.mean[f"f1@{tau:g}"]), _fmt(agg.std[f"f1@{tau:g}"]),
                _fmt(agg.mean[f"ba@{tau:g}"]), _fmt(agg.std[f"ba@{tau:g}"]),
                str(len(ok)),
            ]))

    report_path = out / "report.csv"
    report_path.write_text("\n".join(report_lines) + "\n")
    (out / "summary.csv").write_text("\n".join(summary_lines) + "\n")
    return report_path


def _write_replicate_artifacts(out: Path, rep: dict) -> None:
    rep_path = out / f"replicate_{rep['replicate']:03d}.json"
    rep_path.write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
    for method, res in rep["methods"].items():
        hist = res.get("histogram")
        if hist:
            lines = ["bin_low,bin_high,count"]
            for i, c in enumerate(hist["counts"]):
                lines.append(f"{hist['edges'][i]:.10g},{hist['edges'][i+1]:.10g},{c}")
            (out / f"histogram_{method}_{rep['replicate']:03d}.csv").write_text(
                "\n".join(lines) + "\n")


def run_experiment(cfg: ExperimentConfig) -> dict[str, metrics.MetricsReport]:
    """Run all replicates, write artifacts, and aggregate per method.

    Failed replicates are recorded and skipped in aggregation; the run
    itself continues. Worker count for replicate parallelism is capped by
    the CDGM_THREADS environment variable (default: serial).
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = int(os.environ.get("CDGM_THREADS", "1"))
    if workers > 1 and cfg.replicates > 1:
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=min(workers, cfg.replicates)) as pool:
            results = list(pool.map(run_replicate, [cfg] * cfg.replicates,
                                    range(cfg.replicates)))
    else:
        results = [run_replicate(cfg, i) for i in range(cfg.replicates)]

    for rep in results:
        _write_replicate_artifacts(out, rep)
    write_report(cfg, results, out)

    reports = {}
    for method in cfg.methods:
        ok = [r["methods"][method]["per_sample"] for r in results
              if r["methods"][method]["status"] == "ok"]
        if ok:
            reports[method] = metrics.aggregate(ok)
    return reports


def load_replicates(out_dir) -> list[dict]:
    paths = sorted(Path(out_dir).glob("replicate_*.json"))
    return [json.loads(p.read_text()) for p in paths]
