"""Post-processing of per-sample coefficient matrices into skeletons.

Estimated graphs are normalized so the largest off-diagonal magnitude is
one, scored symmetrically, and sparsified with a hard threshold under the
AND rule: an undirected edge survives only if both directed coefficients
do.
"""

from __future__ import annotations

import numpy as np

from .errors import AllZeroGraph, MarginViolated, ShapeMismatch


def normalize(w) -> np.ndarray:
    """Scale so the maximum off-diagonal magnitude equals one."""
    w = np.asarray(w, dtype=np.float64)
    off = np.abs(w).copy()
    np.fill_diagonal(off, 0.0)
    peak = off.max()
    if peak == 0.0:
        raise AllZeroGraph("cannot normalize an all-zero graph")
    return w / peak


def symmetric_scores(w, method: str = "min") -> np.ndarray:
    """Symmetric edge scores from an asymmetric coefficient matrix.

    ``min`` (default) takes min(|w_jk|, |w_kj|), consistent with the AND
    rule; ``mean`` averages the two magnitudes.
    """
    w = np.abs(np.asarray(w, dtype=np.float64))
    if method == "min":
        s = np.minimum(w, w.T)
    elif method == "mean":
        s = 0.5 * (w + w.T)
    else:
        raise ShapeMismatch(f"unknown symmetrization {method!r}")
    np.fill_diagonal(s, 0.0)
    return s


def threshold_and(w, tau: float) -> np.ndarray:
    """Boolean skeleton: edge (j, k) iff both |w_jk| and |w_kj| reach tau.

    Entries that are exactly zero never survive hard-thresholding, so at
    tau = 0 the skeleton contains the pairs with both entries nonzero.
    """
    if tau < 0:
        raise ShapeMismatch("threshold must be nonnegative")
    scores = symmetric_scores(w, method="min")
    skel = (scores >= tau) & (scores > 0.0)
    np.fill_diagonal(skel, False)
    return skel


def margin_threshold(weak_max: float, strong_min: float, eta: float) -> float:
    """Threshold between the weak-edge ceiling and strong-edge floor:
    eta * weak_max + (1 - eta) * strong_min."""
    if not 0.0 < eta < 1.0:
        raise ShapeMismatch(f"eta must be in (0, 1), got {eta}")
    if weak_max < 0:
        raise ShapeMismatch("weak-edge ceiling must be nonnegative")
    if strong_min <= weak_max:
        raise MarginViolated(f"strong floor {strong_min} <= weak ceiling {weak_max}")
    return eta * weak_max + (1.0 - eta) * strong_min


def skeleton_edge_list(skel) -> list[tuple[int, int]]:
    """Undirected edges as (j, k) pairs with j < k."""
    skel = np.asarray(skel).astype(bool)
    if skel.ndim != 2 or not (skel == skel.T).all():
        raise ShapeMismatch("skeleton must be a symmetric matrix")
    jj, kk = np.nonzero(np.triu(skel, k=1))
    return list(zip(jj.tolist(), kk.tolist()))


def write_edge_list(skel, path) -> None:
    """Edge-list CSV: header j,k then one row per undirected edge."""
    lines = ["j,k"] + [f"{j},{k}" for j, k in skeleton_edge_list(skel)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def magnitude_histogram(graphs, bins: int = 50, normalized: bool = True):
    """Pooled histogram of off-diagonal magnitudes across graphs.

    Emitted so a thresholding level can be picked where the histogram
    shows a gap; no automatic gap detection is attempted.
    """
    graphs = np.asarray(graphs, dtype=np.float64)
    if graphs.ndim == 2:
        graphs = graphs[None]
    values = []
    for g in graphs:
        if normalized:
            try:
                g = normalize(g)
            except AllZeroGraph:
                pass
        a = np.abs(g)
        p = a.shape[0]
        mask = ~np.eye(p, dtype=bool)
        values.append(a[mask])
    pooled = np.concatenate(values)
    counts, edges = np.histogram(pooled, bins=bins, range=(0.0, 1.0) if normalized else None)
    return counts, edges
