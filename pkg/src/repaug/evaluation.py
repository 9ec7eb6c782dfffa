"""Retrieval metrics and representation-geometry diagnostics."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .dataio import atomic_write_text


def rank_of(scores, true_idx: int) -> int:
    """1-based rank of ``scores[true_idx]`` under descending order.

    Ties go to the lower index, so an all-equal score vector ranks item k at
    k + 1.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if not 0 <= true_idx < scores.shape[0]:
        raise IndexError(f"true index {true_idx} out of range for {scores.shape[0]} candidates")
    s = scores[true_idx]
    return int(1 + np.sum(scores > s) + np.sum(scores[:true_idx] == s))


def ranks(score_matrix, truth) -> np.ndarray:
    """Vectorised :func:`rank_of` for every row of a (queries x codebase) matrix."""
    s = np.asarray(score_matrix, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.intp)
    if s.ndim != 2 or truth.shape != (s.shape[0],):
        raise ValueError(f"score matrix {s.shape} does not match {truth.shape[0]} truth labels")
    if np.any((truth < 0) | (truth >= s.shape[1])):
        raise IndexError("truth index outside the codebase")
    true_s = s[np.arange(s.shape[0]), truth][:, None]
    before = np.arange(s.shape[1])[None, :] < truth[:, None]
    return 1 + np.sum(s > true_s, axis=1) + np.sum((s == true_s) & before, axis=1)


def mrr_from_ranks(r, k: int | None = None) -> float:
    r = np.asarray(r)
    if r.size == 0:
        raise ValueError("MRR over an empty query set")
    if k is not None and k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    rr = 1.0 / r
    if k is not None:
        rr = np.where(r <= k, rr, 0.0)
    return float(rr.mean())


def mrr_from_scores(score_matrix, truth, k: int | None = None) -> float:
    return mrr_from_ranks(ranks(score_matrix, truth), k)


@dataclass
class EvalSet:
    """Queries and a fixed codebase, both as encoder-input features."""
    queries: np.ndarray
    codebase: np.ndarray
    truth: np.ndarray

    def __post_init__(self):
        self.truth = np.asarray(self.truth, dtype=np.intp)
        if len(self.queries) == 0:
            raise ValueError("evaluation set has no queries")
        if self.truth.shape != (len(self.queries),):
            raise ValueError("need exactly one truth index per query")
        if np.any((self.truth < 0) | (self.truth >= len(self.codebase))):
            raise ValueError("truth index outside the codebase")

    @classmethod
    def paired(cls, query_features, item_features) -> "EvalSet":
        """Row i of the queries is answered by row i of the codebase."""
        return cls(np.asarray(query_features), np.asarray(item_features), np.arange(len(query_features)))


def score_matrix(model, eval_set: EvalSet) -> np.ndarray:
    # codebase encoded once, then one matrix-vector product per query
    code = model.embed(eval_set.codebase, "item")
    q = model.embed(eval_set.queries, "query")
    return q @ code.T


def mrr(eval_set: EvalSet, model) -> float:
    return mrr_from_scores(score_matrix(model, eval_set), eval_set.truth)


def mrr_at_k(eval_set: EvalSet, model, k: int) -> float:
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    return mrr_from_scores(score_matrix(model, eval_set), eval_set.truth, k)


# ---------------------------------------------------------------- geometry

@dataclass
class NormReport:
    norms: np.ndarray
    mean: float
    std: float
    kde_grid: np.ndarray
    kde_density: np.ndarray
    bandwidth: float
    pca: np.ndarray

    def summary(self) -> dict:
        return {"normMean": self.mean, "normStd": self.std, "kdeBandwidth": self.bandwidth}


def silverman_bandwidth(x: np.ndarray) -> float:
    n = x.size
    std = float(np.std(x))
    iqr = float(np.subtract(*np.percentile(x, [75, 25])))
    spread = min(std, iqr / 1.34) if iqr > 0 else std
    h = 0.9 * spread * n ** -0.2
    if h > 0:
        return h
    # degenerate sample (all equal): a narrow kernel keeps the curve a spike
    return 1e-3 * max(1.0, abs(float(np.mean(x))))


def gaussian_kde(x, grid_points: int = 256, bandwidth: float | None = None):
    """Gaussian KDE on a grid reaching 5 bandwidths past the data."""
    x = np.asarray(x, dtype=np.float64)
    h = silverman_bandwidth(x) if bandwidth is None else bandwidth
    grid = np.linspace(x.min() - 5 * h, x.max() + 5 * h, grid_points)
    z = (grid[:, None] - x[None, :]) / h
    density = np.exp(-0.5 * z * z).sum(axis=1) / (x.size * h * np.sqrt(2 * np.pi))
    return grid, density, h


def pca_2d(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    centered = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2]
    coords = centered @ comps.T
    if coords.shape[1] < 2:
        coords = np.hstack([coords, np.zeros((len(x), 2 - coords.shape[1]))])
    return coords


def norm_report(representations) -> NormReport:
    reps = np.asarray(representations, dtype=np.float64)
    if reps.ndim != 2 or reps.shape[0] < 2:
        raise ValueError("norm report needs at least 2 vectors")
    norms = np.linalg.norm(reps, axis=1)
    grid, dens, h = gaussian_kde(norms)
    return NormReport(norms, float(norms.mean()), float(norms.std()), grid, dens, h, pca_2d(reps))


def write_reports(json_path, csv_path, summary: dict, report: NormReport | None):
    atomic_write_text(json_path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if report is None or csv_path is None:
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["series", "index", "x", "y"])
    for i, (g, d) in enumerate(zip(report.kde_grid, report.kde_density)):
        w.writerow(["kde", i, repr(float(g)), repr(float(d))])
    for i, n in enumerate(report.norms):
        w.writerow(["norm", i, repr(float(n)), ""])
    for i, (a, b) in enumerate(report.pca):
        w.writerow(["pca", i, repr(float(a)), repr(float(b))])
    atomic_write_text(csv_path, buf.getvalue())
