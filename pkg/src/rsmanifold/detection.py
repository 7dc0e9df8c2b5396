"""Supervised metric learning (SML) for target detection, and ROC evaluation.

A Mahalanobis metric ``M`` (symmetric PSD, unit Frobenius norm) is learned to
push target (positive) spectra away from background (negative) spectra while
keeping each group's kNN neighbourhoods tight. Pixels are then scored by their
squared metric distance to the mean target spectrum; lower means more
target-like.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateInputError, DomainError, NumericalError, ShapeError
from .linalg import psd_project
from .patch_align import knn_laplacian

__all__ = [
    "MetricMatrix",
    "DetectionResult",
    "sml_objective_matrix",
    "sml_fit",
    "detect",
    "roc_auc",
]


@dataclass(frozen=True)
class MetricMatrix:
    """PSD metric with unit Frobenius norm and the objective at each accepted step."""

    m: np.ndarray
    history: tuple = field(default=(), repr=False)

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"metric must be square, got {m.shape}")
        norm = np.linalg.norm(m)
        if abs(norm - 1.0) > 1e-9:
            raise DomainError(f"metric must have unit Frobenius norm, got {norm}")
        if np.linalg.norm(m - m.T) > 1e-12:
            raise DomainError("metric must be symmetric")
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls, d: int) -> "MetricMatrix":
        return cls(np.eye(d) / np.sqrt(d))

    @property
    def d(self) -> int:
        return self.m.shape[0]


@dataclass(frozen=True)
class DetectionResult:
    scores: np.ndarray
    labels: Optional[np.ndarray] = None
    auc: Optional[float] = None


def _separation_scatter(pos: np.ndarray, neg: np.ndarray) -> np.ndarray:
    """sum over all (p, n) pairs of (p - n)(p - n)^T, without forming the pairs."""
    sp, sn = pos.sum(axis=0), neg.sum(axis=0)
    cross = np.outer(sp, sn)
    s = len(neg) * pos.T @ pos + len(pos) * neg.T @ neg - cross - cross.T
    return 0.5 * (s + s.T)


def sml_objective_matrix(positives, negatives, lambda_sim: float = 1.0,
                         lambda_smooth: float = 1.0, k: int = 5, sigma="auto") -> np.ndarray:
    """Matrix G with f(M) = tr(M G) for the SML objective.

    ``G = S_sep / (P Q) - lambda_sim X^T L_sim X - lambda_smooth X_pos^T L_pos X_pos``
    (samples as rows), where ``L_sim`` joins the kNN graphs of the positives
    and of the negatives and ``L_pos`` is the positives' kNN graph.
    """
    pos = np.asarray(positives, dtype=float)
    neg = np.asarray(negatives, dtype=float)
    if pos.ndim != 2 or neg.ndim != 2 or pos.shape[1] != neg.shape[1]:
        raise ShapeError(f"positives {pos.shape} and negatives {neg.shape} must share columns")
    p, q = len(pos), len(neg)
    if p < 2 or q < 2:
        raise DomainError("need at least two positive and two negative samples")
    if not 1 <= k < min(p, q):
        raise DomainError(f"k must lie in [1, {min(p, q) - 1}], got {k}")
    if lambda_sim < 0 or lambda_smooth < 0:
        raise DomainError("regularization weights must be nonnegative")
    sep = _separation_scatter(pos, neg)
    if not np.any(sep):
        raise DegenerateInputError("positives and negatives are all identical")
    l_pos = knn_laplacian(pos, k, sigma)
    l_neg = knn_laplacian(neg, k, sigma)
    # L_sim is block diagonal, so X^T L_sim X splits into the two groups
    sim = pos.T @ l_pos @ pos + neg.T @ l_neg @ neg
    smooth = pos.T @ l_pos @ pos
    g = sep / (p * q) - lambda_sim * sim - lambda_smooth * smooth
    return 0.5 * (g + g.T)


_MAX_STEP = 1e6


def _normalized_psd(m: np.ndarray) -> Optional[np.ndarray]:
    m = psd_project(m)
    norm = np.linalg.norm(m)
    return m / norm if norm > 0 else None


def sml_fit(positives, negatives, lambda_sim: float = 1.0, lambda_smooth: float = 1.0,
            k: int = 5, steps: int = 200, sigma="auto",
            callback: Optional[Callable[[np.ndarray, float], None]] = None) -> MetricMatrix:
    """Projected-gradient ascent of tr(M G) over PSD matrices with unit norm.

    Starts at ``I / ||I||``. Each step moves along the gradient (G scaled
    to unit Frobenius norm), projects onto the PSD cone and renormalizes;
    the step is halved up to 30 times until the objective does not
    decrease, and the run stops early when no halving helps or the iterate
    stops moving. The first trial step is 1.0; after a step accepted
    without halving the next trial doubles (capped at 1e6), otherwise it
    restarts from max(accepted step, 1.0). Normalization makes long steps
    safe: as the step grows the iterate tends to the optimum ``G+ / ||G+||``.
    `callback(M, f)` sees the start and every accepted iterate.
    """
    g = sml_objective_matrix(positives, negatives, lambda_sim, lambda_smooth, k, sigma)
    gnorm = np.linalg.norm(g)
    direction = g / gnorm
    d = g.shape[0]
    m = np.eye(d) / np.sqrt(d)
    f = float(np.sum(m * g))
    history = [f]
    if callback is not None:
        callback(m, f)
    trial = 1.0
    for _ in range(steps):
        step = trial
        accepted = False
        for halvings in range(31):
            cand = _normalized_psd(m + step * direction)
            if cand is not None:
                f_new = float(np.sum(cand * g))
                if not np.isfinite(f_new):
                    raise NumericalError("SML objective became non-finite")
                if f_new >= f:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            break
        # a full-size step was accepted: try a longer one next time
        trial = min(2.0 * trial, _MAX_STEP) if halvings == 0 else max(step, 1.0)
        converged = np.linalg.norm(cand - m) <= 1e-10
        m, f = cand, f_new
        history.append(f)
        if callback is not None:
            callback(m, f)
        if converged:
            break
    return MetricMatrix(0.5 * (m + m.T) / np.linalg.norm(0.5 * (m + m.T)), tuple(history))


def detect(pixels, target, metric: MetricMatrix, labels=None) -> DetectionResult:
    """Score each pixel by (x - target)^T M (x - target); lower is more target-like.

    With `labels` (1 = target, 0 = background) the AUC is attached.
    """
    x = np.asarray(pixels, dtype=float)
    t = np.asarray(target, dtype=float).ravel()
    if x.ndim != 2 or x.shape[1] != t.size or t.size != metric.d:
        raise ShapeError(f"pixels {x.shape}, target {t.shape} and metric {metric.m.shape} "
                         "disagree in dimension")
    diff = x - t
    scores = np.maximum(np.einsum("ij,jk,ik->i", diff, metric.m, diff), 0.0)
    if labels is None:
        return DetectionResult(scores)
    labels = np.asarray(labels)
    return DetectionResult(scores, labels, roc_auc(scores, labels))


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve for "lower score = positive", ties counted 1/2.

    Computed from the Mann-Whitney rank statistic.
    """
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.shape != y.shape:
        raise ShapeError("one label per score required")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DomainError("ROC needs both positive and negative labels")
    ranks = rankdata(-s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))
