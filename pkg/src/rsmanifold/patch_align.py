"""Patch alignment framework for linear dimensionality reduction.

Every method is split into two stages. Patch optimization builds, for each
sample, a small symmetric matrix over the sample and its chosen neighbours.
Alignment sums those local matrices into one N x N matrix ``L``. A linear
map ``U`` is then read off a (generalized) eigenproblem on ``X L X^T``.

Samples are rows of ``x`` (N x D); the formulas below write ``X = x.T``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Literal, NamedTuple, Optional

import numpy as np

from .errors import DegenerateInputError, DomainError, ShapeError
from .linalg import gen_sym_eig, pairwise_sq_dists, sym_eig

__all__ = [
    "LabeledDataset",
    "PatchPart",
    "AlignmentMatrix",
    "Projection",
    "nearest_neighbors",
    "heat_sigma",
    "knn_laplacian",
    "pca_patches",
    "lda_patches",
    "le_patches",
    "lle_patches",
    "dla_patches",
    "assemble",
    "build_alignment",
    "embedding_objective",
    "solve_linear_embedding",
    "solve_nonnegative_embedding",
]

METHODS = ("pca", "lda", "le", "lle", "dla")
_CONSTRAINTS = ("orthonormal-columns", "data-whitened")


@dataclass(frozen=True)
class LabeledDataset:
    x: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 1:
            raise ShapeError(f"need an N x D sample matrix with N >= 2, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DomainError("samples contain non-finite values")
        object.__setattr__(self, "x", x)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (x.shape[0],):
                raise ShapeError(f"{labels.shape[0]} labels for {x.shape[0]} samples")
            if not np.issubdtype(labels.dtype, np.integer):
                if not np.all(labels == np.round(labels)):
                    raise DomainError("labels must be integers")
                labels = labels.astype(int)
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def classes(self) -> np.ndarray:
        if self.labels is None:
            raise DomainError("dataset has no labels")
        return np.unique(self.labels)


class PatchPart(NamedTuple):
    """Local matrix over `indices`; the patch centre comes first."""

    indices: np.ndarray
    local_matrix: np.ndarray


@dataclass(frozen=True)
class AlignmentMatrix:
    """Global alignment matrix.

    ``b`` is an optional second alignment matrix for methods whose
    constraint is itself data dependent (LDA keeps its within-class
    alignment here); ``None`` means the plain data scatter. ``constraint``
    is the normalization the builder's method is defined with.
    """

    l: np.ndarray
    direction: Literal["minimize", "maximize"]
    b: Optional[np.ndarray] = None
    constraint: Literal["orthonormal-columns", "data-whitened"] = "data-whitened"

    def __post_init__(self):
        if self.direction not in ("minimize", "maximize"):
            raise DomainError(f"unknown direction {self.direction!r}")
        if self.constraint not in _CONSTRAINTS:
            raise DomainError(f"unknown constraint {self.constraint!r}")


@dataclass(frozen=True)
class Projection:
    """Linear map from D input dimensions to d embedding dimensions."""

    u: np.ndarray
    constraint: Literal["orthonormal-columns", "data-whitened", "unit-columns"]
    eigenvalues: Optional[np.ndarray] = None
    history: Optional[np.ndarray] = None

    @property
    def d(self) -> int:
        return self.u.shape[1]

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.u.shape[0]:
            raise ShapeError(f"expected {self.u.shape[0]} input dimensions, got {x.shape[-1]}")
        return x @ self.u


# --------------------------------------------------------------------------
# neighbourhoods


def nearest_neighbors(d2: np.ndarray, i: int, k: int, candidates=None) -> np.ndarray:
    """Indices of the `k` candidates closest to sample `i`, nearest first.

    Equal distances are broken by the smaller sample index. Sample `i`
    itself is never returned.
    """
    if candidates is None:
        candidates = np.arange(d2.shape[0])
    candidates = np.asarray(candidates)
    candidates = candidates[candidates != i]
    if k > candidates.size:
        raise DomainError(f"asked for {k} neighbours but only {candidates.size} candidates")
    order = np.argsort(d2[i, candidates], kind="stable")
    return candidates[order[:k]]


def heat_sigma(distances) -> float:
    """Median of the nonzero neighbour distances (1.0 if there are none)."""
    distances = np.asarray(distances, dtype=float).ravel()
    nonzero = distances[distances > 0]
    return float(np.median(nonzero)) if nonzero.size else 1.0


def _heat(d2, sigma):
    return np.exp(-d2 / (2.0 * sigma * sigma))


def _resolve_sigma(d2, neighbour_lists, sigma):
    if sigma == "auto" or sigma is None:
        dist = [np.sqrt(d2[i, nbrs]) for i, nbrs in neighbour_lists]
        return heat_sigma(np.concatenate(dist) if dist else [])
    sigma = float(sigma)
    if not sigma > 0:
        raise DomainError(f"heat-kernel sigma must be positive, got {sigma}")
    return sigma


def _graph_local(weights: np.ndarray) -> np.ndarray:
    """[[sum w, -w^T], [-w, diag(w)]]: the patch form of sum_j w_j |y_c - y_j|^2."""
    k = weights.size
    local = np.zeros((k + 1, k + 1))
    local[0, 0] = weights.sum()
    local[0, 1:] = -weights
    local[1:, 0] = -weights
    local[1:, 1:] = np.diag(weights)
    return local


# --------------------------------------------------------------------------
# patch builders


def pca_patches(n: int) -> list[PatchPart]:
    """PCA as a single patch spanning every sample: the centring matrix."""
    return [PatchPart(np.arange(n), np.eye(n) - np.full((n, n), 1.0 / n))]


def _class_centring(labels) -> list[PatchPart]:
    parts = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        m = idx.size
        parts.append(PatchPart(idx, np.eye(m) - np.full((m, m), 1.0 / m)))
    return parts


def lda_patches(labels) -> tuple[list[PatchPart], list[PatchPart]]:
    """(between-class parts, within-class parts) for LDA."""
    labels = np.asarray(labels)
    within = _class_centring(labels)
    between = pca_patches(labels.size) + [PatchPart(p.indices, -p.local_matrix) for p in within]
    return between, within


def le_patches(x, k: int, sigma="auto") -> list[PatchPart]:
    """Laplacian eigenmaps: centre plus k nearest neighbours, heat-kernel weights."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if not 1 <= k < n:
        raise DomainError(f"need 1 <= k < N, got k={k}, N={n}")
    d2 = pairwise_sq_dists(x)
    nbrs = [(i, nearest_neighbors(d2, i, k)) for i in range(n)]
    sigma = _resolve_sigma(d2, nbrs, sigma)
    return [
        PatchPart(np.concatenate(([i], idx)), _graph_local(_heat(d2[i, idx], sigma)))
        for i, idx in nbrs
    ]


def lle_weights(centre, neighbours, reg: float = 1e-3) -> np.ndarray:
    """Affine reconstruction weights of `centre` from the rows of `neighbours`."""
    diff = np.asarray(neighbours, dtype=float) - centre
    k = diff.shape[0]
    gram = diff @ diff.T
    trace = np.trace(gram)
    if trace <= 0.0:
        return np.full(k, 1.0 / k)
    gram = gram + (reg * trace / k) * np.eye(k)
    w = np.linalg.solve(gram, np.ones(k))
    return w / w.sum()


def lle_patches(x, k: int, reg: float = 1e-3) -> list[PatchPart]:
    """Locally linear embedding: local matrix c c^T with c = (1, -w)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if not 1 <= k < n:
        raise DomainError(f"need 1 <= k < N, got k={k}, N={n}")
    d2 = pairwise_sq_dists(x)
    parts = []
    for i in range(n):
        idx = nearest_neighbors(d2, i, k)
        c = np.concatenate(([1.0], -lle_weights(x[i], x[idx], reg)))
        parts.append(PatchPart(np.concatenate(([i], idx)), np.outer(c, c)))
    return parts


def dla_patches(x, labels, k1: int = 5, k2: int = 5, beta: float = 1.0) -> list[PatchPart]:
    """Discriminative locality alignment.

    Each patch holds the centre, its `k1` nearest same-class samples (weight
    1) and its `k2` nearest other-class samples (weight ``-beta``).
    """
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels)
    n = x.shape[0]
    if k1 < 0 or k2 < 0:
        raise DomainError("k1 and k2 must be non-negative")
    classes, counts = np.unique(labels, return_counts=True)
    if counts.min() < k1 + 1:
        raise DomainError(
            f"class {classes[counts.argmin()]} has {counts.min()} samples, needs at least k1+1={k1 + 1}")
    if n - counts.max() < k2:
        raise DomainError(f"k2={k2} exceeds the number of samples outside the largest class")
    d2 = pairwise_sq_dists(x)
    omega = np.concatenate((np.ones(k1), np.full(k2, -float(beta))))
    parts = []
    for i in range(n):
        same = labels == labels[i]
        near = nearest_neighbors(d2, i, k1, np.flatnonzero(same))
        far = nearest_neighbors(d2, i, k2, np.flatnonzero(~same))
        parts.append(PatchPart(np.concatenate(([i], near, far)), _graph_local(omega)))
    return parts


def assemble(parts: Iterable[PatchPart], n: int) -> np.ndarray:
    """Sum local matrices into an N x N matrix, in patch order."""
    out = np.zeros((n, n))
    for part in parts:
        out[np.ix_(part.indices, part.indices)] += part.local_matrix
    return out


def knn_laplacian(x, k: int, sigma="auto") -> np.ndarray:
    """Graph Laplacian D - W of the symmetrized heat-kernel kNN graph."""
    return assemble(le_patches(x, k, sigma), np.asarray(x).shape[0])


def build_alignment(method: str, data: LabeledDataset, **params) -> AlignmentMatrix:
    """Assemble the global alignment matrix for `method`.

    Parameters by method: ``le`` takes ``k`` (default 5) and ``sigma``
    (float or "auto"); ``lle`` takes ``k`` and ``reg``; ``dla`` takes
    ``k1``, ``k2`` and ``beta``. ``lda`` and ``dla`` need labels.
    """
    method = method.lower()
    if method not in METHODS:
        raise DomainError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method in ("lda", "dla") and data.labels is None:
        raise DomainError(f"{method} needs class labels")
    n = data.n
    if method == "pca":
        return AlignmentMatrix(assemble(pca_patches(n), n), "maximize",
                               constraint="orthonormal-columns")
    if method == "lda":
        between, within = lda_patches(data.labels)
        return AlignmentMatrix(assemble(between, n), "maximize", assemble(within, n))
    if method == "le":
        parts = le_patches(data.x, params.get("k", 5), params.get("sigma", "auto"))
        return AlignmentMatrix(assemble(parts, n), "minimize")
    if method == "lle":
        parts = lle_patches(data.x, params.get("k", 5), params.get("reg", 1e-3))
        return AlignmentMatrix(assemble(parts, n), "minimize")
    parts = dla_patches(data.x, data.labels, params.get("k1", 5), params.get("k2", 5),
                        params.get("beta", 1.0))
    return AlignmentMatrix(assemble(parts, n), "minimize", constraint="orthonormal-columns")


# --------------------------------------------------------------------------
# linearized solves


def _scatter(data: LabeledDataset, l: np.ndarray) -> np.ndarray:
    if l.shape != (data.n, data.n):
        raise ShapeError(f"alignment matrix {l.shape} does not match {data.n} samples")
    s = data.x.T @ l @ data.x
    return 0.5 * (s + s.T)


def embedding_objective(data: LabeledDataset, align: AlignmentMatrix, u) -> float:
    """tr(U^T X L X^T U)."""
    u = np.asarray(u, dtype=float)
    return float(np.trace(u.T @ _scatter(data, align.l) @ u))


def _ridge(s: np.ndarray) -> float:
    return 1e-6 * np.trace(s) / s.shape[0]


def _scatter_range(total: np.ndarray, d: int) -> Optional[np.ndarray]:
    """Orthonormal basis of the numerically nonzero range of `total`.

    Returns None when the scatter has full rank. Directions outside the
    range carry no data variance, so a whitened ratio would treat them as
    free zero-cost solutions; the whitened solve is restricted to the range
    (keeping at least `d` directions).
    """
    values, vectors = sym_eig(total)
    keep = max(int(np.sum(values > 1e-10 * values[0])), d)
    if keep == total.shape[0]:
        return None
    return vectors[:, :keep]


def solve_linear_embedding(data: LabeledDataset, align: AlignmentMatrix, d: int,
                           constraint: Optional[str] = None) -> Projection:
    """Linear map U whose columns are extreme (generalized) eigenvectors.

    With the ``data-whitened`` constraint, solves
    ``(X L X^T) v = lambda (S + eps I) v`` where ``S`` is the centred data
    scatter (or ``X L_b X^T`` when the alignment carries its own constraint
    matrix) and ``eps = 1e-6 trace(S) / D``. With ``orthonormal-columns`` it
    is a plain eigenproblem on ``X L X^T``. By default the alignment's own
    constraint is used: orthonormal for PCA and DLA, whitened for LE, LLE
    and LDA.

    The `d` eigenvectors at the smallest (minimize) or largest (maximize)
    eigenvalues are returned. LDA is capped at ``#classes - 1`` dimensions.
    Rank-deficient data (fewer samples than dimensions, duplicated columns)
    is whitened only within the span of its centred scatter.
    """
    n_dim = data.x.shape[1]
    if not 1 <= d <= n_dim:
        raise DomainError(f"target dimension must lie in [1, {n_dim}], got {d}")
    if align.b is not None and data.labels is not None:
        d = min(d, max(len(data.classes) - 1, 1))
    if constraint is None:
        constraint = align.constraint
    if constraint not in _CONSTRAINTS:
        raise DomainError(f"unknown constraint {constraint!r}")

    centred = data.x - data.x.mean(axis=0)
    total = centred.T @ centred
    if not np.any(total):
        raise DegenerateInputError("data has zero scatter")
    a = _scatter(data, align.l)
    if constraint == "orthonormal-columns":
        values, vectors = sym_eig(a)
    else:
        b = total if align.b is None else _scatter(data, align.b)
        basis = _scatter_range(total, d)
        if basis is not None:
            a, b = basis.T @ a @ basis, basis.T @ b @ basis
        ridge = _ridge(total)
        values, vectors = gen_sym_eig(a, b + ridge * np.eye(a.shape[0]))
        if basis is not None:
            vectors = basis @ vectors
    if align.direction == "minimize":
        values, vectors = values[::-1], vectors[:, ::-1]
    return Projection(vectors[:, :d].copy(), constraint, values[:d].copy())


def _nonnegative_start(u: np.ndarray) -> np.ndarray:
    start = np.empty_like(u)
    for j in range(u.shape[1]):
        col = u[:, j]
        pos, neg = np.maximum(col, 0.0), np.maximum(-col, 0.0)
        col = pos if np.linalg.norm(pos) >= np.linalg.norm(neg) else neg
        norm = np.linalg.norm(col)
        start[:, j] = col / norm if norm > 0 else 1.0 / np.sqrt(col.size)
    return start


def nonnegative_descent(a: np.ndarray, u0: np.ndarray, iters: int = 200,
                        max_halvings: int = 30) -> tuple[np.ndarray, list[float]]:
    """Projected gradient on tr(U^T A U) over nonnegative unit-norm columns.

    Returns the final iterate and the objective after every accepted step
    (first entry is the starting objective).
    """
    def objective(u):
        return float(np.sum(u * (a @ u)))

    u = np.array(u0, dtype=float)
    f = objective(u)
    history = [f]
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return u, history
    step = 0.5 / scale
    for _ in range(iters):
        grad = 2.0 * (a @ u)
        for _ in range(max_halvings):
            cand = np.maximum(u - step * grad, 0.0)
            norms = np.linalg.norm(cand, axis=0)
            if np.all(norms > 0):
                cand = cand / norms
                f_cand = objective(cand)
                if f_cand <= f:
                    break
            step *= 0.5
        else:
            break
        if np.array_equal(cand, u):
            break
        u, f = cand, f_cand
        history.append(f)
    return u, history


def solve_nonnegative_embedding(data: LabeledDataset, align: AlignmentMatrix, d: int,
                                iters: int = 200) -> Projection:
    """Nonnegative linear map minimizing tr(U^T X L X^T U).

    Starts from the nonnegative part of the unconstrained solution, then
    runs projected gradient descent (negative entries clipped, columns
    renormalized, step halved whenever the objective would rise).
    """
    if np.any(data.x < 0):
        raise DomainError("nonnegative embedding needs nonnegative data")
    if align.direction != "minimize":
        raise DomainError("nonnegative embedding supports minimize-direction alignments only")
    start = _nonnegative_start(solve_linear_embedding(data, align, d).u)
    u, history = nonnegative_descent(_scatter(data, align.l), start, iters)
    u = np.maximum(u, 0.0)
    return Projection(u, "unit-columns", history=np.array(history))
