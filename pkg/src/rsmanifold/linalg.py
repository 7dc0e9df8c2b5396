"""Dense symmetric linear algebra used by every solver in the package.

The eigensolver is a cyclic Jacobi method with a round-robin (tournament)
pair ordering: each round applies n/2 disjoint plane rotations at once, which
lets numpy do the work on whole rows and columns. The result is deterministic
for a given input and accurate to working precision for the small and
medium matrices (up to a few hundred rows) this package produces.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DomainError, NotPositiveDefiniteError, ShapeError

__all__ = [
    "EigenPairs",
    "sym_eig",
    "cholesky",
    "gen_sym_eig",
    "psd_project",
    "pairwise_sq_dists",
]

_SYM_RTOL = 1e-10
_OFF_RTOL = 1e-12
_MAX_SWEEPS = 100


class EigenPairs(NamedTuple):
    """Eigenvalues in descending order with matching eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray


def _as_square(a, name="a") -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise ShapeError(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} contains non-finite entries")
    return a


def _check_symmetric(a: np.ndarray, name="a") -> np.ndarray:
    scale = np.linalg.norm(a)
    if np.linalg.norm(a - a.T) > _SYM_RTOL * max(scale, np.finfo(float).tiny):
        raise ShapeError(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Rounds of disjoint index pairs covering every pair exactly once."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p, q = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < n and b < n:
                p.append(min(a, b))
                q.append(max(a, b))
        rounds.append((np.array(p, dtype=int), np.array(q, dtype=int)))
        # keep players[0] fixed, rotate the rest one seat
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _jacobi(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n)
    norm = np.linalg.norm(a)
    if n == 1 or norm == 0.0:
        return np.diag(a).copy(), v
    threshold = _OFF_RTOL * norm
    rounds = _round_robin(n)
    for _ in range(_MAX_SWEEPS):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= threshold:
            break
        for p, q in rounds:
            apq = a[p, q]
            active = apq != 0.0
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            tau = (a[q, q] - a[p, p]) / (2.0 * apq)
            sgn = np.where(tau >= 0.0, 1.0, -1.0)
            t = sgn / (np.abs(tau) + np.hypot(1.0, tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c

            rp, rq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = cp * c - cq * s
            a[:, q] = cp * s + cq * c
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = vp * c - vq * s
            v[:, q] = vp * s + vq * c
    return np.diag(a).copy(), v


def sym_eig(a) -> EigenPairs:
    """Full eigendecomposition of a real symmetric matrix.

    Eigenvalues are returned in descending order. Each eigenvector is signed
    so that its largest-magnitude component is positive. For repeated
    eigenvalues any orthonormal basis of the eigenspace may be returned.

    Raises
    ------
    ShapeError
        If `a` is not square or not symmetric to 1e-10 relative.
    DomainError
        If `a` has non-finite entries.
    """
    a = _check_symmetric(_as_square(a))
    values, vectors = _jacobi(a)
    order = np.argsort(-values, kind="stable")
    return EigenPairs(values[order], _fix_signs(vectors[:, order]))


def cholesky(b) -> np.ndarray:
    """Lower-triangular L with L @ L.T == b.

    A pivot below ``1e-12 * trace(b) / n`` is treated as a failure of
    positive definiteness.
    """
    b = _check_symmetric(_as_square(b, "b"), "b")
    n = b.shape[0]
    trace = np.trace(b)
    if trace <= 0.0:
        raise NotPositiveDefiniteError("matrix has non-positive trace")
    floor = 1e-12 * trace / n
    low = np.zeros_like(b)
    for j in range(n):
        pivot = b[j, j] - low[j, :j] @ low[j, :j]
        if not pivot > floor:
            raise NotPositiveDefiniteError(f"non-positive pivot {pivot:.3e} at column {j}")
        low[j, j] = np.sqrt(pivot)
        low[j + 1:, j] = (b[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / low[j, j]
    return low


def gen_sym_eig(a, b) -> EigenPairs:
    """Solve A v = lambda B v for symmetric A and symmetric positive definite B.

    Reduces to the standard problem on L^-1 A L^-T with B = L L^T. Returned
    vectors are B-orthonormal and sorted by descending eigenvalue.
    """
    a = _check_symmetric(_as_square(a))
    b = _as_square(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"a and b differ in shape: {a.shape} vs {b.shape}")
    low = cholesky(b)
    c = solve_triangular(low, a, lower=True)
    c = solve_triangular(low, c.T, lower=True)
    c = 0.5 * (c + c.T)
    values, w = _jacobi(c)
    order = np.argsort(-values, kind="stable")
    vectors = solve_triangular(low.T, w[:, order], lower=False)
    return EigenPairs(values[order], _fix_signs(vectors))


def psd_project(m) -> np.ndarray:
    """Nearest positive semidefinite matrix in Frobenius norm (eigenvalue clip)."""
    m = _check_symmetric(_as_square(m, "m"), "m")
    values, vectors = sym_eig(m)
    out = (vectors * np.maximum(values, 0.0)) @ vectors.T
    return 0.5 * (out + out.T)


def pairwise_sq_dists(x, y=None) -> np.ndarray:
    """Squared Euclidean distances between the rows of `x` (and `y`).

    With a single argument the result is symmetric with an exactly zero
    diagonal. Entries are clamped at zero to absorb cancellation.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeError(f"expected a non-empty 2-D sample matrix, got shape {x.shape}")
    same = y is None
    if same:
        y = x
    else:
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2 or y.shape[1] != x.shape[1]:
            raise ShapeError(f"dimension mismatch: {x.shape} vs {y.shape}")
    # shifting both sets by a common centre reduces cancellation
    centre = x.mean(axis=0)
    xc, yc = x - centre, y - centre
    d = (xc * xc).sum(1)[:, None] + (yc * yc).sum(1)[None, :] - 2.0 * (xc @ yc.T)
    np.maximum(d, 0.0, out=d)
    if same:
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
    return d
