"""Dense N-mode tensor algebra and rank-1 tensor decomposition denoising.

Tensors are plain numpy arrays in C order (last index fastest). The mode-k
unfolding puts mode k on the rows and orders the columns by the remaining
modes taken cyclically (k+1, k+2, ..., wrapping to 0, ..., k-1), with the
last of those varying fastest.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .errors import DegenerateInputError, DomainError, ShapeError
from .linalg import sym_eig

__all__ = [
    "RankOneTerm",
    "unfold",
    "fold",
    "mode_product",
    "outer",
    "rank1_fit",
    "r1td_decompose",
    "r1td_reconstruct",
    "r1td_denoise",
    "rank_for_energy",
]


@dataclass(frozen=True)
class RankOneTerm:
    """weight * factors[0] o factors[1] o ... with unit-norm factors."""

    weight: float
    factors: tuple[np.ndarray, ...]

    def full(self) -> np.ndarray:
        return self.weight * outer(self.factors)


def _cyclic_order(ndim: int, mode: int) -> list[int]:
    return [(mode + i) % ndim for i in range(ndim)]


def _check_mode(ndim: int, mode: int) -> None:
    if not 0 <= mode < ndim:
        raise ShapeError(f"mode {mode} out of range for an order-{ndim} tensor")


def unfold(t, mode: int) -> np.ndarray:
    """Mode-`mode` matricization with cyclic column ordering."""
    t = np.asarray(t, dtype=float)
    _check_mode(t.ndim, mode)
    return np.transpose(t, _cyclic_order(t.ndim, mode)).reshape(t.shape[mode], -1)


def fold(m, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold` for a tensor of the given `shape`."""
    m = np.asarray(m, dtype=float)
    shape = tuple(int(s) for s in shape)
    _check_mode(len(shape), mode)
    order = _cyclic_order(len(shape), mode)
    permuted = tuple(shape[i] for i in order)
    rest = int(np.prod(permuted[1:], dtype=np.int64))
    if m.ndim != 2 or m.shape != (shape[mode], rest):
        raise ShapeError(
            f"matrix of shape {m.shape} cannot be folded on mode {mode} into {shape}")
    return np.transpose(m.reshape(permuted), np.argsort(order))


def mode_product(t, u, mode: int) -> np.ndarray:
    """Multiply matrix `u` into mode `mode` of `t` (t x_mode u)."""
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    _check_mode(t.ndim, mode)
    if u.ndim != 2 or u.shape[1] != t.shape[mode]:
        raise ShapeError(
            f"matrix of shape {u.shape} does not match mode {mode} of size {t.shape[mode]}")
    shape = list(t.shape)
    shape[mode] = u.shape[0]
    return fold(u @ unfold(t, mode), mode, shape)


def outer(factors: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(np.multiply.outer, [np.asarray(f, dtype=float) for f in factors])


def _contract_except(t: np.ndarray, factors: Sequence[np.ndarray], skip: int) -> np.ndarray:
    """Contract every mode of `t` except `skip` with the matching factor."""
    out = t
    # contract from the last mode down so earlier axis numbers stay valid
    for mode in range(t.ndim - 1, -1, -1):
        if mode != skip:
            out = np.tensordot(out, factors[mode], axes=([mode], [0]))
    return out


def _leading_vector(m: np.ndarray) -> np.ndarray:
    return sym_eig(m @ m.T).vectors[:, 0]


def rank1_fit(t, max_iters: int = 100, tol: float = 1e-8) -> RankOneTerm:
    """Best rank-1 approximation by alternating least squares.

    Factors start at the leading eigenvector of each mode's unfolding Gram
    matrix, then each factor is replaced in turn by the normalized
    contraction of `t` with all the others. The weight is the inner product
    of `t` with the rank-1 tensor; its magnitude never decreases.

    Sign convention: the first factor's largest-magnitude entry is positive;
    the last factor takes the compensating flip, so the weight is never
    negative.
    """
    t = np.asarray(t, dtype=float)
    if t.ndim < 2:
        raise ShapeError("rank1_fit needs a tensor of order >= 2")
    if not np.all(np.isfinite(t)):
        raise DomainError("tensor contains non-finite entries")
    if not np.any(t):
        raise DegenerateInputError("cannot fit a rank-1 term to the zero tensor")

    factors = [_leading_vector(unfold(t, k)) for k in range(t.ndim)]
    weight = float(_contract_except(t, factors, 0) @ factors[0])
    for _ in range(max_iters):
        previous = weight
        for k in range(t.ndim):
            v = _contract_except(t, factors, k)
            norm = np.linalg.norm(v)
            if norm > 0.0:
                factors[k] = v / norm
        weight = float(_contract_except(t, factors, 0) @ factors[0])
        if abs(weight - previous) <= tol * max(abs(weight), np.finfo(float).tiny):
            break

    lead = factors[0]
    if lead[np.argmax(np.abs(lead))] < 0:
        # flip a second factor too so the weight keeps its sign
        factors[0] = -lead
        factors[-1] = -factors[-1]
    return RankOneTerm(weight, tuple(f.copy() for f in factors))


def r1td_decompose(t, k: int, max_iters: int = 100, tol: float = 1e-8) -> list[RankOneTerm]:
    """Greedy rank-1 deflation: fit, subtract, repeat `k` times.

    Stops early (returning fewer terms) once the residual vanishes. The terms
    are returned sorted by decreasing absolute weight.
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    residual = np.array(t, dtype=float)
    scale = np.linalg.norm(residual)
    if scale == 0.0:
        raise DegenerateInputError("cannot decompose the zero tensor")
    terms = []
    for _ in range(k):
        if np.linalg.norm(residual) <= 1e-14 * scale:
            break
        term = rank1_fit(residual, max_iters=max_iters, tol=tol)
        terms.append(term)
        residual = residual - term.full()
    return sorted(terms, key=lambda term: -abs(term.weight))


def r1td_reconstruct(terms: Sequence[RankOneTerm], shape: Sequence[int]) -> np.ndarray:
    out = np.zeros(tuple(shape))
    for term in terms:
        out += term.full()
    return out


def rank_for_energy(terms: Sequence[RankOneTerm], fraction: float = 0.99) -> int:
    """Smallest k whose leading weights hold `fraction` of the total squared weight."""
    if not 0.0 < fraction <= 1.0:
        raise DomainError(f"energy fraction must lie in (0, 1], got {fraction}")
    energy = np.sort(np.array([term.weight for term in terms]) ** 2)[::-1]
    if energy.size == 0:
        return 0
    cumulative = np.cumsum(energy)
    return int(np.searchsorted(cumulative, fraction * cumulative[-1] * (1 - 1e-12)) + 1)


def r1td_denoise(t, k: int, max_iters: int = 100, tol: float = 1e-8) -> np.ndarray:
    """Rebuild `t` from its `k` strongest rank-1 terms."""
    t = np.asarray(t, dtype=float)
    terms = r1td_decompose(t, k, max_iters=max_iters, tol=tol)
    return r1td_reconstruct(terms[:k], t.shape)
