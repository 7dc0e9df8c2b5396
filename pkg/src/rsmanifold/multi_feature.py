"""Multi-feature dimensionality reduction: MFC and MSNE.

Both methods learn one nonnegative weight per feature set on the simplex by
the exponent trick: with per-feature costs ``c_m > 0`` and exponent ``r > 1``,
``sum_m alpha_m**r * c_m`` is minimized over the simplex by
``alpha_m ∝ (1 / c_m) ** (1 / (r - 1))``.

MFC alternates a linear patch-alignment solve on the concatenated features
with that weight update. MSNE does the same around a t-SNE embedding, using
the per-feature cross-entropies ``-sum p_ij^(m) log q_ij`` as costs.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import DomainError, NumericalError, ShapeError
from .linalg import pairwise_sq_dists
from .patch_align import (AlignmentMatrix, LabeledDataset, Projection, build_alignment,
                          solve_linear_embedding)

log = logging.getLogger(__name__)

__all__ = [
    "FeatureBundle",
    "AffinityMatrix",
    "MfcResult",
    "MsneResult",
    "update_weights",
    "mfc_fit",
    "tsne_affinities",
    "tsne_embed",
    "msne_embed",
]

_COST_FLOOR = 1e-12


@dataclass(frozen=True)
class FeatureBundle:
    features: Sequence[np.ndarray]
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        feats = [np.asarray(f, dtype=float) for f in self.features]
        if not feats:
            raise ShapeError("a feature bundle needs at least one feature matrix")
        for f in feats:
            if f.ndim != 2 or f.shape[1] < 1:
                raise ShapeError(f"each feature must be an N x D_m matrix, got {f.shape}")
        if len({f.shape[0] for f in feats}) != 1:
            raise ShapeError("all features must describe the same samples")
        object.__setattr__(self, "features", tuple(feats))
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (feats[0].shape[0],):
                raise ShapeError("one label per sample required")
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features[0].shape[0]

    @property
    def m(self) -> int:
        return len(self.features)

    def concatenated(self) -> np.ndarray:
        return np.hstack(self.features)


def update_weights(costs, r: float) -> tuple[np.ndarray, bool]:
    """Closed-form simplex weights for per-feature costs.

    Nonpositive costs are clamped to 1e-12; the second return value tells
    whether that happened.
    """
    if not r > 1:
        raise DomainError(f"weight exponent r must exceed 1, got {r}")
    costs = np.asarray(costs, dtype=float)
    flagged = bool(np.any(costs <= 0))
    if flagged:
        log.warning("clamping nonpositive feature cost(s) %s", costs)
    costs = np.maximum(costs, _COST_FLOOR)
    # (1/c)^(1/(r-1)) computed relative to the smallest cost to avoid overflow
    raw = (costs.min() / costs) ** (1.0 / (r - 1.0))
    return raw / raw.sum(), flagged


# --------------------------------------------------------------------------
# MFC


class MfcResult(NamedTuple):
    projection: Projection
    alpha: np.ndarray
    history: np.ndarray
    flagged: bool


def mfc_fit(bundle: FeatureBundle, d: int, r: float = 2.0, iters: int = 10,
            builder: str = "le", **params) -> MfcResult:
    """Weighted combination of per-feature alignment matrices.

    Each feature builds its own alignment matrix ``L_m`` from its own
    neighbourhoods (`builder` is any :func:`build_alignment` method with a
    minimize direction, ``params`` are passed through). The projection acts
    on the concatenated features. Alternates

    (a) ``U`` = linear embedding for ``L(alpha) = sum alpha_m**r L_m``,
    (b) ``alpha_m ∝ (1 / tr(U^T X^T L_m X U)) ** (1 / (r - 1))``.

    ``history`` holds the combined objective after each alternation.
    """
    if not r > 1:
        raise DomainError(f"weight exponent r must exceed 1, got {r}")
    if iters < 1:
        raise DomainError("iters must be >= 1")
    xhat = bundle.concatenated()
    if not 1 <= d <= xhat.shape[1]:
        raise DomainError(f"target dimension must lie in [1, {xhat.shape[1]}], got {d}")
    aligns = [build_alignment(builder, LabeledDataset(f, bundle.labels), **params)
              for f in bundle.features]
    if any(a.direction != "minimize" for a in aligns):
        raise DomainError(f"builder {builder!r} is not a minimize-direction method")
    constraint = aligns[0].constraint
    scatters = [xhat.T @ a.l @ xhat for a in aligns]
    data = LabeledDataset(xhat, bundle.labels)

    alpha = np.full(bundle.m, 1.0 / bundle.m)
    flagged = False
    history = []
    proj = None
    for _ in range(iters):
        combined = sum(a ** r * al.l for a, al in zip(alpha, aligns))
        proj = solve_linear_embedding(data, AlignmentMatrix(combined, "minimize",
                                                            constraint=constraint), d)
        costs = np.array([np.trace(proj.u.T @ s @ proj.u) for s in scatters])
        alpha, clamped = update_weights(costs, r)
        flagged |= clamped
        history.append(float(np.sum(alpha ** r * costs)))
    return MfcResult(proj, alpha, np.array(history), flagged)


# --------------------------------------------------------------------------
# t-SNE core


@dataclass(frozen=True)
class AffinityMatrix:
    """Symmetric joint probabilities plus the per-row bandwidth search results."""

    p: np.ndarray
    betas: np.ndarray = field(repr=False)
    perplexities: np.ndarray = field(repr=False)


def _row_entropy(d2: np.ndarray, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Conditional distributions and their entropies (nats) for precisions `beta`.

    The diagonal of `d2` must be +inf so that p_{i|i} = 0.
    """
    shifted = d2 - d2.min(axis=1, keepdims=True)
    logits = -beta[:, None] * shifted
    w = np.exp(logits)
    total = w.sum(axis=1, keepdims=True)
    p = w / total
    with np.errstate(invalid="ignore"):
        plogp = np.where(p > 0, p * (logits - np.log(total)), 0.0)
    return p, -plogp.sum(axis=1)


def tsne_affinities(x, perplexity: float = 30.0, steps: int = 50) -> AffinityMatrix:
    """Gaussian conditional affinities at a fixed perplexity, symmetrized.

    Each row's precision is found by bisection on its logarithm; at most
    `steps` bisection steps are taken, after which the current bandwidth is
    accepted (this only matters when duplicate points cap the attainable
    entropy). ``p_ij = (p_{j|i} + p_{i|j}) / (2N)``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if not 1 < perplexity < n:
        raise DomainError(f"perplexity must lie in (1, {n}), got {perplexity}")
    d2 = pairwise_sq_dists(x)
    np.fill_diagonal(d2, np.inf)
    target = np.log(perplexity)

    finite = d2[np.isfinite(d2)]
    scale = np.median(finite[finite > 0]) if np.any(finite > 0) else 1.0
    centre = -np.log(scale)
    lo = np.full(n, centre - 40.0)
    hi = np.full(n, centre + 40.0)
    t = np.full(n, centre)
    for _ in range(steps):
        _, h = _row_entropy(d2, np.exp(t))
        done = np.abs(h - target) < 1e-12
        if np.all(done):
            break
        # entropy falls as precision grows
        too_flat = h > target
        lo = np.where(too_flat & ~done, t, lo)
        hi = np.where(~too_flat & ~done, t, hi)
        t = np.where(done, t, 0.5 * (lo + hi))
    betas = np.exp(t)
    cond, h = _row_entropy(d2, betas)
    p = (cond + cond.T) / (2.0 * n)
    np.fill_diagonal(p, 0.0)
    return AffinityMatrix(p, betas, np.exp(h))


def _student_q(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    num = 1.0 / (1.0 + pairwise_sq_dists(y))
    np.fill_diagonal(num, 0.0)
    return num / num.sum(), num


def _cross_entropy(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    with np.errstate(divide="ignore"):
        return float(-np.sum(p[mask] * np.log(q[mask])))


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    with np.errstate(divide="ignore"):
        return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


@dataclass
class _TsneState:
    y: np.ndarray
    velocity: np.ndarray
    iteration: int = 0


_LEARNING_RATE = 100.0
_EXAGGERATION = 4.0
_EXAGGERATION_ITERS = 50
_MOMENTUM_SWITCH = 250
_MAX_HALVINGS = 30


def _tsne_steps(p: np.ndarray, state: _TsneState, count: int) -> None:
    """Advance `state` by `count` gradient iterations on KL(p || q).

    Every accepted step lowers the (possibly exaggerated) cross-entropy;
    a step that would raise it is halved, up to 30 times, and dropped with
    the momentum reset if it still fails.
    """
    for _ in range(count):
        t = state.iteration
        pe = p * _EXAGGERATION if t < _EXAGGERATION_ITERS else p
        momentum = 0.5 if t < _MOMENTUM_SWITCH else 0.8
        q, num = _student_q(state.y)
        cost = _cross_entropy(pe, q)
        if not np.isfinite(cost):
            raise NumericalError("t-SNE objective became non-finite")
        coeff = (pe - q) * num
        grad = 4.0 * (coeff.sum(axis=1)[:, None] * state.y - coeff @ state.y)
        rate = _LEARNING_RATE
        for _ in range(_MAX_HALVINGS):
            velocity = momentum * state.velocity - rate * grad
            y_new = state.y + velocity
            if _cross_entropy(pe, _student_q(y_new)[0]) <= cost:
                state.y, state.velocity = y_new, velocity
                break
            rate *= 0.5
        else:
            state.velocity = np.zeros_like(state.velocity)
        state.iteration += 1


def _initial_state(n: int, d: int, seed: int) -> _TsneState:
    y = np.random.default_rng(seed).normal(size=(n, d)) * 1e-4
    return _TsneState(y, np.zeros_like(y))


def tsne_embed(p, d: int = 2, iters: int = 1000, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Plain t-SNE on joint probabilities `p`; returns (embedding, KL per iteration).

    The KL trace starts with the value at the initial embedding.
    """
    p = np.asarray(p, dtype=float)
    state = _initial_state(p.shape[0], d, seed)
    kls = [_kl(p, _student_q(state.y)[0])]
    for _ in range(iters):
        _tsne_steps(p, state, 1)
        kls.append(_kl(p, _student_q(state.y)[0]))
    return state.y, np.array(kls)


# --------------------------------------------------------------------------
# MSNE


class MsneResult(NamedTuple):
    embedding: np.ndarray
    alpha: np.ndarray
    history: np.ndarray
    kl: np.ndarray
    flagged: bool


def msne_embed(bundle: FeatureBundle, d: int = 2, perplexity: float = 30.0, r: float = 2.0,
               iters: int = 10, inner_iters: int = 100, seed: int = 0,
               alpha: Optional[Sequence[float]] = None) -> MsneResult:
    """Multi-feature t-SNE with learned combination weights.

    Each feature gets its own affinity matrix ``P_m``. Every outer iteration
    runs `inner_iters` t-SNE steps on the mixture
    ``P(alpha) = sum alpha_m**r P_m / sum alpha_m**r`` and then sets
    ``alpha_m ∝ (1 / C_m) ** (1 / (r - 1))`` with
    ``C_m = -sum p^(m)_ij log q_ij``.

    ``history`` records the weighted cross-entropy ``sum alpha_m**r C_m``
    after each outer iteration; it differs from ``KL(P(alpha) || Q)`` only
    by the (fixed) entropies of the ``P_m`` and never increases once early
    exaggeration is over. ``kl`` records ``KL(P(alpha) || Q)`` at the same
    points. Passing `alpha` fixes the weights; with a one-hot `alpha` the
    run is exactly plain t-SNE on that feature.
    """
    if not r > 1:
        raise DomainError(f"weight exponent r must exceed 1, got {r}")
    if iters < 1 or inner_iters < 0:
        raise DomainError("iters must be >= 1 and inner_iters >= 0")
    if not 1 <= d < bundle.n:
        raise DomainError(f"embedding dimension must lie in [1, {bundle.n - 1}]")
    ps = [tsne_affinities(f, perplexity).p for f in bundle.features]
    learn = alpha is None
    if learn:
        weights = np.full(bundle.m, 1.0 / bundle.m)
    else:
        weights = np.asarray(alpha, dtype=float)
        if weights.shape != (bundle.m,) or np.any(weights < 0) or not np.isclose(weights.sum(), 1):
            raise DomainError("fixed alpha must be a probability vector with one entry per feature")

    state = _initial_state(bundle.n, d, seed)
    flagged = False
    history, kls = [], []
    for _ in range(iters):
        powered = weights ** r
        mix = sum(w * p for w, p in zip(powered, ps)) / powered.sum()
        _tsne_steps(mix, state, inner_iters)
        q = _student_q(state.y)[0]
        costs = np.array([_cross_entropy(p, q) for p in ps])
        if not np.all(np.isfinite(costs)):
            raise NumericalError("cross-entropy became non-finite (degenerate embedding)")
        if learn:
            weights, clamped = update_weights(costs, r)
            flagged |= clamped
            powered = weights ** r
            mix = sum(w * p for w, p in zip(powered, ps)) / powered.sum()
        history.append(float(np.sum(powered * costs)))
        kls.append(_kl(mix, q))
    return MsneResult(state.y, weights, np.array(history), np.array(kls), flagged)
