"""Support tensor machine (STM) on spectral-texture pixel tensors.

Each pixel is described by an order-2 tensor: one row per position of a
``w x w`` spatial window (row-major), one column per feature channel (the
``B`` spectral bands followed by ``G`` Gabor texture magnitudes). The STM
classifier uses a rank-1 weight ``u v^T``, so its decision value is
``u^T X v + b``; it is trained by alternating two linear SVMs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import convolve

from .errors import DegenerateInputError, DomainError, ShapeError

__all__ = [
    "GaborBank",
    "StmModel",
    "make_gabor_bank",
    "gabor_features",
    "build_feature_tensor",
    "svm_objective",
    "svm_train_linear",
    "stm_train",
    "stm_predict",
    "stm_predict_batch",
]


@dataclass(frozen=True)
class GaborBank:
    kernels: tuple
    orientations: tuple
    wavelengths: tuple
    size: int

    def __len__(self) -> int:
        return len(self.kernels)


def make_gabor_bank(orientations_deg: Sequence[float] = (0.0, 45.0, 90.0, 135.0),
                    wavelengths: Sequence[float] = (4.0, 8.0), size: int = 11,
                    sigma_scale: float = 0.5) -> GaborBank:
    """Real (cosine-phase) Gabor kernels, mean-subtracted.

    Kernel for orientation ``theta`` and wavelength ``lam`` at column offset
    ``x`` and row offset ``y``:
    ``exp(-(x^2 + y^2) / (2 sigma^2)) * cos(2 pi (x cos theta + y sin theta) / lam)``
    with ``sigma = sigma_scale * lam``. Orientation 0 oscillates along the
    columns, so it responds to vertical stripes. Kernels are ordered by
    wavelength, then orientation.
    """
    if size < 1 or size % 2 == 0:
        raise DomainError(f"kernel size must be a positive odd integer, got {size}")
    if any(lam <= 0 for lam in wavelengths):
        raise DomainError("wavelengths must be positive")
    half = size // 2
    yy, xx = np.mgrid[-half:half + 1, -half:half + 1].astype(float)
    kernels, thetas, lams = [], [], []
    for lam in wavelengths:
        sigma = sigma_scale * lam
        envelope = np.exp(-(xx ** 2 + yy ** 2) / (2.0 * sigma ** 2))
        for deg in orientations_deg:
            theta = np.deg2rad(deg)
            k = envelope * np.cos(2.0 * np.pi * (xx * np.cos(theta) + yy * np.sin(theta)) / lam)
            kernels.append(k - k.mean())
            thetas.append(theta)
            lams.append(float(lam))
    return GaborBank(tuple(kernels), tuple(thetas), tuple(lams), size)


def gabor_features(cube, bank: GaborBank) -> np.ndarray:
    """Gabor response magnitudes of the band-mean image, one row per pixel.

    Rows follow raster order (as ``cube.pixels()``); borders are handled by
    reflection.
    """
    img = cube.band_mean()
    if bank.size > min(img.shape):
        raise ShapeError(f"kernel size {bank.size} exceeds the image {img.shape}")
    responses = [np.abs(convolve(img, k, mode="reflect")) for k in bank.kernels]
    return np.stack([r.ravel() for r in responses], axis=1)


def build_feature_tensor(cube, pixel, window: int, texture) -> np.ndarray:
    """``w^2 x (B + G)`` tensor: spectra then texture for each window position."""
    if window < 1 or window % 2 == 0:
        raise DomainError(f"window must be a positive odd integer, got {window}")
    texture = np.asarray(texture, dtype=float)
    bands, rows, cols = cube.data.shape
    if texture.ndim != 2 or texture.shape[0] != rows * cols:
        raise ShapeError(f"texture must have one row per pixel ({rows * cols}), got {texture.shape}")
    r, c = int(pixel[0]), int(pixel[1])
    half = window // 2
    if not (half <= r < rows - half and half <= c < cols - half):
        raise DomainError(f"pixel ({r}, {c}) is closer than {half} to the border")
    rr, cc = np.mgrid[r - half:r + half + 1, c - half:c + half + 1]
    rr, cc = rr.ravel(), cc.ravel()
    spectra = cube.data[:, rr, cc].T
    return np.hstack([spectra, texture[rr * cols + cc]])


# --------------------------------------------------------------------------
# linear SVM


def _check_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.shape != (n,):
        raise ShapeError("one label per sample required")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise DomainError("labels must be +1 or -1")
    if np.all(y == y[0]):
        raise DomainError("both classes must be present")
    return y


def svm_objective(x, y, w, b: float, c: float) -> float:
    """(1/2)||w||^2 + c * sum_i max(0, 1 - y_i (w^T x_i + b))."""
    margins = np.asarray(y) * (np.asarray(x) @ w + b)
    return float(0.5 * w @ w + c * np.maximum(0.0, 1.0 - margins).sum())


def svm_train_linear(x, y, c: float = 1.0, iters: int = 500, w0=None,
                     b0: float = 0.0) -> tuple[np.ndarray, float]:
    """Soft-margin linear SVM by deterministic full-batch subgradient descent.

    Step ``1/t`` at iteration ``t`` (the ``(1/2)||w||^2`` term is 1-strongly
    convex), with ``w`` projected onto the ball of radius ``sqrt(2 c N)``
    that contains the optimum. Returns the best of the starting point, the
    iterates and their running averages, so the result never scores worse
    than the start or the first iterate.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ShapeError(f"expected an N x D sample matrix, got {x.shape}")
    y = _check_labels(y, x.shape[0])
    if not c > 0:
        raise DomainError(f"c must be positive, got {c}")
    radius = np.sqrt(2.0 * c * x.shape[0])
    w = np.zeros(x.shape[1]) if w0 is None else np.array(w0, dtype=float)
    b = float(b0)
    best = (svm_objective(x, y, w, b, c), w.copy(), b)
    w_avg, b_avg = np.zeros_like(w), 0.0
    for t in range(1, iters + 1):
        active = y * (x @ w + b) < 1.0
        grad_w = w - c * (y[active] @ x[active])
        grad_b = -c * y[active].sum()
        step = 1.0 / t
        w = w - step * grad_w
        b = b - step * grad_b
        norm = np.linalg.norm(w)
        if norm > radius:
            w *= radius / norm
        w_avg += (w - w_avg) / t
        b_avg += (b - b_avg) / t
        for cand_w, cand_b in ((w, b), (w_avg, b_avg)):
            f = svm_objective(x, y, cand_w, cand_b, c)
            if f < best[0]:
                best = (f, cand_w.copy(), cand_b)
    return best[1], float(best[2])


# --------------------------------------------------------------------------
# STM


@dataclass(frozen=True)
class StmModel:
    u: np.ndarray
    v: np.ndarray
    bias: float
    c: float = 1.0

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if u.ndim != 1 or v.ndim != 1:
            raise ShapeError("u and v must be vectors")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v)) and np.isfinite(self.bias)):
            raise DomainError("model parameters must be finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.size, self.v.size


def _stack(tensors) -> np.ndarray:
    mats = [np.asarray(t, dtype=float) for t in tensors]
    if not mats or len({m.shape for m in mats}) != 1:
        raise ShapeError("expected a non-empty list of equally shaped order-2 tensors")
    arr = np.stack(mats)
    if arr.ndim != 3:
        raise ShapeError("expected a list of equally shaped order-2 tensors")
    return arr


def stm_train(tensors, y, c: float = 1.0, outer_iters: int = 10, inner_iters: int = 500,
              tol: float = 1e-4) -> StmModel:
    """Alternating training of the rank-1 weight ``u v^T`` and bias.

    Starts from the uniform unit ``u``. Each outer iteration trains ``v``
    and the bias on ``X_i^T u`` (penalty c), then ``u`` and the bias on
    ``X_i v`` (penalty ``c / ||v||^2``, which is the same objective
    rescaled), and moves the norm of ``u`` into ``v``. Both half-steps warm
    start from the current solution, so each one can only lower its
    objective. Stops when ``u`` and ``v`` change by less than `tol`
    relative. For single-row tensors ``u`` is the fixed scalar 1 and
    training reduces to one linear SVM.
    """
    xs = _stack(tensors)
    n, rows, cols = xs.shape
    y = _check_labels(y, n)
    if not np.any(xs):
        raise DegenerateInputError("all training tensors are zero")
    if not c > 0:
        raise DomainError(f"c must be positive, got {c}")

    u = np.full(rows, 1.0 / np.sqrt(rows))
    if rows == 1:
        v, b = svm_train_linear(xs[:, 0, :], y, c, inner_iters)
        return StmModel(u, v, b, c)

    v, b = np.zeros(cols), 0.0
    for _ in range(outer_iters):
        u_old, v_old = u.copy(), v.copy()
        v, b = svm_train_linear(np.einsum("nrc,r->nc", xs, u), y, c, inner_iters, v, b)
        vv = float(v @ v)
        if vv == 0.0:
            break
        u, b = svm_train_linear(np.einsum("nrc,c->nr", xs, v), y, c / vv, inner_iters, u, b)
        scale = np.linalg.norm(u)
        if scale == 0.0:
            raise DegenerateInputError("spatial weight collapsed to zero")
        u, v = u / scale, v * scale
        change = np.linalg.norm(u - u_old) + np.linalg.norm(v - v_old) / max(
            np.linalg.norm(v_old), np.finfo(float).tiny)
        if change < tol:
            break
    return StmModel(u, v, float(b), c)


def stm_predict(tensor, model: StmModel) -> tuple[int, float]:
    """Label (+1/-1, zero counts as +1) and score ``u^T X v + bias``."""
    x = np.asarray(tensor, dtype=float)
    if x.shape != model.shape:
        raise ShapeError(f"tensor shape {x.shape} does not match model {model.shape}")
    score = float(model.u @ x @ model.v + model.bias)
    return (1 if score >= 0 else -1), score


def stm_predict_batch(tensors, model: StmModel) -> tuple[np.ndarray, np.ndarray]:
    xs = _stack(tensors)
    if xs.shape[1:] != model.shape:
        raise ShapeError(f"tensor shape {xs.shape[1:]} does not match model {model.shape}")
    scores = np.array([float(model.u @ x @ model.v + model.bias) for x in xs])
    return np.where(scores >= 0, 1, -1), scores
