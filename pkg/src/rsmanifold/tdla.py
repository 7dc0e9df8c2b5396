"""Tensor discriminative locality alignment (TDLA).

Each labelled pixel is represented by the ``w x w x B`` sub-cube centred on
it (two spatial modes, one spectral mode). TDLA learns one orthonormal
projection per mode by alternating: with the other modes fixed, the mode-m
projection is the set of eigenvectors at the smallest eigenvalues of the
alignment-weighted mode-m scatter. Patch neighbourhoods (same-class and
other-class nearest neighbours, as in vector DLA) are computed once from the
vectorized tensors and kept fixed throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, NumericalError, ShapeError
from .linalg import sym_eig
from .patch_align import assemble, dla_patches
from .tensor import mode_product, unfold

__all__ = [
    "TensorSample",
    "ModeProjections",
    "organize_spectral_spatial",
    "tdla_alignment",
    "tdla_objective",
    "tdla_fit",
    "tdla_transform",
    "tdla_features",
]


@dataclass(frozen=True)
class TensorSample:
    """Spectral-spatial neighbourhood of one pixel."""

    tensor: np.ndarray
    label: Optional[int] = None
    origin: tuple[int, int] = (0, 0)

    def __post_init__(self):
        t = np.asarray(self.tensor, dtype=float)
        if t.ndim != 3 or t.shape[0] != t.shape[1] or t.shape[0] % 2 == 0:
            raise ShapeError(f"expected an odd w x w x B tensor, got shape {t.shape}")
        if not np.all(np.isfinite(t)):
            raise DomainError("tensor sample has non-finite entries")
        object.__setattr__(self, "tensor", t)


@dataclass
class ModeProjections:
    """One orthonormal-column matrix per mode (size_m x reduced_m)."""

    u: list
    history: list = field(default_factory=list)

    @property
    def reduced_shape(self) -> tuple[int, ...]:
        return tuple(m.shape[1] for m in self.u)


def organize_spectral_spatial(cube, window: int, pixels, labels=None) -> list[TensorSample]:
    """Cut the ``window x window x bands`` neighbourhood around each pixel.

    Parameters
    ----------
    cube : HsiCube
        Source image (bands x rows x cols).
    window : int
        Odd spatial window size; 1 gives the bare spectrum as a 1x1xB tensor.
    pixels : sequence of (row, col)
        Centres; each must be at least ``window // 2`` from every border.
    labels : sequence of int, optional
        One label per pixel.
    """
    if window < 1 or window % 2 == 0:
        raise DomainError(f"window must be a positive odd integer, got {window}")
    data = cube.data
    half = window // 2
    _, rows, cols = data.shape
    pixels = [(int(r), int(c)) for r, c in pixels]
    if labels is not None and len(labels) != len(pixels):
        raise ShapeError("one label per pixel required")
    samples = []
    for i, (r, c) in enumerate(pixels):
        if not (half <= r < rows - half and half <= c < cols - half):
            raise DomainError(f"pixel ({r}, {c}) is closer than {half} to the border")
        block = data[:, r - half:r + half + 1, c - half:c + half + 1]
        label = None if labels is None else int(labels[i])
        samples.append(TensorSample(np.transpose(block, (1, 2, 0)).copy(), label, (r, c)))
    return samples


def _stack(samples: Sequence[TensorSample]) -> np.ndarray:
    if not samples:
        raise ShapeError("no samples given")
    shapes = {s.tensor.shape for s in samples}
    if len(shapes) != 1:
        raise ShapeError(f"samples have mixed shapes {sorted(shapes)}")
    return np.stack([s.tensor for s in samples])


def tdla_alignment(samples: Sequence[TensorSample], k1: int = 5, k2: int = 5,
                   beta: float = 1.0) -> np.ndarray:
    """N x N DLA alignment matrix from the vectorized (unprojected) tensors."""
    labels = [s.label for s in samples]
    if any(label is None for label in labels):
        raise DomainError("TDLA needs labelled samples")
    labels = np.asarray(labels)
    if np.unique(labels).size < 2:
        raise DomainError("TDLA needs at least two classes")
    stack = _stack(samples)
    flat = stack.reshape(len(samples), -1)
    return assemble(dla_patches(flat, labels, k1=k1, k2=k2, beta=beta), len(samples))


def _project(stack: np.ndarray, us: Sequence[np.ndarray], skip: Optional[int] = None):
    """Apply U_m^T to every mode but `skip` of each tensor in the stack."""
    out = stack
    for m, u in enumerate(us):
        if m != skip:
            # axis 0 is the sample axis
            out = np.moveaxis(np.tensordot(out, u, axes=([m + 1], [0])), -1, m + 1)
    return out


def _mode_scatter(stack: np.ndarray, l: np.ndarray, mode: int) -> np.ndarray:
    """sum_ij L_ij unfold(Y_i, mode) unfold(Y_j, mode)^T."""
    z = np.stack([unfold(t, mode) for t in stack])
    lz = np.tensordot(l, z, axes=([1], [0]))
    s = np.einsum("iar,ibr->ab", z, lz)
    return 0.5 * (s + s.T)


def tdla_objective(stack: np.ndarray, l: np.ndarray, us: Sequence[np.ndarray]) -> float:
    """Alignment objective sum_ij L_ij <Y_i, Y_j> of the projected tensors.

    Equals the coefficient-weighted sum of squared projected distances over
    all patch pairs.
    """
    y = _project(stack, us).reshape(stack.shape[0], -1)
    return float(np.sum(y * (l @ y)))


def tdla_fit(samples: Sequence[TensorSample], dims: Sequence[int], k1: int = 5, k2: int = 5,
             beta: float = 1.0, outer_iters: int = 5, tol: float = 1e-5) -> ModeProjections:
    """Learn per-mode projections by alternating eigen-updates.

    Modes are updated in order 0, 1, 2 within each sweep. ``history`` holds
    the objective before the first sweep and after every sweep; fitting
    stops early when a sweep changes it by less than `tol` relative.
    """
    stack = _stack(samples)
    shape = stack.shape[1:]
    dims = tuple(int(d) for d in dims)
    if len(dims) != len(shape) or any(not 1 <= d <= s for d, s in zip(dims, shape)):
        raise DomainError(f"reduced dims {dims} incompatible with tensor shape {shape}")
    if outer_iters < 1:
        raise DomainError("outer_iters must be >= 1")
    l = tdla_alignment(samples, k1=k1, k2=k2, beta=beta)

    us = [np.eye(s)[:, :d] for s, d in zip(shape, dims)]
    history = [tdla_objective(stack, l, us)]
    for _ in range(outer_iters):
        for m in range(len(shape)):
            partial = _project(stack, us, skip=m)
            pairs = sym_eig(_mode_scatter(partial, l, m))
            us[m] = pairs.vectors[:, ::-1][:, :dims[m]].copy()
        value = tdla_objective(stack, l, us)
        if not np.isfinite(value):
            raise NumericalError("TDLA objective became non-finite")
        previous = history[-1]
        history.append(value)
        if abs(previous - value) <= tol * max(abs(previous), np.finfo(float).tiny):
            break
    return ModeProjections(us, history)


def tdla_transform(sample, proj: ModeProjections) -> np.ndarray:
    """Project a sample (TensorSample or bare tensor) on every mode: t x_m U_m^T."""
    t = sample.tensor if isinstance(sample, TensorSample) else np.asarray(sample, dtype=float)
    if t.ndim != len(proj.u) or any(t.shape[m] != u.shape[0] for m, u in enumerate(proj.u)):
        raise ShapeError(f"tensor of shape {t.shape} does not match the projections")
    for m, u in enumerate(proj.u):
        t = mode_product(t, u.T, m)
    return t


def tdla_features(samples: Sequence[TensorSample], proj: ModeProjections) -> np.ndarray:
    """Vectorized projected tensors, one row per sample."""
    stack = _stack(samples)
    if stack.shape[1:] != tuple(u.shape[0] for u in proj.u):
        raise ShapeError("samples do not match the projections")
    return _project(stack, proj.u).reshape(stack.shape[0], -1)
