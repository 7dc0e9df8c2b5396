"""Hyperspectral cube and label raster containers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DomainError, ShapeError


@dataclass(frozen=True, eq=False)
class HsiCube:
    """Nonnegative data cube stored band-sequential: ``data[band, row, col]``."""

    data: np.ndarray
    wavelengths: Optional[np.ndarray] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ShapeError(f"cube data must be bands x rows x cols, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise DomainError("cube contains non-finite values")
        if np.any(data < 0):
            raise DomainError("cube contains negative values")
        object.__setattr__(self, "data", data)
        if self.wavelengths is not None:
            wl = np.asarray(self.wavelengths, dtype=float)
            if wl.shape != (data.shape[0],):
                raise ShapeError(f"{wl.size} wavelengths for {data.shape[0]} bands")
            object.__setattr__(self, "wavelengths", wl)

    @classmethod
    def from_rcb(cls, rcb, wavelengths=None) -> "HsiCube":
        """Build from a rows x cols x bands array."""
        return cls(np.moveaxis(np.asarray(rcb, dtype=float), 2, 0), wavelengths)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def rows(self) -> int:
        return self.data.shape[1]

    @property
    def cols(self) -> int:
        return self.data.shape[2]

    def rcb(self) -> np.ndarray:
        """rows x cols x bands view."""
        return np.moveaxis(self.data, 0, 2)

    def pixels(self) -> np.ndarray:
        """(rows*cols) x bands matrix, raster order."""
        return self.rcb().reshape(-1, self.bands)

    def band_mean(self) -> np.ndarray:
        return self.data.mean(axis=0)

    def __eq__(self, other):
        if not isinstance(other, HsiCube):
            return NotImplemented
        same_wl = (self.wavelengths is None and other.wavelengths is None) or (
            self.wavelengths is not None and other.wavelengths is not None
            and np.array_equal(self.wavelengths, other.wavelengths))
        return same_wl and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class LabelRaster:
    """Per-pixel class ids: 0 = unlabeled, classes are 1..C."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ShapeError(f"label raster must be 2-D, got shape {labels.shape}")
        if labels.dtype.kind == "f":
            if not np.all(labels == np.round(labels)):
                raise DomainError("label raster holds non-integer values")
        labels = labels.astype(np.int64)
        if np.any(labels < 0):
            raise DomainError("label raster holds negative class ids")
        object.__setattr__(self, "labels", labels)

    @property
    def rows(self) -> int:
        return self.labels.shape[0]

    @property
    def cols(self) -> int:
        return self.labels.shape[1]

    @property
    def classes(self) -> np.ndarray:
        values = np.unique(self.labels)
        return values[values > 0]

    def flat(self) -> np.ndarray:
        return self.labels.ravel()

    def __eq__(self, other):
        if not isinstance(other, LabelRaster):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)


def check_companion(cube: HsiCube, raster: LabelRaster) -> None:
    if (cube.rows, cube.cols) != (raster.rows, raster.cols):
        raise ShapeError(
            f"label raster {raster.rows}x{raster.cols} does not match cube {cube.rows}x{cube.cols}")


def first_n_split(labels, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Split labeled positions into the first `n` per class (raster order) and the rest.

    Returns index arrays into `labels` (flattened). Unlabeled entries (0)
    belong to neither side.
    """
    labels = np.asarray(labels).ravel()
    if n < 0:
        raise DomainError("train-per-class must be non-negative")
    train = []
    for c in np.unique(labels[labels > 0]):
        train.extend(np.flatnonzero(labels == c)[:n].tolist())
    train = np.array(sorted(train), dtype=int)
    labeled = np.flatnonzero(labels > 0)
    test = np.setdiff1d(labeled, train)
    return train, test
