"""Seeded synthetic hyperspectral scenes."""
from __future__ import annotations

import numpy as np

from ..errors import DomainError
from .cube import HsiCube, LabelRaster


def class_signatures(rng: np.random.Generator, classes: int, bands: int) -> np.ndarray:
    """Smooth positive spectra: 0.05 plus a sum of three Gaussian bumps."""
    b = np.arange(bands, dtype=float)
    sigs = np.full((classes, bands), 0.05)
    for c in range(classes):
        amp = rng.uniform(0.2, 1.0, 3)
        centre = rng.uniform(0.0, bands, 3)
        width = rng.uniform(0.08, 0.25, 3) * bands + 0.5
        for a, m, w in zip(amp, centre, width):
            sigs[c] += a * np.exp(-0.5 * ((b - m) / w) ** 2)
    return sigs


def synth_hsi(seed: int, rows: int = 32, cols: int = 32, bands: int = 30, classes: int = 3,
              noise_sigma: float = 0.05, mixing_width: float = 1.0,
              regions_per_class: int = 1) -> tuple[HsiCube, LabelRaster]:
    """Voronoi scene with one smooth signature per class.

    Pixels closer than `mixing_width` to a boundary with a region of another
    class are linear mixtures of the two signatures; the own-class share
    ramps from 0.5 on the boundary to 1 at `mixing_width`. Additive Gaussian
    noise is clamped at zero. The same arguments always give the same cube.
    """
    if classes < 2:
        raise DomainError("need at least two classes")
    if min(rows, cols, bands, regions_per_class) < 1:
        raise DomainError("rows, cols, bands and regions_per_class must be >= 1")
    if noise_sigma < 0 or mixing_width < 0:
        raise DomainError("noise_sigma and mixing_width must be non-negative")

    rng = np.random.default_rng(seed)
    sigs = class_signatures(rng, classes, bands)
    n_regions = classes * regions_per_class
    seeds = rng.uniform([0, 0], [rows, cols], size=(n_regions, 2))
    region_class = np.concatenate(
        (np.arange(classes), rng.integers(0, classes, n_regions - classes)))

    rr, cc = np.meshgrid(np.arange(rows) + 0.5, np.arange(cols) + 0.5, indexing="ij")
    pos = np.stack((rr.ravel(), cc.ravel()), axis=1)
    d2 = ((pos[:, None, :] - seeds[None, :, :]) ** 2).sum(-1)
    nearest = np.argmin(d2, axis=1)
    own = region_class[nearest]

    pixels = sigs[own].copy()
    if mixing_width > 0:
        for i in range(pos.shape[0]):
            a = nearest[i]
            other = np.flatnonzero(region_class != own[i])
            gaps = np.linalg.norm(seeds[other] - seeds[a], axis=1)
            # distance to each bisector with a foreign region
            delta = (d2[i, other] - d2[i, a]) / (2.0 * gaps)
            j = np.argmin(delta)
            if delta[j] < mixing_width:
                share = 0.5 + 0.5 * delta[j] / mixing_width
                pixels[i] = share * sigs[own[i]] + (1.0 - share) * sigs[region_class[other[j]]]

    if noise_sigma > 0:
        pixels = pixels + rng.normal(0.0, noise_sigma, pixels.shape)
    pixels = np.maximum(pixels, 0.0)
    cube = HsiCube.from_rcb(pixels.reshape(rows, cols, bands),
                            wavelengths=np.linspace(400.0, 2500.0, bands))
    return cube, LabelRaster((own + 1).reshape(rows, cols))


def synth_detection(seed: int, rows: int = 24, cols: int = 24, bands: int = 30,
                    endmembers: int = 3, target_share: float = 0.4,
                    target_density: float = 0.05, noise_sigma: float = 0.01
                    ) -> tuple[HsiCube, LabelRaster, np.ndarray]:
    """Mixed-pixel detection scene.

    Background pixels are random convex mixtures (flat Dirichlet abundances)
    of `endmembers` smooth signatures. A random `target_density` fraction of
    pixels are sub-pixel targets ``target_share * t + (1 - target_share) * bg``.
    Labels: 1 background, 2 target. Returns the cube, the labels and the
    pure target spectrum ``t``.
    """
    if endmembers < 1 or not 0 < target_share <= 1 or not 0 < target_density < 1:
        raise DomainError("invalid detection scene parameters")
    rng = np.random.default_rng(seed)
    sigs = class_signatures(rng, endmembers + 1, bands)
    target, background = sigs[0], sigs[1:]
    n = rows * cols
    abundances = rng.dirichlet(np.ones(endmembers), size=n)
    pixels = abundances @ background
    n_targets = max(1, int(round(target_density * n)))
    is_target = np.zeros(n, dtype=bool)
    is_target[rng.choice(n, n_targets, replace=False)] = True
    pixels[is_target] = target_share * target + (1.0 - target_share) * pixels[is_target]
    pixels = np.maximum(pixels + rng.normal(0.0, noise_sigma, pixels.shape), 0.0)
    cube = HsiCube.from_rcb(pixels.reshape(rows, cols, bands),
                            wavelengths=np.linspace(400.0, 2500.0, bands))
    return cube, LabelRaster((is_target + 1).reshape(rows, cols)), target
