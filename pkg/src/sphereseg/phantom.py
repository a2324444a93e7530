"""Analytic test phantom: an ellipsoidal brain with a nested spherical tumor.

Tissue classes are painted by exact voxel-center membership, so the
label volume doubles as ground truth. Channel 0 carries the clean
piecewise-constant intensity coding (background 0, tissue, then the
WT/TC/ET shells); the remaining channels are copies with seeded
Gaussian noise confined to the brain so the zero background survives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import LabelVolume, MultiChannelVolume, Spacing, volume_center_mm


@dataclass(frozen=True)
class PhantomSpec:
    brain_axes_mm: tuple[float, float, float] = (70.0, 85.0, 60.0)
    tissue_intensity: float = 0.3
    noise_sigma: float = 0.02
    tumor_offset_mm: tuple[float, float, float] = (18.0, 10.0, 6.0)
    region_radii_mm: tuple[float, float, float] = (25.0, 15.0, 8.0)  # WT, TC, ET
    region_intensities: tuple[float, float, float] = (0.6, 0.8, 1.0)
    spacing: Spacing = Spacing(1.0, 1.0, 1.0)
    margin_mm: float = 5.0
    n_channels: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        r_wt, r_tc, r_et = self.region_radii_mm
        if not (r_wt > r_tc > r_et > 0):
            raise ValueError(f"region radii must be strictly nested, got {self.region_radii_mm}")
        if any(a <= 0 for a in self.brain_axes_mm):
            raise ValueError("brain semi-axes must be positive")
        if self.n_channels < 1:
            raise ValueError("need at least one channel")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")

    @property
    def dims(self) -> tuple[int, int, int]:
        s = self.spacing.as_array()
        ext = 2.0 * (np.asarray(self.brain_axes_mm) + self.margin_mm)
        return tuple(int(np.ceil(ext[d] / s[d])) for d in range(3))

    @property
    def brain_center_mm(self) -> np.ndarray:
        return volume_center_mm(self.dims, self.spacing)

    @property
    def tumor_center_mm(self) -> np.ndarray:
        return self.brain_center_mm + np.asarray(self.tumor_offset_mm, dtype=np.float64)


def sphere_mask(
    dims: tuple[int, int, int], spacing: Spacing, center_mm, radius_mm: float
) -> np.ndarray:
    """Voxel-center membership of a sphere."""
    cx, cy, cz = np.asarray(center_mm, dtype=np.float64)
    dx = (np.arange(dims[0]) * spacing.sx - cx)[:, None, None]
    dy = (np.arange(dims[1]) * spacing.sy - cy)[None, :, None]
    dz = (np.arange(dims[2]) * spacing.sz - cz)[None, None, :]
    return dx * dx + dy * dy + dz * dz <= radius_mm * radius_mm


def ellipsoid_mask(
    dims: tuple[int, int, int], spacing: Spacing, center_mm, semi_axes_mm
) -> np.ndarray:
    """Voxel-center membership of an axis-aligned ellipsoid."""
    cx, cy, cz = np.asarray(center_mm, dtype=np.float64)
    ax, ay, az = np.asarray(semi_axes_mm, dtype=np.float64)
    ex = ((np.arange(dims[0]) * spacing.sx - cx) / ax)[:, None, None]
    ey = ((np.arange(dims[1]) * spacing.sy - cy) / ay)[None, :, None]
    ez = ((np.arange(dims[2]) * spacing.sz - cz) / az)[None, None, :]
    return ex * ex + ey * ey + ez * ez <= 1.0


def generate_phantom(spec: PhantomSpec) -> tuple[MultiChannelVolume, LabelVolume]:
    """Rasterize the phantom; returns (channels, truth labels)."""
    dims = spec.dims
    brain = ellipsoid_mask(dims, spec.spacing, spec.brain_center_mm, spec.brain_axes_mm)
    r_wt, r_tc, r_et = spec.region_radii_mm
    wt = sphere_mask(dims, spec.spacing, spec.tumor_center_mm, r_wt)
    tc = sphere_mask(dims, spec.spacing, spec.tumor_center_mm, r_tc)
    et = sphere_mask(dims, spec.spacing, spec.tumor_center_mm, r_et)
    if (wt & ~brain).any():
        raise ValueError("tumor sphere extends outside the brain ellipsoid")

    ch0 = np.zeros(dims, dtype=np.float32)
    ch0[brain] = spec.tissue_intensity
    i_wt, i_tc, i_et = spec.region_intensities
    ch0[wt] = i_wt
    ch0[tc] = i_tc
    ch0[et] = i_et

    labels = np.zeros(dims, dtype=np.uint8)
    labels[wt] = 2
    labels[tc] = 1
    labels[et] = 4

    rng = np.random.default_rng(spec.seed)
    channels = [ch0]
    for _ in range(1, spec.n_channels):
        noisy = ch0.copy()
        noisy[brain] += rng.normal(0.0, spec.noise_sigma, int(brain.sum())).astype(np.float32)
        channels.append(noisy)
    return (
        MultiChannelVolume.from_arrays(channels, spec.spacing),
        LabelVolume(labels, spec.spacing),
    )
