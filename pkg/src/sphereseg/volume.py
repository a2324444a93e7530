"""Core volume containers and label/region arithmetic.

Arrays are C-ordered with shape (nx, ny, nz); voxel (i, j, k) has its
center at mm coordinates (i*sx, j*sy, k*sz). Containers are value
objects: operations never mutate their inputs and always return new
instances, which keeps them safe to share across worker threads.

Labels follow the BraTS convention {0, 1, 2, 4} and map onto three
nested evaluation regions:

    WT (whole tumor)     = {1, 2, 4}
    TC (tumor core)      = {1, 4}
    ET (enhancing tumor) = {4}
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateVolumeError, DimensionMismatchError

BRATS_LABEL_VALUES = (0, 1, 2, 4)


class Region(str, Enum):
    """Nested evaluation regions: ET <= TC <= WT."""

    WT = "WT"
    TC = "TC"
    ET = "ET"


REGION_LABELS: dict[Region, tuple[int, ...]] = {
    Region.WT: (1, 2, 4),
    Region.TC: (1, 4),
    Region.ET: (4,),
}


@dataclass(frozen=True)
class Spacing:
    """Millimetres per voxel along each axis (anisotropy allowed)."""

    sx: float
    sy: float
    sz: float

    def __post_init__(self) -> None:
        for v in (self.sx, self.sy, self.sz):
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"spacing components must be finite and > 0, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.sx, self.sy, self.sz], dtype=np.float64)

    @property
    def voxel_volume_mm3(self) -> float:
        return float(self.sx * self.sy * self.sz)


@dataclass(frozen=True)
class ScalarVolume:
    """Single-channel float32 image volume."""

    data: np.ndarray
    spacing: Spacing

    def __post_init__(self) -> None:
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError(f"expected 3D scalar data, got {data.ndim}D")
        if not np.isfinite(data).all():
            raise ValueError("scalar volume contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class MultiChannelVolume:
    """Channel stack sharing one voxel grid (T1, T1c, T2, FLAIR by convention)."""

    channels: tuple[ScalarVolume, ...]

    def __post_init__(self) -> None:
        channels = tuple(self.channels)
        if not channels:
            raise ValueError("multichannel volume needs at least one channel")
        first = channels[0]
        for ch in channels[1:]:
            if ch.dims != first.dims or ch.spacing != first.spacing:
                raise DimensionMismatchError("channels must share dims and spacing")
        object.__setattr__(self, "channels", channels)

    @classmethod
    def from_arrays(cls, arrays: Iterable[np.ndarray], spacing: Spacing) -> "MultiChannelVolume":
        return cls(tuple(ScalarVolume(a, spacing) for a in arrays))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.channels[0].dims

    @property
    def spacing(self) -> Spacing:
        return self.channels[0].spacing

    @property
    def n_channels(self) -> int:
        return len(self.channels)


@dataclass(frozen=True)
class LabelVolume:
    """Segmentation volume restricted to the label values {0, 1, 2, 4}."""

    data: np.ndarray
    spacing: Spacing

    def __post_init__(self) -> None:
        data = np.ascontiguousarray(self.data)
        if data.ndim != 3:
            raise ValueError(f"expected 3D label data, got {data.ndim}D")
        if not np.issubdtype(data.dtype, np.integer):
            raise ValueError(f"label data must be integral, got {data.dtype}")
        bad = np.setdiff1d(np.unique(data), BRATS_LABEL_VALUES)
        if bad.size:
            raise ValueError(
                f"invalid label values {bad.tolist()}, expected subset of {BRATS_LABEL_VALUES}"
            )
        object.__setattr__(self, "data", data.astype(np.uint8, copy=False))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class RegionMask:
    """Boolean mask for one evaluation region."""

    region: Region
    data: np.ndarray
    spacing: Spacing

    def __post_init__(self) -> None:
        data = np.ascontiguousarray(self.data)
        if data.ndim != 3:
            raise ValueError(f"expected 3D mask, got {data.ndim}D")
        object.__setattr__(self, "data", data.astype(bool, copy=False))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def voxel_count(self) -> int:
        return int(np.count_nonzero(self.data))

    @property
    def volume_mm3(self) -> float:
        return self.voxel_count * self.spacing.voxel_volume_mm3


def voxel_to_mm(index: Sequence[float], spacing: Spacing) -> tuple[float, float, float]:
    """Center of voxel (i, j, k) in mm."""
    i, j, k = index
    return (i * spacing.sx, j * spacing.sy, k * spacing.sz)


def volume_center_mm(dims: Sequence[int], spacing: Spacing) -> np.ndarray:
    """Center of the volume's physical extent (dims * spacing / 2)."""
    return np.asarray(dims, dtype=np.float64) * spacing.as_array() / 2.0


def check_same_geometry(*volumes) -> None:
    """Raise DimensionMismatchError unless all volumes share dims and spacing."""
    first = volumes[0]
    for v in volumes[1:]:
        if v.dims != first.dims:
            raise DimensionMismatchError(f"dims differ: {v.dims} vs {first.dims}")
        if v.spacing != first.spacing:
            raise DimensionMismatchError(f"spacing differs: {v.spacing} vs {first.spacing}")


def region_masks_from_labels(labels: LabelVolume) -> tuple[RegionMask, RegionMask, RegionMask]:
    """Expand a label volume into its (WT, TC, ET) region masks."""
    lab = labels.data
    wt = lab > 0
    tc = (lab == 1) | (lab == 4)
    et = lab == 4
    sp = labels.spacing
    return (
        RegionMask(Region.WT, wt, sp),
        RegionMask(Region.TC, tc, sp),
        RegionMask(Region.ET, et, sp),
    )


def labels_from_region_masks(wt: RegionMask, tc: RegionMask, et: RegionMask) -> LabelVolume:
    """Collapse region masks back to labels.

    The masks are first closed under the nesting ET <= TC <= WT (union
    closure), then each voxel takes 4 if ET, else 1 if TC, else 2 if WT,
    else 0.
    """
    check_same_geometry(wt, tc, et)
    et_c = et.data
    tc_c = tc.data | et_c
    wt_c = wt.data | tc_c
    out = np.zeros(wt.dims, dtype=np.uint8)
    out[wt_c] = 2
    out[tc_c] = 1
    out[et_c] = 4
    return LabelVolume(out, wt.spacing)


def nonzero_mask(volume: ScalarVolume) -> np.ndarray:
    """Boolean mask of nonzero voxels (the usual brain mask for skull-stripped data)."""
    return volume.data != 0


def zscore_values(data: np.ndarray) -> np.ndarray:
    """Z-score an array over its nonzero voxels; zeros stay exactly zero.

    Statistics are computed in float64 over the nonzero voxels only, so
    the (typically dominant) zero background does not dilute them.
    Raises DegenerateVolumeError when there are fewer than two nonzero
    voxels or their variance is zero.
    """
    mask = data != 0
    values = data[mask].astype(np.float64)
    if values.size < 2:
        raise DegenerateVolumeError(
            f"need at least 2 nonzero voxels to normalize, found {values.size}"
        )
    mean = values.mean()
    std = values.std()
    if std == 0.0:
        raise DegenerateVolumeError("nonzero voxels have zero variance")
    out = np.zeros(data.shape, dtype=np.float32)
    out[mask] = ((values - mean) / std).astype(np.float32)
    return out


def zscore_normalize(volume: ScalarVolume) -> ScalarVolume:
    """Z-score a volume over its nonzero voxels; the zero set is preserved exactly."""
    return ScalarVolume(zscore_values(volume.data), volume.spacing)
