"""Binary 3D morphology on boolean voxel grids.

Conventions used throughout the package:

* object (foreground) connectivity is 26 (face, edge and vertex
  neighbours); component ids are assigned by first encounter in a
  row-major scan, so labelings are deterministic;
* the structuring element for erode/dilate/open is the 6-connected
  cross, and hole filling regards the background as 6-connected;
* size thresholds are in mm^3 and removal is strict (< threshold).

The heavy lifting is delegated to scipy.ndimage; these wrappers pin
the conventions above.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume import Spacing

_CROSS = ndimage.generate_binary_structure(3, 1)
_FULL = ndimage.generate_binary_structure(3, 3)

DEFAULT_MAX_HOLE_MM3 = 30.0


@dataclass(frozen=True)
class ComponentLabeling:
    """Connected components of a mask; label 0 is background."""

    labels: np.ndarray
    count: int
    voxel_counts: np.ndarray
    volumes_mm3: np.ndarray
    spacing: Spacing


def _as_bool(mask: np.ndarray) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 3:
        raise ValueError(f"expected 3D mask, got {m.ndim}D")
    return m.astype(bool, copy=False)


def connected_components(mask: np.ndarray, spacing: Spacing) -> ComponentLabeling:
    """26-connected components with ids in first-encounter row-major order."""
    m = _as_bool(mask)
    lbl, count = ndimage.label(m, structure=_FULL)
    lbl = lbl.astype(np.int32, copy=False)
    if count:
        # scipy's id order is an implementation detail; relabel by first
        # appearance in the flat (row-major) scan to make it a contract.
        flat = lbl.ravel()
        first = np.full(count + 1, flat.size, dtype=np.int64)
        np.minimum.at(first, flat, np.arange(flat.size, dtype=np.int64))
        order = np.argsort(first[1:], kind="stable")  # old id - 1, sorted by first index
        remap = np.zeros(count + 1, dtype=np.int32)
        remap[order + 1] = np.arange(1, count + 1, dtype=np.int32)
        lbl = remap[lbl]
    counts = np.bincount(lbl.ravel(), minlength=count + 1)[1:].astype(np.int64)
    return ComponentLabeling(
        labels=lbl,
        count=int(count),
        voxel_counts=counts,
        volumes_mm3=counts * spacing.voxel_volume_mm3,
        spacing=spacing,
    )


def erode(mask: np.ndarray, iterations: int = 1) -> np.ndarray:
    """Erode with the 6-connected cross; outside the volume counts as background."""
    m = _as_bool(mask)
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if iterations == 0:
        return m.copy()
    return ndimage.binary_erosion(m, structure=_CROSS, iterations=iterations, border_value=0)


def dilate(mask: np.ndarray, iterations: int = 1) -> np.ndarray:
    """Dilate with the 6-connected cross."""
    m = _as_bool(mask)
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if iterations == 0:
        return m.copy()
    return ndimage.binary_dilation(m, structure=_CROSS, iterations=iterations, border_value=0)


def opening(mask: np.ndarray, iterations: int = 1) -> np.ndarray:
    """Morphological opening: erode then dilate, each `iterations` times."""
    if iterations < 1:
        raise ValueError("opening needs iterations >= 1")
    return dilate(erode(mask, iterations), iterations)


def remove_small_objects(mask: np.ndarray, min_volume_mm3: float, spacing: Spacing) -> np.ndarray:
    """Drop 26-connected components with volume strictly below min_volume_mm3."""
    m = _as_bool(mask)
    if min_volume_mm3 <= 0:
        return m.copy()
    labeling = connected_components(m, spacing)
    if labeling.count == 0:
        return m.copy()
    keep = np.concatenate(([False], labeling.volumes_mm3 >= min_volume_mm3))
    return keep[labeling.labels]


def fill_holes(
    mask: np.ndarray, spacing: Spacing, max_hole_mm3: float = DEFAULT_MAX_HOLE_MM3
) -> np.ndarray:
    """Fill enclosed background cavities smaller than max_hole_mm3.

    A cavity is a 6-connected background component that does not touch
    the volume boundary. Cavities with volume >= max_hole_mm3 are kept.
    """
    m = _as_bool(mask)
    bg_lbl, n_bg = ndimage.label(~m, structure=_CROSS)
    if n_bg == 0:
        return m.copy()
    touches = np.zeros(n_bg + 1, dtype=bool)
    for face in (
        bg_lbl[0, :, :], bg_lbl[-1, :, :],
        bg_lbl[:, 0, :], bg_lbl[:, -1, :],
        bg_lbl[:, :, 0], bg_lbl[:, :, -1],
    ):
        touches[np.unique(face)] = True
    counts = np.bincount(bg_lbl.ravel(), minlength=n_bg + 1)
    volumes = counts * spacing.voxel_volume_mm3
    fill = ~touches & (volumes < max_hole_mm3)
    fill[0] = False
    out = m.copy()
    out[fill[bg_lbl]] = True
    return out


def object_centroids(labeling: ComponentLabeling, spacing: Spacing) -> np.ndarray:
    """Component centroids in mm, ordered by volume descending (ties keep id order)."""
    if labeling.count == 0:
        return np.zeros((0, 3), dtype=np.float64)
    ids = np.arange(1, labeling.count + 1)
    coms = ndimage.center_of_mass(labeling.labels > 0, labeling.labels, ids)
    cents = np.asarray(coms, dtype=np.float64) * spacing.as_array()
    order = np.argsort(-labeling.volumes_mm3, kind="stable")
    return cents[order]


def bounding_box_mm(mask: np.ndarray, spacing: Spacing) -> tuple[float, float, float]:
    """Axis-aligned bounding-box extents of a mask: (max - min + 1) * spacing."""
    m = _as_bool(mask)
    idx = np.nonzero(m)
    if idx[0].size == 0:
        raise ValueError("bounding box of an empty mask is undefined")
    s = spacing.as_array()
    return tuple(
        float((int(idx[d].max()) - int(idx[d].min()) + 1) * s[d]) for d in range(3)
    )
