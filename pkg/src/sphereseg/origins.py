"""Origin selection for the multi-pass segmentation cascade.

Pass 1 knows nothing about the tumor: at inference the only origin is
the volume center (training may add random in-brain origins). Pass 2
mines the previous pass's prediction: candidate regions are cleaned
up (small-object removal, opening, hole filling), and random interior
voxels of the largest remaining object are picked, excluding a box
around each accepted origin so picks spread out. The search escalates
through size thresholds, preferring tumor core over whole tumor.
Pass 3 uses the centroids of the predicted whole-tumor objects,
topping up with the pass-2 procedure inside any object large enough
to deserve several views.

All randomness flows through one seeded generator per call, consumed
in a fixed order, so selections are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateVolumeError
from .morphology import (
    DEFAULT_MAX_HOLE_MM3,
    bounding_box_mm,
    connected_components,
    erode,
    fill_holes,
    opening,
    remove_small_objects,
)
from .transform import Origin
from .volume import Region, RegionMask, Spacing, check_same_geometry, volume_center_mm

DEFAULT_ESCALATION: tuple[tuple[Region, float], ...] = (
    (Region.TC, 30.0),
    (Region.TC, 100.0),
    (Region.TC, 1000.0),
    (Region.WT, 30.0),
    (Region.WT, 100.0),
    (Region.WT, 1000.0),
)


@dataclass(frozen=True)
class SelectionConfig:
    n_origins: int = 4
    exclusion_box_mm: float = 50.0
    border_erosion_iters: int = 2
    escalation: tuple[tuple[Region, float], ...] = DEFAULT_ESCALATION
    large_object_mm: float = 50.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.n_origins < 1:
            raise ValueError("n_origins must be >= 1")
        if self.exclusion_box_mm <= 0:
            raise ValueError("exclusion_box_mm must be > 0")
        if self.border_erosion_iters < 0:
            raise ValueError("border_erosion_iters must be >= 0")
        if not self.escalation:
            raise ValueError("escalation schedule must not be empty")


@dataclass(frozen=True)
class OriginSet:
    origins: tuple[Origin, ...]
    pass_id: str  # "first" | "second" | "third"
    seed: int | None
    provenance: tuple[str, ...] = ()
    requested: int | None = None

    def __post_init__(self) -> None:
        if self.provenance and len(self.provenance) != len(self.origins):
            raise ValueError("provenance must parallel origins")

    def __len__(self) -> int:
        return len(self.origins)


def first_pass_origins(
    brain_mask: np.ndarray,
    spacing: Spacing,
    cfg: SelectionConfig,
    mode: str = "infer",
) -> OriginSet:
    """Center of the volume; training mode adds n_origins random brain voxels."""
    mask = np.asarray(brain_mask).astype(bool, copy=False)
    center = volume_center_mm(mask.shape, spacing)
    origins = [Origin(*center)]
    prov = ["center"]
    if mode == "infer":
        return OriginSet(tuple(origins), "first", None, tuple(prov), cfg.n_origins)
    if mode != "train":
        raise ValueError(f"unknown mode {mode!r}")
    flat = np.flatnonzero(mask)
    if flat.size == 0:
        raise DegenerateVolumeError("training origins need a nonzero brain mask")
    rng = np.random.default_rng(cfg.rng_seed)
    s = spacing.as_array()
    for pick in flat[rng.integers(flat.size, size=cfg.n_origins)]:
        idx = np.unravel_index(int(pick), mask.shape)
        origins.append(Origin(*(np.asarray(idx) * s)))
        prov.append("random")
    return OriginSet(tuple(origins), "first", cfg.rng_seed, tuple(prov), cfg.n_origins)


def _carve_box(mask: np.ndarray, center_mm: np.ndarray, spacing: Spacing, half_mm: float) -> None:
    """Clear voxels whose centers lie within +-half_mm of center_mm per axis."""
    s = spacing.as_array()
    lo = []
    hi = []
    for d in range(3):
        lo.append(max(0, int(np.ceil((center_mm[d] - half_mm) / s[d] - 1e-9))))
        hi.append(min(mask.shape[d] - 1, int(np.floor((center_mm[d] + half_mm) / s[d] + 1e-9))))
    if all(lo[d] <= hi[d] for d in range(3)):
        mask[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1] = False


def _filtered_candidate(region_arr: np.ndarray, threshold_mm3: float, spacing: Spacing) -> np.ndarray:
    m = remove_small_objects(region_arr, threshold_mm3, spacing)
    m = opening(m, 1)
    return fill_holes(m, spacing, DEFAULT_MAX_HOLE_MM3)


def _pick_in_candidate(
    cand: np.ndarray,
    allowed: np.ndarray,
    spacing: Spacing,
    cfg: SelectionConfig,
    rng: np.random.Generator,
    picks: list[Origin],
    prov: list[str],
    tag: str,
) -> None:
    """Pull random interior voxels from the largest object until exhausted.

    Each accepted pick carves its exclusion box out of both the local
    candidate mask and the shared `allowed` mask, so later escalation
    stages cannot land near an earlier origin.
    """
    s = spacing.as_array()
    half = cfg.exclusion_box_mm / 2.0
    while len(picks) < cfg.n_origins and cand.any():
        labeling = connected_components(cand, spacing)
        if labeling.count == 0:
            break
        biggest = int(np.argmax(labeling.volumes_mm3)) + 1
        comp = labeling.labels == biggest
        interior = erode(comp, cfg.border_erosion_iters)
        if not interior.any():
            interior = comp
        flat = np.flatnonzero(interior)
        idx = np.unravel_index(int(flat[rng.integers(flat.size)]), cand.shape)
        center_mm = np.asarray(idx, dtype=np.float64) * s
        picks.append(Origin(*center_mm))
        prov.append(tag)
        _carve_box(cand, center_mm, spacing, half)
        _carve_box(allowed, center_mm, spacing, half)


def _escalate(
    wt_arr: np.ndarray,
    tc_arr: np.ndarray,
    spacing: Spacing,
    cfg: SelectionConfig,
    rng: np.random.Generator,
    allowed: np.ndarray,
    picks: list[Origin],
    prov: list[str],
) -> None:
    """Run the (region, threshold) escalation, carving exclusion boxes as it goes."""
    for region, threshold in cfg.escalation:
        if len(picks) >= cfg.n_origins:
            break
        base = tc_arr if region is Region.TC else wt_arr
        cand = _filtered_candidate(base, threshold, spacing) & allowed
        _pick_in_candidate(cand, allowed, spacing, cfg, rng, picks, prov,
                           f"{region.value}@{threshold:g}")


def _wt_centroid_fallback(
    wt_arr: np.ndarray, spacing: Spacing, dims: tuple[int, int, int]
) -> tuple[Origin, str]:
    if wt_arr.any():
        labeling = connected_components(wt_arr, spacing)
        biggest = int(np.argmax(labeling.volumes_mm3)) + 1
        com = ndimage.center_of_mass(labeling.labels == biggest)
        return Origin(*(np.asarray(com) * spacing.as_array())), "fallback:wt-centroid"
    return Origin(*volume_center_mm(dims, spacing)), "fallback:volume-center"


def second_pass_origins(wt: RegionMask, tc: RegionMask, cfg: SelectionConfig) -> OriginSet:
    """Random interior origins mined from the previous pass's prediction."""
    check_same_geometry(wt, tc)
    spacing = wt.spacing
    rng = np.random.default_rng(cfg.rng_seed)
    allowed = np.ones(wt.dims, dtype=bool)
    picks: list[Origin] = []
    prov: list[str] = []
    _escalate(wt.data, tc.data, spacing, cfg, rng, allowed, picks, prov)
    if not picks:
        origin, tag = _wt_centroid_fallback(wt.data, spacing, wt.dims)
        picks.append(origin)
        prov.append(tag)
    return OriginSet(tuple(picks), "second", cfg.rng_seed, tuple(prov), cfg.n_origins)


def third_pass_origins(wt: RegionMask, tc: RegionMask, cfg: SelectionConfig) -> OriginSet:
    """Whole-tumor object centroids, topped up inside oversized objects."""
    check_same_geometry(wt, tc)
    spacing = wt.spacing
    rng = np.random.default_rng(cfg.rng_seed)
    picks: list[Origin] = []
    prov: list[str] = []
    labeling = connected_components(wt.data, spacing)
    order = np.argsort(-labeling.volumes_mm3, kind="stable")
    s = spacing.as_array()
    for rank in order[: cfg.n_origins]:
        com = ndimage.center_of_mass(labeling.labels == rank + 1)
        picks.append(Origin(*(np.asarray(com) * s)))
        prov.append("centroid")
    if len(picks) < cfg.n_origins:
        allowed = np.ones(wt.dims, dtype=bool)
        for origin in picks:
            _carve_box(allowed, np.array([origin.x, origin.y, origin.z]), spacing,
                       cfg.exclusion_box_mm / 2.0)
        for rank in order:
            if len(picks) >= cfg.n_origins:
                break
            comp = labeling.labels == rank + 1
            extents = bounding_box_mm(comp, spacing)
            if max(extents) <= cfg.large_object_mm:
                continue
            _escalate(comp, tc.data & comp, spacing, cfg, rng, allowed, picks, prov)
    if not picks:
        origin, tag = _wt_centroid_fallback(wt.data, spacing, wt.dims)
        picks.append(origin)
        prov.append(tag)
    return OriginSet(tuple(picks[: cfg.n_origins]), "third", cfg.rng_seed,
                     tuple(prov[: cfg.n_origins]), cfg.n_origins)
