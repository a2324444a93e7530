"""Cascaded multi-origin segmentation pipeline.

Each pass picks a set of origins, views the volume in spherical
coordinates about each of them (transform, then z-score over nonzero
voxels), segments every view, projects the labels back and merges the
per-origin region masks by union. Pass 1 sees only the volume center;
pass 2 mines origins from pass 1's prediction; pass 3 looks from the
centroids of pass 2's objects. Optionally a segmentation of the
untransformed volume contributes its whole-tumor mask as an
intersection filter, after which small-object cleanup and the nesting
closure produce the final labels.

Merging is per pass: each pass's output replaces the previous one and
is used only to steer the next pass's origins.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DegenerateVolumeError, PassFailedError, SpheresegError
from .morphology import connected_components, opening, remove_small_objects
from .origins import OriginSet, SelectionConfig, first_pass_origins, second_pass_origins, third_pass_origins
from .segmenter import (
    DEFAULT_CHANNEL_NAMES,
    ExchangeMeta,
    ExternalCommand,
    SegmenterSpec,
    ThresholdOracle,
    segment,
)
from .transform import Origin, SphericalGrid, SphericalVolume, compute_r_max, forward_transform, inverse_project_labels
from .volume import (
    LabelVolume,
    MultiChannelVolume,
    Region,
    RegionMask,
    Spacing,
    labels_from_region_masks,
    nonzero_mask,
    region_masks_from_labels,
    zscore_values,
)

MaskTriple = tuple[RegionMask, RegionMask, RegionMask]

_PASS_INDEX = {"first": 1, "second": 2, "third": 3}


@dataclass(frozen=True)
class GridConfig:
    n_r: int = 128
    n_theta: int = 256
    n_phi: int = 128


@dataclass(frozen=True)
class PostprocessConfig:
    min_object_mm3: float = 30.0
    open_iters: int = 1

    def __post_init__(self) -> None:
        if self.min_object_mm3 < 0:
            raise ValueError("min_object_mm3 must be non-negative")
        if self.open_iters < 0:
            raise ValueError("open_iters must be non-negative")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    segmenters: Mapping[str, SegmenterSpec]
    grid: GridConfig = GridConfig()
    selection: SelectionConfig = SelectionConfig()
    postprocess: PostprocessConfig = PostprocessConfig()
    enable_cartesian_filter: bool = True
    threads: int = 1

    def __post_init__(self) -> None:
        if "pass1" not in self.segmenters:
            raise ConfigError("segmenters must configure at least pass1")
        unknown = set(self.segmenters) - {"pass1", "pass2", "pass3", "cartesian"}
        if unknown:
            raise ConfigError(f"unknown segmenter keys {sorted(unknown)}")
        if self.enable_cartesian_filter and "cartesian" not in self.segmenters:
            raise ConfigError("cartesian filter enabled but no cartesian segmenter configured")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    def segmenter_for(self, name: str) -> SegmenterSpec:
        """Later passes inherit the previous pass's segmenter when unset."""
        if name == "pass2":
            chain = ("pass2", "pass1")
        elif name == "pass3":
            chain = ("pass3", "pass2", "pass1")
        else:
            chain = (name,)
        for key in chain:
            if key in self.segmenters:
                return self.segmenters[key]
        raise ConfigError(f"no segmenter configured for {name}")


def _segmenter_from_dict(d: Mapping) -> SegmenterSpec:
    kind = d.get("kind")
    if kind == "threshold_oracle":
        thresholds = d.get("thresholds")
        if thresholds is not None:
            if len(thresholds) != 3:
                raise ConfigError("thresholds must be [t_wt, t_tc, t_et]")
            return ThresholdOracle(*map(float, thresholds))
        return ThresholdOracle(
            t_wt=float(d.get("t_wt", 0.45)),
            t_tc=float(d.get("t_tc", 0.70)),
            t_et=float(d.get("t_et", 0.90)),
        )
    if kind == "external_command":
        command = d.get("command")
        if isinstance(command, str):
            command = [command]
        if not command:
            raise ConfigError("external_command needs a non-empty command")
        return ExternalCommand(
            command=tuple(command),
            timeout_s=float(d.get("timeout_s", 600.0)),
            output_filename=str(d.get("output_filename", "pred.svol")),
            workdir_root=d.get("workdir_root"),
            keep_workdir=bool(d.get("keep_workdir", False)),
        )
    raise ConfigError(f"unknown segmenter kind {kind!r}")


def _segmenter_to_dict(spec: SegmenterSpec) -> dict:
    if isinstance(spec, ThresholdOracle):
        return {"kind": "threshold_oracle", "thresholds": [spec.t_wt, spec.t_tc, spec.t_et]}
    return {
        "kind": "external_command",
        "command": list(spec.command),
        "timeout_s": spec.timeout_s,
        "output_filename": spec.output_filename,
        "workdir_root": spec.workdir_root,
        "keep_workdir": spec.keep_workdir,
    }


def config_from_dict(d: Mapping) -> PipelineConfig:
    """Build a PipelineConfig from parsed JSON; the seed is mandatory."""
    known = {
        "seed",
        "threads",
        "grid",
        "selection",
        "postprocess",
        "segmenters",
        "enable_cartesian_filter",
    }
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        if "seed" not in d:
            raise ConfigError("config must set a seed for reproducible runs")
        seed = int(d["seed"])
        grid = GridConfig(**{k: int(v) for k, v in d.get("grid", {}).items()})
        sel_d = dict(d.get("selection", {}))
        if "escalation" in sel_d:
            sel_d["escalation"] = tuple(
                (Region(str(r)), float(t)) for r, t in sel_d["escalation"]
            )
        selection = SelectionConfig(**sel_d)
        post = PostprocessConfig(**d.get("postprocess", {}))
        seg_d = d.get("segmenters")
        if not isinstance(seg_d, Mapping) or not seg_d:
            raise ConfigError("config must define segmenters")
        segmenters = {name: _segmenter_from_dict(sd) for name, sd in seg_d.items()}
        return PipelineConfig(
            seed=seed,
            segmenters=segmenters,
            grid=grid,
            selection=selection,
            postprocess=post,
            enable_cartesian_filter=bool(d.get("enable_cartesian_filter", "cartesian" in segmenters)),
            threads=int(d.get("threads", 1)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad config: {exc}") from exc


def config_to_dict(cfg: PipelineConfig) -> dict:
    return {
        "seed": cfg.seed,
        "grid": {"n_r": cfg.grid.n_r, "n_theta": cfg.grid.n_theta, "n_phi": cfg.grid.n_phi},
        "selection": {
            "n_origins": cfg.selection.n_origins,
            "exclusion_box_mm": cfg.selection.exclusion_box_mm,
            "border_erosion_iters": cfg.selection.border_erosion_iters,
            "escalation": [[r.value, t] for r, t in cfg.selection.escalation],
            "large_object_mm": cfg.selection.large_object_mm,
            "rng_seed": cfg.selection.rng_seed,
        },
        "segmenters": {k: _segmenter_to_dict(v) for k, v in cfg.segmenters.items()},
        "postprocess": {
            "min_object_mm3": cfg.postprocess.min_object_mm3,
            "open_iters": cfg.postprocess.open_iters,
        },
        "enable_cartesian_filter": cfg.enable_cartesian_filter,
        "threads": cfg.threads,
    }


def load_config(path) -> PipelineConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return config_from_dict(doc)


@dataclass
class PassResult:
    pass_id: str
    origin_set: OriginSet
    per_origin_masks: list[MaskTriple]
    merged: MaskTriple
    warnings: list[str] = field(default_factory=list)


@dataclass
class PipelineReport:
    final_labels: LabelVolume
    passes: list[PassResult]
    cartesian_wt: RegionMask | None
    filtered: MaskTriple
    post: MaskTriple
    stage_seconds: dict[str, float]
    warnings: list[str]
    config: PipelineConfig

    def summary(self, include_timings: bool = False) -> dict:
        """JSON-ready digest. Timings are opt-in because they vary run to run."""
        # thread count is an execution knob, not a pipeline parameter; drop it
        # so reports stay byte-identical across worker configurations
        cfg_echo = config_to_dict(self.config)
        cfg_echo.pop("threads", None)
        out: dict = {
            "seed": self.config.seed,
            "config": cfg_echo,
            "passes": [_pass_summary(p) for p in self.passes],
            "cartesian_wt": _mask_summary(self.cartesian_wt) if self.cartesian_wt is not None else None,
            "final": {
                "regions": {m.region.value: _mask_summary(m) for m in self.post},
                "label_histogram": {
                    str(v): int(np.count_nonzero(self.final_labels.data == v)) for v in (0, 1, 2, 4)
                },
            },
            "warnings": list(self.warnings),
        }
        if include_timings:
            out["stage_seconds"] = dict(self.stage_seconds)
        return out


def _mask_summary(mask: RegionMask) -> dict:
    return {
        "voxels": mask.voxel_count,
        "mm3": mask.voxel_count * mask.spacing.voxel_volume_mm3,
        "components": connected_components(mask.data, mask.spacing).count,
    }


def _pass_summary(p: PassResult) -> dict:
    return {
        "pass": p.pass_id,
        "origins": [[o.x, o.y, o.z] for o in p.origin_set.origins],
        "origin_count": len(p.origin_set),
        "requested": p.origin_set.requested,
        "provenance": list(p.origin_set.provenance),
        "seed": p.origin_set.seed,
        "merged": {m.region.value: _mask_summary(m) for m in p.merged},
        "warnings": list(p.warnings),
    }


def _normalize_channel(data: np.ndarray, warnings: list[str], context: str) -> np.ndarray:
    """Z-score, tolerating degenerate channels so empty inputs degrade cleanly."""
    try:
        return zscore_values(data)
    except DegenerateVolumeError as exc:
        warnings.append(f"{context}: {exc}; channel left unnormalized")
        return data.astype(np.float32, copy=False)


def merge_ensemble(triples: Sequence[MaskTriple]) -> MaskTriple:
    """Voxelwise union per region, then the nesting closure."""
    if not triples:
        raise ValueError("nothing to merge")
    wt0, tc0, et0 = triples[0]
    wt = np.zeros(wt0.dims, dtype=bool)
    tc = np.zeros(wt0.dims, dtype=bool)
    et = np.zeros(wt0.dims, dtype=bool)
    for t_wt, t_tc, t_et in triples:
        wt |= t_wt.data
        tc |= t_tc.data
        et |= t_et.data
    et_c = et
    tc_c = tc | et_c
    wt_c = wt | tc_c
    sp = wt0.spacing
    return (
        RegionMask(Region.WT, wt_c, sp),
        RegionMask(Region.TC, tc_c, sp),
        RegionMask(Region.ET, et_c, sp),
    )


def _segment_one_origin(
    volume: MultiChannelVolume,
    origin: Origin,
    spec: SegmenterSpec,
    grid_cfg: GridConfig,
    pass_index: int,
    channel_names: tuple[str, ...],
    warnings: list[str],
) -> MaskTriple:
    ch0 = volume.channels[0]
    try:
        r_max = compute_r_max(ch0, origin, "surface")
    except DegenerateVolumeError:
        r_max = compute_r_max(ch0, origin, "corners")
        warnings.append(
            f"origin ({origin.x:g}, {origin.y:g}, {origin.z:g}): empty volume, "
            "r_max fell back to corners mode"
        )
    grid = SphericalGrid(grid_cfg.n_r, grid_cfg.n_theta, grid_cfg.n_phi, r_max, origin)
    sph = [forward_transform(ch, grid, "trilinear").data for ch in volume.channels]
    normed = [
        _normalize_channel(d, warnings, f"pass {pass_index} origin ({origin.x:g}, {origin.y:g}, {origin.z:g})")
        for d in sph
    ]
    meta = ExchangeMeta(
        pass_index=pass_index,
        origin=(origin.x, origin.y, origin.z),
        grid={"n_r": grid.n_r, "n_theta": grid.n_theta, "n_phi": grid.n_phi, "r_max": grid.r_max},
        channel_names=channel_names,
    )
    labels = segment(spec, normed, Spacing(1.0, 1.0, 1.0), meta)
    svol = SphericalVolume(grid, labels, is_labels=True)
    back = inverse_project_labels(svol, volume.dims, volume.spacing)
    return region_masks_from_labels(back)


def run_pass(
    volume: MultiChannelVolume,
    origin_set: OriginSet,
    spec: SegmenterSpec,
    grid_cfg: GridConfig,
    threads: int = 1,
    channel_names: tuple[str, ...] | None = None,
) -> PassResult:
    """Segment the volume from every origin of a pass and merge by union.

    Individual origins may fail (typically a degenerate spherical view
    or a segmenter error); those failures are recorded as warnings.
    The pass itself fails only when every origin does.
    """
    if channel_names is None:
        channel_names = tuple(
            DEFAULT_CHANNEL_NAMES[i] if i < len(DEFAULT_CHANNEL_NAMES) else f"ch{i}"
            for i in range(volume.n_channels)
        )
    pass_index = _PASS_INDEX.get(origin_set.pass_id, 0)
    warnings: list[str] = []
    results: list[MaskTriple | None] = [None] * len(origin_set.origins)
    errors: list[str] = []

    def work(i_origin):
        i, origin = i_origin
        local_warnings: list[str] = []
        triple = _segment_one_origin(
            volume, origin, spec, grid_cfg, pass_index, channel_names, local_warnings
        )
        return i, triple, local_warnings

    jobs = list(enumerate(origin_set.origins))
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(work, job) for job in jobs]
            outcomes = []
            for fut, (i, origin) in zip(futures, jobs):
                try:
                    outcomes.append(fut.result())
                except SpheresegError as exc:
                    errors.append(f"origin {i}: {exc}")
    else:
        outcomes = []
        for job in jobs:
            try:
                outcomes.append(work(job))
            except SpheresegError as exc:
                errors.append(f"origin {job[0]}: {exc}")
    for i, triple, local_warnings in outcomes:
        results[i] = triple
        warnings.extend(local_warnings)
    warnings.extend(errors)
    survivors = [r for r in results if r is not None]
    if not survivors:
        raise PassFailedError(
            f"pass {origin_set.pass_id}: all {len(jobs)} origins failed: {errors}"
        )
    merged = merge_ensemble(survivors)
    return PassResult(
        pass_id=origin_set.pass_id,
        origin_set=origin_set,
        per_origin_masks=survivors,
        merged=merged,
        warnings=warnings,
    )


def apply_cartesian_filter(triple: MaskTriple, cartesian_wt: RegionMask) -> MaskTriple:
    """Keep only voxels the Cartesian model also calls whole tumor."""
    wt, tc, et = triple
    keep = cartesian_wt.data
    sp = wt.spacing
    return (
        RegionMask(Region.WT, wt.data & keep, sp),
        RegionMask(Region.TC, tc.data & keep, sp),
        RegionMask(Region.ET, et.data & keep, sp),
    )


def postprocess(triple: MaskTriple, cfg: PostprocessConfig) -> MaskTriple:
    """Open, drop small objects per region, then re-impose nesting by intersection."""
    wt, tc, et = triple
    sp = wt.spacing
    cleaned = []
    for mask in (wt, tc, et):
        m = mask.data
        if cfg.open_iters > 0:
            m = opening(m, cfg.open_iters)
        m = remove_small_objects(m, cfg.min_object_mm3, sp)
        cleaned.append(m)
    wt_c, tc_c, et_c = cleaned
    tc_c = tc_c & wt_c
    et_c = et_c & tc_c
    return (
        RegionMask(Region.WT, wt_c, sp),
        RegionMask(Region.TC, tc_c, sp),
        RegionMask(Region.ET, et_c, sp),
    )


def run_cascade(volume: MultiChannelVolume, cfg: PipelineConfig) -> PipelineReport:
    """Run the full three-pass cascade plus optional Cartesian filtering."""
    stage_seconds: dict[str, float] = {}
    warnings: list[str] = []
    seeds = np.random.SeedSequence(cfg.seed).generate_state(4)
    ch0 = volume.channels[0]

    t0 = time.perf_counter()
    origins1 = first_pass_origins(nonzero_mask(ch0), volume.spacing, cfg.selection, mode="infer")
    res1 = run_pass(volume, origins1, cfg.segmenter_for("pass1"), cfg.grid, cfg.threads)
    stage_seconds["first"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    sel2 = replace(cfg.selection, rng_seed=int(seeds[1]))
    origins2 = second_pass_origins(res1.merged[0], res1.merged[1], sel2)
    res2 = run_pass(volume, origins2, cfg.segmenter_for("pass2"), cfg.grid, cfg.threads)
    stage_seconds["second"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    sel3 = replace(cfg.selection, rng_seed=int(seeds[2]))
    origins3 = third_pass_origins(res2.merged[0], res2.merged[1], sel3)
    res3 = run_pass(volume, origins3, cfg.segmenter_for("pass3"), cfg.grid, cfg.threads)
    stage_seconds["third"] = time.perf_counter() - t0

    cartesian_wt: RegionMask | None = None
    filtered = res3.merged
    if cfg.enable_cartesian_filter:
        t0 = time.perf_counter()
        cart_warnings: list[str] = []
        normed = [
            _normalize_channel(ch.data, cart_warnings, "cartesian") for ch in volume.channels
        ]
        meta = ExchangeMeta(
            pass_index=0,
            origin=None,
            grid=None,
            channel_names=tuple(
                DEFAULT_CHANNEL_NAMES[i] if i < len(DEFAULT_CHANNEL_NAMES) else f"ch{i}"
                for i in range(volume.n_channels)
            ),
        )
        cart_labels = segment(cfg.segmenter_for("cartesian"), normed, volume.spacing, meta)
        cart_masks = region_masks_from_labels(LabelVolume(cart_labels, volume.spacing))
        cartesian_wt = cart_masks[0]
        warnings.extend(cart_warnings)
        stage_seconds["cartesian"] = time.perf_counter() - t0
        filtered = apply_cartesian_filter(res3.merged, cartesian_wt)

    t0 = time.perf_counter()
    post = postprocess(filtered, cfg.postprocess)
    final = labels_from_region_masks(*post)
    stage_seconds["postprocess"] = time.perf_counter() - t0

    passes = [res1, res2, res3]
    for p in passes:
        warnings.extend(p.warnings)
    return PipelineReport(
        final_labels=final,
        passes=passes,
        cartesian_wt=cartesian_wt,
        filtered=filtered,
        post=post,
        stage_seconds=stage_seconds,
        warnings=warnings,
        config=cfg,
    )
