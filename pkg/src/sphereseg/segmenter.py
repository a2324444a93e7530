"""Segmenter backends behind a file-exchange interface.

The pipeline never links against a neural network. It either uses the
built-in threshold oracle (intended for phantoms and tests) or shells
out to an external command through a directory handshake:

    workdir/
        input_ch0.svol ... input_ch{C-1}.svol   float32 volumes
        meta.json                                request metadata
        pred.svol                                written by the command

The command is invoked with the directory path as its sole argument
and must exit 0 after writing its prediction. meta.json carries:

    pass      int: 1..3 for the spherical passes, 0 for Cartesian
    origin    [x, y, z] mm, or null for the Cartesian call
    grid      {"n_r", "n_theta", "n_phi", "r_max"}, or null
    channels  channel names, e.g. ["T1", "T1c", "T2", "FLAIR"]

Failures are typed: nonzero exit, timeout, missing/unreadable output
and output shape mismatch each raise their own error.
"""

from __future__ import annotations

import json
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import (
    FormatError,
    SegmenterExitError,
    SegmenterOutputError,
    SegmenterShapeError,
    SegmenterTimeoutError,
)
from .svol import read_svol, write_svol
from .volume import LabelVolume, ScalarVolume, Spacing

DEFAULT_CHANNEL_NAMES = ("T1", "T1c", "T2", "FLAIR")


@dataclass(frozen=True)
class ThresholdOracle:
    """Label channel 0 by thresholds: 2 above t_wt, 1 above t_tc, 4 above t_et.

    Defaults suit the phantom's raw intensity coding. Data that has
    been z-scored lives on another scale, so configure thresholds per
    pass for normalized inputs.
    """

    t_wt: float = 0.45
    t_tc: float = 0.70
    t_et: float = 0.90

    def __post_init__(self) -> None:
        if not (self.t_wt < self.t_tc < self.t_et):
            raise ValueError(
                f"thresholds must be strictly increasing, got "
                f"({self.t_wt}, {self.t_tc}, {self.t_et})"
            )


@dataclass(frozen=True)
class ExternalCommand:
    """Spawn `command... workdir` and read back workdir/pred.svol."""

    command: tuple[str, ...]
    timeout_s: float = 600.0
    output_filename: str = "pred.svol"
    workdir_root: str | None = None
    keep_workdir: bool = False

    def __post_init__(self) -> None:
        if not self.command:
            raise ValueError("external command must be non-empty")
        if self.timeout_s <= 0:
            raise ValueError("timeout must be > 0")
        object.__setattr__(self, "command", tuple(str(c) for c in self.command))


SegmenterSpec = Union[ThresholdOracle, ExternalCommand]


@dataclass(frozen=True)
class ExchangeMeta:
    pass_index: int  # 1..3 spherical, 0 cartesian
    origin: tuple[float, float, float] | None
    grid: dict | None  # keys n_r, n_theta, n_phi, r_max
    channel_names: tuple[str, ...]

    def to_json_dict(self) -> dict:
        return {
            "pass": self.pass_index,
            "origin": list(self.origin) if self.origin is not None else None,
            "grid": dict(self.grid) if self.grid is not None else None,
            "channels": list(self.channel_names),
        }


def _oracle_labels(spec: ThresholdOracle, ch0: np.ndarray) -> np.ndarray:
    out = np.zeros(ch0.shape, dtype=np.uint8)
    out[ch0 > spec.t_wt] = 2
    out[ch0 > spec.t_tc] = 1
    out[ch0 > spec.t_et] = 4
    return out


def _run_external(
    spec: ExternalCommand,
    channels: Sequence[np.ndarray],
    spacing: Spacing,
    meta: ExchangeMeta,
) -> np.ndarray:
    workdir = Path(tempfile.mkdtemp(prefix="sphereseg-", dir=spec.workdir_root))
    try:
        for i, ch in enumerate(channels):
            write_svol(workdir / f"input_ch{i}.svol", ScalarVolume(ch, spacing))
        (workdir / "meta.json").write_text(json.dumps(meta.to_json_dict(), indent=1))
        argv = list(spec.command) + [str(workdir)]
        try:
            proc = subprocess.run(
                argv,
                capture_output=True,
                timeout=spec.timeout_s,
            )
        except subprocess.TimeoutExpired as exc:
            raise SegmenterTimeoutError(
                f"{argv[0]} exceeded {spec.timeout_s:g}s"
            ) from exc
        except OSError as exc:
            raise SegmenterExitError(f"could not launch {argv[0]}: {exc}") from exc
        if proc.returncode != 0:
            tail = proc.stderr.decode(errors="replace")[-500:]
            raise SegmenterExitError(
                f"{argv[0]} exited with {proc.returncode}: {tail!r}"
            )
        out_path = workdir / spec.output_filename
        if not out_path.exists():
            raise SegmenterOutputError(f"{argv[0]} produced no {spec.output_filename}")
        try:
            pred = read_svol(out_path)
        except (FormatError, ValueError) as exc:
            raise SegmenterOutputError(f"unreadable {spec.output_filename}: {exc}") from exc
        if not isinstance(pred, LabelVolume):
            raise SegmenterOutputError(
                f"{spec.output_filename} is not a label volume"
            )
        if pred.dims != tuple(channels[0].shape):
            raise SegmenterShapeError(
                f"prediction dims {pred.dims} != input dims {tuple(channels[0].shape)}"
            )
        return pred.data.copy()
    finally:
        if not spec.keep_workdir:
            shutil.rmtree(workdir, ignore_errors=True)


def segment(
    spec: SegmenterSpec,
    channels: Sequence[np.ndarray],
    spacing: Spacing,
    meta: ExchangeMeta,
) -> np.ndarray:
    """Run a segmenter over aligned channel arrays; returns uint8 labels."""
    if not channels:
        raise ValueError("need at least one channel")
    shape = channels[0].shape
    for ch in channels[1:]:
        if ch.shape != shape:
            raise ValueError("channels must share one shape")
    if isinstance(spec, ThresholdOracle):
        return _oracle_labels(spec, np.asarray(channels[0]))
    if isinstance(spec, ExternalCommand):
        return _run_external(spec, channels, spacing, meta)
    raise TypeError(f"unknown segmenter spec {type(spec).__name__}")
