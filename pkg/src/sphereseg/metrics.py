"""Overlap and surface-distance metrics for nested tumor regions.

Per region (WT, TC, ET) we report Dice, sensitivity, specificity and
the 95th-percentile symmetric Hausdorff distance in mm. Metrics that
are undefined for a given pair (empty truth for sensitivity, full
truth for specificity, an empty surface for HD95) are reported as NaN;
Dice of two empty masks is defined as 1.0.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .volume import LabelVolume, Region, RegionMask, check_same_geometry, region_masks_from_labels

UNDEFINED = float("nan")

_CROSS = ndimage.generate_binary_structure(3, 1)


@dataclass(frozen=True)
class RegionMetrics:
    dice: float
    sensitivity: float
    specificity: float
    hd95: float


@dataclass(frozen=True)
class CaseMetrics:
    wt: RegionMetrics
    tc: RegionMetrics
    et: RegionMetrics

    def items(self):
        return ((Region.WT, self.wt), (Region.TC, self.tc), (Region.ET, self.et))


def dice(pred: RegionMask, truth: RegionMask) -> float:
    """2|P & T| / (|P| + |T|); two empty masks score 1.0."""
    check_same_geometry(pred, truth)
    p = pred.data
    t = truth.data
    denom = int(np.count_nonzero(p)) + int(np.count_nonzero(t))
    if denom == 0:
        return 1.0
    inter = int(np.count_nonzero(p & t))
    return 2.0 * inter / denom


def sensitivity(pred: RegionMask, truth: RegionMask) -> float:
    """TP / (TP + FN); NaN when the truth mask is empty."""
    check_same_geometry(pred, truth)
    t = truth.data
    positives = int(np.count_nonzero(t))
    if positives == 0:
        return UNDEFINED
    tp = int(np.count_nonzero(pred.data & t))
    return tp / positives


def specificity(pred: RegionMask, truth: RegionMask) -> float:
    """TN / (TN + FP); NaN when the truth mask covers the whole volume."""
    check_same_geometry(pred, truth)
    t = truth.data
    negatives = t.size - int(np.count_nonzero(t))
    if negatives == 0:
        return UNDEFINED
    tn = int(np.count_nonzero(~pred.data & ~t))
    return tn / negatives


def _surface_points_mm(mask: np.ndarray, spacing) -> np.ndarray:
    """Mm coordinates of foreground voxels with a 6-connected background neighbour.

    The volume boundary counts as background, so objects touching the
    edge still contribute surface there.
    """
    interior = ndimage.binary_erosion(mask, structure=_CROSS, border_value=0)
    surface = mask & ~interior
    idx = np.argwhere(surface)
    return idx.astype(np.float64) * spacing.as_array()


def hausdorff95(pred: RegionMask, truth: RegionMask) -> float:
    """Symmetric 95th-percentile surface distance in mm.

    Directed distances run between voxel centers of the two surfaces;
    each direction is reduced with a linearly interpolated 95th
    percentile and the symmetric value is the max of the two. NaN when
    either surface is empty.
    """
    check_same_geometry(pred, truth)
    p_pts = _surface_points_mm(pred.data, pred.spacing)
    t_pts = _surface_points_mm(truth.data, truth.spacing)
    if p_pts.shape[0] == 0 or t_pts.shape[0] == 0:
        return UNDEFINED
    d_pt, _ = cKDTree(t_pts).query(p_pts, k=1)
    d_tp, _ = cKDTree(p_pts).query(t_pts, k=1)
    return float(max(np.percentile(d_pt, 95), np.percentile(d_tp, 95)))


def _region_metrics(pred: RegionMask, truth: RegionMask) -> RegionMetrics:
    return RegionMetrics(
        dice=dice(pred, truth),
        sensitivity=sensitivity(pred, truth),
        specificity=specificity(pred, truth),
        hd95=hausdorff95(pred, truth),
    )


def evaluate_case(pred: LabelVolume, truth: LabelVolume) -> CaseMetrics:
    """All four metrics for each of WT, TC and ET."""
    check_same_geometry(pred, truth)
    p_wt, p_tc, p_et = region_masks_from_labels(pred)
    t_wt, t_tc, t_et = region_masks_from_labels(truth)
    return CaseMetrics(
        wt=_region_metrics(p_wt, t_wt),
        tc=_region_metrics(p_tc, t_tc),
        et=_region_metrics(p_et, t_et),
    )


CSV_COLUMNS = ("case_id", "region", "dice", "sensitivity", "specificity", "hd95")


def _fmt(v: float) -> str:
    return "nan" if np.isnan(v) else f"{v:.6f}"


def case_rows(case_id: str, cm: CaseMetrics) -> list[dict[str, str]]:
    """Flatten CaseMetrics into CSV-ready rows."""
    rows = []
    for region, rm in cm.items():
        rows.append(
            {
                "case_id": case_id,
                "region": region.value,
                "dice": _fmt(rm.dice),
                "sensitivity": _fmt(rm.sensitivity),
                "specificity": _fmt(rm.specificity),
                "hd95": _fmt(rm.hd95),
            }
        )
    return rows


def rows_to_csv(rows: Iterable[dict[str, str]]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def rows_to_table(rows: Iterable[dict[str, str]]) -> str:
    """Fixed-width text table for terminal output."""
    rows = list(rows)
    widths = {c: max(len(c), *(len(r[c]) for r in rows)) if rows else len(c) for c in CSV_COLUMNS}
    lines = ["  ".join(c.ljust(widths[c]) for c in CSV_COLUMNS)]
    for r in rows:
        lines.append("  ".join(r[c].ljust(widths[c]) for c in CSV_COLUMNS))
    return "\n".join(lines)
