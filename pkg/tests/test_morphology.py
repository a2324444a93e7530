from collections import deque

import numpy as np
import pytest

from sphereseg.morphology import (
    bounding_box_mm,
    connected_components,
    dilate,
    erode,
    fill_holes,
    object_centroids,
    opening,
    remove_small_objects,
)
from sphereseg.volume import Spacing


def components_oracle(mask):
    """BFS 26-connectivity labeling, ids by first raster-order encounter."""
    labels = np.zeros(mask.shape, dtype=np.int32)
    nxt = 0
    offs = [
        (di, dj, dk)
        for di in (-1, 0, 1)
        for dj in (-1, 0, 1)
        for dk in (-1, 0, 1)
        if (di, dj, dk) != (0, 0, 0)
    ]
    for idx in np.ndindex(*mask.shape):
        if mask[idx] and labels[idx] == 0:
            nxt += 1
            q = deque([idx])
            labels[idx] = nxt
            while q:
                i, j, k = q.popleft()
                for di, dj, dk in offs:
                    n = (i + di, j + dj, k + dk)
                    if all(0 <= n[d] < mask.shape[d] for d in range(3)):
                        if mask[n] and labels[n] == 0:
                            labels[n] = nxt
                            q.append(n)
    return labels, nxt


def test_components_match_bfs_oracle(rng):
    for _ in range(20):
        mask = rng.random((9, 8, 7)) < 0.25
        got = connected_components(mask, Spacing(1, 1, 1))
        want, count = components_oracle(mask)
        assert got.count == count
        assert np.array_equal(got.labels, want)


def test_component_ids_follow_raster_order():
    mask = np.zeros((5, 5, 5), dtype=bool)
    mask[4, 4, 4] = True  # raster-last
    mask[0, 0, 0] = True  # raster-first
    mask[2, 2, 2] = True
    got = connected_components(mask, Spacing(1, 1, 1))
    assert got.labels[0, 0, 0] == 1
    assert got.labels[2, 2, 2] == 2
    assert got.labels[4, 4, 4] == 3


def test_component_volumes():
    mask = np.zeros((6, 6, 6), dtype=bool)
    mask[0:2, 0:2, 0:2] = True
    mask[4:6, 4, 4] = True
    got = connected_components(mask, Spacing(2.0, 1.0, 1.0))
    assert got.count == 2
    assert got.voxel_counts.tolist() == [8, 2]
    assert got.volumes_mm3.tolist() == [16.0, 4.0]


def test_diagonal_voxels_are_one_component():
    mask = np.zeros((4, 4, 4), dtype=bool)
    mask[1, 1, 1] = True
    mask[2, 2, 2] = True
    assert connected_components(mask, Spacing(1, 1, 1)).count == 1


def test_erode_dilate_cross_neighbourhood():
    mask = np.zeros((7, 7, 7), dtype=bool)
    mask[2:5, 2:5, 2:5] = True
    er = erode(mask, 1)
    # a 3x3x3 cube erodes to its center under the 6-connected element
    assert er.sum() == 1 and er[3, 3, 3]
    di = dilate(er, 1)
    assert di.sum() == 7  # center plus 6 face neighbours
    assert np.array_equal(erode(mask, 0), mask)
    assert np.array_equal(dilate(mask, 0), mask)


def test_opening_removes_thin_structures():
    mask = np.zeros((9, 9, 9), dtype=bool)
    mask[2:7, 2:7, 2:7] = True
    mask[4, 4, 7:9] = True  # one-voxel spike on the cube face
    mask[0, 0:5, 0] = True  # isolated one-voxel line
    opened = opening(mask, 1)
    # the spike tip goes; its base regrows from the eroded cube
    assert not opened[4, 4, 8]
    assert opened[4, 4, 4]
    # nothing of the free-standing line survives
    assert opened[0, :, 0].sum() == 0


def test_remove_small_objects_strict_threshold():
    sp = Spacing(1, 1, 1)
    mask = np.zeros((12, 12, 12), dtype=bool)
    mask[1, 1:6, 1:7] = True  # 30 voxels -> 30 mm3, exactly at threshold
    mask[8, 8, 0:5] = True  # 5 voxels
    out = remove_small_objects(mask, 30.0, sp)
    assert out[1, 3, 3]
    assert not out[8, 8, 2]
    # strictly-below removal: a 29 voxel object goes, 30 stays
    m29 = np.zeros((8, 8, 8), dtype=bool)
    m29[1:2, 1:6, 1:7] = True
    m29[1, 5, 6] = False  # 29 voxels
    assert remove_small_objects(m29, 30.0, sp).sum() == 0


def test_remove_small_uses_physical_volume():
    sp = Spacing(2.0, 2.0, 2.0)  # 8 mm3 per voxel
    mask = np.zeros((6, 6, 6), dtype=bool)
    mask[2, 2, 2:6] = True  # 4 voxels -> 32 mm3
    assert remove_small_objects(mask, 30.0, sp).sum() == 4
    assert remove_small_objects(mask, 33.0, sp).sum() == 0


def test_fill_holes_interior_only():
    mask = np.zeros((9, 9, 9), dtype=bool)
    mask[1:8, 1:8, 1:8] = True
    mask[4, 4, 4] = False  # 1 mm3 cavity
    out = fill_holes(mask, Spacing(1, 1, 1))
    assert out[4, 4, 4]
    # background outside the object is untouched
    assert not out[0, 0, 0]


def test_fill_holes_skips_border_touching_and_large():
    sp = Spacing(1, 1, 1)
    tube = np.ones((5, 5, 5), dtype=bool)
    tube[2, 2, :] = False  # tunnel reaching both faces
    out = fill_holes(tube, sp)
    assert not out[2, 2, 0] and not out[2, 2, 2]
    big = np.ones((12, 12, 12), dtype=bool)
    big[3:9, 3:9, 3:9] = False  # 216 mm3 cavity, over the 30 mm3 default
    assert fill_holes(big, sp)[5, 5, 5] == False  # noqa: E712
    assert fill_holes(big, sp, max_hole_mm3=300.0)[5, 5, 5]


def test_centroids_sorted_by_volume():
    sp = Spacing(1, 1, 1)
    mask = np.zeros((16, 16, 16), dtype=bool)
    mask[1:3, 1:3, 1:3] = True  # 8 voxels at (1.5, 1.5, 1.5)
    mask[10:14, 10:14, 10:14] = True  # 64 voxels at (11.5, ...)
    labeling = connected_components(mask, sp)
    cents = object_centroids(labeling, sp)
    assert cents.shape == (2, 3)
    assert np.allclose(cents[0], (11.5, 11.5, 11.5))
    assert np.allclose(cents[1], (1.5, 1.5, 1.5))


def test_centroid_order_stable_for_ties():
    sp = Spacing(1, 1, 1)
    mask = np.zeros((10, 10, 10), dtype=bool)
    mask[0, 0, 0:2] = True
    mask[5, 5, 5:7] = True  # same volume, later raster id
    cents = object_centroids(connected_components(mask, sp), sp)
    assert np.allclose(cents[0], (0.0, 0.0, 0.5))
    assert np.allclose(cents[1], (5.0, 5.0, 5.5))


def test_bounding_box_extents():
    sp = Spacing(1.0, 2.0, 0.5)
    mask = np.zeros((10, 10, 10), dtype=bool)
    mask[2:5, 3, 4:9] = True
    assert bounding_box_mm(mask, sp) == pytest.approx((3.0, 2.0, 2.5))
    with pytest.raises(ValueError):
        bounding_box_mm(np.zeros((3, 3, 3), dtype=bool), sp)


def test_erode_empty_and_full():
    sp = Spacing(1, 1, 1)
    empty = np.zeros((4, 4, 4), dtype=bool)
    assert erode(empty, 2).sum() == 0
    assert dilate(empty, 2).sum() == 0
    full = np.ones((4, 4, 4), dtype=bool)
    # volume borders erode inward (outside counts as background)
    assert erode(full, 1).sum() == 8
