import numpy as np
import pytest

from sphereseg.errors import DegenerateVolumeError, DimensionMismatchError
from sphereseg.volume import (
    BRATS_LABEL_VALUES,
    LabelVolume,
    MultiChannelVolume,
    Region,
    RegionMask,
    ScalarVolume,
    Spacing,
    check_same_geometry,
    labels_from_region_masks,
    nonzero_mask,
    region_masks_from_labels,
    volume_center_mm,
    voxel_to_mm,
    zscore_normalize,
    zscore_values,
)


def test_spacing_validation():
    s = Spacing(1.0, 1.5, 2.0)
    assert s.voxel_volume_mm3 == pytest.approx(3.0)
    for bad in ((0.0, 1.0, 1.0), (-1.0, 1.0, 1.0), (np.nan, 1.0, 1.0), (np.inf, 1.0, 1.0)):
        with pytest.raises(ValueError):
            Spacing(*bad)


def test_voxel_to_mm_is_spacing_scaled():
    s = Spacing(2.0, 3.0, 0.5)
    assert voxel_to_mm((4, 5, 6), s) == pytest.approx((8.0, 15.0, 3.0))


def test_volume_center_halves_physical_extent():
    # 240 voxels at 1 mm puts the center at 120 mm
    assert volume_center_mm((240, 240, 155), Spacing(1.0, 1.0, 1.0)) == pytest.approx(
        (120.0, 120.0, 77.5)
    )
    assert volume_center_mm((100, 50, 20), Spacing(0.5, 2.0, 3.0)) == pytest.approx(
        (25.0, 50.0, 30.0)
    )


def test_scalar_volume_coerces_and_checks():
    v = ScalarVolume(np.ones((3, 4, 5), dtype=np.float64), Spacing(1, 1, 1))
    assert v.data.dtype == np.float32
    assert v.data.flags.c_contiguous
    assert v.dims == (3, 4, 5)
    with pytest.raises(ValueError):
        ScalarVolume(np.ones((3, 4)), Spacing(1, 1, 1))
    bad = np.ones((2, 2, 2), dtype=np.float32)
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        ScalarVolume(bad, Spacing(1, 1, 1))


def test_label_volume_value_check():
    lab = LabelVolume(np.zeros((2, 2, 2), dtype=np.int64), Spacing(1, 1, 1))
    assert lab.data.dtype == np.uint8
    ok = np.array(BRATS_LABEL_VALUES, dtype=np.uint8).reshape(1, 2, 2)
    LabelVolume(ok, Spacing(1, 1, 1))
    with pytest.raises(ValueError):
        LabelVolume(np.full((2, 2, 2), 3, dtype=np.uint8), Spacing(1, 1, 1))
    with pytest.raises(ValueError):
        LabelVolume(np.full((2, 2, 2), 0.5, dtype=np.float32), Spacing(1, 1, 1))


def test_multichannel_geometry_checks():
    a = ScalarVolume(np.zeros((3, 3, 3), dtype=np.float32), Spacing(1, 1, 1))
    b = ScalarVolume(np.zeros((3, 3, 3), dtype=np.float32), Spacing(1, 1, 1))
    mc = MultiChannelVolume((a, b))
    assert mc.n_channels == 2
    assert mc.dims == (3, 3, 3)
    c = ScalarVolume(np.zeros((3, 3, 4), dtype=np.float32), Spacing(1, 1, 1))
    with pytest.raises(DimensionMismatchError):
        MultiChannelVolume((a, c))
    d = ScalarVolume(np.zeros((3, 3, 3), dtype=np.float32), Spacing(2, 1, 1))
    with pytest.raises(DimensionMismatchError):
        MultiChannelVolume((a, d))
    with pytest.raises(ValueError):
        MultiChannelVolume(())


def test_multichannel_from_arrays():
    arrs = np.stack([np.zeros((2, 3, 4)), np.ones((2, 3, 4))])
    mc = MultiChannelVolume.from_arrays(arrs, Spacing(1, 1, 1))
    assert mc.n_channels == 2
    assert mc.channels[1].data.max() == 1.0


def test_check_same_geometry():
    a = ScalarVolume(np.zeros((3, 3, 3), dtype=np.float32), Spacing(1, 1, 1))
    b = LabelVolume(np.zeros((3, 3, 3), dtype=np.uint8), Spacing(1, 1, 1))
    check_same_geometry(a, b)
    c = LabelVolume(np.zeros((3, 3, 2), dtype=np.uint8), Spacing(1, 1, 1))
    with pytest.raises(DimensionMismatchError):
        check_same_geometry(a, c)


def test_region_masks_definition():
    lab = np.zeros((2, 2, 2), dtype=np.uint8)
    lab[0, 0, 0] = 1
    lab[0, 0, 1] = 2
    lab[0, 1, 0] = 4
    lv = LabelVolume(lab, Spacing(1, 1, 1))
    wt, tc, et = region_masks_from_labels(lv)
    assert wt.region is Region.WT and tc.region is Region.TC and et.region is Region.ET
    # WT is all tumor, TC drops edema, ET is the enhancing voxel only
    assert wt.data.sum() == 3
    assert tc.data.sum() == 2
    assert et.data.sum() == 1
    assert tc.data[0, 0, 0] and tc.data[0, 1, 0] and not tc.data[0, 0, 1]


def test_labels_from_masks_round_trip(rng):
    lab = rng.choice(np.array([0, 1, 2, 4], dtype=np.uint8), size=(6, 6, 6))
    lv = LabelVolume(lab, Spacing(1, 1, 1))
    back = labels_from_region_masks(*region_masks_from_labels(lv))
    assert np.array_equal(back.data, lab)


def test_labels_from_masks_enforces_nesting():
    # an ET voxel outside TC/WT still comes back as label 4
    dims = (3, 3, 3)
    sp = Spacing(1, 1, 1)
    wt = np.zeros(dims, dtype=bool)
    tc = np.zeros(dims, dtype=bool)
    et = np.zeros(dims, dtype=bool)
    et[1, 1, 1] = True
    tc[0, 0, 0] = True
    lab = labels_from_region_masks(
        RegionMask(Region.WT, wt, sp), RegionMask(Region.TC, tc, sp), RegionMask(Region.ET, et, sp)
    )
    assert lab.data[1, 1, 1] == 4
    assert lab.data[0, 0, 0] == 1


def test_nonzero_mask():
    arr = np.zeros((2, 2, 2), dtype=np.float32)
    arr[1, 1, 1] = 0.5
    v = ScalarVolume(arr, Spacing(1, 1, 1))
    m = nonzero_mask(v)
    assert m.sum() == 1 and m[1, 1, 1]


def test_zscore_matches_hand_computation():
    arr = np.zeros((2, 2, 2), dtype=np.float32)
    vals = np.array([1.0, 2.0, 3.0, 6.0])
    arr.flat[:4] = vals
    out = zscore_values(arr)
    mu = vals.mean()
    sd = vals.std()
    assert np.allclose(out.flat[:4], (vals - mu) / sd, atol=1e-6)
    # zeros must survive untouched, bit for bit
    assert (out.flat[4:] == 0.0).all()


def test_zscore_zero_preservation_random(rng):
    arr = rng.normal(2.0, 1.0, size=(8, 8, 8)).astype(np.float32)
    arr[rng.random(arr.shape) < 0.4] = 0.0
    out = zscore_values(arr)
    zeros = arr == 0
    assert (out[zeros] == 0.0).all()
    nz = out[~zeros].astype(np.float64)
    assert abs(nz.mean()) < 1e-6
    assert abs(nz.std() - 1.0) < 1e-5


def test_zscore_degenerate_inputs():
    with pytest.raises(DegenerateVolumeError):
        zscore_values(np.zeros((3, 3, 3), dtype=np.float32))
    single = np.zeros((3, 3, 3), dtype=np.float32)
    single[0, 0, 0] = 5.0
    with pytest.raises(DegenerateVolumeError):
        zscore_values(single)
    flat = np.full((3, 3, 3), 2.5, dtype=np.float32)
    with pytest.raises(DegenerateVolumeError):
        zscore_values(flat)


def test_zscore_normalize_wraps_volume():
    arr = np.zeros((2, 2, 2), dtype=np.float32)
    arr.flat[:4] = [1, 2, 3, 6]
    v = zscore_normalize(ScalarVolume(arr, Spacing(1, 2, 3)))
    assert v.spacing == Spacing(1, 2, 3)
    assert v.data.dtype == np.float32
