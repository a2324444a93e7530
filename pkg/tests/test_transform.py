import math

import numpy as np
import pytest

from sphereseg.errors import DegenerateVolumeError
from sphereseg.transform import (
    Origin,
    SphericalGrid,
    SphericalVolume,
    cart_to_sph,
    compute_r_max,
    forward_transform,
    inverse_project_labels,
    polar_transform_2d,
    sph_to_cart,
)
from sphereseg.volume import LabelVolume, ScalarVolume, Spacing


def sph_oracle(p, o):
    """Independent scalar-math spherical conversion."""
    dx, dy, dz = p[0] - o[0], p[1] - o[1], p[2] - o[2]
    r = math.sqrt(dx * dx + dy * dy + dz * dz)
    if r == 0.0:
        return 0.0, 0.0, 0.0
    theta = math.atan2(dy, dx)
    if theta <= -math.pi:
        theta = math.pi
    phi = math.asin(max(-1.0, min(1.0, dz / r)))
    return r, theta, phi


def test_axis_points():
    o = (0.0, 0.0, 0.0)
    r, t, p = cart_to_sph((1, 0, 0), Origin(*o))
    assert (r, t, p) == pytest.approx((1.0, 0.0, 0.0))
    r, t, p = cart_to_sph((0, 2, 0), Origin(*o))
    assert (r, t, p) == pytest.approx((2.0, math.pi / 2, 0.0))
    r, t, p = cart_to_sph((0, 0, 3), Origin(*o))
    assert (r, t, p) == pytest.approx((3.0, 0.0, math.pi / 2))
    r, t, p = cart_to_sph((0, 0, -3), Origin(*o))
    assert (r, t, p) == pytest.approx((3.0, 0.0, -math.pi / 2))
    # the negative-x axis folds onto +pi, never -pi
    r, t, p = cart_to_sph((-1, 0, 0), Origin(*o))
    assert t == pytest.approx(math.pi)
    assert t > 0


def test_origin_maps_to_zero_angles():
    assert cart_to_sph((5.0, 6.0, 7.0), Origin(5.0, 6.0, 7.0)) == (0.0, 0.0, 0.0)


def test_against_scalar_oracle(rng):
    o = Origin(3.0, -2.0, 7.5)
    pts = rng.uniform(-50, 50, size=(500, 3))
    for p in pts:
        got = cart_to_sph(tuple(p), o)
        want = sph_oracle(p, (o.x, o.y, o.z))
        assert got == pytest.approx(want, abs=1e-12)


def test_round_trip_identity(rng):
    o = Origin(-4.0, 11.0, 0.5)
    pts = rng.uniform(-100, 100, size=(2000, 3))
    for p in pts:
        r, t, ph = cart_to_sph(tuple(p), o)
        back = sph_to_cart(r, t, ph, o)
        assert np.max(np.abs(np.array(back) - p)) < 1e-9


def test_grid_geometry():
    g = SphericalGrid(128, 256, 128, 100.0, Origin(0, 0, 0))
    assert g.shape == (128, 256, 128)
    assert g.r_step == pytest.approx(100.0 / 127)
    assert g.theta_step == pytest.approx(2 * math.pi / 256)
    assert g.phi_step == pytest.approx(math.pi / 127)
    r = g.radii
    assert r[0] == 0.0 and r[-1] == pytest.approx(100.0)
    t = g.azimuths
    # periodic axis: starts at -pi, stops one step short of +pi
    assert t[0] == pytest.approx(-math.pi)
    assert t[-1] == pytest.approx(math.pi - g.theta_step)
    p = g.elevations
    assert p[0] == pytest.approx(-math.pi / 2) and p[-1] == pytest.approx(math.pi / 2)


def test_grid_validation():
    with pytest.raises(ValueError):
        SphericalGrid(1, 256, 128, 10.0, Origin(0, 0, 0))
    with pytest.raises(ValueError):
        SphericalGrid(128, 3, 128, 10.0, Origin(0, 0, 0))
    with pytest.raises(ValueError):
        SphericalGrid(128, 256, 1, 10.0, Origin(0, 0, 0))
    with pytest.raises(ValueError):
        SphericalGrid(128, 256, 128, 0.0, Origin(0, 0, 0))


def test_r_max_surface_hand_case():
    arr = np.zeros((10, 10, 10), dtype=np.float32)
    arr[9, 9, 9] = 1.0
    arr[2, 0, 0] = 1.0
    v = ScalarVolume(arr, Spacing(1, 1, 1))
    o = Origin(0.0, 0.0, 0.0)
    # farthest nonzero voxel center is (9,9,9)
    assert compute_r_max(v, o, "surface") == pytest.approx(math.sqrt(3 * 81))
    # corners mode ignores content and uses the bounding box of voxel centers
    assert compute_r_max(v, o, "corners") == pytest.approx(math.sqrt(3 * 81))
    o2 = Origin(4.5, 4.5, 4.5)
    assert compute_r_max(v, o2, "surface") == pytest.approx(math.sqrt(3 * 4.5**2))


def test_r_max_surface_empty_raises():
    v = ScalarVolume(np.zeros((5, 5, 5), dtype=np.float32), Spacing(1, 1, 1))
    with pytest.raises(DegenerateVolumeError):
        compute_r_max(v, Origin(0, 0, 0), "surface")
    # corners mode still works
    assert compute_r_max(v, Origin(0, 0, 0), "corners") > 0


def test_r_max_respects_spacing():
    arr = np.zeros((4, 4, 4), dtype=np.float32)
    arr[3, 0, 0] = 1.0
    v = ScalarVolume(arr, Spacing(2.0, 1.0, 1.0))
    assert compute_r_max(v, Origin(0, 0, 0), "surface") == pytest.approx(6.0)


def forward_oracle(vol, grid, interp):
    """Per-sample python loop mirror of the vectorized resampler."""
    nx, ny, nz = vol.dims
    sx, sy, sz = vol.spacing.sx, vol.spacing.sy, vol.spacing.sz
    out = np.zeros(grid.shape, dtype=np.float64)
    for a in range(grid.n_r):
        r = a * grid.r_step
        for b in range(grid.n_theta):
            t = -math.pi + b * grid.theta_step
            for c in range(grid.n_phi):
                p = -math.pi / 2 + c * grid.phi_step
                x = grid.origin.x + r * math.cos(p) * math.cos(t)
                y = grid.origin.y + r * math.cos(p) * math.sin(t)
                z = grid.origin.z + r * math.sin(p)
                fi, fj, fk = x / sx, y / sy, z / sz
                if not (0 <= fi <= nx - 1 and 0 <= fj <= ny - 1 and 0 <= fk <= nz - 1):
                    continue
                if interp == "nearest":
                    i = int(math.floor(fi + 0.5))
                    j = int(math.floor(fj + 0.5))
                    k = int(math.floor(fk + 0.5))
                    out[a, b, c] = vol.data[min(i, nx - 1), min(j, ny - 1), min(k, nz - 1)]
                else:
                    i0 = min(int(math.floor(fi)), nx - 2)
                    j0 = min(int(math.floor(fj)), ny - 2)
                    k0 = min(int(math.floor(fk)), nz - 2)
                    wx, wy, wz = fi - i0, fj - j0, fk - k0
                    acc = 0.0
                    for di in (0, 1):
                        for dj in (0, 1):
                            for dk in (0, 1):
                                w = (
                                    (wx if di else 1 - wx)
                                    * (wy if dj else 1 - wy)
                                    * (wz if dk else 1 - wz)
                                )
                                acc += w * float(vol.data[i0 + di, j0 + dj, k0 + dk])
                    out[a, b, c] = acc
    return out


@pytest.mark.parametrize("interp", ["nearest", "trilinear"])
def test_forward_matches_loop_oracle(interp, rng):
    arr = rng.random((7, 6, 8)).astype(np.float32)
    vol = ScalarVolume(arr, Spacing(1.0, 1.5, 0.8))
    grid = SphericalGrid(9, 12, 7, 6.0, Origin(3.0, 4.0, 3.0))
    got = forward_transform(vol, grid, interp)
    want = forward_oracle(vol, grid, interp)
    assert got.data.shape == grid.shape
    assert np.allclose(got.data, want, atol=1e-5)


def test_trilinear_exact_on_affine_field():
    # trilinear interpolation reproduces affine functions exactly
    nx, ny, nz = 20, 22, 18
    i, j, k = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    arr = (2.0 * i + 0.5 * j - 1.5 * k + 3.0).astype(np.float32)
    vol = ScalarVolume(arr, Spacing(1, 1, 1))
    o = Origin(9.5, 10.5, 8.5)
    grid = SphericalGrid(16, 24, 16, 6.0, o)
    out = forward_transform(vol, grid, "trilinear")
    r = grid.radii[:, None, None]
    t = grid.azimuths[None, :, None]
    p = grid.elevations[None, None, :]
    x = o.x + r * np.cos(p) * np.cos(t)
    y = o.y + r * np.cos(p) * np.sin(t)
    z = o.z + r * np.sin(p)
    expected = 2.0 * x + 0.5 * y - 1.5 * z + 3.0
    assert np.allclose(out.data, expected, atol=1e-3)


def test_forward_out_of_bounds_is_zero():
    vol = ScalarVolume(np.ones((5, 5, 5), dtype=np.float32), Spacing(1, 1, 1))
    grid = SphericalGrid(10, 8, 6, 50.0, Origin(2, 2, 2))
    out = forward_transform(vol, grid, "trilinear")
    # outermost shell is far outside the volume
    assert (out.data[-1] == 0).all()
    assert out.data[0].max() == 1.0


def test_labels_force_nearest():
    lab = np.zeros((6, 6, 6), dtype=np.uint8)
    lab[2:5, 2:5, 2:5] = 4
    vol = LabelVolume(lab, Spacing(1, 1, 1))
    grid = SphericalGrid(8, 8, 8, 4.0, Origin(3, 3, 3))
    out = forward_transform(vol, grid, "trilinear")
    assert out.is_labels
    assert out.data.dtype == np.uint8
    assert set(np.unique(out.data)) <= {0, 4}


def inverse_oracle(svol, dims, spacing):
    g = svol.grid
    out = np.zeros(dims, dtype=np.uint8)
    for i in range(dims[0]):
        for j in range(dims[1]):
            for k in range(dims[2]):
                x, y, z = i * spacing.sx, j * spacing.sy, k * spacing.sz
                r, t, p = sph_oracle((x, y, z), (g.origin.x, g.origin.y, g.origin.z))
                if r > g.r_max:
                    continue
                a = int(math.floor(r / g.r_step + 0.5))
                b = int(math.floor((t + math.pi) / g.theta_step + 0.5)) % g.n_theta
                c = int(math.floor((p + math.pi / 2) / g.phi_step + 0.5))
                a = min(max(a, 0), g.n_r - 1)
                c = min(max(c, 0), g.n_phi - 1)
                out[i, j, k] = svol.data[a, b, c]
    return out


def test_inverse_matches_loop_oracle(rng):
    grid = SphericalGrid(10, 16, 9, 8.0, Origin(5.0, 4.0, 6.0))
    data = rng.choice(np.array([0, 1, 2, 4], dtype=np.uint8), size=grid.shape)
    svol = SphericalVolume(grid, data, is_labels=True)
    dims = (12, 11, 13)
    sp = Spacing(1.0, 1.1, 0.9)
    got = inverse_project_labels(svol, dims, sp)
    want = inverse_oracle(svol, dims, sp)
    assert np.array_equal(got.data, want)


def test_sphere_label_round_trip_dice(small_case):
    channels, truth = small_case
    grid_origin = Origin(*(np.array(truth.dims) * truth.spacing.as_array() / 2.0))
    r_max = compute_r_max(channels.channels[0], grid_origin, "surface")
    grid = SphericalGrid(128, 256, 128, r_max, grid_origin)
    sph = forward_transform(truth, grid, "nearest")
    back = inverse_project_labels(sph, truth.dims, truth.spacing)
    a = back.data > 0
    b = truth.data > 0
    dice = 2.0 * np.count_nonzero(a & b) / (np.count_nonzero(a) + np.count_nonzero(b))
    assert dice >= 0.98


def test_spherical_volume_shape_check():
    grid = SphericalGrid(4, 8, 4, 5.0, Origin(0, 0, 0))
    with pytest.raises(ValueError):
        SphericalVolume(grid, np.zeros((4, 8, 5), dtype=np.float32), is_labels=False)
    with pytest.raises(ValueError):
        SphericalVolume(grid, np.full((4, 8, 4), 3, dtype=np.uint8), is_labels=True)


def test_polar_2d_disc_rows_and_rotation(rng):
    # a centered disc is azimuth-invariant; rotation rolls the theta axis
    n = 65
    yy, xx = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    c = (n - 1) / 2
    img = ((xx - c) ** 2 + (yy - c) ** 2 <= 20**2).astype(np.float32)
    pol = polar_transform_2d(img, (c, c), 32, 64)
    # azimuth columns agree for a rotation-invariant image away from the
    # jagged discretized rim (the outermost couple of radius rows)
    assert np.allclose(pol[:-2], pol[:-2, :1], atol=1e-6)
    assert pol[0, 0] == pytest.approx(1.0)
    # adaptive radius reaches exactly the farthest lit pixel
    assert pol.shape == (32, 64)
