"""Spherical-coordinate resampling of volumetric images.

A Cartesian volume is resampled onto a regular (r, theta, phi) grid
about an origin point o:

    r     = ||p - o||                               distance in mm
    theta = atan2(py - oy, px - ox)                 azimuth, in (-pi, pi]
    phi   = asin((pz - oz) / r)                     elevation, in [-pi/2, pi/2]

with theta = phi = 0 at r = 0 by convention. The radial axis is scaled
by an adaptive maximum radius r_max, which is what makes the transform
useful as a pre-processing step: rescaled or re-gridded inputs map to
(nearly) the same spherical image, and rotating the input about the
z-axis through the origin becomes a circular shift along the theta
axis. Different origin choices yield different spherical views of the
same volume, which an ensemble can exploit.

Grid conventions for index (a, b, c) into an (n_r, n_theta, n_phi) array:

    r_a     = a * r_max / (n_r - 1)                 a in [0, n_r)
    theta_b = -pi + b * 2*pi / n_theta              b in [0, n_theta), periodic
    phi_c   = -pi/2 + c * pi / (n_phi - 1)          c in [0, n_phi)

The theta axis deliberately excludes the duplicate +pi endpoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVolumeError
from .volume import LabelVolume, Spacing

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Origin:
    """Transform origin in mm."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        if not np.isfinite([self.x, self.y, self.z]).all():
            raise ValueError(f"origin must be finite, got {self}")
        # plain floats so origins serialize to JSON without casts downstream
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "z", float(self.z))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


@dataclass(frozen=True)
class SphericalGrid:
    """Regular sampling grid in (r, theta, phi) about a fixed origin."""

    n_r: int
    n_theta: int
    n_phi: int
    r_max: float
    origin: Origin

    def __post_init__(self) -> None:
        if self.n_r < 2 or self.n_phi < 2:
            raise ValueError("n_r and n_phi must be >= 2")
        if self.n_theta < 4:
            raise ValueError("n_theta must be >= 4")
        if not (np.isfinite(self.r_max) and self.r_max > 0):
            raise ValueError(f"r_max must be finite and > 0, got {self.r_max}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_r, self.n_theta, self.n_phi)

    @property
    def r_step(self) -> float:
        return self.r_max / (self.n_r - 1)

    @property
    def theta_step(self) -> float:
        return TWO_PI / self.n_theta

    @property
    def phi_step(self) -> float:
        return np.pi / (self.n_phi - 1)

    @property
    def radii(self) -> np.ndarray:
        return np.linspace(0.0, self.r_max, self.n_r)

    @property
    def azimuths(self) -> np.ndarray:
        return -np.pi + np.arange(self.n_theta) * self.theta_step

    @property
    def elevations(self) -> np.ndarray:
        return np.linspace(-np.pi / 2.0, np.pi / 2.0, self.n_phi)


@dataclass(frozen=True)
class SphericalVolume:
    """Data sampled on a SphericalGrid; axis order is (r, theta, phi)."""

    grid: SphericalGrid
    data: np.ndarray
    is_labels: bool = False

    def __post_init__(self) -> None:
        data = np.ascontiguousarray(self.data)
        if data.shape != self.grid.shape:
            raise ValueError(f"data shape {data.shape} != grid shape {self.grid.shape}")
        if self.is_labels:
            bad = np.setdiff1d(np.unique(data), (0, 1, 2, 4))
            if bad.size:
                raise ValueError(f"invalid label values {bad.tolist()}")
            data = data.astype(np.uint8, copy=False)
        else:
            data = data.astype(np.float32, copy=False)
        object.__setattr__(self, "data", data)


def cart_to_sph(points, origin: Origin):
    """Map mm point(s) to (r, theta, phi) about origin.

    Accepts a single (x, y, z) triple or an (..., 3) array. Returns
    floats for a single point, arrays otherwise.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    d = pts - origin.as_array()
    r = np.sqrt((d * d).sum(axis=-1))
    dx, dy, dz = d[..., 0], d[..., 1], d[..., 2]
    theta = np.arctan2(dy, dx)
    # atan2 yields [-pi, pi]; fold the open end so theta is in (-pi, pi]
    theta = np.where(theta == -np.pi, np.pi, theta)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(r > 0, dz / np.where(r > 0, r, 1.0), 0.0)
    phi = np.arcsin(np.clip(ratio, -1.0, 1.0))
    at_center = r == 0
    theta = np.where(at_center, 0.0, theta)
    phi = np.where(at_center, 0.0, phi)
    if single:
        return float(r), float(theta), float(phi)
    return r, theta, phi


def sph_to_cart(r, theta, phi, origin: Origin):
    """Inverse of cart_to_sph; returns mm point(s) of shape (..., 3)."""
    r = np.asarray(r, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    cp = np.cos(phi)
    x = origin.x + r * cp * np.cos(theta)
    y = origin.y + r * cp * np.sin(theta)
    z = origin.z + r * np.sin(phi)
    return np.stack(np.broadcast_arrays(x, y, z), axis=-1)


def compute_r_max(volume, origin: Origin, mode: str = "surface") -> float:
    """Adaptive maximum radius for a spherical grid.

    surface: farthest distance from the origin to any nonzero voxel
             (the brain surface for skull-stripped data). Raises
             DegenerateVolumeError on an all-zero volume.
    corners: farthest distance from the origin to the eight corners of
             the voxel-center bounding box; defined for any volume.
    """
    spacing = volume.spacing
    if mode == "surface":
        idx = np.nonzero(volume.data)
        if idx[0].size == 0:
            raise DegenerateVolumeError("surface mode needs at least one nonzero voxel")
        dx = idx[0] * spacing.sx - origin.x
        dy = idx[1] * spacing.sy - origin.y
        dz = idx[2] * spacing.sz - origin.z
        return float(np.sqrt(dx * dx + dy * dy + dz * dz).max())
    if mode == "corners":
        nx, ny, nz = volume.data.shape
        ext = ((nx - 1) * spacing.sx, (ny - 1) * spacing.sy, (nz - 1) * spacing.sz)
        best = 0.0
        for cx in (0.0, ext[0]):
            for cy in (0.0, ext[1]):
                for cz in (0.0, ext[2]):
                    d = np.sqrt(
                        (cx - origin.x) ** 2 + (cy - origin.y) ** 2 + (cz - origin.z) ** 2
                    )
                    best = max(best, float(d))
        return best
    raise ValueError(f"unknown r_max mode {mode!r}")


def _fractional_indices(grid: SphericalGrid, spacing: Spacing, dims: tuple[int, int, int]):
    """Voxel-space sample coordinates of every grid node, plus validity mask."""
    r = grid.radii[:, None, None]
    t = grid.azimuths[None, :, None]
    p = grid.elevations[None, None, :]
    cp = np.cos(p)
    fi = (grid.origin.x + r * cp * np.cos(t)) / spacing.sx
    fj = (grid.origin.y + r * cp * np.sin(t)) / spacing.sy
    fk = (grid.origin.z + r * np.sin(p)) / spacing.sz
    nx, ny, nz = dims
    valid = (
        (fi >= 0.0) & (fi <= nx - 1)
        & (fj >= 0.0) & (fj <= ny - 1)
        & (fk >= 0.0) & (fk <= nz - 1)
    )
    return fi, fj, fk, valid


def _sample_nearest(data: np.ndarray, fi, fj, fk, valid) -> np.ndarray:
    nx, ny, nz = data.shape
    i = np.clip(np.floor(fi + 0.5).astype(np.intp), 0, nx - 1)
    j = np.clip(np.floor(fj + 0.5).astype(np.intp), 0, ny - 1)
    k = np.clip(np.floor(fk + 0.5).astype(np.intp), 0, nz - 1)
    out = data[i, j, k]
    return np.where(valid, out, np.zeros((), dtype=data.dtype))


def _sample_trilinear(data: np.ndarray, fi, fj, fk, valid) -> np.ndarray:
    nx, ny, nz = data.shape
    if min(nx, ny, nz) < 2:
        raise ValueError("trilinear interpolation needs at least 2 voxels per axis")
    fi = np.clip(fi, 0.0, nx - 1)
    fj = np.clip(fj, 0.0, ny - 1)
    fk = np.clip(fk, 0.0, nz - 1)
    i0 = np.minimum(np.floor(fi).astype(np.intp), nx - 2)
    j0 = np.minimum(np.floor(fj).astype(np.intp), ny - 2)
    k0 = np.minimum(np.floor(fk).astype(np.intp), nz - 2)
    ti = fi - i0
    tj = fj - j0
    tk = fk - k0
    flat = data.reshape(-1).astype(np.float64)
    base = (i0 * ny + j0) * nz + k0
    out = np.zeros(fi.shape, dtype=np.float64)
    for di in (0, 1):
        wi = ti if di else 1.0 - ti
        for dj in (0, 1):
            wj = tj if dj else 1.0 - tj
            for dk in (0, 1):
                wk = tk if dk else 1.0 - tk
                out += (wi * wj * wk) * flat[base + (di * ny + dj) * nz + dk]
    out[~valid] = 0.0
    return out.astype(np.float32)


def forward_transform(volume, grid: SphericalGrid, interp: str = "trilinear") -> SphericalVolume:
    """Resample a Cartesian volume onto a spherical grid.

    Scalar volumes default to trilinear interpolation. Label volumes
    always sample nearest-neighbour, whatever was asked, so label
    values survive untouched. Samples falling outside the volume read
    as zero.
    """
    if interp not in ("trilinear", "nearest"):
        raise ValueError(f"unknown interpolation {interp!r}")
    is_labels = isinstance(volume, LabelVolume)
    if is_labels:
        interp = "nearest"
    fi, fj, fk, valid = _fractional_indices(grid, volume.spacing, volume.data.shape)
    if interp == "nearest":
        out = _sample_nearest(volume.data, fi, fj, fk, valid)
    else:
        out = _sample_trilinear(volume.data, fi, fj, fk, valid)
    return SphericalVolume(grid, out, is_labels=is_labels)


def inverse_project_labels(
    svol: SphericalVolume, target_dims: tuple[int, int, int], target_spacing: Spacing
) -> LabelVolume:
    """Project spherical-domain labels back onto a Cartesian voxel grid.

    Each Cartesian voxel center maps to (r, theta, phi) about the grid
    origin and takes the nearest spherical sample; voxels with
    r > r_max read as 0. The theta axis wraps periodically.
    """
    if not svol.is_labels:
        raise ValueError("inverse projection is defined for label volumes")
    g = svol.grid
    nx, ny, nz = target_dims
    dx = (np.arange(nx) * target_spacing.sx - g.origin.x)[:, None, None]
    dy = (np.arange(ny) * target_spacing.sy - g.origin.y)[None, :, None]
    dz = (np.arange(nz) * target_spacing.sz - g.origin.z)[None, None, :]
    r = np.sqrt(dx * dx + dy * dy + dz * dz)
    theta = np.arctan2(dy, dx)  # (nx, ny, 1); value at r=0 is atan2(0,0)=0
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(r > 0, dz / np.where(r > 0, r, 1.0), 0.0)
    phi = np.arcsin(np.clip(ratio, -1.0, 1.0))

    a = np.clip(np.floor(r / g.r_step + 0.5).astype(np.intp), 0, g.n_r - 1)
    b = np.floor((theta + np.pi) / g.theta_step + 0.5).astype(np.intp) % g.n_theta
    c = np.clip(np.floor((phi + np.pi / 2.0) / g.phi_step + 0.5).astype(np.intp), 0, g.n_phi - 1)
    out = svol.data[a, b, c]
    out[r > g.r_max] = 0
    return LabelVolume(out, target_spacing)


# ---------------------------------------------------------------------------
# 2D polar variant, used for quick visual demos of the same idea.


def compute_r_max_2d(img: np.ndarray, origin_xy: tuple[float, float], mode: str = "surface") -> float:
    """2D analogue of compute_r_max with unit pixel spacing."""
    ox, oy = origin_xy
    if mode == "surface":
        idx = np.nonzero(img)
        if idx[0].size == 0:
            raise DegenerateVolumeError("surface mode needs at least one nonzero pixel")
        d = np.sqrt((idx[0] - ox) ** 2 + (idx[1] - oy) ** 2)
        return float(d.max())
    if mode == "corners":
        h, w = img.shape
        best = 0.0
        for cx in (0.0, h - 1.0):
            for cy in (0.0, w - 1.0):
                best = max(best, float(np.hypot(cx - ox, cy - oy)))
        return best
    raise ValueError(f"unknown r_max mode {mode!r}")


def polar_transform_2d(
    img: np.ndarray,
    origin_xy: tuple[float, float],
    n_r: int,
    n_theta: int,
    r_max: float | None = None,
) -> np.ndarray:
    """Resample a 2D image onto a polar (r, theta) grid about origin_xy.

    output[a, b] is the bilinear sample at origin + r_a * (cos t_b, sin t_b)
    with r_a = a * r_max / (n_r - 1) and t_b = -pi + b * 2*pi / n_theta.
    When r_max is None it adapts to the nonzero extent of the image,
    falling back to the image corners for an empty image. Pixels are
    treated as unit-spaced; out-of-bounds samples read as zero.
    """
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 2:
        raise ValueError(f"expected 2D image, got {img.ndim}D")
    if min(img.shape) < 2:
        raise ValueError("bilinear sampling needs at least 2 pixels per axis")
    if n_r < 2 or n_theta < 4:
        raise ValueError("need n_r >= 2 and n_theta >= 4")
    if r_max is None:
        try:
            r_max = compute_r_max_2d(img, origin_xy, "surface")
        except DegenerateVolumeError:
            r_max = compute_r_max_2d(img, origin_xy, "corners")
    if r_max <= 0:
        raise ValueError(f"r_max must be > 0, got {r_max}")
    radii = np.linspace(0.0, r_max, n_r)[:, None]
    thetas = (-np.pi + np.arange(n_theta) * (TWO_PI / n_theta))[None, :]
    fx = origin_xy[0] + radii * np.cos(thetas)
    fy = origin_xy[1] + radii * np.sin(thetas)
    h, w = img.shape
    valid = (fx >= 0) & (fx <= h - 1) & (fy >= 0) & (fy <= w - 1)
    fx = np.clip(fx, 0, h - 1)
    fy = np.clip(fy, 0, w - 1)
    x0 = np.minimum(np.floor(fx).astype(np.intp), h - 2)
    y0 = np.minimum(np.floor(fy).astype(np.intp), w - 2)
    tx = fx - x0
    ty = fy - y0
    flat = img.reshape(-1).astype(np.float64)
    base = x0 * w + y0
    out = (
        (1 - tx) * (1 - ty) * flat[base]
        + (1 - tx) * ty * flat[base + 1]
        + tx * (1 - ty) * flat[base + w]
        + tx * ty * flat[base + w + 1]
    )
    out[~valid] = 0.0
    return out.astype(np.float32)
