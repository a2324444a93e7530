"""Reader/writer for a pragmatic subset of single-file NIfTI-1.

Supported: magic "n+1\\0" (.nii, optionally gzipped), datatypes uint8,
int16, float32 and float64, 3D images, 4D channel stacks, pixdim
spacing and scl_slope/scl_inter intensity rescale. The two-file "ni1"
form is rejected. Orientation matrices are NOT applied: data is used
in stored voxel order, and a non-axis-aligned sform triggers a loud
warning so nobody mistakes this for a resampling reader.

NIfTI stores arrays with the first index varying fastest (Fortran
order); this module converts to/from the package's C-ordered arrays.
"""

from __future__ import annotations

import gzip
import logging
import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    TruncatedFileError,
    UnsupportedFormatError,
)
from .volume import BRATS_LABEL_VALUES, LabelVolume, MultiChannelVolume, ScalarVolume, Spacing

log = logging.getLogger(__name__)

HEADER_SIZE = 348
MAGIC_SINGLE = b"n+1\x00"
MAGIC_PAIR = b"ni1\x00"

_DTYPES = {2: np.uint8, 4: np.int16, 16: np.float32, 64: np.float64}
_DTYPE_CODES = {np.dtype(np.uint8): 2, np.dtype(np.int16): 4,
                np.dtype(np.float32): 16, np.dtype(np.float64): 64}


def _open_for_read(path):
    with open(path, "rb") as f:
        head = f.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_header(raw: bytes, path) -> dict:
    if len(raw) < HEADER_SIZE:
        raise TruncatedFileError(f"{path}: file shorter than the 348-byte header")
    magic = raw[344:348]
    if magic == MAGIC_PAIR:
        raise UnsupportedFormatError(f"{path}: two-file NIfTI (ni1) is not supported")
    if magic != MAGIC_SINGLE:
        raise BadMagicError(f"{path}: bad NIfTI magic {magic!r}")
    for bo in ("<", ">"):
        (sizeof_hdr,) = struct.unpack_from(bo + "i", raw, 0)
        if sizeof_hdr == HEADER_SIZE:
            break
    else:
        raise BadMagicError(f"{path}: sizeof_hdr is not 348 in either byte order")
    dim = struct.unpack_from(bo + "8h", raw, 40)
    (datatype,) = struct.unpack_from(bo + "h", raw, 70)
    pixdim = struct.unpack_from(bo + "8f", raw, 76)
    (vox_offset,) = struct.unpack_from(bo + "f", raw, 108)
    (scl_slope,) = struct.unpack_from(bo + "f", raw, 112)
    (scl_inter,) = struct.unpack_from(bo + "f", raw, 116)
    (sform_code,) = struct.unpack_from(bo + "h", raw, 254)
    srow = np.array(
        [
            struct.unpack_from(bo + "4f", raw, 280),
            struct.unpack_from(bo + "4f", raw, 296),
            struct.unpack_from(bo + "4f", raw, 312),
        ],
        dtype=np.float64,
    )
    return {
        "byteorder": bo,
        "dim": dim,
        "datatype": datatype,
        "pixdim": pixdim,
        "vox_offset": int(vox_offset),
        "scl_slope": float(scl_slope),
        "scl_inter": float(scl_inter),
        "sform_code": int(sform_code),
        "srow": srow,
    }


def _warn_on_oblique_sform(hdr: dict, path) -> None:
    if hdr["sform_code"] <= 0:
        return
    rot = np.abs(hdr["srow"][:, :3])
    col_max = rot.max(axis=0)
    aligned = True
    for col in range(3):
        if col_max[col] == 0:
            continue
        off = rot[:, col].sum() - rot[:, col].max()
        if off > 1e-4 * max(col_max[col], 1.0):
            aligned = False
    if not aligned:
        log.warning(
            "%s: sform is not axis-aligned; orientation is IGNORED and data "
            "is used in stored voxel order",
            path,
        )


def _read_raw(path):
    with _open_for_read(path) as f:
        raw = f.read()
    hdr = _read_header(raw, path)
    if hdr["datatype"] not in _DTYPES:
        raise UnsupportedFormatError(
            f"{path}: datatype {hdr['datatype']} not supported "
            f"(expected one of {sorted(_DTYPES)})"
        )
    _warn_on_oblique_sform(hdr, path)
    dim = hdr["dim"]
    ndim = dim[0]
    if ndim == 4 and dim[4] == 1:
        ndim = 3
    if ndim not in (3, 4):
        raise UnsupportedFormatError(f"{path}: {ndim}D data not supported")
    shape = tuple(int(d) for d in dim[1 : 1 + ndim])
    if any(d < 1 for d in shape):
        raise UnsupportedFormatError(f"{path}: non-positive dims {shape}")
    np_dtype = np.dtype(_DTYPES[hdr["datatype"]]).newbyteorder(hdr["byteorder"])
    count = int(np.prod(shape))
    offset = hdr["vox_offset"]
    if len(raw) < offset + count * np_dtype.itemsize:
        raise TruncatedFileError(
            f"{path}: expected {count * np_dtype.itemsize} data bytes at offset {offset}"
        )
    flat = np.frombuffer(raw, dtype=np_dtype, count=count, offset=offset)
    data = flat.reshape(shape, order="F")
    sx, sy, sz = (float(abs(p)) or 1.0 for p in hdr["pixdim"][1:4])
    return data, Spacing(sx, sy, sz), hdr


def _apply_rescale(data: np.ndarray, hdr: dict) -> np.ndarray:
    slope, inter = hdr["scl_slope"], hdr["scl_inter"]
    if slope != 0.0 and (slope, inter) != (1.0, 0.0):
        return data.astype(np.float32) * np.float32(slope) + np.float32(inter)
    return data


def read_nifti_image(path) -> MultiChannelVolume:
    """Read an intensity image; 3D becomes a single-channel stack."""
    data, spacing, hdr = _read_raw(path)
    data = _apply_rescale(data, hdr)
    if data.ndim == 3:
        arrays = [data]
    else:
        arrays = [data[..., c] for c in range(data.shape[3])]
    return MultiChannelVolume.from_arrays(
        [np.ascontiguousarray(a, dtype=np.float32) for a in arrays], spacing
    )


def read_nifti_labels(path) -> LabelVolume:
    """Read a 3D label volume, remapping legacy label 3 to 4 with a warning."""
    data, spacing, hdr = _read_raw(path)
    if data.ndim != 3:
        raise UnsupportedFormatError(f"{path}: label volumes must be 3D")
    slope, inter = hdr["scl_slope"], hdr["scl_inter"]
    if slope not in (0.0, 1.0) or inter != 0.0:
        raise UnsupportedFormatError(f"{path}: labels must not carry an intensity rescale")
    if not np.issubdtype(data.dtype, np.integer):
        as_int = data.astype(np.int64)
        if not np.array_equal(as_int, data):
            raise UnsupportedFormatError(f"{path}: non-integral label values")
        data = as_int
    data = np.ascontiguousarray(data)
    if (data == 3).any():
        n = int(np.count_nonzero(data == 3))
        log.warning("%s: remapping %d voxels with legacy label 3 to 4", path, n)
        data = data.copy()
        data[data == 3] = 4
    bad = np.setdiff1d(np.unique(data), BRATS_LABEL_VALUES)
    if bad.size:
        raise UnsupportedFormatError(
            f"{path}: label values {bad.tolist()} outside {BRATS_LABEL_VALUES}"
        )
    return LabelVolume(data.astype(np.uint8), spacing)


def _build_header(shape: tuple[int, ...], dtype: np.dtype, spacing: Spacing) -> bytes:
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    dim = [len(shape)] + list(shape) + [1] * (7 - len(shape))
    struct.pack_into("<8h", hdr, 40, *dim)
    struct.pack_into("<h", hdr, 70, _DTYPE_CODES[np.dtype(dtype)])
    struct.pack_into("<h", hdr, 72, np.dtype(dtype).itemsize * 8)
    pixdim = [1.0, spacing.sx, spacing.sy, spacing.sz, 1.0, 1.0, 1.0, 1.0]
    struct.pack_into("<8f", hdr, 76, *pixdim)
    struct.pack_into("<f", hdr, 108, 352.0)  # vox_offset
    struct.pack_into("<f", hdr, 112, 1.0)  # scl_slope: explicit identity
    struct.pack_into("<f", hdr, 116, 0.0)  # scl_inter
    struct.pack_into("<b", hdr, 123, 2)  # xyzt_units: mm
    struct.pack_into("<4s", hdr, 344, MAGIC_SINGLE)
    return bytes(hdr) + b"\x00\x00\x00\x00"  # pad to vox_offset 352


def write_nifti(path, volume) -> None:
    """Write a volume as single-file NIfTI-1 (.nii, or .nii.gz by extension).

    Gzip members are written with mtime=0 so identical volumes produce
    identical bytes.
    """
    if isinstance(volume, ScalarVolume):
        data = volume.data
        shape: tuple[int, ...] = volume.dims
        spacing = volume.spacing
    elif isinstance(volume, LabelVolume):
        data = volume.data
        shape = volume.dims
        spacing = volume.spacing
    elif isinstance(volume, MultiChannelVolume):
        if volume.n_channels == 1:
            # canonical 3D form, so read-write round trips stay bit-identical
            data = volume.channels[0].data
            shape = volume.dims
        else:
            data = np.stack([ch.data for ch in volume.channels], axis=-1)
            shape = volume.dims + (volume.n_channels,)
        spacing = volume.spacing
    else:
        raise TypeError(f"cannot serialize {type(volume).__name__}")
    payload = _build_header(shape, data.dtype, spacing) + data.tobytes(order="F")
    path = Path(path)
    if path.name.endswith(".gz"):
        # fixed mtime and no embedded name keep the bytes reproducible
        with open(path, "wb") as f:
            with gzip.GzipFile(filename="", fileobj=f, mode="wb", mtime=0) as gz:
                gz.write(payload)
    else:
        path.write_bytes(payload)
