"""SVOL: a minimal little-endian binary container for volume exchange.

Layout (all little-endian):

    offset  size  field
    0       4     magic "SVOL"
    4       4     version, u32 (currently 1)
    8       1     dtype, u8: 0 = float32 scalar, 1 = uint8 labels
    9       1     ndim, u8: 3 or 4
    10      4*n   dims, u32 each; 4D scalar stacks are (channels, nx, ny, nz)
    ...     24    spacing, f64 * 3, mm per voxel
    ...     *     raw data, row-major (C order)

Spherical-domain data reuses the 3D layout with dims (n_r, n_theta,
n_phi) and spacing (1, 1, 1); grid geometry travels in a sidecar.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    FormatVersionError,
    TruncatedFileError,
    UnsupportedFormatError,
)
from .volume import LabelVolume, MultiChannelVolume, ScalarVolume, Spacing

MAGIC = b"SVOL"
VERSION = 1
DTYPE_FLOAT32 = 0
DTYPE_LABELS = 1


def write_svol(path, volume) -> None:
    """Serialize a ScalarVolume, LabelVolume or MultiChannelVolume."""
    if isinstance(volume, ScalarVolume):
        dtype, dims = DTYPE_FLOAT32, volume.dims
        payload = volume.data.astype("<f4").tobytes(order="C")
        spacing = volume.spacing
    elif isinstance(volume, LabelVolume):
        dtype, dims = DTYPE_LABELS, volume.dims
        payload = volume.data.astype(np.uint8).tobytes(order="C")
        spacing = volume.spacing
    elif isinstance(volume, MultiChannelVolume):
        dtype = DTYPE_FLOAT32
        dims = (volume.n_channels,) + volume.dims
        stack = np.stack([ch.data for ch in volume.channels], axis=0)
        payload = stack.astype("<f4").tobytes(order="C")
        spacing = volume.spacing
    else:
        raise TypeError(f"cannot serialize {type(volume).__name__}")
    header = MAGIC
    header += struct.pack("<I", VERSION)
    header += struct.pack("<BB", dtype, len(dims))
    header += struct.pack(f"<{len(dims)}I", *dims)
    header += struct.pack("<3d", spacing.sx, spacing.sy, spacing.sz)
    Path(path).write_bytes(header + payload)


def read_svol(path):
    """Read an SVOL file back into the matching volume type."""
    raw = Path(path).read_bytes()
    if len(raw) < 10:
        raise TruncatedFileError(f"{path}: shorter than the fixed header")
    if raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise FormatVersionError(f"{path}: unsupported version {version}, expected {VERSION}")
    dtype, ndim = struct.unpack_from("<BB", raw, 8)
    if dtype not in (DTYPE_FLOAT32, DTYPE_LABELS):
        raise UnsupportedFormatError(f"{path}: unknown dtype code {dtype}")
    if ndim not in (3, 4):
        raise UnsupportedFormatError(f"{path}: unsupported ndim {ndim}")
    offset = 10
    need = offset + 4 * ndim + 24
    if len(raw) < need:
        raise TruncatedFileError(f"{path}: header ends early")
    dims = struct.unpack_from(f"<{ndim}I", raw, offset)
    offset += 4 * ndim
    sx, sy, sz = struct.unpack_from("<3d", raw, offset)
    offset += 24
    spacing = Spacing(sx, sy, sz)
    count = int(np.prod(dims))
    np_dtype = np.dtype("<f4") if dtype == DTYPE_FLOAT32 else np.dtype(np.uint8)
    expected = count * np_dtype.itemsize
    actual = len(raw) - offset
    if actual != expected:
        raise TruncatedFileError(
            f"{path}: payload length {actual} does not match dims {dims} ({expected} bytes)"
        )
    data = np.frombuffer(raw, dtype=np_dtype, count=count, offset=offset).reshape(dims)
    if dtype == DTYPE_LABELS:
        if ndim != 3:
            raise UnsupportedFormatError(f"{path}: label volumes must be 3D")
        return LabelVolume(data.copy(), spacing)
    if ndim == 3:
        return ScalarVolume(data.astype(np.float32), spacing)
    return MultiChannelVolume.from_arrays(
        [data[c].astype(np.float32) for c in range(dims[0])], spacing
    )
