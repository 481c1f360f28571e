"""Volume and slice I/O.

Volumes live in a small binary container ("MQCV"): a fixed header of
magic, version, dims and voxel spacing, followed by the raw float32
voxel grid, everything little-endian.  Round trips are bit-exact, which
the determinism guarantees of the rest of the pipeline rely on.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    CountExceedsDepth,
    IndexOutOfRange,
    NonFiniteVoxel,
    TargetTooSmall,
    TrailingData,
    TruncatedFile,
    VersionUnsupported,
    VolumeFormatError,
)

MAGIC = b"MQCV"
VERSION = 1
_HEADER = struct.Struct("<4sH3I3f")  # magic, version, dims, spacing = 30 bytes

ORIENTATIONS = ("axial", "coronal", "sagittal")
# axis of the volume indexed by each orientation: axial cuts along z,
# coronal along y, sagittal along x
_ORIENTATION_AXIS = {"axial": 2, "coronal": 1, "sagittal": 0}


@dataclass
class Volume:
    """3-D scalar voxel grid with spacing metadata.

    ``voxels`` is indexed ``[x, y, z]`` and stored as float32.
    """

    voxels: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(self.voxels, dtype=np.float32)
        if v.ndim != 3:
            raise VolumeFormatError(f"expected a 3-D voxel grid, got ndim={v.ndim}")
        if min(v.shape) < 1:
            raise VolumeFormatError(f"dims must be positive, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise NonFiniteVoxel("voxel grid contains NaN or Inf")
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise VolumeFormatError(f"spacing must be three positive reals, got {self.spacing}")
        self.voxels = v
        self.spacing = tuple(float(s) for s in self.spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.voxels.shape


@dataclass
class SliceImage:
    """2-D float32 image extracted from a volume."""

    pixels: np.ndarray
    orientation: str = "axial"
    source_index: int = 0

    def __post_init__(self) -> None:
        p = np.ascontiguousarray(self.pixels, dtype=np.float32)
        if p.ndim != 2:
            raise VolumeFormatError(f"expected a 2-D image, got ndim={p.ndim}")
        if self.orientation not in ORIENTATIONS:
            raise VolumeFormatError(f"unknown orientation {self.orientation!r}")
        self.pixels = p

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def load_volume(path: str | os.PathLike) -> Volume:
    """Parse an MQCV file.

    Raises BadMagic, VersionUnsupported, TruncatedFile, TrailingData or
    NonFiniteVoxel when the file does not honour the format contract.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise TruncatedFile(f"{path}: shorter than the 4-byte magic")
    if blob[:4] != MAGIC:
        raise BadMagic(f"{path}: magic {blob[:4]!r} != {MAGIC!r}")
    if len(blob) < _HEADER.size:
        raise TruncatedFile(f"{path}: header truncated ({len(blob)} bytes)")
    _, version, nx, ny, nz, sx, sy, sz = _HEADER.unpack_from(blob, 0)
    if version != VERSION:
        raise VersionUnsupported(f"{path}: version {version}, supported {VERSION}")
    if min(nx, ny, nz) < 1:
        raise VolumeFormatError(f"{path}: dims ({nx},{ny},{nz}) must be positive")
    n = nx * ny * nz
    payload = blob[_HEADER.size:]
    if len(payload) < 4 * n:
        raise TruncatedFile(f"{path}: payload {len(payload)} bytes, header promises {4 * n}")
    if len(payload) > 4 * n:
        raise TrailingData(f"{path}: {len(payload) - 4 * n} bytes past the voxel payload")
    vox = np.frombuffer(payload, dtype="<f4").reshape(nx, ny, nz)
    if not np.all(np.isfinite(vox)):
        raise NonFiniteVoxel(f"{path}: voxel payload contains NaN or Inf")
    return Volume(voxels=vox.copy(), spacing=(sx, sy, sz))


def write_volume(volume: Volume, path: str | os.PathLike) -> None:
    """Emit the exact MQCV byte layout; ``load_volume`` inverts it bitwise."""
    nx, ny, nz = volume.dims
    header = _HEADER.pack(MAGIC, VERSION, nx, ny, nz, *volume.spacing)
    vox = np.ascontiguousarray(volume.voxels, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(vox.tobytes())


def extract_slice(volume: Volume, orientation: str, index: int) -> SliceImage:
    """Return the 2-D plane of ``volume`` at ``index`` along the orientation axis."""
    if orientation not in _ORIENTATION_AXIS:
        raise VolumeFormatError(f"unknown orientation {orientation!r}")
    axis = _ORIENTATION_AXIS[orientation]
    extent = volume.dims[axis]
    if not 0 <= index < extent:
        raise IndexOutOfRange(f"{orientation} index {index} outside [0, {extent})")
    plane = np.take(volume.voxels, index, axis=axis)
    return SliceImage(pixels=plane.copy(), orientation=orientation, source_index=index)


def pad_to(image: SliceImage, target_h: int, target_w: int) -> SliceImage:
    """Center ``image`` in a zero background of the target size.

    Odd leftovers go to the bottom/right edge.
    """
    h, w = image.pixels.shape
    if target_h < h or target_w < w:
        raise TargetTooSmall(f"target ({target_h},{target_w}) smaller than image ({h},{w})")
    top = (target_h - h) // 2
    left = (target_w - w) // 2
    out = np.zeros((target_h, target_w), dtype=np.float32)
    out[top:top + h, left:left + w] = image.pixels
    return SliceImage(pixels=out, orientation=image.orientation, source_index=image.source_index)


def normalize_intensity(image: SliceImage) -> SliceImage:
    """Rescale so the 1st/99th percentiles of the nonzero pixels map to 0/1.

    The affine map is clamped to [0, 1].  All-zero images pass through
    unchanged; a constant nonzero image degenerates to its support mask.
    Percentiles are taken over nonzero pixels only so the zero background
    of padded slices does not drag the low anchor down.
    """
    px = image.pixels.astype(np.float64)
    nonzero = px[px != 0.0]
    if nonzero.size == 0:
        return SliceImage(px.astype(np.float32), image.orientation, image.source_index)
    lo, hi = np.percentile(nonzero, [1.0, 99.0])
    if hi - lo < 1e-12:
        out = (px != 0.0).astype(np.float64)
    else:
        out = np.clip((px - lo) / (hi - lo), 0.0, 1.0)
    return SliceImage(out.astype(np.float32), image.orientation, image.source_index)


def center_slices(
    volume: Volume,
    count: int,
    size: tuple[int, int] | None = None,
) -> list[SliceImage]:
    """The ``count`` axial slices centred on index ``nz // 2``, prepared for encoding.

    Each slice is padded to ``size`` (when given) and intensity-normalized.
    The window is ``nz//2 - count//2 .. nz//2 + ceil(count/2) - 1``.
    """
    nz = volume.dims[2]
    if count < 1:
        raise CountExceedsDepth(f"count must be >= 1, got {count}")
    if count > nz:
        raise CountExceedsDepth(f"count {count} exceeds volume depth {nz}")
    center = nz // 2
    start = center - count // 2
    out = []
    for index in range(start, start + count):
        img = extract_slice(volume, "axial", index)
        if size is not None:
            img = pad_to(img, size[0], size[1])
        out.append(normalize_intensity(img))
    return out


def prepare_slice(image: SliceImage, size: tuple[int, int]) -> SliceImage:
    """Pad to the training dimension, then normalize: the encoder's input contract."""
    return normalize_intensity(pad_to(image, size[0], size[1]))
