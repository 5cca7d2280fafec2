"""Core 3D grid types and MetaImage (.mhd/.mha) I/O.

Memory layout: every grid is a C-order numpy array of shape ``(H, W, D)``,
so element ``(x, y, z)`` is ``data[x, y, z]`` and z varies fastest in
memory. On disk the MetaIO convention applies instead: the first DimSize
component varies fastest, so payloads are serialized in Fortran order with
``DimSize = "H W D"``. Files are written little-endian and uncompressed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateRangeError,
    MetaImageError,
    MissingPayloadError,
    NonFiniteDataError,
    PayloadSizeError,
    UnsupportedElementTypeError,
    ValidationError,
)

BG = 0
FG = 1
UNLABELED = 2

Dims = tuple[int, int, int]
Spacing = tuple[float, float, float]

_ELEMENT_TYPES = {
    "MET_UCHAR": np.dtype("u1"),
    "MET_SHORT": np.dtype("<i2"),
    "MET_USHORT": np.dtype("<u2"),
    "MET_FLOAT": np.dtype("<f4"),
}


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


def _check_spacing(spacing) -> Spacing:
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != 3:
        raise ValidationError(f"spacing must have 3 components, got {len(spacing)}")
    if not all(np.isfinite(s) and s > 0 for s in spacing):
        raise ValidationError(f"spacing components must be positive and finite, got {spacing}")
    return spacing


@dataclass(frozen=True)
class ScalarVolume3D:
    """Scalar intensity grid, float32, with physical voxel spacing in mm."""

    data: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ValidationError(f"volume data must be 3D, got ndim={arr.ndim}")
        object.__setattr__(self, "data", _freeze(arr.astype(np.float32, copy=False)))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def dims(self) -> Dims:
        return self.data.shape


@dataclass(frozen=True)
class TernaryLabelVolume:
    """Per-voxel labels: 0 background, 1 foreground, 2 unlabeled."""

    labels: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 3:
            raise ValidationError(f"label data must be 3D, got ndim={arr.ndim}")
        arr = arr.astype(np.uint8, copy=False)
        if arr.size and arr.max() > UNLABELED:
            raise ValidationError("labels must be 0 (bg), 1 (fg) or 2 (unlabeled)")
        object.__setattr__(self, "labels", _freeze(arr))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def dims(self) -> Dims:
        return self.labels.shape


@dataclass(frozen=True)
class ProbabilityVolume:
    """Per-voxel foreground probability in [0, 1].

    Stored as float32, except that float64 input is kept at full
    precision so that analytic gradients can be validated numerically.
    """

    p_fg: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.asarray(self.p_fg)
        if arr.ndim != 3:
            raise ValidationError(f"probability data must be 3D, got ndim={arr.ndim}")
        if arr.dtype != np.float64:
            arr = arr.astype(np.float32, copy=False)
        if arr.size and (not np.isfinite(arr).all() or arr.min() < 0 or arr.max() > 1):
            raise ValidationError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "p_fg", _freeze(arr))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def dims(self) -> Dims:
        return self.p_fg.shape


def _parse_header(raw: bytes, path: str) -> tuple[dict, int]:
    """Parse ASCII 'Key = Value' lines; return (fields, payload offset)."""
    fields: dict[str, str] = {}
    pos = 0
    while pos < len(raw):
        end = raw.find(b"\n", pos)
        if end < 0:
            end = len(raw)
        try:
            line = raw[pos:end].decode("ascii")
        except UnicodeDecodeError as exc:
            raise MetaImageError(f"{path}: non-ASCII header line") from exc
        pos = end + 1
        if not line.strip():
            continue
        if "=" not in line:
            raise MetaImageError(f"{path}: malformed header line {line!r}")
        key, value = line.split("=", 1)
        fields[key.strip()] = value.strip()
        if key.strip() == "ElementDataFile":
            return fields, pos
    raise MetaImageError(f"{path}: header has no ElementDataFile entry")


def _header_dims(fields: dict, path: str) -> Dims:
    if fields.get("NDims") != "3":
        raise MetaImageError(f"{path}: NDims must be 3, got {fields.get('NDims')!r}")
    try:
        dims = tuple(int(v) for v in fields["DimSize"].split())
    except (KeyError, ValueError) as exc:
        raise MetaImageError(f"{path}: bad or missing DimSize") from exc
    if len(dims) != 3 or any(d <= 0 for d in dims):
        raise MetaImageError(f"{path}: DimSize must be 3 positive integers, got {dims}")
    return dims


def _load_array(path: str) -> tuple[np.ndarray, Spacing, np.dtype]:
    try:
        raw = open(path, "rb").read()
    except FileNotFoundError:
        raise MetaImageError(f"volume file {path!r} not found") from None
    except IsADirectoryError:
        raise MetaImageError(f"volume path {path!r} is a directory") from None
    fields, offset = _parse_header(raw, path)
    dims = _header_dims(fields, path)

    element_type = fields.get("ElementType", "")
    if element_type not in _ELEMENT_TYPES:
        raise UnsupportedElementTypeError(f"{path}: unsupported ElementType {element_type!r}")
    dtype = _ELEMENT_TYPES[element_type]
    msb = fields.get("ElementByteOrderMSB", fields.get("BinaryDataByteOrderMSB", "False"))
    if msb == "True":
        dtype = dtype.newbyteorder(">")

    spacing = fields.get("ElementSpacing", "1 1 1").split()
    if len(spacing) != 3:
        raise MetaImageError(f"{path}: ElementSpacing must have 3 components")
    spacing = tuple(float(s) for s in spacing)

    data_file = fields["ElementDataFile"]
    if data_file == "LOCAL":
        payload = raw[offset:]
    else:
        data_path = os.path.join(os.path.dirname(path) or ".", data_file)
        if not os.path.exists(data_path):
            raise MissingPayloadError(f"{path}: payload file {data_file!r} not found")
        payload = open(data_path, "rb").read()

    count = dims[0] * dims[1] * dims[2]
    if len(payload) != count * dtype.itemsize:
        raise PayloadSizeError(
            f"{path}: payload is {len(payload)} bytes, expected {count * dtype.itemsize} "
            f"for DimSize {dims} and {element_type}"
        )
    # First DimSize component varies fastest in the file, hence Fortran order.
    arr = np.frombuffer(payload, dtype=dtype).reshape(dims, order="F")
    return np.ascontiguousarray(arr), _check_spacing(spacing), dtype


def load_volume(path: str) -> ScalarVolume3D:
    """Load an intensity volume; integer payloads become float32 without rescaling."""
    arr, spacing, dtype = _load_array(path)
    data = arr.astype(np.float32)
    if dtype.kind == "f" and not np.isfinite(data).all():
        raise NonFiniteDataError(f"{path}: payload contains NaN or Inf")
    return ScalarVolume3D(data, spacing)


def load_label_volume(path: str) -> TernaryLabelVolume:
    """Load a label volume; payload values must be 0, 1 or 2."""
    arr, spacing, _ = _load_array(path)
    if arr.size and (np.mod(arr, 1) != 0).any():
        raise ValidationError(f"{path}: label payload has non-integer values")
    arr = arr.astype(np.int64)
    if arr.size and (arr.min() < 0 or arr.max() > UNLABELED):
        raise ValidationError(f"{path}: label values must be 0, 1 or 2")
    return TernaryLabelVolume(arr.astype(np.uint8), spacing)


def load_probability_volume(path: str) -> ProbabilityVolume:
    """Load a probability volume; payload values must lie in [0, 1]."""
    arr, spacing, _ = _load_array(path)
    if not np.isfinite(arr).all():
        raise NonFiniteDataError(f"{path}: payload contains NaN or Inf")
    return ProbabilityVolume(arr.astype(np.float32), spacing)


def save_volume(volume, path: str) -> None:
    """Write a volume as MetaImage, little-endian and uncompressed.

    Intensities and probabilities are written as MET_FLOAT, labels as
    MET_UCHAR. ``path`` may end in .mhd (payload in a sibling .raw file)
    or .mha (payload inline).
    """
    if isinstance(volume, ScalarVolume3D):
        arr, element_type = volume.data, "MET_FLOAT"
    elif isinstance(volume, TernaryLabelVolume):
        arr, element_type = volume.labels, "MET_UCHAR"
    elif isinstance(volume, ProbabilityVolume):
        arr, element_type = volume.p_fg, "MET_FLOAT"
    else:
        raise ValidationError(f"cannot save object of type {type(volume).__name__}")
    if arr.dtype.kind == "f" and not np.isfinite(arr).all():
        raise NonFiniteDataError("volume contains NaN or Inf")

    base, ext = os.path.splitext(path)
    ext = ext.lower()
    if ext not in (".mhd", ".mha"):
        raise ValidationError(f"output must end in .mhd or .mha, got {path!r}")
    local = ext == ".mha"
    data_file = "LOCAL" if local else os.path.basename(base) + ".raw"

    dims = arr.shape
    spacing = volume.spacing
    header = (
        "ObjectType = Image\n"
        "NDims = 3\n"
        "BinaryData = True\n"
        "BinaryDataByteOrderMSB = False\n"
        "ElementByteOrderMSB = False\n"
        f"DimSize = {dims[0]} {dims[1]} {dims[2]}\n"
        f"ElementSpacing = {spacing[0]:.10g} {spacing[1]:.10g} {spacing[2]:.10g}\n"
        f"ElementType = {element_type}\n"
        f"ElementDataFile = {data_file}\n"
    )
    payload = np.ascontiguousarray(arr).astype(_ELEMENT_TYPES[element_type]).tobytes(order="F")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if local:
            fh.write(payload)
    if not local:
        with open(os.path.join(os.path.dirname(path) or ".", data_file), "wb") as fh:
            fh.write(payload)


def normalize_intensity(volume: ScalarVolume3D) -> ScalarVolume3D:
    """Min-max normalize to [0, 1]; idempotent; rejects constant volumes."""
    data = volume.data
    if not np.isfinite(data).all():
        raise NonFiniteDataError("cannot normalize a volume with NaN or Inf")
    lo = float(data.min())
    hi = float(data.max())
    if hi == lo:
        raise DegenerateRangeError(f"constant volume (all voxels = {lo}) cannot be normalized")
    out = (data.astype(np.float64) - lo) / (hi - lo)
    return ScalarVolume3D(out.astype(np.float32), volume.spacing)


def _resolve_bounds(cur: int, target: int, policy: str) -> tuple[slice, tuple[int, int]]:
    """Source slice and (before, after) padding for one axis."""
    if target >= cur:
        extra = target - cur
        before = extra // 2 if policy == "lower" else (extra + 1) // 2
        return slice(0, cur), (before, extra - before)
    extra = cur - target
    start = extra // 2 if policy == "lower" else (extra + 1) // 2
    return slice(start, start + target), (0, 0)


def crop_or_pad(volume, target_dims, center_policy: str = "lower"):
    """Center-crop or zero-pad each axis to ``target_dims``; returns the same type.

    ``center_policy`` decides where the extra voxel goes when a crop or pad
    is asymmetric: "lower" puts it after the data, "upper" before.
    Labels pad with background, intensities and probabilities with 0.
    """
    if center_policy not in ("lower", "upper"):
        raise ValidationError(f"center_policy must be 'lower' or 'upper', got {center_policy!r}")
    target_dims = tuple(int(d) for d in target_dims)
    if len(target_dims) != 3 or any(d <= 0 for d in target_dims):
        raise ValidationError(f"target dims must be 3 positive integers, got {target_dims}")

    if isinstance(volume, ScalarVolume3D):
        arr, rebuild = volume.data, lambda a: ScalarVolume3D(a, volume.spacing)
    elif isinstance(volume, TernaryLabelVolume):
        arr, rebuild = volume.labels, lambda a: TernaryLabelVolume(a, volume.spacing)
    elif isinstance(volume, ProbabilityVolume):
        arr, rebuild = volume.p_fg, lambda a: ProbabilityVolume(a, volume.spacing)
    else:
        raise ValidationError(f"cannot crop or pad object of type {type(volume).__name__}")

    slices, pads = zip(*(
        _resolve_bounds(c, t, center_policy) for c, t in zip(arr.shape, target_dims)
    ))
    out = np.pad(arr[slices], pads, mode="constant", constant_values=arr.dtype.type(BG))
    return rebuild(out)
