"""Minimal single-file NIfTI-1 reader and writer (.nii, optionally gzipped)."""

from __future__ import annotations

import gzip
from pathlib import Path

import numpy as np

from lotqsm.errors import CorruptionError, DomainError, UnsupportedFeatureError
from lotqsm.volume import ScalarVolume, Unit

HEADER_SIZE = 348
VOX_OFFSET = 352  # header + 4-byte extension flag

HEADER_DTYPE = np.dtype(
    [
        ("sizeof_hdr", "i4"),
        ("data_type", "S10"),
        ("db_name", "S18"),
        ("extents", "i4"),
        ("session_error", "i2"),
        ("regular", "S1"),
        ("dim_info", "u1"),
        ("dim", "i2", (8,)),
        ("intent_p1", "f4"),
        ("intent_p2", "f4"),
        ("intent_p3", "f4"),
        ("intent_code", "i2"),
        ("datatype", "i2"),
        ("bitpix", "i2"),
        ("slice_start", "i2"),
        ("pixdim", "f4", (8,)),
        ("vox_offset", "f4"),
        ("scl_slope", "f4"),
        ("scl_inter", "f4"),
        ("slice_end", "i2"),
        ("slice_code", "u1"),
        ("xyzt_units", "u1"),
        ("cal_max", "f4"),
        ("cal_min", "f4"),
        ("slice_duration", "f4"),
        ("toffset", "f4"),
        ("glmax", "i4"),
        ("glmin", "i4"),
        ("descrip", "S80"),
        ("aux_file", "S24"),
        ("qform_code", "i2"),
        ("sform_code", "i2"),
        ("quatern_b", "f4"),
        ("quatern_c", "f4"),
        ("quatern_d", "f4"),
        ("qoffset_x", "f4"),
        ("qoffset_y", "f4"),
        ("qoffset_z", "f4"),
        ("srow_x", "f4", (4,)),
        ("srow_y", "f4", (4,)),
        ("srow_z", "f4", (4,)),
        ("intent_name", "S16"),
        ("magic", "S4"),
    ]
)
assert HEADER_DTYPE.itemsize == HEADER_SIZE

# NIfTI datatype code -> numpy dtype (byte order applied at read time)
DATATYPES = {2: "u1", 4: "i2", 16: "f4", 64: "f8"}
CODES = {"uint8": 2, "int16": 4, "float32": 16, "float64": 64}

XYZT_MM = 2


def _open(path: Path, mode: str):
    if path.suffix == ".gz":
        # fixed mtime keeps compressed output byte-reproducible
        return gzip.GzipFile(filename=str(path), mode=mode, mtime=0)
    return open(path, mode)


def _check_suffix(path: Path) -> None:
    name = path.name.lower()
    if not (name.endswith(".nii") or name.endswith(".nii.gz")):
        raise UnsupportedFeatureError(f"{path}: only single-file .nii / .nii.gz images are supported")


def nifti_read(path) -> tuple[ScalarVolume, dict]:
    """Read a single-file NIfTI-1 image.

    Stored values are scaled by ``scl_slope``/``scl_inter`` when the slope is
    non-zero. The byte order is taken from whichever interpretation makes
    ``sizeof_hdr`` equal 348 and ``dim[0]`` lie in 1..7.
    """
    path = Path(path)
    _check_suffix(path)
    with _open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_SIZE:
        raise CorruptionError(f"{path}: file shorter than the {HEADER_SIZE}-byte header")
    hdr = None
    for order in "<>":
        candidate = np.frombuffer(raw[:HEADER_SIZE], dtype=HEADER_DTYPE.newbyteorder(order))[0]
        if candidate["sizeof_hdr"] == HEADER_SIZE and 1 <= candidate["dim"][0] <= 7:
            hdr, byte_order = candidate, order
            break
    if hdr is None:
        raise CorruptionError(f"{path}: sizeof_hdr is not {HEADER_SIZE} in either byte order")
    magic = bytes(hdr["magic"]).rstrip(b"\0")
    if magic == b"ni1":
        raise UnsupportedFeatureError(f"{path}: two-file (.hdr/.img) NIfTI is not supported")
    if magic != b"n+1":
        raise CorruptionError(f"{path}: bad magic {magic!r}")
    code = int(hdr["datatype"])
    if code not in DATATYPES:
        raise UnsupportedFeatureError(f"{path}: datatype code {code} is not supported")
    ndim = int(hdr["dim"][0])
    shape = [int(n) for n in hdr["dim"][1 : ndim + 1]]
    if ndim > 3 and any(n != 1 for n in shape[3:]):
        raise UnsupportedFeatureError(f"{path}: only 3D images are supported, got dims {shape}")
    shape = (shape + [1, 1, 1])[:3]
    dtype = np.dtype(DATATYPES[code]).newbyteorder(byte_order)
    offset = int(hdr["vox_offset"])
    count = int(np.prod(shape))
    if len(raw) < offset + count * dtype.itemsize:
        raise CorruptionError(
            f"{path}: payload truncated, expected {count * dtype.itemsize} bytes at offset {offset}"
        )
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(shape, order="F")
    data = data.astype(dtype.newbyteorder("="))
    slope, inter = float(hdr["scl_slope"]), float(hdr["scl_inter"])
    if slope != 0 and np.isfinite(slope) and (slope != 1 or inter != 0):
        data = data.astype(np.float64) * slope + inter
    spacing = tuple(float(p) if p > 0 else 1.0 for p in hdr["pixdim"][1:4])
    meta = {
        "datatype": {v: k for k, v in CODES.items()}[code],
        "scl_slope": slope,
        "scl_inter": inter,
        "descrip": bytes(hdr["descrip"]).rstrip(b"\0").decode("latin-1"),
        "byte_order": "little" if byte_order == "<" else "big",
        "intent_name": bytes(hdr["intent_name"]).rstrip(b"\0").decode("latin-1"),
    }
    unit = Unit.DIMENSIONLESS
    tag = meta["descrip"].partition("unit=")[2].split(" ")[0]
    if tag in {u.value for u in Unit}:
        unit = Unit(tag)
    return ScalarVolume(data, spacing, unit), meta


def make_header(shape, spacing, datatype: str, scl_slope: float = 1.0, scl_inter: float = 0.0,
                descrip: str = "") -> np.ndarray:
    hdr = np.zeros((), dtype=HEADER_DTYPE.newbyteorder("<"))
    hdr["sizeof_hdr"] = HEADER_SIZE
    hdr["regular"] = b"r"
    hdr["dim"] = [3, *shape, 1, 1, 1, 1]
    hdr["datatype"] = CODES[datatype]
    hdr["bitpix"] = np.dtype(DATATYPES[CODES[datatype]]).itemsize * 8
    hdr["pixdim"] = [1.0, *spacing, 1.0, 1.0, 1.0, 1.0]
    hdr["vox_offset"] = VOX_OFFSET
    hdr["scl_slope"] = scl_slope
    hdr["scl_inter"] = scl_inter
    hdr["xyzt_units"] = XYZT_MM
    hdr["descrip"] = descrip.encode("latin-1")[:79]
    hdr["sform_code"] = 1
    hdr["srow_x"] = [spacing[0], 0, 0, 0]
    hdr["srow_y"] = [0, spacing[1], 0, 0]
    hdr["srow_z"] = [0, 0, spacing[2], 0]
    hdr["magic"] = b"n+1\0"
    return hdr


def nifti_write(vol, path, datatype: str = "float32", spacing=None, descrip: str = "") -> None:
    """Write ``vol`` (ScalarVolume or 3D array) as a single-file NIfTI-1 image.

    Integer datatypes require integral values that fit the type.
    """
    path = Path(path)
    _check_suffix(path)
    if datatype not in CODES:
        raise UnsupportedFeatureError(f"datatype {datatype!r} not supported; use one of {sorted(CODES)}")
    if isinstance(vol, ScalarVolume):
        data, spacing = vol.data, vol.spacing
        descrip = f"unit={vol.unit.value} {descrip}".strip()
    else:
        data = np.asarray(vol)
        spacing = tuple(spacing or (1.0, 1.0, 1.0))
    if data.dtype == bool:
        data = data.astype(np.uint8)
    if data.ndim != 3:
        raise DomainError(f"NIfTI writer expects a 3D array, got shape {data.shape}")
    if not np.all(np.isfinite(data)):
        raise DomainError(f"{path}: refusing to write NaN/Inf voxels")
    target = np.dtype(DATATYPES[CODES[datatype]])
    if target.kind in "iu":
        info = np.iinfo(target)
        if np.any(data != np.round(data)) or data.min() < info.min or data.max() > info.max:
            raise DomainError(f"{path}: values are not representable as {datatype}")
    payload = np.asarray(data, dtype=target.newbyteorder("<")).tobytes(order="F")
    hdr = make_header(data.shape, spacing, datatype, descrip=descrip)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with _open(path, "wb") as fh:
            fh.write(hdr.tobytes())
            fh.write(b"\0" * (VOX_OFFSET - HEADER_SIZE))
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"failed writing NIfTI image {path}: {exc}") from exc
