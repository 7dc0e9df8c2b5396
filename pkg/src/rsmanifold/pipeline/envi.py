"""Minimal ENVI raster I/O: ASCII ``.hdr`` header plus a raw binary file.

Supported: data type 2 (signed 16-bit) and 4 (32-bit float), interleave
bsq/bil/bip, either byte order. Cubes are returned band-sequential as
float64; the label raster is a single-band 16-bit file.
"""
from __future__ import annotations

import os
import re
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..errors import DataError, DomainError
from .cube import HsiCube, LabelRaster

__all__ = ["read_envi", "write_envi", "read_labels", "write_labels", "read_header",
           "default_data_path"]

PathLike = Union[str, os.PathLike]

_DTYPES = {2: "i2", 4: "f4"}
_INTERLEAVES = ("bsq", "bil", "bip")
_REQUIRED = ("samples", "lines", "bands", "data type", "interleave", "byte order")
# axis order of the stored array, in terms of (band, line, sample)
_LAYOUT = {"bsq": (0, 1, 2), "bil": (1, 0, 2), "bip": (1, 2, 0)}


def default_data_path(header_path: PathLike) -> Path:
    """``scene.hdr`` -> ``scene.img``; any other name gets ``.img`` appended."""
    p = Path(header_path)
    return p.with_suffix(".img") if p.suffix.lower() == ".hdr" else p.with_name(p.name + ".img")


def _check_path(path: Optional[PathLike], what: str) -> Path:
    if path is None or str(path) == "":
        raise DataError(f"empty {what} path")
    return Path(path)


def read_header(header_path: PathLike) -> dict:
    """Parse ``key = value`` lines; brace-delimited values may span lines."""
    path = _check_path(header_path, "header")
    try:
        text = path.read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read header {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ENVI":
        raise DataError(f"{path} is not an ENVI header (missing 'ENVI' magic line)")
    fields = {}
    body = "\n".join(lines[1:])
    for match in re.finditer(r"^\s*([^=\n]+?)\s*=\s*(\{[^}]*\}|[^\n]*)", body, re.MULTILINE):
        key, value = match.group(1).strip().lower(), match.group(2).strip()
        if value.startswith("{"):
            value = value[1:-1].strip()
        fields[key] = value
    return fields


def _int_field(fields: dict, key: str, path: Path) -> int:
    try:
        return int(fields[key])
    except KeyError:
        raise DataError(f"{path}: missing header key '{key}'") from None
    except ValueError:
        raise DataError(f"{path}: header key '{key}' is not an integer: {fields[key]!r}") from None


def _read_raw(header_path: PathLike, data_path: Optional[PathLike]):
    hdr = _check_path(header_path, "header")
    fields = read_header(hdr)
    for key in _REQUIRED:
        if key not in fields:
            raise DataError(f"{hdr}: missing header key '{key}'")
    samples = _int_field(fields, "samples", hdr)
    lines = _int_field(fields, "lines", hdr)
    bands = _int_field(fields, "bands", hdr)
    dtype_code = _int_field(fields, "data type", hdr)
    order = _int_field(fields, "byte order", hdr)
    interleave = fields["interleave"].lower()
    offset = _int_field(fields, "header offset", hdr) if "header offset" in fields else 0
    if min(samples, lines, bands) < 1:
        raise DataError(f"{hdr}: non-positive dimensions")
    if dtype_code not in _DTYPES:
        raise DataError(f"{hdr}: unsupported data type {dtype_code} (supported: 2, 4)")
    if interleave not in _INTERLEAVES:
        raise DataError(f"{hdr}: unsupported interleave {interleave!r}")
    if order not in (0, 1):
        raise DataError(f"{hdr}: byte order must be 0 or 1, got {order}")
    dtype = np.dtype(("<" if order == 0 else ">") + _DTYPES[dtype_code])

    data_file = default_data_path(hdr) if data_path is None else _check_path(data_path, "data")
    try:
        raw = data_file.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read data file {data_file}: {exc}") from exc
    expected = samples * lines * bands * dtype.itemsize
    if len(raw) - offset != expected:
        raise DataError(f"{data_file}: size mismatch, expected {expected} bytes after a "
                        f"{offset}-byte offset, found {len(raw) - offset}")
    dims = (bands, lines, samples)
    stored = tuple(dims[a] for a in _LAYOUT[interleave])
    arr = np.frombuffer(raw, dtype=dtype, offset=offset).reshape(stored)
    bsq = np.transpose(arr, np.argsort(_LAYOUT[interleave])).astype(np.float64)
    return bsq, fields


def read_envi(header_path: PathLike, data_path: Optional[PathLike] = None) -> HsiCube:
    """Read a cube; the data path defaults to the header path with ``.img``."""
    data, fields = _read_raw(header_path, data_path)
    wavelengths = None
    if "wavelength" in fields and fields["wavelength"]:
        try:
            wavelengths = np.array([float(v) for v in fields["wavelength"].split(",")])
        except ValueError:
            raise DataError(f"{header_path}: malformed wavelength list") from None
        if wavelengths.size != data.shape[0]:
            raise DataError(f"{header_path}: {wavelengths.size} wavelengths for "
                            f"{data.shape[0]} bands")
    try:
        return HsiCube(data, wavelengths)
    except DomainError as exc:
        raise DataError(f"{header_path}: {exc}") from exc


def _write(arr_bsq: np.ndarray, header_path: PathLike, data_path: Optional[PathLike],
           interleave: str, data_type: int, byte_order: int, extra: dict) -> None:
    hdr = _check_path(header_path, "header")
    data_file = default_data_path(hdr) if data_path is None else _check_path(data_path, "data")
    if interleave not in _INTERLEAVES:
        raise DomainError(f"unsupported interleave {interleave!r}")
    if data_type not in _DTYPES:
        raise DomainError(f"unsupported data type {data_type} (supported: 2, 4)")
    if byte_order not in (0, 1):
        raise DomainError("byte order must be 0 or 1")
    dtype = np.dtype(("<" if byte_order == 0 else ">") + _DTYPES[data_type])
    if data_type == 2:
        info = np.iinfo(np.int16)
        if not (np.all(arr_bsq == np.round(arr_bsq)) and arr_bsq.min() >= info.min
                and arr_bsq.max() <= info.max):
            raise DomainError("data type 2 needs integer values within the int16 range")
    bands, lines, samples = arr_bsq.shape
    stored = np.ascontiguousarray(np.transpose(arr_bsq, _LAYOUT[interleave]).astype(dtype))
    header = ["ENVI", f"samples = {samples}", f"lines = {lines}", f"bands = {bands}",
              "header offset = 0", "file type = ENVI Standard", f"data type = {data_type}",
              f"interleave = {interleave}", f"byte order = {byte_order}"]
    header += [f"{k} = {v}" for k, v in extra.items()]
    try:
        hdr.write_text("\n".join(header) + "\n", encoding="ascii")
        data_file.write_bytes(stored.tobytes())
    except OSError as exc:
        raise DataError(f"cannot write {hdr} / {data_file}: {exc}") from exc


def write_envi(cube: HsiCube, header_path: PathLike, data_path: Optional[PathLike] = None,
               interleave: str = "bsq", data_type: int = 4, byte_order: int = 0) -> None:
    """Write `cube`; float32 output reads back bit-exactly (as float32 values)."""
    extra = {}
    if cube.wavelengths is not None:
        extra["wavelength"] = "{" + ", ".join(repr(float(w)) for w in cube.wavelengths) + "}"
    _write(cube.data, header_path, data_path, interleave, data_type, byte_order, extra)


def write_labels(raster: LabelRaster, header_path: PathLike,
                 data_path: Optional[PathLike] = None) -> None:
    """Single-band signed 16-bit ENVI file."""
    _write(raster.labels[None].astype(float), header_path, data_path, "bsq", 2, 0, {})


def read_labels(header_path: PathLike, data_path: Optional[PathLike] = None) -> LabelRaster:
    data, _ = _read_raw(header_path, data_path)
    if data.shape[0] != 1:
        raise DataError(f"{header_path}: label raster must have one band, found {data.shape[0]}")
    try:
        return LabelRaster(data[0].astype(np.int64))
    except DomainError as exc:
        raise DataError(f"{header_path}: {exc}") from exc
