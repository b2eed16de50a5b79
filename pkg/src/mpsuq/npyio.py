"""Bit-exact array file I/O.

Arrays are stored in the NPY v1.0 container (magic string, python-dict
header with descr/fortran_order/shape, raw C-order payload), restricted
to a small portable subset:

* dtypes: little-endian float32 (``<f4``), float64 (``<f8``), uint8 (``|u1``)
* ``fortran_order`` must be False
* payload length must equal the product of the header shape

The header is parsed by hand so that malformed files fail with a precise
diagnostic instead of whatever a general-purpose loader happens to raise.
Files written here are byte-compatible with standard scientific tooling.
"""

from __future__ import annotations

import ast
import math
from pathlib import Path

import numpy as np

MAGIC = b"\x93NUMPY"
_VERSION = b"\x01\x00"
_HEADER_ALIGN = 64

# descr string -> numpy dtype, the only dtypes this toolkit reads or writes
SUPPORTED_DESCRS = {
    "<f4": np.dtype("<f4"),
    "<f8": np.dtype("<f8"),
    "|u1": np.dtype("u1"),
}
_DTYPE_TO_DESCR = {v: k for k, v in SUPPORTED_DESCRS.items()}


class NpyFormatError(Exception):
    """Raised when a file is not a valid NPY array in the supported subset."""


def _descr_for(dtype: np.dtype) -> str:
    dtype = np.dtype(dtype)
    key = dtype.newbyteorder("<") if dtype.kind == "f" else dtype
    descr = _DTYPE_TO_DESCR.get(key)
    if descr is None:
        raise NpyFormatError(
            f"unsupported dtype {dtype!r}: supported dtypes are "
            + ", ".join(sorted(SUPPORTED_DESCRS))
        )
    return descr


def save_array(path, values, shape=None, dtype=None) -> Path:
    """Write ``values`` to ``path`` as an NPY v1.0 file.

    ``values`` is anything ``np.asarray`` accepts. When ``shape`` is given
    the payload is reshaped to it (a length mismatch raises ValueError);
    when ``dtype`` is given the payload is cast. Returns the written path.

    Loading the file back yields the array bit-for-bit: values are written
    in their storage dtype with no re-encoding.
    """
    arr = np.asarray(values)
    if dtype is not None:
        arr = arr.astype(dtype)
    if shape is not None:
        if math.prod(shape) != arr.size:
            raise ValueError(
                f"shape {tuple(shape)} needs {math.prod(shape)} elements, "
                f"payload has {arr.size}"
            )
        arr = arr.reshape(shape)
    descr = _descr_for(arr.dtype)
    arr = np.ascontiguousarray(arr)

    header_dict = (
        "{'descr': '%s', 'fortran_order': False, 'shape': %s, }"
        % (descr, _shape_repr(arr.shape))
    )
    # pad with spaces so magic+version+len+header is a multiple of 64 bytes,
    # terminated by a newline (same layout standard writers produce)
    base = len(MAGIC) + len(_VERSION) + 2
    pad = _HEADER_ALIGN - ((base + len(header_dict) + 1) % _HEADER_ALIGN)
    pad %= _HEADER_ALIGN
    header = header_dict.encode("latin1") + b" " * pad + b"\n"

    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_VERSION)
        fh.write(len(header).to_bytes(2, "little"))
        fh.write(header)
        fh.write(arr.tobytes(order="C"))
    return path


def _shape_repr(shape: tuple) -> str:
    if len(shape) == 1:
        return "(%d,)" % shape[0]
    return "(" + ", ".join(str(int(d)) for d in shape) + ")"


def load_array(path) -> np.ndarray:
    """Read an NPY file written by :func:`save_array` (or compatible tools).

    Returns a C-order array with the on-disk dtype, decoded exactly.
    Raises ``NpyFormatError`` on a malformed header, an unsupported dtype,
    a set fortran_order flag, or a payload shorter than the header shape
    requires. Missing files raise ``FileNotFoundError``.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        data = fh.read()

    if len(data) < 10 or data[:6] != MAGIC:
        raise NpyFormatError(f"{path}: not an NPY file (bad magic)")
    major, minor = data[6], data[7]
    if (major, minor) != (1, 0):
        raise NpyFormatError(f"{path}: unsupported NPY version {major}.{minor}")
    header_len = int.from_bytes(data[8:10], "little")
    header_end = 10 + header_len
    if len(data) < header_end:
        raise NpyFormatError(f"{path}: truncated header")
    header = data[10:header_end].decode("latin1")

    try:
        meta = ast.literal_eval(header)
    except (ValueError, SyntaxError) as exc:
        raise NpyFormatError(f"{path}: malformed header: {exc}") from exc
    if not isinstance(meta, dict) or set(meta) != {"descr", "fortran_order", "shape"}:
        raise NpyFormatError(f"{path}: malformed header: unexpected keys")

    descr = meta["descr"]
    if descr not in SUPPORTED_DESCRS:
        raise NpyFormatError(
            f"{path}: unsupported dtype {descr!r}: supported dtypes are "
            + ", ".join(sorted(SUPPORTED_DESCRS))
        )
    if meta["fortran_order"] is not False:
        raise NpyFormatError(f"{path}: fortran_order is set, only C-order is supported")
    shape = meta["shape"]
    if not isinstance(shape, tuple) or not all(
        isinstance(d, int) and d >= 0 for d in shape
    ):
        raise NpyFormatError(f"{path}: malformed header: bad shape {shape!r}")

    dtype = SUPPORTED_DESCRS[descr]
    expected = math.prod(shape) * dtype.itemsize
    payload = data[header_end:]
    if len(payload) < expected:
        raise NpyFormatError(
            f"{path}: truncated payload: expected {expected} bytes, got {len(payload)}"
        )
    if len(payload) > expected:
        raise NpyFormatError(
            f"{path}: payload length mismatch: expected {expected} bytes, "
            f"got {len(payload)}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


def write_pgm(path, gray: np.ndarray) -> Path:
    """Write an H x W uint8 array as a binary (P5) portable graymap."""
    gray = np.asarray(gray)
    if gray.ndim != 2 or gray.dtype != np.uint8:
        raise ValueError("write_pgm expects an H x W uint8 array")
    h, w = gray.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(gray.tobytes(order="C"))
    return path
