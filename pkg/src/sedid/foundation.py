"""Tensors, the deterministic random stream, and the SEDD archive format.

Tensors are plain float64 numpy arrays. ``as_tensor`` is the checked
constructor used at trust boundaries (files, user input).

Random stream
-------------
``Rng`` is counter based: draw ``i`` of a stream with seed ``s`` is the
SplitMix64 output ``mix(s + (i + 1) * 0x9E3779B97F4A7C15)``. Uniforms are
``((word >> 11) + 0.5) / 2**53`` (never 0 or 1) and Gaussians are the
inverse normal CDF of that uniform. Test vectors live in
``tests/test_foundation.py``.

Archive layout (little endian)
------------------------------
::

    b"SEDD"  u16 version
    repeated until EOF:
        u16 name_len, name (UTF-8), u8 dtype, u8 ndim, u32 dims[ndim], payload

dtype codes: 0 = f32, 1 = f64, 2 = u8 (raw bytes, used for JSON manifests).
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Mapping

import numpy as np

from . import kernels
from .errors import FormatError, InvalidArgument

MAGIC = b"SEDD"
VERSION = 1
MASK64 = (1 << 64) - 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("u1")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("uint8"): 2}


def as_tensor(data, shape=None) -> np.ndarray:
    """Float64 copy of ``data``; rejects NaN/Inf and zero-sized shapes."""
    arr = np.array(data, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(d) for d in shape)
        if int(np.prod(shape)) != arr.size:
            raise InvalidArgument(f"shape {shape} does not hold {arr.size} values")
        arr = arr.reshape(shape)
    if arr.size == 0:
        raise InvalidArgument("tensor has no elements")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument("tensor contains non-finite values")
    return arr


def derive_seed(seed: int, *keys: int) -> int:
    """Seed of the substream of ``seed`` addressed by ``keys``.

    With ``first(x)`` the first stream word for seed ``x``, each key is folded
    in as ``h = first(h ^ first(key))``.
    """
    h = int(seed) & MASK64
    for key in keys:
        folded = int(kernels.splitmix64((int(key) & MASK64), 0, 1)[0])
        h = int(kernels.splitmix64(h ^ folded, 0, 1)[0])
    return h


class Rng:
    """Deterministic counter-based random stream.

    Not thread safe: a single instance must not be drawn from concurrently.
    Use :meth:`spawn` to hand independent substreams to workers.
    """

    def __init__(self, seed: int, counter: int = 0):
        if not 0 <= int(seed) <= MASK64:
            raise InvalidArgument(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.counter = int(counter)

    def __repr__(self):
        return f"Rng(seed={self.seed}, counter={self.counter})"

    def _take(self, n: int) -> int:
        start = self.counter
        self.counter += n
        return start

    def words(self, n: int) -> np.ndarray:
        return kernels.splitmix64(self.seed, self._take(n), n)

    def uniform(self, n: int) -> np.ndarray:
        w = self.words(n)
        return ((w >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53

    def normal(self, shape) -> np.ndarray:
        shape = _check_shape(shape)
        n = int(np.prod(shape))
        return kernels.std_normal(self.seed, self._take(n), n).reshape(shape)

    def integers(self, low: int, high: int, n: int) -> np.ndarray:
        """``n`` integers uniform on ``[low, high)``."""
        if high <= low:
            raise InvalidArgument(f"empty integer range [{low}, {high})")
        idx = np.floor(self.uniform(n) * (high - low)).astype(np.int64)
        return low + np.minimum(idx, high - low - 1)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")

    def spawn(self, *keys: int) -> "Rng":
        return Rng(derive_seed(self.seed, *keys))


def _check_shape(shape) -> tuple:
    if isinstance(shape, (int, np.integer)):
        shape = (int(shape),)
    shape = tuple(int(d) for d in shape)
    if not shape or any(d < 1 for d in shape):
        raise InvalidArgument(f"shape must be nonempty with positive dims, got {shape}")
    return shape


def gaussian(rng: Rng, shape) -> np.ndarray:
    """I.i.d. standard normal tensor of ``shape`` drawn from ``rng``."""
    return rng.normal(shape)


def l2_sq(a, b) -> float:
    """Squared Euclidean distance between two equally shaped tensors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgument(f"shape mismatch {a.shape} vs {b.shape}")
    return float(kernels.row_sq_dist(a.reshape(1, -1), b.reshape(1, -1))[0])


# -- archives -----------------------------------------------------------------

def json_entry(obj) -> np.ndarray:
    """Encode ``obj`` as a u8 archive entry (sorted-key JSON)."""
    raw = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return np.frombuffer(raw, dtype=np.uint8).copy()


def read_json_entry(arr: np.ndarray):
    return json.loads(np.asarray(arr, dtype=np.uint8).tobytes().decode("utf-8"))


def encode_archive(entries: Mapping[str, np.ndarray]) -> bytes:
    if isinstance(entries, Mapping):
        items = list(entries.items())
    else:
        items = list(entries)
    names = [name for name, _ in items]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise InvalidArgument(f"duplicate archive entry names: {dup}")
    out = [MAGIC, struct.pack("<H", VERSION)]
    for name, value in items:
        arr = np.asarray(value)
        code = _CODES.get(arr.dtype)
        if code is None:
            raise InvalidArgument(f"entry {name!r}: unsupported dtype {arr.dtype}")
        if code != 2 and not np.all(np.isfinite(arr)):
            raise InvalidArgument(f"entry {name!r} contains non-finite values")
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF or arr.ndim > 255:
            raise InvalidArgument(f"entry {name!r}: name or rank too large")
        out.append(struct.pack("<H", len(raw_name)))
        out.append(raw_name)
        out.append(struct.pack("<BB", code, arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    return b"".join(out)


def decode_archive(buf: bytes) -> dict[str, np.ndarray]:
    view = memoryview(buf)
    if len(view) < 6:
        raise FormatError("archive shorter than header", 0)
    if bytes(view[:4]) != MAGIC:
        raise FormatError(f"bad magic {bytes(view[:4])!r}", 0)
    (version,) = struct.unpack_from("<H", view, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    pos = 6
    entries: dict[str, np.ndarray] = {}

    def need(n, what):
        if pos + n > len(view):
            raise FormatError(f"truncated {what}", pos)

    while pos < len(view):
        need(2, "entry name length")
        (name_len,) = struct.unpack_from("<H", view, pos)
        pos += 2
        need(name_len, "entry name")
        try:
            name = bytes(view[pos:pos + name_len]).decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("entry name is not UTF-8", pos) from None
        pos += name_len
        if name in entries:
            raise FormatError(f"duplicate entry {name!r}", pos)
        need(2, "dtype/ndim")
        code, ndim = struct.unpack_from("<BB", view, pos)
        if code not in _DTYPES:
            raise FormatError(f"unknown dtype code {code}", pos)
        pos += 2
        need(4 * ndim, "dims")
        dims = struct.unpack_from(f"<{ndim}I", view, pos)
        pos += 4 * ndim
        dtype = _DTYPES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        need(nbytes, f"payload of {name!r}")
        arr = np.frombuffer(view[pos:pos + nbytes], dtype=dtype).reshape(dims)
        if code != 2 and not np.all(np.isfinite(arr)):
            raise FormatError(f"entry {name!r} contains non-finite values", pos)
        pos += nbytes
        entries[name] = arr.astype(dtype.newbyteorder("="), copy=True)
    return entries


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temporary sibling file and rename, so readers never see partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def archive_write(path, entries: Mapping[str, np.ndarray]) -> None:
    atomic_write_bytes(path, encode_archive(entries))


def archive_read(path) -> dict[str, np.ndarray]:
    return decode_archive(Path(path).read_bytes())
