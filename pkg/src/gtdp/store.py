"""Persistence of value tables in a checksummed little-endian binary format.

File layout (all integers little-endian)::

    magic            4 bytes  b"GTDP"
    format_version   u32      currently 1
    procedure tag    u8       1 = optimal nested (r1), 3 = restricted (r3)
    q                f64      exact IEEE-754 bit pattern of the prevalence
    n_top            u64
    planes           4 per file, each: u64 entry count + raw entries
                     r3: pool values f64, defective values f64,
                         pool choices u32, defective choices u32
                     r1: pool values f64, joint values f64 (triangle),
                         pool choices u32, joint choices u32
    checksum         u64      FNV-1a over every preceding byte

Loads verify magic, version, tag, plane lengths, and checksum, and compare q
by exact bit pattern — a table for a nearby q is a mismatch error, never a
silent substitute. Writes go to a temp file in the destination directory and
are renamed into place, so readers never observe a partial file.

:class:`TableProvider` layers an in-memory and on-disk cache over the
builders; a stored table whose ``n_top`` exceeds the requested size is served
directly (value and choice entries do not depend on ``n_top``).
"""

from __future__ import annotations

import os
import struct
import tempfile
import threading
import time
from pathlib import Path

import numpy as np
from numba import njit

from .engine_r1 import R1Table, _row_offsets, build_r1
from .engine_r3 import R3Table, build_r3
from .errors import DomainError, StoreError, StoreFormatError, StoreMismatchError
from .model import Prevalence, make_prevalence

__all__ = [
    "CACHE_DIR_ENV",
    "FORMAT_VERSION",
    "MAGIC",
    "TableProvider",
    "cache_path",
    "fnv1a",
    "load_table",
    "save_table",
]

MAGIC = b"GTDP"
FORMAT_VERSION = 1
CACHE_DIR_ENV = "GTDP_CACHE_DIR"

_TAGS = {"r1": 1, "r3": 3}
_PROCS = {1: "r1", 3: "r3"}


@njit(cache=True)
def _fnv1a_u8(data: np.ndarray) -> np.uint64:
    h = np.uint64(0xCBF29CE484222325)
    prime = np.uint64(0x100000001B3)
    for i in range(data.size):
        h = (h ^ np.uint64(data[i])) * prime
    return h


def fnv1a(data: bytes) -> int:
    """64-bit FNV-1a hash of ``data``."""
    return int(_fnv1a_u8(np.frombuffer(data, dtype=np.uint8)))


def _plane_bytes(count: int, arr: np.ndarray, dtype: str) -> bytes:
    return struct.pack("<Q", count) + arr.astype(dtype, copy=False).tobytes()


def _encode(table: R1Table | R3Table) -> bytes:
    if isinstance(table, R1Table):
        tag = _TAGS["r1"]
        planes = [
            (table.pool_expected, "<f8"),
            (table.joint_expected, "<f8"),
            (table.pool_choice, "<u4"),
            (table.joint_choice, "<u4"),
        ]
    elif isinstance(table, R3Table):
        tag = _TAGS["r3"]
        planes = [
            (table.pool_expected, "<f8"),
            (table.defective_expected, "<f8"),
            (table.pool_choice, "<u4"),
            (table.defective_choice, "<u4"),
        ]
    else:
        raise DomainError(f"cannot store object of type {type(table).__name__}")
    parts = [
        MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<B", tag),
        struct.pack("<d", table.prevalence.q),
        struct.pack("<Q", table.n_top),
    ]
    parts.extend(_plane_bytes(arr.size, arr, dtype) for arr, dtype in planes)
    body = b"".join(parts)
    return body + struct.pack("<Q", fnv1a(body))


def save_table(table: R1Table | R3Table, path: str | Path) -> None:
    """Write ``table`` to ``path`` atomically (temp file + rename)."""
    path = Path(path)
    payload = _encode(table)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".gtdp.tmp")
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(payload)
            os.replace(tmp_name, path)
        except BaseException:
            os.unlink(tmp_name)
            raise
    except OSError as exc:
        raise StoreError(f"cannot write table to {path}: {exc}") from exc


class _Reader:
    def __init__(self, blob: bytes, path: Path):
        self.blob = blob
        self.path = path
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        end = self.offset + count
        if end > len(self.blob):
            raise StoreFormatError(f"{self.path}: truncated while reading {what}")
        piece = self.blob[self.offset:end]
        self.offset = end
        return piece

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def plane(self, expected_len: int, dtype: str, what: str) -> np.ndarray:
        count = self.u64(f"{what} length")
        if count != expected_len:
            raise StoreFormatError(
                f"{self.path}: {what} has {count} entries, expected {expected_len}"
            )
        raw = self.take(count * np.dtype(dtype).itemsize, what)
        arr = np.frombuffer(raw, dtype=dtype).astype(dtype.lstrip("<"), copy=True)
        arr.setflags(write=False)
        return arr


def load_table(
    path: str | Path,
    expected_q: float | None = None,
    expected_procedure: str | None = None,
) -> R1Table | R3Table:
    """Read a table, verifying integrity and (optionally) identity.

    ``expected_q`` is compared by exact IEEE-754 bit pattern. Any violation —
    bad magic, unknown version or tag, wrong plane length, trailing bytes,
    checksum failure, q or procedure mismatch — raises a store error naming
    the failing field; a corrupt file never yields a partial table.
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise StoreError(f"cannot read table from {path}: {exc}") from exc
    if len(blob) < 33:
        raise StoreFormatError(f"{path}: truncated header ({len(blob)} bytes)")
    body, checksum_bytes = blob[:-8], blob[-8:]
    expected_sum = struct.unpack("<Q", checksum_bytes)[0]
    actual_sum = fnv1a(body)
    if actual_sum != expected_sum:
        raise StoreFormatError(
            f"{path}: checksum mismatch (stored {expected_sum:#018x}, computed {actual_sum:#018x})"
        )
    reader = _Reader(body, path)
    if reader.take(4, "magic") != MAGIC:
        raise StoreFormatError(f"{path}: bad magic (not a GTDP file)")
    version = struct.unpack("<I", reader.take(4, "format_version"))[0]
    if version != FORMAT_VERSION:
        raise StoreFormatError(f"{path}: unsupported format_version {version}")
    tag = reader.take(1, "procedure tag")[0]
    if tag not in _PROCS:
        raise StoreFormatError(f"{path}: unknown procedure tag {tag}")
    procedure = _PROCS[tag]
    if expected_procedure is not None and procedure != expected_procedure:
        raise StoreMismatchError(
            f"{path}: procedure is {procedure}, expected {expected_procedure}"
        )
    q_bytes = reader.take(8, "q")
    q = struct.unpack("<d", q_bytes)[0]
    if expected_q is not None and struct.pack("<d", expected_q) != q_bytes:
        raise StoreMismatchError(
            f"{path}: q bit pattern differs (stored {q!r}, expected {expected_q!r})"
        )
    n_top = reader.u64("n_top")
    prevalence = make_prevalence(q)
    if procedure == "r3":
        values = reader.plane(n_top + 1, "<f8", "pool values")
        defective = reader.plane(n_top + 1, "<f8", "defective values")
        choices = reader.plane(n_top + 1, "<u4", "pool choices")
        defective_choices = reader.plane(n_top + 1, "<u4", "defective choices")
        if reader.offset != len(body):
            raise StoreFormatError(f"{path}: {len(body) - reader.offset} trailing bytes")
        return R3Table(
            prevalence=prevalence,
            n_top=n_top,
            cap_to_nmax=False,
            pool_expected=values,
            defective_expected=defective,
            pool_choice=choices,
            defective_choice=defective_choices,
        )
    triangle = n_top * (n_top + 1) // 2
    values = reader.plane(n_top + 1, "<f8", "pool values")
    joint = reader.plane(triangle, "<f8", "joint values")
    choices = reader.plane(n_top + 1, "<u4", "pool choices")
    joint_choices = reader.plane(triangle, "<u4", "joint choices")
    if reader.offset != len(body):
        raise StoreFormatError(f"{path}: {len(body) - reader.offset} trailing bytes")
    offsets = _row_offsets(n_top)
    offsets.setflags(write=False)
    return R1Table(
        prevalence=prevalence,
        n_top=n_top,
        windowed=False,
        pool_expected=values,
        pool_choice=choices,
        joint_expected=joint,
        joint_choice=joint_choices,
        row_offsets=offsets,
    )


def cache_path(
    cache_dir: str | Path,
    procedure: str,
    prevalence: Prevalence,
    n_top: int,
    cap_to_nmax: bool = False,
    windowed: bool = False,
) -> Path:
    """Canonical cache file name for a table identity.

    Build-mode flags that change table content (the restricted engine's
    search cap, the windowed scan's tie choices) are encoded in the name,
    since the file payload carries only procedure, q, and n_top.
    """
    if procedure not in _TAGS:
        raise DomainError(f"procedure must be 'r1' or 'r3', got {procedure!r}")
    suffix = ("-cap" if cap_to_nmax else "") + ("-win" if windowed else "")
    return Path(cache_dir) / f"{procedure}-q{prevalence.q_bits:016x}-n{n_top}{suffix}.gtdp"


class TableProvider:
    """Builds tables on demand, reusing memory- and disk-cached results.

    The disk cache directory comes from the constructor argument or the
    ``GTDP_CACHE_DIR`` environment variable; with neither set, only the
    in-memory cache is used. A cached file with the same procedure, q bit
    pattern, and build flags but a larger n_top satisfies a request. Corrupt
    or mismatched cache files raise; they are never silently rebuilt.
    """

    def __init__(self, cache_dir: str | Path | None = None):
        if cache_dir is None:
            cache_dir = os.environ.get(CACHE_DIR_ENV) or None
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self._memory: dict[tuple, R1Table | R3Table] = {}
        self._lock = threading.Lock()

    def get(
        self,
        procedure: str,
        prevalence: Prevalence,
        n: int,
        cap_to_nmax: bool = False,
        windowed: bool = False,
    ) -> tuple[R1Table | R3Table, bool, float]:
        """Return ``(table, from_cache, elapsed_seconds)`` with ``table.n_top >= n``."""
        if procedure not in _TAGS:
            raise DomainError(f"procedure must be 'r1' or 'r3', got {procedure!r}")
        if n < 0:
            raise DomainError(f"population size must be >= 0, got {n}")
        key = (procedure, prevalence.q_bits, cap_to_nmax, windowed)
        start = time.perf_counter()
        with self._lock:
            held = self._memory.get(key)
            if held is not None and held.n_top >= n:
                return held, True, time.perf_counter() - start
            disk = self._find_on_disk(procedure, prevalence, n, cap_to_nmax, windowed)
            if disk is not None:
                table = load_table(disk, expected_q=prevalence.q, expected_procedure=procedure)
                self._memory[key] = table
                return table, True, time.perf_counter() - start
            if procedure == "r3":
                table = build_r3(prevalence, n, cap_to_nmax=cap_to_nmax)
            else:
                table = build_r1(prevalence, n, windowed=windowed)
            self._memory[key] = table
            if self.cache_dir is not None:
                save_table(
                    table,
                    cache_path(self.cache_dir, procedure, prevalence, n,
                               cap_to_nmax=cap_to_nmax, windowed=windowed),
                )
            return table, False, time.perf_counter() - start

    def _find_on_disk(
        self,
        procedure: str,
        prevalence: Prevalence,
        n: int,
        cap_to_nmax: bool,
        windowed: bool,
    ) -> Path | None:
        if self.cache_dir is None or not self.cache_dir.is_dir():
            return None
        suffix = ("-cap" if cap_to_nmax else "") + ("-win" if windowed else "")
        prefix = f"{procedure}-q{prevalence.q_bits:016x}-n"
        best: tuple[int, Path] | None = None
        for entry in self.cache_dir.glob(f"{prefix}*{suffix}.gtdp"):
            tail = entry.name[len(prefix):-len(".gtdp")]
            if suffix:
                if not tail.endswith(suffix):
                    continue
                tail = tail[: -len(suffix)]
            if not tail.isdigit():  # excludes names carrying extra flags
                continue
            n_top = int(tail)
            if n_top >= n and (best is None or n_top < best[0]):
                best = (n_top, entry)
        return best[1] if best else None
