"""On-disk packed-code databases and exhaustive top-k scans.

File layout (fixed little-endian, stable across platforms)::

    offset 0   magic      4 bytes  "DHDB"
    offset 4   version    u16      currently 1
    offset 6   reserved   u16      0
    offset 8   code_bits  u32      d
    offset 12  count      u64      C
    offset 20  payload    C records of ceil(d/64) u64 words each

Records keep insertion order; padding bits are zero. An optional sidecar
``<path>.ids`` holds one external identifier per line, line i naming
record i.

Scans are exact and exhaustive. Hamming distances are integers, so results
are a pure function of (db bytes, query, k) no matter how the scan is
partitioned or threaded. Cosine scores are floats whose low bits depend on
BLAS blocking, so the scanner pins them down by always computing on a fixed
65536-row chunk grid; partitions own whole chunks.
"""

from __future__ import annotations

import os
import shutil
import struct
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from statistics import median

import numpy as np

from . import kernels
from .codes import BinaryCode, tail_mask, words_for_bits
from .errors import (
    CorruptDatabaseError,
    DegenerateInputError,
    InvalidInputError,
    ResourceLimitError,
    ShapeError,
)

MAGIC = b"DHDB"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHIQ")
HEADER_BYTES = _HEADER.size  # 20

CHUNK_ROWS = 65536


def scan_threads(requested: int | None = None) -> int:
    """Thread budget for scans: HASHSCREEN_THREADS caps whatever is asked."""
    cap = os.environ.get("HASHSCREEN_THREADS", "").strip()
    limit = int(cap) if cap else (os.cpu_count() or 1)
    if limit < 1:
        raise InvalidInputError(f"HASHSCREEN_THREADS must be >= 1, got {limit}")
    want = requested if requested is not None else (os.cpu_count() or 1)
    return max(1, min(want, limit))


class CodeDatabase:
    """Read-only view of a code database file.

    Codes are accessed through a file-backed memmap, so opening is O(1)
    and scans stream from disk without loading the payload up front.
    """

    def __init__(self, path: str, code_bits: int, count: int, words: np.ndarray):
        self.path = path
        self.code_bits = code_bits
        self.count = count
        self.n_words = words_for_bits(code_bits)
        self.words = words
        self._ids: list[str] | None = None

    def __len__(self) -> int:
        return self.count

    def code_at(self, index: int) -> BinaryCode:
        if not 0 <= index < self.count:
            raise InvalidInputError(f"record {index} out of range [0, {self.count})")
        return BinaryCode(np.array(self.words[index], dtype=np.uint64), self.code_bits)

    @property
    def ids_path(self) -> str:
        return self.path + ".ids"

    def ids(self) -> list[str] | None:
        """External identifiers from the sidecar, or None if absent."""
        if self._ids is None and os.path.exists(self.ids_path):
            with open(self.ids_path, "r", encoding="utf-8") as fh:
                loaded = [line.rstrip("\n") for line in fh]
            if len(loaded) != self.count:
                raise CorruptDatabaseError(
                    f"{self.ids_path}: {len(loaded)} ids for {self.count} records",
                    check="ids",
                )
            self._ids = loaded
        return self._ids

    def label_of(self, index: int) -> str:
        ids = self.ids()
        return ids[index] if ids is not None else str(index)


def build_database(codes, path: str, code_bits: int | None = None) -> CodeDatabase:
    """Stream codes into a database file and return the opened result.

    ``codes`` yields :class:`BinaryCode` objects, 1-D word arrays, or
    2-D ``(m, W)`` word blocks. Word inputs require ``code_bits``;
    BinaryCode inputs must agree with it when given. Memory use is
    constant in the number of records.
    """
    count = 0
    bits = code_bits
    tmp_path = path + ".tmp"
    with open(tmp_path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, 0, 0, 0))
        for item in codes:
            if isinstance(item, BinaryCode):
                if bits is None:
                    bits = item.n_bits
                if item.n_bits != bits:
                    raise InvalidInputError(
                        f"record {count}: {item.n_bits}-bit code in {bits}-bit database"
                    )
                block = np.asarray(item.words, dtype=np.uint64)[None, :]
            else:
                if bits is None:
                    raise InvalidInputError(
                        "code_bits is required when streaming raw word arrays"
                    )
                block = np.asarray(item, dtype=np.uint64)
                if block.ndim == 1:
                    block = block[None, :]
                if block.ndim != 2 or block.shape[1] != words_for_bits(bits):
                    raise InvalidInputError(
                        f"record block {count}: expected (m, {words_for_bits(bits)}) "
                        f"words, got shape {block.shape}"
                    )
                if np.any(block[:, -1] & ~tail_mask(bits)):
                    raise InvalidInputError(
                        f"record block {count}: nonzero padding bits past {bits}"
                    )
            fh.write(np.ascontiguousarray(block, dtype="<u8").tobytes())
            count += block.shape[0]
        if bits is None:
            raise InvalidInputError(
                "empty stream needs an explicit code_bits to write a header"
            )
        fh.seek(0)
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, 0, bits, count))
    os.replace(tmp_path, path)
    return open_database(path)


def open_database(path: str) -> CodeDatabase:
    """Open and validate a database file as a read-only view."""
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        head = fh.read(HEADER_BYTES)
    if len(head) < HEADER_BYTES:
        raise CorruptDatabaseError(
            f"{path}: {size} bytes is smaller than the {HEADER_BYTES}-byte header",
            check="size",
        )
    magic, version, _reserved, code_bits, count = _HEADER.unpack(head)
    if magic != MAGIC:
        raise CorruptDatabaseError(f"{path}: bad magic {magic!r}", check="magic")
    if version != FORMAT_VERSION:
        raise CorruptDatabaseError(
            f"{path}: unsupported format version {version}", check="version"
        )
    if code_bits <= 0:
        raise CorruptDatabaseError(
            f"{path}: nonpositive code_bits {code_bits}", check="code_bits"
        )
    n_words = words_for_bits(code_bits)
    expected = HEADER_BYTES + count * n_words * 8
    if size != expected:
        raise CorruptDatabaseError(
            f"{path}: file is {size} bytes, header implies exactly {expected}",
            check="size",
        )
    if count == 0:
        words = np.empty((0, n_words), dtype=np.uint64)
    else:
        words = np.memmap(
            path, dtype="<u8", mode="r", offset=HEADER_BYTES, shape=(count, n_words)
        )
    return CodeDatabase(path, code_bits, count, words)


@dataclass(frozen=True)
class SearchResult:
    """Top-k scan outcome: parallel arrays ordered best-first.

    For Hamming scans ``scores`` are integer distances in non-decreasing
    order; for cosine scans they are similarities in non-increasing order.
    Ties are broken by ascending record index.
    """

    indices: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        for i, s in zip(self.indices, self.scores):
            yield int(i), s.item()


def _partition_bounds(total: int, partitions: int) -> list[tuple[int, int]]:
    partitions = max(1, min(partitions, total)) if total else 1
    step = -(-total // partitions)
    return [(lo, min(lo + step, total)) for lo in range(0, total, step)] or [(0, 0)]


def _merge_candidates(parts, k: int, descending: bool = False) -> SearchResult:
    scores = np.concatenate([p[0] for p in parts]) if parts else np.empty(0)
    indices = np.concatenate([p[1] for p in parts]) if parts else np.empty(0, np.int64)
    key = -scores if descending else scores
    order = np.lexsort((indices, key))[:k]
    return SearchResult(indices[order], scores[order])


def topk_hamming(
    db: CodeDatabase,
    query: BinaryCode,
    k: int,
    partitions: int | None = None,
    threads: int | None = None,
) -> SearchResult:
    """Exact k nearest codes by Hamming distance over the whole database.

    The scan runs in ``partitions`` independent pieces (each a bounded
    max-heap, O(C log k)) merged by (distance, index); the result is
    identical for every partition count and thread budget.
    """
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    if query.n_bits != db.code_bits:
        raise ShapeError(
            f"query has {query.n_bits} bits, database stores {db.code_bits}"
        )
    if db.count == 0:
        return SearchResult(np.empty(0, np.int64), np.empty(0, np.int64))
    n_threads = scan_threads(threads)
    bounds = _partition_bounds(db.count, partitions or n_threads)
    qwords = np.asarray(query.words, dtype=np.uint64)

    def scan_range(bound):
        lo, hi = bound
        best: tuple[np.ndarray, np.ndarray] | None = None
        for start in range(lo, hi, CHUNK_ROWS):
            stop = min(start + CHUNK_ROWS, hi)
            d, i = kernels.topk_block(
                db.words[start:stop], qwords, db.code_bits, k, base=start
            )
            if best is not None:
                d = np.concatenate([best[0], d])
                i = np.concatenate([best[1], i])
                order = np.lexsort((i, d))[:k]
                d, i = d[order], i[order]
            best = (d, i)
        return best if best is not None else (np.empty(0, np.int64), np.empty(0, np.int64))

    if n_threads == 1 or len(bounds) == 1:
        parts = [scan_range(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            parts = list(pool.map(scan_range, bounds))
    merged = _merge_candidates(parts, min(k, db.count))
    return SearchResult(merged.indices, merged.scores.astype(np.int64))


def cosine_chunk_scores(vectors: np.ndarray, start: int, stop: int, query: np.ndarray):
    """Cosine scores of rows [start, stop) against ``query``.

    This is the canonical scoring definition for :func:`topk_cosine`:
    callers must align (start, stop) to the CHUNK_ROWS grid so results do
    not depend on how a scan was partitioned.
    """
    chunk = vectors[start:stop]
    norms = np.sqrt(np.einsum("ij,ij->i", chunk, chunk, dtype=chunk.dtype))
    dead = np.flatnonzero(norms == 0)
    if dead.size:
        raise DegenerateInputError(f"zero-norm database row {start + int(dead[0])}")
    qnorm = np.linalg.norm(query).astype(chunk.dtype)
    if qnorm == 0:
        raise DegenerateInputError("zero-norm query vector")
    return (chunk @ query) / (norms * qnorm)


def topk_cosine(
    vectors: np.ndarray,
    query: np.ndarray,
    k: int,
    partitions: int | None = None,
    threads: int | None = None,
) -> SearchResult:
    """Exact k most cosine-similar rows of a real-valued (C, d) matrix.

    Mirrors :func:`topk_hamming` with descending similarity; exists mainly
    as the real-valued baseline the cost benchmark compares against.
    """
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    vectors = np.atleast_2d(vectors)
    query = np.asarray(query, dtype=vectors.dtype).ravel()
    if query.shape[0] != vectors.shape[1]:
        raise ShapeError(
            f"query has {query.shape[0]} dims, database rows have {vectors.shape[1]}"
        )
    count = vectors.shape[0]
    if count == 0:
        return SearchResult(np.empty(0, np.int64), np.empty(0, vectors.dtype))
    n_chunks = -(-count // CHUNK_ROWS)
    chunk_bounds = _partition_bounds(n_chunks, scan_threads(threads) if partitions is None else partitions)

    def scan_chunks(bound):
        c_lo, c_hi = bound
        best: tuple[np.ndarray, np.ndarray] | None = None
        for c in range(c_lo, c_hi):
            start, stop = c * CHUNK_ROWS, min((c + 1) * CHUNK_ROWS, count)
            s = cosine_chunk_scores(vectors, start, stop, query)
            idx = np.arange(start, stop, dtype=np.int64)
            if s.shape[0] > k:
                kth = np.partition(-s, k - 1)[k - 1]
                keep = np.flatnonzero(-s <= kth)
                s, idx = s[keep], idx[keep]
            if best is not None:
                s = np.concatenate([best[0], s])
                idx = np.concatenate([best[1], idx])
            order = np.lexsort((idx, -s))[:k]
            best = (s[order], idx[order])
        return best if best is not None else (
            np.empty(0, vectors.dtype),
            np.empty(0, np.int64),
        )

    n_threads = scan_threads(threads)
    if n_threads == 1 or len(chunk_bounds) == 1:
        parts = [scan_chunks(b) for b in chunk_bounds]
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            parts = list(pool.map(scan_chunks, chunk_bounds))
    return _merge_candidates(
        [(p[0], p[1]) for p in parts], min(k, count), descending=True
    )


def payload_sizes(count: int, code_bits: int) -> tuple[int, int, float]:
    """(packed-code bytes, float32 bytes, compression ratio) for C records.

    Pure arithmetic, valid for billion-scale counts that are never built.
    The ratio is exactly 32.0 whenever code_bits is a multiple of 64.
    """
    if count < 0 or code_bits <= 0:
        raise InvalidInputError("count must be >= 0 and code_bits positive")
    packed = count * words_for_bits(code_bits) * 8
    real = count * code_bits * 4
    ratio = real / packed if packed else 0.0
    return packed, real, ratio


@dataclass(frozen=True)
class BenchReport:
    """Memory/time comparison of packed-code vs float32 retrieval."""

    count: int
    code_bits: int
    repetitions: int
    packed_payload_bytes: int
    real_payload_bytes: int
    compression_ratio: float
    db_file_bytes: int
    hamming_seconds: float | None
    cosine_seconds: float | None
    speedup: float | None
    backend: str
    threads: int

    def to_dict(self) -> dict:
        return asdict(self)


def _random_word_blocks(rng, count, n_words, mask, block_rows=CHUNK_ROWS):
    done = 0
    while done < count:
        m = min(block_rows, count - done)
        block = rng.integers(0, 2**64, size=(m, n_words), dtype=np.uint64)
        block[:, -1] &= mask
        yield block
        done += m


def bench(
    count: int,
    code_bits: int = 128,
    repetitions: int = 3,
    workdir: str | None = None,
    k: int = 10,
    seed: int = 0,
    threads: int | None = None,
) -> BenchReport:
    """Build C random codes plus a float32 baseline and time full scans.

    Payloads live on disk (the float side does not fit in RAM at desk
    scale); both scanners stream them. Reported times are medians over
    ``repetitions`` full-database top-k scans with one query.
    """
    if repetitions < 1:
        raise InvalidInputError(f"repetitions must be >= 1, got {repetitions}")
    packed, real, ratio = payload_sizes(count, code_bits)
    n_threads = scan_threads(threads)
    if count == 0:
        return BenchReport(
            count=0,
            code_bits=code_bits,
            repetitions=repetitions,
            packed_payload_bytes=0,
            real_payload_bytes=0,
            compression_ratio=0.0,
            db_file_bytes=HEADER_BYTES,
            hamming_seconds=None,
            cosine_seconds=None,
            speedup=None,
            backend=kernels.BACKEND,
            threads=n_threads,
        )

    tmp = None
    if workdir is None:
        tmp = tempfile.TemporaryDirectory(prefix="hashscreen-bench-")
        workdir = tmp.name
    os.makedirs(workdir, exist_ok=True)
    free = shutil.disk_usage(workdir).free
    needed = int((packed + real) * 1.05) + (64 << 20)
    if free < needed:
        if tmp is not None:
            tmp.cleanup()
        raise ResourceLimitError(
            f"{workdir}: need ~{needed >> 20} MiB free, have {free >> 20} MiB"
        )
    try:
        rng = np.random.default_rng(seed)
        n_words = words_for_bits(code_bits)
        mask = tail_mask(code_bits)
        db_path = os.path.join(workdir, "bench_codes.dhdb")
        real_path = os.path.join(workdir, "bench_real.f32")
        db = build_database(
            _random_word_blocks(rng, count, n_words, mask), db_path, code_bits
        )
        with open(real_path, "wb") as fh:
            done = 0
            while done < count:
                m = min(CHUNK_ROWS, count - done)
                fh.write(rng.random((m, code_bits), dtype=np.float32).tobytes())
                done += m
        vectors = np.memmap(real_path, dtype=np.float32, mode="r", shape=(count, code_bits))

        qwords = rng.integers(0, 2**64, size=n_words, dtype=np.uint64)
        qwords[-1] &= mask
        query_code = BinaryCode(qwords, code_bits)
        query_vec = rng.random(code_bits, dtype=np.float32)

        hamming_times, cosine_times = [], []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            topk_hamming(db, query_code, k, threads=n_threads)
            hamming_times.append(time.perf_counter() - t0)
            t0 = time.perf_counter()
            topk_cosine(vectors, query_vec, k, threads=n_threads)
            cosine_times.append(time.perf_counter() - t0)
        h_med, c_med = median(hamming_times), median(cosine_times)
        return BenchReport(
            count=count,
            code_bits=code_bits,
            repetitions=repetitions,
            packed_payload_bytes=packed,
            real_payload_bytes=real,
            compression_ratio=ratio,
            db_file_bytes=os.path.getsize(db_path),
            hamming_seconds=h_med,
            cosine_seconds=c_med,
            speedup=c_med / h_med,
            backend=kernels.BACKEND,
            threads=n_threads,
        )
    finally:
        if tmp is not None:
            tmp.cleanup()
