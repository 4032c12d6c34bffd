"""Dataset and artifact file formats.

All formats are little-endian regardless of platform:

* fvecs: per record, an int32 dimension d followed by d float32 values.
* bvecs: per record, an int32 dimension d followed by d unsigned bytes.
* PQKC:  PQ code file. Header (magic "PQKC", version u32, N u64, M u32,
  L u32) followed by N * M payload bytes, one byte per subindex.
* PQCB:  codebook file. Header (magic "PQCB", version u32, D u32,
  M u32, L u32) followed by M * L * (D / M) float32 values in
  subspace-major, codeword-major, dimension-minor order.
* PQKB:  binary code file. Header (magic "PQKB", B u32, N u64)
  followed by N * B/8 raw bytes.
* labels: a bare array of uint32 values, no header.

Readers validate as they go and name the offending record in every
diagnostic. The iter_* variants stream fixed-size chunks and never
allocate proportional to the file size.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterator

import numpy as np

from .pq import MAX_CODEWORDS, PQCodebook

_CODE_HEADER = struct.Struct("<4sIQII")
_BOOK_HEADER = struct.Struct("<4sIIII")
_BINARY_HEADER = struct.Struct("<4sIQ")
FORMAT_VERSION = 1
RESULT_FORMAT_VERSION = 1


class FormatError(ValueError):
    """A file does not conform to its declared format."""


def _read_exact(fh, count: int, path, what: str) -> bytes:
    raw = fh.read(count)
    if len(raw) != count:
        raise FormatError(f"{path}: truncated {what} ({len(raw)} of {count} bytes)")
    return raw


# ---------------------------------------------------------------------------
# fvecs / bvecs


def _iter_vec_records(
    path, component_bytes: int, chunk_records: int
) -> Iterator[tuple[int, np.ndarray, int]]:
    """Yield (dim, payload byte block, first record index) per chunk."""
    with open(path, "rb") as fh:
        head = fh.read(4)
        if not head:
            return
        if len(head) < 4:
            raise FormatError(f"{path}: truncated record 0")
        dim = struct.unpack("<i", head)[0]
        if dim <= 0:
            raise FormatError(f"{path}: record 0 declares dimension {dim}")
        record_bytes = 4 + component_bytes * dim
        fh.seek(0)
        index = 0
        while True:
            raw = fh.read(record_bytes * chunk_records)
            if not raw:
                return
            count, tail = divmod(len(raw), record_bytes)
            if tail:
                raise FormatError(f"{path}: truncated record {index + count}")
            block = np.frombuffer(raw, dtype=np.uint8).reshape(count, record_bytes)
            dims = block[:, :4].copy().view("<i4").ravel()
            if not np.all(dims == dim):
                bad = int(np.argmax(dims != dim))
                raise FormatError(
                    f"{path}: record {index + bad} declares dimension "
                    f"{dims[bad]}, expected {dim}"
                )
            yield dim, block[:, 4:], index
            index += count


def iter_fvecs(path, chunk_records: int = 65536) -> Iterator[np.ndarray]:
    """Stream an fvecs file as float32 chunks of shape (n_i, D)."""
    for dim, payload, _ in _iter_vec_records(path, 4, chunk_records):
        yield payload.copy().view("<f4").reshape(-1, dim)


def read_fvecs(path) -> np.ndarray:
    """Load a whole fvecs file as a float32 array of shape (N, D)."""
    chunks = list(iter_fvecs(path))
    if not chunks:
        return np.empty((0, 0), dtype=np.float32)
    return np.concatenate(chunks, axis=0)


def write_fvecs(path, vectors: np.ndarray) -> None:
    """Write float32 vectors of shape (N, D) as an fvecs file."""
    data = np.ascontiguousarray(vectors, dtype="<f4")
    if data.ndim != 2 or data.shape[1] == 0:
        raise ValueError(f"vectors must have shape (N, D), D >= 1, got {data.shape}")
    n, dim = data.shape
    out = np.empty((n, dim + 1), dtype="<f4")
    out[:, 0] = np.full(n, dim, dtype="<i4").view("<f4")
    out[:, 1:] = data
    with open(path, "wb") as fh:
        fh.write(out.tobytes())


def iter_bvecs(path, chunk_records: int = 65536) -> Iterator[np.ndarray]:
    """Stream a bvecs file as float32 chunks (byte components widened)."""
    for dim, payload, _ in _iter_vec_records(path, 1, chunk_records):
        yield payload.astype(np.float32).reshape(-1, dim)


def read_bvecs(path) -> np.ndarray:
    """Load a whole bvecs file, widened to float32."""
    chunks = list(iter_bvecs(path))
    if not chunks:
        return np.empty((0, 0), dtype=np.float32)
    return np.concatenate(chunks, axis=0)


def write_bvecs(path, vectors: np.ndarray) -> None:
    """Write integer-valued vectors in [0, 255] as a bvecs file."""
    data = np.asarray(vectors)
    if data.ndim != 2 or data.shape[1] == 0:
        raise ValueError(f"vectors must have shape (N, D), D >= 1, got {data.shape}")
    rounded = np.rint(data)
    if not np.array_equal(rounded, data) or data.min(initial=0) < 0 or data.max(initial=0) > 255:
        raise ValueError("bvecs components must be integers in [0, 255]")
    n, dim = data.shape
    payload = rounded.astype(np.uint8)
    out = np.empty((n, 4 + dim), dtype=np.uint8)
    out[:, :4] = np.full(n, dim, dtype="<i4").view(np.uint8).reshape(n, 4)
    out[:, 4:] = payload
    with open(path, "wb") as fh:
        fh.write(out.tobytes())


# ---------------------------------------------------------------------------
# PQ code files


def write_codes(path, codes: np.ndarray, num_codewords: int) -> None:
    """Write uint8 PQ codes of shape (N, M) as a PQKC file."""
    arr = np.ascontiguousarray(codes, dtype=np.uint8)
    if arr.ndim != 2 or arr.shape[1] == 0:
        raise ValueError(f"codes must have shape (N, M), M >= 1, got {arr.shape}")
    if not 2 <= num_codewords <= MAX_CODEWORDS:
        raise ValueError(f"num_codewords must be in [2, {MAX_CODEWORDS}], got {num_codewords}")
    if arr.size and arr.max() >= num_codewords:
        raise ValueError(
            f"codes contain index {arr.max()}, must be below L={num_codewords}"
        )
    n, m = arr.shape
    with open(path, "wb") as fh:
        fh.write(_CODE_HEADER.pack(b"PQKC", FORMAT_VERSION, n, m, num_codewords))
        fh.write(arr.tobytes())


class CodesWriter:
    """Incremental PQKC writer for streaming encoders.

    The header is written up front from the promised record count;
    close() verifies that exactly that many records arrived.
    """

    def __init__(self, path, n: int, m: int, num_codewords: int) -> None:
        if m < 1 or not 2 <= num_codewords <= MAX_CODEWORDS:
            raise ValueError(f"invalid code geometry M={m}, L={num_codewords}")
        self._path = path
        self._n = n
        self._m = m
        self._l = num_codewords
        self._written = 0
        self._fh = open(path, "wb")
        self._fh.write(_CODE_HEADER.pack(b"PQKC", FORMAT_VERSION, n, m, num_codewords))

    def write(self, codes: np.ndarray) -> None:
        arr = np.ascontiguousarray(codes, dtype=np.uint8)
        if arr.ndim != 2 or arr.shape[1] != self._m:
            raise ValueError(f"chunk must have shape (n, {self._m}), got {arr.shape}")
        if arr.size and arr.max() >= self._l:
            raise ValueError(
                f"chunk contains index {arr.max()}, must be below L={self._l}"
            )
        self._fh.write(arr.tobytes())
        self._written += len(arr)

    def close(self) -> None:
        self._fh.close()
        if self._written != self._n:
            raise ValueError(
                f"{self._path}: wrote {self._written} records, header promised {self._n}"
            )

    def __enter__(self) -> "CodesWriter":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is None:
            self.close()
        else:
            self._fh.close()


def read_codes_header(path) -> tuple[int, int, int]:
    """Return (N, M, L) from a PQKC header."""
    with open(path, "rb") as fh:
        magic, version, n, m, l_count = _CODE_HEADER.unpack(
            _read_exact(fh, _CODE_HEADER.size, path, "PQKC header")
        )
    if magic != b"PQKC":
        raise FormatError(f"{path}: bad magic {magic!r}, expected b'PQKC'")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported PQKC version {version}")
    if m == 0 or not 2 <= l_count <= MAX_CODEWORDS:
        raise FormatError(f"{path}: invalid header fields M={m}, L={l_count}")
    return n, m, l_count


def iter_codes(path, chunk_records: int = 262144) -> Iterator[np.ndarray]:
    """Stream a PQKC file as uint8 chunks of shape (n_i, M)."""
    n, m, l_count = read_codes_header(path)
    with open(path, "rb") as fh:
        fh.seek(_CODE_HEADER.size)
        index = 0
        while index < n:
            take = min(chunk_records, n - index)
            raw = fh.read(take * m)
            count, tail = divmod(len(raw), m)
            if count < take:
                raise FormatError(
                    f"{path}: truncated record {index + count} "
                    f"(header promises {n} records)"
                )
            chunk = np.frombuffer(raw, dtype=np.uint8).reshape(count, m)
            if chunk.max(initial=0) >= l_count:
                flat = int(np.argmax(chunk >= l_count))
                raise FormatError(
                    f"{path}: record {index + flat // m} holds subindex "
                    f"{chunk.ravel()[flat]}, must be below L={l_count}"
                )
            yield chunk.copy()
            index += count
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after {n} records")


def read_codes(path) -> tuple[np.ndarray, int, int]:
    """Load a PQKC file. Returns (codes of shape (N, M), M, L)."""
    n, m, l_count = read_codes_header(path)
    chunks = list(iter_codes(path))
    codes = np.concatenate(chunks, axis=0) if chunks else np.empty((0, m), np.uint8)
    return codes, m, l_count


# ---------------------------------------------------------------------------
# codebook files


def write_codebook(path, codebook: PQCodebook) -> None:
    """Write a PQCodebook as a PQCB file."""
    m, l_count, _ = codebook.codewords.shape
    with open(path, "wb") as fh:
        fh.write(
            _BOOK_HEADER.pack(b"PQCB", FORMAT_VERSION, codebook.dim, m, l_count)
        )
        fh.write(np.ascontiguousarray(codebook.codewords, dtype="<f4").tobytes())


def read_codebook(path) -> PQCodebook:
    """Load a PQCB file into a PQCodebook."""
    with open(path, "rb") as fh:
        magic, version, dim, m, l_count = _BOOK_HEADER.unpack(
            _read_exact(fh, _BOOK_HEADER.size, path, "PQCB header")
        )
        if magic != b"PQCB":
            raise FormatError(f"{path}: bad magic {magic!r}, expected b'PQCB'")
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported PQCB version {version}")
        if m == 0 or dim % m != 0 or not 2 <= l_count <= MAX_CODEWORDS:
            raise FormatError(
                f"{path}: invalid header fields D={dim}, M={m}, L={l_count}"
            )
        payload = _read_exact(fh, 4 * m * l_count * (dim // m), path, "PQCB payload")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after codebook payload")
    codewords = np.frombuffer(payload, dtype="<f4").reshape(m, l_count, dim // m)
    return PQCodebook(codewords.copy())


# ---------------------------------------------------------------------------
# binary code files


def write_binary_codes(path, packed: np.ndarray) -> None:
    """Write packed binary codes of shape (N, B/8) as a PQKB file."""
    arr = np.ascontiguousarray(packed, dtype=np.uint8)
    if arr.ndim != 2 or arr.shape[1] == 0:
        raise ValueError(f"packed codes must have shape (N, B/8), got {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(_BINARY_HEADER.pack(b"PQKB", 8 * arr.shape[1], len(arr)))
        fh.write(arr.tobytes())


def read_binary_codes(path) -> tuple[np.ndarray, int]:
    """Load a PQKB file. Returns (packed codes of shape (N, B/8), B)."""
    with open(path, "rb") as fh:
        magic, bits, n = _BINARY_HEADER.unpack(
            _read_exact(fh, _BINARY_HEADER.size, path, "PQKB header")
        )
        if magic != b"PQKB":
            raise FormatError(f"{path}: bad magic {magic!r}, expected b'PQKB'")
        if bits == 0 or bits % 8 != 0:
            raise FormatError(f"{path}: bit count {bits} is not a positive multiple of 8")
        payload = _read_exact(fh, n * (bits // 8), path, "PQKB payload")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after {n} records")
    return np.frombuffer(payload, dtype=np.uint8).reshape(n, bits // 8).copy(), bits


# ---------------------------------------------------------------------------
# label arrays


def write_labels(path, labels: np.ndarray) -> None:
    """Write cluster labels as a bare little-endian uint32 array."""
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ValueError(f"labels must be 1-d, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() > np.iinfo(np.uint32).max):
        raise ValueError("labels must fit in uint32")
    with open(path, "wb") as fh:
        fh.write(np.ascontiguousarray(arr, dtype="<u4").tobytes())


def read_labels(path) -> np.ndarray:
    """Load a bare uint32 label array."""
    raw = Path(path).read_bytes()
    if len(raw) % 4:
        raise FormatError(f"{path}: size {len(raw)} is not a multiple of 4")
    return np.frombuffer(raw, dtype="<u4").copy()


# ---------------------------------------------------------------------------
# synthetic data


def generate_synthetic(
    n: int, dim: int, clusters: int, spread: float, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Draw a labeled Gaussian-mixture dataset.

    Cluster means are sampled uniformly in the unit hypercube [0, 1)^D,
    each point picks a cluster uniformly and adds isotropic Gaussian
    noise with the given standard deviation. Deterministic under the
    seed.

    Args:
        n: Number of points (>= 1).
        dim: Dimensionality (>= 1).
        clusters: Number of mixture components (>= 1).
        spread: Component standard deviation (>= 0).
        seed: RNG seed.

    Returns:
        (vectors, labels): float32 data of shape (n, dim) and the uint32
        ground-truth component of every point.
    """
    if n < 1 or dim < 1 or clusters < 1:
        raise ValueError(
            f"n, dim and clusters must be positive, got n={n}, dim={dim}, "
            f"clusters={clusters}"
        )
    if spread < 0:
        raise ValueError(f"spread must be non-negative, got {spread}")
    rng = np.random.default_rng(seed)
    means = rng.uniform(0.0, 1.0, size=(clusters, dim))
    labels = rng.integers(0, clusters, size=n).astype(np.uint32)
    points = means[labels] + rng.normal(0.0, spread, size=(n, dim)) if spread > 0 else means[labels]
    return points.astype(np.float32), labels


# ---------------------------------------------------------------------------
# result documents


def save_result_document(path, document: dict) -> None:
    """Write a clustering result summary as versioned JSON."""
    payload = dict(document)
    payload.setdefault("format_version", RESULT_FORMAT_VERSION)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_result_document(path) -> dict:
    """Read a result document back, checking its version."""
    with open(path, "r", encoding="utf-8") as fh:
        document = json.load(fh)
    version = document.get("format_version")
    if version != RESULT_FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported result version {version!r}")
    return document
