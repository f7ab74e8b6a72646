"""File formats: embedding streams, sketch files, and ground-truth sidecars.

Binary stream layout: magic "MXS1", u32 little-endian n, u32 little-endian d,
then n*d little-endian float32 values row-major.  CSV streams hold one
vector per line as comma-separated decimals.  Readers yield fixed-size row
blocks so arbitrarily long streams never have to fit in memory.
"""

import csv
import io
import json
import struct
from pathlib import Path

import numpy as np

from maxsketch.errors import FormatError, InvalidParameterError
from maxsketch.sketch import deserialize, serialize

STREAM_MAGIC = b"MXS1"
_STREAM_HEADER = struct.Struct("<4sII")

DEFAULT_BLOCK_ROWS = 8192


class StreamWriter:
    """Incremental binary stream writer; knows n up front.

    Use as a context manager and feed float blocks via write(); the row
    count is checked against the declared n on close.
    """

    def __init__(self, path, n, d):
        if n < 0 or d < 1:
            raise InvalidParameterError(f"invalid stream shape n={n}, d={d}")
        self.path = Path(path)
        self.n = int(n)
        self.d = int(d)
        self._written = 0
        self._fh = open(self.path, "wb")
        self._fh.write(_STREAM_HEADER.pack(STREAM_MAGIC, self.n, self.d))

    def write(self, block):
        block = np.ascontiguousarray(block, dtype="<f4")
        if block.ndim != 2 or block.shape[1] != self.d:
            raise InvalidParameterError(f"block shape {block.shape} does not match d={self.d}")
        self._fh.write(block.tobytes())
        self._written += block.shape[0]

    def close(self):
        self._fh.close()
        if self._written != self.n:
            raise FormatError(f"stream declared n={self.n} but {self._written} rows were written")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self._fh.close()
        return False


def write_stream(path, vectors):
    """Write a full (n, d) array as a binary stream file."""
    vectors = np.asarray(vectors)
    with StreamWriter(path, vectors.shape[0], vectors.shape[1]) as w:
        w.write(vectors)


def write_stream_csv(path, vectors):
    """Write a (n, d) array as a CSV stream, one vector per line."""
    vectors = np.asarray(vectors, dtype=np.float32)
    with open(path, "w", newline="") as fh:
        for row in vectors:
            fh.write(",".join(f"{v:.9g}" for v in row))
            fh.write("\n")


def sniff_format(path):
    """Return "binary" or "csv" by inspecting the file's first bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    return "binary" if head == STREAM_MAGIC else "csv"


def read_stream_header(path):
    """Return (n, d) for a binary stream; (None, d) for CSV (n unknown)."""
    if sniff_format(path) == "binary":
        with open(path, "rb") as fh:
            header = fh.read(_STREAM_HEADER.size)
        if len(header) < _STREAM_HEADER.size:
            raise FormatError(f"{path}: truncated header at byte {len(header)}")
        _, n, d = _STREAM_HEADER.unpack(header)
        if d < 1:
            raise FormatError(f"{path}: invalid dimension d={d} in header")
        return n, d
    with open(path, "r", newline="") as fh:
        first = fh.readline()
    if not first.strip():
        raise FormatError(f"{path}: empty CSV stream has no dimension")
    return None, len(first.split(","))


def iter_stream_blocks(path, block_rows=DEFAULT_BLOCK_ROWS):
    """Yield float32 (rows, d) blocks from a binary or CSV stream file.

    Single pass, bounded memory.  Malformed binary files raise FormatError
    with the byte offset where the problem was detected.
    """
    if block_rows < 1:
        raise InvalidParameterError("block_rows must be >= 1")
    if sniff_format(path) == "binary":
        yield from _iter_binary_blocks(path, block_rows)
    else:
        yield from _iter_csv_blocks(path, block_rows)


def _iter_binary_blocks(path, block_rows):
    with open(path, "rb") as fh:
        header = fh.read(_STREAM_HEADER.size)
        if len(header) < _STREAM_HEADER.size:
            raise FormatError(f"{path}: truncated header at byte {len(header)}")
        magic, n, d = _STREAM_HEADER.unpack(header)
        if magic != STREAM_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r} at byte 0")
        if d < 1:
            raise FormatError(f"{path}: invalid dimension d={d} in header")
        row_bytes = 4 * d
        remaining = n
        offset = _STREAM_HEADER.size
        while remaining > 0:
            rows = min(block_rows, remaining)
            data = fh.read(rows * row_bytes)
            if len(data) != rows * row_bytes:
                raise FormatError(
                    f"{path}: stream truncated at byte {offset + len(data)}, "
                    f"expected {n} rows of {row_bytes} bytes"
                )
            yield np.frombuffer(data, dtype="<f4").reshape(rows, d)
            offset += rows * row_bytes
            remaining -= rows
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after row {n} (byte {offset})")


def _iter_csv_blocks(path, block_rows):
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        d = None
        rows = []
        for lineno, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if d is None:
                d = len(rec)
            elif len(rec) != d:
                raise FormatError(f"{path}: line {lineno} has {len(rec)} fields, expected {d}")
            try:
                rows.append([float(v) for v in rec])
            except ValueError as exc:
                raise FormatError(f"{path}: line {lineno}: {exc}") from None
            if len(rows) == block_rows:
                yield np.asarray(rows, dtype=np.float32)
                rows = []
        if rows:
            yield np.asarray(rows, dtype=np.float32)


def write_sketch(path, state):
    Path(path).write_bytes(serialize(state))


def read_sketch(path):
    try:
        return deserialize(Path(path).read_bytes())
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


def ground_truth_paths(stream_path):
    """Sidecar paths (labels CSV, meta JSON) for a stream file."""
    p = Path(stream_path)
    return p.with_suffix(p.suffix + ".labels.csv"), p.with_suffix(p.suffix + ".meta.json")


def write_ground_truth(stream_path, assignment, meta):
    """Write the "index,center_id" labels CSV and the JSON header sidecar."""
    labels_path, meta_path = ground_truth_paths(stream_path)
    buf = io.StringIO()
    buf.write("index,center_id\n")
    for i, c in enumerate(assignment):
        buf.write(f"{i},{int(c)}\n")
    labels_path.write_text(buf.getvalue())
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return labels_path, meta_path


def read_ground_truth_labels(labels_path):
    """Read an "index,center_id" sidecar back as an int64 assignment array."""
    with open(labels_path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["index", "center_id"]:
            raise FormatError(f"{labels_path}: unexpected header {header}")
        pairs = [(int(r[0]), int(r[1])) for r in reader if r]
    pairs.sort()
    return np.asarray([c for _, c in pairs], dtype=np.int64)
