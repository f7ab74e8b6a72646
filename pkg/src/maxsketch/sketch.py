"""Max-linear sketch over a single-pass stream of unit vectors.

A sketch holds one running maximum per fixed Gaussian projection.  Updating
with a vector x sets ``maxima[j] = max(maxima[j], <w_j, x>)``; the scalar
statistic is the mean of the maxima.  The maxima are the only per-stream
state (O(m) memory), they only ever grow, and two sketches over the same
projections merge by elementwise max, which makes sharded ingestion exact.
"""

import hashlib
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from maxsketch import _kernels
from maxsketch.errors import (
    BindingError,
    DimensionMismatchError,
    EmptySketchError,
    FormatError,
    InvalidInputError,
    InvalidParameterError,
)

# Ingestion gate: vectors this far from unit norm are renormalized, anything
# farther is rejected.  After renormalization norms are unit to within 1e-6.
RENORM_WINDOW = 1e-3
UNIT_TOL = 1e-6

MAX_SEED = 2**64 - 1

SKETCH_MAGIC = b"MXSK"
_SKETCH_VERSION = 1
_HEADER = struct.Struct("<4sHQIIQ")

# Smallest uniform fed to the inverse normal CDF; guards the (probability
# 2^-53 per draw) exact zero that would map to -inf.
_U_FLOOR = 2.0**-54


def _check_seed(seed):
    if not isinstance(seed, (int, np.integer)):
        raise InvalidParameterError(f"seed must be an integer, got {type(seed).__name__}")
    if not 0 <= seed <= MAX_SEED:
        raise InvalidParameterError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return int(seed)


def _fingerprint_seeded(seed, d, m):
    h = hashlib.blake2b(struct.pack("<QII", seed, m, d), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def _fingerprint_matrix(matrix):
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<II", matrix.shape[0], matrix.shape[1]))
    h.update(np.ascontiguousarray(matrix, dtype="<f8").tobytes())
    return int.from_bytes(h.digest(), "little")


def _generate_rows(seed, d, j0, j1):
    """Regenerate projection rows j0..j1-1 for the given seed.

    Each row has its own counter-based stream keyed by (seed, row), with
    coordinate c drawn at counter position c, so any single row is
    recomputable without the rest of the matrix.  Coordinates are inverse-CDF
    normals from 64-bit uniforms, which keeps the addressing exact.
    """
    u = np.empty((j1 - j0, d))
    for j in range(j0, j1):
        gen = np.random.Generator(np.random.Philox(key=(seed << 64) | j))
        u[j - j0] = gen.random(d)
    np.clip(u, _U_FLOOR, None, out=u)
    return ndtri(u)


@dataclass(frozen=True)
class ProjectionSet:
    """m fixed Gaussian directions in R^d.

    Immutable after creation and freely shareable across threads.  When
    ``vectors`` is None the matrix is regenerated on the fly in fixed row
    tiles (memory O(ROW_TILE * d) instead of O(m * d)); seed-derived sets
    built either way produce identical sketches.
    """

    d: int
    m: int
    seed: int | None
    fingerprint: int
    vectors: np.ndarray | None

    @property
    def materialized(self):
        return self.vectors is not None

    def row(self, j):
        """Return projection row j, regenerating it if not materialized."""
        if not 0 <= j < self.m:
            raise InvalidParameterError(f"row index {j} out of range for m={self.m}")
        if self.vectors is not None:
            return self.vectors[j].copy()
        return _generate_rows(self.seed, self.d, j, j + 1)[0]

    def iter_row_tiles(self):
        """Yield (start, rows) tiles covering all m rows in kernel tile order."""
        for r0 in range(0, self.m, _kernels.ROW_TILE):
            r1 = min(r0 + _kernels.ROW_TILE, self.m)
            if self.vectors is not None:
                yield r0, self.vectors[r0:r1]
            else:
                yield r0, _generate_rows(self.seed, self.d, r0, r1)


def create_projections(d, m, seed, materialize=True):
    """Draw m i.i.d. standard-normal directions in R^d, fixed by seed.

    Identical (d, m, seed) always reproduce the same matrix bit-for-bit.

    Args:
        d: embedding dimension, >= 1.
        m: number of projections, >= 1.
        seed: unsigned 64-bit integer keying the generator.
        materialize: store the full (m, d) matrix (default) or regenerate
            rows on demand to keep memory at O(ROW_TILE * d).
    """
    if d < 1:
        raise InvalidParameterError(f"dimension must be >= 1, got {d}")
    if m < 1:
        raise InvalidParameterError(f"projection count must be >= 1, got {m}")
    seed = _check_seed(seed)
    vectors = _generate_rows(seed, d, 0, m) if materialize else None
    return ProjectionSet(
        d=int(d),
        m=int(m),
        seed=seed,
        fingerprint=_fingerprint_seeded(seed, d, m),
        vectors=vectors,
    )


def projections_from_matrix(matrix):
    """Wrap an explicit (m, d) matrix as a ProjectionSet.

    Intended for tests and hand-fixed directions; such a set has no seed and
    sketches bound to it cannot be serialized.
    """
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise InvalidParameterError("projection matrix must be 2-D and nonempty")
    if not np.all(np.isfinite(matrix)):
        raise InvalidInputError("projection matrix contains NaN or Inf")
    m, d = matrix.shape
    return ProjectionSet(
        d=d, m=m, seed=None, fingerprint=_fingerprint_matrix(matrix), vectors=matrix
    )


def normalize_rows(x):
    """Validate and renormalize a (q, d) block of stream vectors.

    Entries must be finite; rows whose Euclidean norm is farther than
    RENORM_WINDOW from 1 are rejected, the rest are rescaled to exact unit
    norm.  Returns a float64 C-contiguous array (a copy when rescaling or
    dtype conversion is needed).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidInputError(f"expected a 2-D block of vectors, got ndim={x.ndim}")
    if x.shape[1] < 1:
        raise InvalidInputError("vectors must have dimension >= 1")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("stream vectors contain NaN or Inf")
    norms = np.linalg.norm(x, axis=1)
    bad = np.abs(norms - 1.0) > RENORM_WINDOW
    if np.any(bad):
        i = int(np.argmax(bad))
        raise InvalidInputError(
            f"vector {i} has norm {norms[i]:.6g}, farther than {RENORM_WINDOW} from unit"
        )
    return x / norms[:, None]


@dataclass
class SketchState:
    """Running maxima plus stream metadata, bound to one ProjectionSet.

    The maxima array is the entire per-stream state: m float64 values.
    An empty sketch holds -inf sentinels; each update can only raise
    entries.  Single-writer: mutate from one thread, share quiescent
    states freely.
    """

    maxima: np.ndarray
    items_seen: int
    d: int
    m: int
    seed: int | None
    fingerprint: int

    def __eq__(self, other):
        if not isinstance(other, SketchState):
            return NotImplemented
        return (
            self.items_seen == other.items_seen
            and self.d == other.d
            and self.m == other.m
            and self.seed == other.seed
            and self.fingerprint == other.fingerprint
            and np.array_equal(self.maxima, other.maxima)
        )

    @property
    def is_empty(self):
        return self.items_seen == 0

    def copy(self):
        return SketchState(
            maxima=self.maxima.copy(),
            items_seen=self.items_seen,
            d=self.d,
            m=self.m,
            seed=self.seed,
            fingerprint=self.fingerprint,
        )

    def state_nbytes(self):
        """Size of the per-stream state (the maxima array) in bytes."""
        return self.maxima.nbytes


def new_sketch(proj):
    """Empty sketch bound to the given projections."""
    return SketchState(
        maxima=np.full(proj.m, -np.inf, dtype=np.float64),
        items_seen=0,
        d=proj.d,
        m=proj.m,
        seed=proj.seed,
        fingerprint=proj.fingerprint,
    )


def _check_binding(state, proj):
    if state.fingerprint != proj.fingerprint:
        raise BindingError(
            "sketch state is bound to a different projection set "
            f"(state fingerprint {state.fingerprint:#x}, projections {proj.fingerprint:#x})"
        )


def _fold_block(state, block, proj):
    if proj.materialized:
        _kernels.max_inner_update(state.maxima, proj.vectors, block)
    else:
        for r0, rows in proj.iter_row_tiles():
            _kernels.max_inner_update(state.maxima[r0 : r0 + rows.shape[0]], rows, block)


def update(state, x, proj):
    """Fold one vector into the sketch; returns the same state, mutated.

    O(m*d) work, O(m) state.  The vector is renormalized within the
    ingestion window and rejected outside it.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError(f"expected a 1-D vector, got ndim={x.ndim}")
    return update_batch(state, x[None, :], proj)


def update_batch(state, block, proj):
    """Fold a (q, d) block of vectors into the sketch, in stream order."""
    _check_binding(state, proj)
    block = np.asarray(block)
    if block.ndim != 2:
        raise InvalidInputError(f"expected a 2-D block, got ndim={block.ndim}")
    if block.shape[1] != proj.d:
        raise DimensionMismatchError(
            f"vector dimension {block.shape[1]} does not match projection dimension {proj.d}"
        )
    if block.shape[0] == 0:
        return state
    block = normalize_rows(block)
    _fold_block(state, block, proj)
    state.items_seen += block.shape[0]
    return state


def statistic(state):
    """Mean of the m running maxima; undefined (an error) on an empty sketch."""
    if state.items_seen == 0:
        raise EmptySketchError("statistic is undefined for an empty sketch")
    return float(np.mean(state.maxima))


def merge(a, b):
    """Combine two sketches of the same projections into a new one.

    Elementwise max of maxima; exactly equals sketching the concatenated
    streams.  Commutative and associative with the empty sketch as identity.
    """
    if a.fingerprint != b.fingerprint:
        raise BindingError("cannot merge sketches bound to different projection sets")
    return SketchState(
        maxima=np.maximum(a.maxima, b.maxima),
        items_seen=a.items_seen + b.items_seen,
        d=a.d,
        m=a.m,
        seed=a.seed,
        fingerprint=a.fingerprint,
    )


def serialize(state):
    """Versioned binary encoding of a sketch (header + m little-endian f64)."""
    if state.seed is None:
        raise InvalidInputError(
            "sketches bound to hand-built projection matrices cannot be serialized"
        )
    header = _HEADER.pack(
        SKETCH_MAGIC, _SKETCH_VERSION, state.seed, state.m, state.d, state.items_seen
    )
    return header + np.ascontiguousarray(state.maxima, dtype="<f8").tobytes()


def deserialize(buf):
    """Inverse of serialize; round-trips bit-exactly including sentinels."""
    if len(buf) < _HEADER.size:
        raise FormatError(f"sketch data truncated: {len(buf)} bytes, header needs {_HEADER.size}")
    magic, version, seed, m, d, items_seen = _HEADER.unpack_from(buf)
    if magic != SKETCH_MAGIC:
        raise FormatError(f"bad sketch magic {magic!r}, expected {SKETCH_MAGIC!r}")
    if version != _SKETCH_VERSION:
        raise FormatError(f"unsupported sketch version {version}")
    if m < 1 or d < 1:
        raise FormatError(f"invalid sketch dimensions m={m}, d={d}")
    expected = _HEADER.size + 8 * m
    if len(buf) != expected:
        raise FormatError(f"sketch data has {len(buf)} bytes, expected {expected}")
    maxima = np.frombuffer(buf, dtype="<f8", count=m, offset=_HEADER.size).astype(
        np.float64, copy=True
    )
    empty = bool(np.all(np.isneginf(maxima)))
    if (items_seen == 0) != empty:
        raise FormatError("items_seen and maxima sentinels disagree")
    if items_seen > 0 and not np.all(np.isfinite(maxima)):
        raise FormatError("non-empty sketch contains non-finite maxima")
    return SketchState(
        maxima=maxima,
        items_seen=items_seen,
        d=d,
        m=m,
        seed=seed,
        fingerprint=_fingerprint_seeded(seed, d, m),
    )
