"""Synthetic clusterable streams with known ground truth.

Each stream draws k* latent unit centers (orthogonal, or rejection-sampled
under a coherence bound rho) and emits observations on the spherical cap
{x : <x, center> >= 1 - eta/2}: alignment u uniform on [1 - eta/2, 1],
tangent direction uniform on the orthogonal sphere.  The alignment
constraint therefore holds surely, not just in expectation, and the first
k* items cover every center once so the true distinct count is exactly k*.
"""

from dataclasses import dataclass

import numpy as np

from maxsketch.errors import GenerationError, InvalidInputError, InvalidParameterError

CENTER_MODES = ("orthonormal", "rejection")

# Keeps sampled alignments strictly off the cap boundary so float rounding
# in <x, center> can never dip below 1 - eta/2.
_EDGE_NUDGE = 4e-16

_DEFAULT_REJECTION_RETRIES = 500

# Rounding allowance when comparing measured coherence against a spec rho;
# orthonormalized centers carry Gram entries of order 1e-16, which must not
# fail an exact rho = 0 check.
SEPARATION_ATOL = 1e-9


@dataclass(frozen=True)
class ClusterSpec:
    """Ground-truth parameters for a generated stream."""

    k_star: int
    d: int
    eta: float
    rho: float
    center_mode: str = "orthonormal"

    def __post_init__(self):
        if self.k_star < 2:
            raise InvalidParameterError(f"k_star must be >= 2, got {self.k_star}")
        if self.d < 1:
            raise InvalidParameterError(f"d must be >= 1, got {self.d}")
        if not 0.0 <= self.eta < 1.0:
            raise InvalidParameterError(f"eta must be in [0, 1), got {self.eta}")
        if not 0.0 <= self.rho < 1.0:
            raise InvalidParameterError(f"rho must be in [0, 1), got {self.rho}")
        if self.center_mode not in CENTER_MODES:
            raise InvalidParameterError(
                f"center_mode must be one of {CENTER_MODES}, got {self.center_mode!r}"
            )
        if self.center_mode == "orthonormal" and self.k_star > self.d:
            raise InvalidParameterError(
                f"orthonormal centers need k_star <= d, got k_star={self.k_star} > d={self.d}"
            )

    def as_dict(self):
        return {
            "k_star": self.k_star,
            "d": self.d,
            "eta": self.eta,
            "rho": self.rho,
            "center_mode": self.center_mode,
        }


@dataclass(frozen=True)
class LatentCenters:
    """k* unit-norm center rows plus their realized coherence."""

    centers: np.ndarray
    realized_rho: float

    @property
    def k(self):
        return self.centers.shape[0]

    @property
    def d(self):
        return self.centers.shape[1]


def _max_coherence(centers):
    gram = centers @ centers.T
    np.fill_diagonal(gram, 0.0)
    return float(np.abs(gram).max()) if centers.shape[0] > 1 else 0.0


def make_centers(spec, seed, max_retries=_DEFAULT_REJECTION_RETRIES):
    """Draw latent centers for spec.

    Orthonormal mode orthonormalizes Gaussian draws (redrawing on numerical
    near-dependence), so the realized coherence is zero to rounding.
    Rejection mode redraws normalized Gaussian sets until every pairwise
    |inner product| is within spec.rho, and reports the best coherence seen
    if the retry cap runs out.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x43]))
    k, d = spec.k_star, spec.d
    if spec.center_mode == "orthonormal":
        for _ in range(max_retries):
            raw = rng.standard_normal((d, k))
            q, r = np.linalg.qr(raw)
            if np.abs(np.diag(r)).min() > 1e-8:
                centers = np.ascontiguousarray(q.T)
                return LatentCenters(centers=centers, realized_rho=_max_coherence(centers))
        raise GenerationError("orthonormalization kept hitting near-dependent draws")
    best = np.inf
    for _ in range(max_retries):
        raw = rng.standard_normal((k, d))
        centers = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        coherence = _max_coherence(centers)
        best = min(best, coherence)
        if coherence <= spec.rho:
            return LatentCenters(centers=np.ascontiguousarray(centers), realized_rho=coherence)
    raise GenerationError(
        f"could not draw {k} centers in d={d} with coherence <= {spec.rho} "
        f"after {max_retries} attempts; best achievable was about {best:.4g}"
    )


def _cap_block(centers_block, eta, rng):
    """Cap-sample one observation per row of centers_block."""
    b, d = centers_block.shape
    if eta == 0.0 or d == 1:
        return centers_block.copy()
    u = rng.uniform(1.0 - eta / 2.0, 1.0, size=b)
    np.clip(u, 1.0 - eta / 2.0 + _EDGE_NUDGE, 1.0, out=u)
    g = rng.standard_normal((b, d))
    g -= np.einsum("ij,ij->i", g, centers_block)[:, None] * centers_block
    norms = np.linalg.norm(g, axis=1)
    # A tangent draw of essentially zero norm (probability ~0) degenerates
    # to the center itself, which still satisfies the cap constraint.
    tiny = norms < 1e-12
    norms[tiny] = 1.0
    u[tiny] = 1.0
    g /= norms[:, None]
    return u[:, None] * centers_block + np.sqrt(np.clip(1.0 - u * u, 0.0, None))[:, None] * g


def sample_observation(center, eta, rng):
    """One observation on the alignment cap around a unit center.

    Returns a unit vector x with <x, center> = u drawn uniformly from
    [1 - eta/2, 1]; consequently ||x - center||^2 = 2(1 - u) <= eta.
    """
    if not 0.0 <= eta < 1.0:
        raise InvalidParameterError(f"eta must be in [0, 1), got {eta}")
    center = np.asarray(center, dtype=np.float64)
    return _cap_block(center[None, :], eta, rng)[0]


@dataclass(frozen=True)
class GeneratedStream:
    """Synthetic stream with its ground truth attached."""

    vectors: np.ndarray
    assignment: np.ndarray
    spec: ClusterSpec
    seed: int
    centers: LatentCenters

    @property
    def n(self):
        return self.vectors.shape[0]

    @property
    def d(self):
        return self.vectors.shape[1]

    @property
    def k_star(self):
        return self.spec.k_star

    def min_alignment(self):
        aligned = self.centers.centers[self.assignment]
        return float(np.einsum("ij,ij->i", self.vectors, aligned).min())

    def eta_hat(self):
        """Measured within-cluster slack 2 * (1 - min alignment)."""
        return max(0.0, 2.0 * (1.0 - self.min_alignment()))


def _stream_rng(seed):
    return np.random.default_rng(np.random.SeedSequence([int(seed), 0x51]))


def _assignment_blocks(k_star, n, rng, block):
    """Yield assignment blocks: each center once, then uniform draws."""
    for i0 in range(0, n, block):
        b = min(block, n - i0)
        out = np.empty(b, dtype=np.int64)
        covered = min(max(k_star - i0, 0), b)
        if covered:
            out[:covered] = np.arange(i0, i0 + covered)
        if b > covered:
            out[covered:] = rng.integers(0, k_star, size=b - covered)
        yield out


# Internal generation chunk; fixed so the emitted stream is a function of
# (spec, n, seed) alone, independent of the block size a caller asks for.
_GEN_CHUNK = 8192


def generate_stream_blocks(spec, n, seed, block=8192):
    """Yield (vectors, assignment, centers) blocks for a clusterable stream.

    Bounded memory for arbitrarily long streams.  The data is generated in
    fixed-size internal chunks and re-sliced, so any requested block size
    (and the materializing generate_stream) produces identical values.
    """
    if n < spec.k_star:
        raise InvalidParameterError(f"n={n} must be at least k_star={spec.k_star}")
    if block < 1:
        raise InvalidParameterError("block must be >= 1")
    centers = make_centers(spec, seed)
    rng = _stream_rng(seed)
    pend_v = pend_a = None
    for assignment in _assignment_blocks(spec.k_star, n, rng, _GEN_CHUNK):
        vectors = _cap_block(centers.centers[assignment], spec.eta, rng)
        if pend_v is not None:
            vectors = np.concatenate([pend_v, vectors])
            assignment = np.concatenate([pend_a, assignment])
        start = 0
        while vectors.shape[0] - start >= block:
            yield vectors[start : start + block], assignment[start : start + block], centers
            start += block
        pend_v, pend_a = vectors[start:], assignment[start:]
    if pend_v is not None and pend_v.shape[0]:
        yield pend_v, pend_a, centers


def generate_stream(spec, n, seed):
    """Materialize a full clusterable stream with ground truth.

    Deterministic in (spec, n, seed); every center appears at least once;
    the stream always passes validate_clusterable against its own spec.
    """
    vec_blocks, asg_blocks = [], []
    centers = None
    for vectors, assignment, centers in generate_stream_blocks(spec, n, seed):
        vec_blocks.append(vectors)
        asg_blocks.append(assignment)
    return GeneratedStream(
        vectors=np.concatenate(vec_blocks),
        assignment=np.concatenate(asg_blocks),
        spec=spec,
        seed=int(seed),
        centers=centers,
    )


@dataclass(frozen=True)
class ValidationReport:
    """Measured clusterability of a labeled stream."""

    n: int
    k: int
    min_alignment: float
    max_cross: float
    eta_hat: float
    rho_hat: float
    alignment_ok: bool
    separation_ok: bool
    passed: bool

    def as_dict(self):
        return {
            "n": self.n,
            "k": self.k,
            "min_alignment": self.min_alignment,
            "max_cross": self.max_cross,
            "eta_hat": self.eta_hat,
            "rho_hat": self.rho_hat,
            "alignment_ok": self.alignment_ok,
            "separation_ok": self.separation_ok,
            "passed": self.passed,
        }


def validate_clusterable(vectors, assignment, centers, eta, rho):
    """Check a labeled stream against the clusterability definition.

    Reports the worst within-cluster alignment and worst cross-center
    |inner product|, pass/fail against (eta, rho), and the measured
    eta_hat = 2(1 - min alignment) and rho_hat usable as honest estimator
    parameters for real labeled data.  The separation comparison allows
    SEPARATION_ATOL of rounding so orthonormalized centers pass rho = 0.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    assignment = np.asarray(assignment)
    centers = np.asarray(centers, dtype=np.float64)
    if vectors.ndim != 2 or centers.ndim != 2 or assignment.ndim != 1:
        raise InvalidInputError("vectors and centers must be 2-D, assignment 1-D")
    if vectors.shape[0] != assignment.shape[0]:
        raise InvalidInputError(
            f"{vectors.shape[0]} vectors but {assignment.shape[0]} assignments"
        )
    if vectors.shape[1] != centers.shape[1]:
        raise InvalidInputError(
            f"vector dimension {vectors.shape[1]} != center dimension {centers.shape[1]}"
        )
    if assignment.size and (assignment.min() < 0 or assignment.max() >= centers.shape[0]):
        raise InvalidInputError("assignment references a center index out of range")

    alignments = np.einsum("ij,ij->i", vectors, centers[assignment])
    min_alignment = float(alignments.min()) if alignments.size else 1.0
    max_cross = _max_coherence(centers)
    alignment_ok = bool(min_alignment >= 1.0 - eta / 2.0)
    separation_ok = bool(max_cross <= rho + SEPARATION_ATOL)
    return ValidationReport(
        n=vectors.shape[0],
        k=centers.shape[0],
        min_alignment=min_alignment,
        max_cross=max_cross,
        eta_hat=max(0.0, 2.0 * (1.0 - min_alignment)),
        rho_hat=max_cross,
        alignment_ok=alignment_ok,
        separation_ok=separation_ok,
        passed=alignment_ok and separation_ok,
    )
