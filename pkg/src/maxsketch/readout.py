"""Monotone readouts mapping the sketch statistic to a count.

Two learners over (statistic, count) calibration pairs: least-squares
isotonic regression via Pool Adjacent Violators, and the multiplicative
threshold-grid learner (levels L_0=1, L_{t+1} = ceil((1+eps) L_t), one
empirical split per level boundary).  Both produce a nondecreasing step
function; fitted functions are immutable and freely shareable.
"""

import json
import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from maxsketch.errors import FormatError, InvalidInputError, InvalidParameterError

KIND_ISOTONIC = "isotonic"
KIND_THRESHOLD_GRID = "threshold-grid"


@dataclass(frozen=True)
class CalibrationSample:
    """One (statistic, true distinct count) pair."""

    s: float
    k: int

    def __post_init__(self):
        if not math.isfinite(self.s):
            raise InvalidInputError(f"statistic must be finite, got {self.s}")
        if self.k < 1:
            raise InvalidInputError(f"count must be >= 1, got {self.k}")


@dataclass(frozen=True)
class MonotoneStepFn:
    """Nondecreasing step function with closed-left bins.

    breakpoints tau_0 < ... < tau_{T-1} carry T output levels:
    s in [tau_t, tau_{t+1}) evaluates to levels[t], and values below tau_0
    clamp to levels[0] (the first level), above the last to levels[-1].
    """

    breakpoints: tuple
    levels: tuple
    kind: str
    eps: float | None = None

    def __post_init__(self):
        if self.kind not in (KIND_ISOTONIC, KIND_THRESHOLD_GRID):
            raise InvalidParameterError(f"unknown readout kind {self.kind!r}")
        if len(self.breakpoints) != len(self.levels) or not self.levels:
            raise InvalidInputError("need one level per breakpoint, at least one of each")
        if any(b >= a for a, b in zip(self.breakpoints[1:], self.breakpoints)):
            raise InvalidInputError("breakpoints must be strictly increasing")
        if any(b > a for a, b in zip(self.levels[1:], self.levels)):
            raise InvalidInputError("levels must be nondecreasing")

    def value(self, s):
        """Raw (unrounded) step value at s."""
        idx = bisect_right(self.breakpoints, s) - 1
        return self.levels[max(idx, 0)]


def apply_readout(fn, s):
    """Evaluate a readout as an integer count.

    Isotonic levels are block means and round to the nearest integer with a
    floor of 1; threshold-grid levels are returned exactly.
    """
    if math.isnan(s):
        raise InvalidInputError("cannot evaluate a readout at NaN")
    v = fn.value(s)
    if fn.kind == KIND_ISOTONIC:
        return max(1, int(math.floor(v + 0.5)))
    return int(v)


def _grouped(samples):
    """Sort by s and average counts within equal-s groups.

    Grouping ties first makes the fit a function of s alone.  Returns
    (s values, mean k, weights) as float arrays.
    """
    order = sorted(samples, key=lambda c: c.s)
    xs, ys, ws = [], [], []
    for c in order:
        if xs and c.s == xs[-1]:
            ws[-1] += 1.0
            ys[-1] += (c.k - ys[-1]) / ws[-1]
        else:
            xs.append(c.s)
            ys.append(float(c.k))
            ws.append(1.0)
    return xs, ys, ws


def pav_fit(samples):
    """Least-squares isotonic fit of count against statistic.

    Pool Adjacent Violators: scan the tie-grouped points in s order,
    merging adjacent blocks into weighted means whenever monotonicity is
    violated.  Breakpoints sit at midpoints between the s-ranges of
    adjacent blocks.
    """
    if not samples:
        raise InvalidInputError("cannot fit a readout on an empty sample set")
    xs, ys, ws = _grouped(samples)

    # Each block: [value, weight, first group index, last group index].
    blocks = []
    for i, (y, w) in enumerate(zip(ys, ws)):
        blocks.append([y, w, i, i])
        while len(blocks) > 1 and blocks[-2][0] >= blocks[-1][0]:
            v1, w1, a1, _ = blocks[-2]
            v2, w2, _, b2 = blocks[-1]
            merged = [(v1 * w1 + v2 * w2) / (w1 + w2), w1 + w2, a1, b2]
            blocks[-2:] = [merged]

    breakpoints = [xs[0]]
    for prev, cur in zip(blocks, blocks[1:]):
        breakpoints.append(0.5 * (xs[prev[3]] + xs[cur[2]]))
    levels = [b[0] for b in blocks]
    return MonotoneStepFn(
        breakpoints=tuple(breakpoints), levels=tuple(levels), kind=KIND_ISOTONIC
    )


def multiplicative_levels(eps, top):
    """L_0 = 1, L_{t+1} = ceil((1+eps) L_t), stopping once a level >= top."""
    if eps <= 0:
        raise InvalidParameterError(f"eps must be positive, got {eps}")
    levels = [1]
    while levels[-1] < top:
        # exact-arithmetic ceilings always grow; don't stall when eps*L
        # underflows the float product
        levels.append(max(math.ceil((1.0 + eps) * levels[-1]), levels[-1] + 1))
    return levels


def learn_thresholds(samples, eps):
    """Fit the multiplicative threshold-grid readout.

    For each consecutive level pair (L_t, L_{t+1}) the split tau_t
    minimizes empirical 0-1 error between samples with k <= L_t (which
    should fall below) and k >= L_{t+1} (which should fall above), over
    candidate cuts at midpoints of consecutive sorted statistics plus the
    two outer fences.  Ties break toward the smaller cut, which biases the
    readout toward overestimating the count, matching the one-sided shape
    of the guarantee.  Crossing cuts from noisy data are repaired by
    clipping each tau_t strictly above tau_{t-1}.
    """
    if not samples:
        raise InvalidInputError("cannot fit a readout on an empty sample set")
    ks = np.asarray([c.k for c in samples])
    if ks.min() == ks.max():
        raise InvalidInputError("degenerate calibration data: all samples share one count")
    levels = multiplicative_levels(eps, int(ks.max()))

    s_sorted = np.unique([c.s for c in samples])
    candidates = [s_sorted[0] - 0.5]
    candidates.extend(0.5 * (s_sorted[:-1] + s_sorted[1:]))
    candidates.append(s_sorted[-1] + 0.5)
    candidates = np.asarray(candidates)

    s_all = np.asarray([c.s for c in samples])
    taus = []
    for lo, hi in zip(levels, levels[1:]):
        below = np.sort(s_all[ks <= lo])
        above = np.sort(s_all[ks >= hi])
        # s < tau counts as "below"; s >= tau as "above" (closed-left bins).
        errors = (len(below) - np.searchsorted(below, candidates, side="left")) + (
            np.searchsorted(above, candidates, side="left")
        )
        taus.append(float(candidates[int(np.argmin(errors))]))

    for t in range(1, len(taus)):
        if taus[t] <= taus[t - 1]:
            taus[t] = math.nextafter(taus[t - 1], math.inf)

    return MonotoneStepFn(
        breakpoints=tuple(taus), levels=tuple(levels[1:]), kind=KIND_THRESHOLD_GRID, eps=float(eps)
    )


def to_json(fn):
    """Serialize a readout as JSON {kind, breakpoints, levels, eps}."""
    return json.dumps(
        {
            "kind": fn.kind,
            "breakpoints": [float(b) for b in fn.breakpoints],
            "levels": [float(v) for v in fn.levels],
            "eps": fn.eps,
        }
    )


def from_json(text):
    """Rebuild a readout from its JSON form; predictions are identical."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"readout JSON is malformed: {exc}") from None
    try:
        kind = obj["kind"]
        breakpoints = tuple(float(b) for b in obj["breakpoints"])
        raw_levels = obj["levels"]
        eps = obj.get("eps")
    except (KeyError, TypeError) as exc:
        raise FormatError(f"readout JSON is missing fields: {exc}") from None
    if kind == KIND_THRESHOLD_GRID:
        levels = tuple(int(v) for v in raw_levels)
    else:
        levels = tuple(float(v) for v in raw_levels)
    return MonotoneStepFn(
        breakpoints=breakpoints,
        levels=levels,
        kind=kind,
        eps=None if eps is None else float(eps),
    )
