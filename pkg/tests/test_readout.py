"""Monotone readouts: PAV isotonic fit and the threshold-grid learner."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxsketch.errors import FormatError, InvalidInputError
from maxsketch.readout import (
    KIND_ISOTONIC,
    KIND_THRESHOLD_GRID,
    CalibrationSample,
    MonotoneStepFn,
    apply_readout,
    from_json,
    learn_thresholds,
    multiplicative_levels,
    pav_fit,
    to_json,
)


def samples_of(pairs):
    return [CalibrationSample(s=float(s), k=int(k)) for s, k in pairs]


def brute_force_isotonic_sse(xs, ys):
    """Exact least-squares error over nondecreasing fits of distinct xs.

    Enumerates every contiguous block partition, keeps those whose block
    means are nondecreasing (the optimum always is), and takes the best
    within-block squared error.  Independent of the PAV code path.
    """
    n = len(ys)
    ys = np.asarray(ys, dtype=float)
    best = math.inf
    for cuts in itertools.product([0, 1], repeat=n - 1):
        blocks = []
        start = 0
        for i, cut in enumerate(cuts):
            if cut:
                blocks.append((start, i + 1))
                start = i + 1
        blocks.append((start, n))
        means = [ys[a:b].mean() for a, b in blocks]
        if any(m2 < m1 for m1, m2 in zip(means, means[1:])):
            continue
        cost = sum(((ys[a:b] - m) ** 2).sum() for (a, b), m in zip(blocks, means))
        best = min(best, cost)
    return best


def pav_sse(samples):
    fn = pav_fit(samples)
    return sum((c.k - fn.value(c.s)) ** 2 for c in samples)


# ---------------------------------------------------------------- PAV


def test_pav_identity_on_monotone_data():
    fn = pav_fit(samples_of([(1, 1), (2, 2), (3, 3)]))
    assert fn.levels == (1.0, 2.0, 3.0)
    for s, k in [(1, 1), (2, 2), (3, 3)]:
        assert apply_readout(fn, s) == k


def test_pav_two_point_pooling():
    # Decreasing pair pools to the mean; brute force over monotone fits of
    # two points confirms 1.5 is optimal.
    fn = pav_fit(samples_of([(1, 2), (2, 1)]))
    assert fn.levels == (1.5,)
    assert brute_force_isotonic_sse([1, 2], [2, 1]) == pytest.approx(0.5)
    assert pav_sse(samples_of([(1, 2), (2, 1)])) == pytest.approx(0.5)


def test_pav_matches_bruteforce_on_random_instances():
    rng = np.random.default_rng(40)
    for _ in range(40):
        n = rng.integers(1, 9)
        xs = np.sort(rng.standard_normal(n))
        while len(np.unique(xs)) != n:
            xs = np.sort(rng.standard_normal(n))
        ys = rng.integers(1, 20, size=n)
        smp = samples_of(zip(xs, ys))
        assert pav_sse(smp) == pytest.approx(brute_force_isotonic_sse(xs, ys), abs=1e-9)


def test_pav_groups_ties_before_pooling():
    # Equal statistics are averaged first, so the fit is a function of s.
    fn = pav_fit(samples_of([(1.0, 1), (1.0, 3), (2.0, 4)]))
    assert fn.value(1.0) == pytest.approx(2.0)
    assert fn.value(2.0) == pytest.approx(4.0)


def test_pav_idempotent_predictions():
    rng = np.random.default_rng(41)
    xs = np.sort(rng.standard_normal(20))
    smp = samples_of((x, k) for x, k in zip(xs, rng.integers(1, 30, size=20)))
    fn = pav_fit(smp)
    refit = pav_fit(samples_of((c.s, apply_readout(fn, c.s)) for c in smp))
    for c in smp:
        assert apply_readout(refit, c.s) == apply_readout(fn, c.s)


def test_pav_extrapolation_clamps():
    fn = pav_fit(samples_of([(0.0, 2), (1.0, 5)]))
    assert apply_readout(fn, -100.0) == 2
    assert apply_readout(fn, +100.0) == 5


def test_pav_empty_errors():
    with pytest.raises(InvalidInputError):
        pav_fit([])


# ---------------------------------------------------------------- threshold learner


def test_levels_recursion():
    assert multiplicative_levels(1.0, 8) == [1, 2, 4, 8]
    assert multiplicative_levels(0.5, 62) == [1, 2, 3, 5, 8, 12, 18, 27, 41, 62]
    # the ladder always reaches the top count
    assert multiplicative_levels(0.5, 64)[-1] == 93
    # and keeps climbing even when (1+eps)*L rounds back to L
    assert multiplicative_levels(1e-18, 4) == [1, 2, 3, 4]


def test_learner_level_example():
    smp = samples_of([(0.1, 1), (0.5, 2), (1.0, 4), (1.5, 8)])
    fn = learn_thresholds(smp, eps=1.0)
    assert fn.levels == (2, 4, 8)
    assert len(fn.breakpoints) == 3


def test_learner_zero_error_when_separable():
    # Statistics ordered with k: every split must classify perfectly and
    # every calibration sample must map back to its own level.
    levels = [2, 3, 5, 8, 12]
    smp = []
    for i, k in enumerate(levels):
        for j in range(5):
            smp.append(CalibrationSample(s=float(i) + 0.05 * j, k=k))
    fn = learn_thresholds(smp, eps=0.5)
    for c in smp:
        assert apply_readout(fn, c.s) == c.k


def test_learner_breakpoints_strictly_increasing_with_sparse_levels():
    # k jumps straight from 2 to 8: the middle boundary has no data, its
    # split ties at error zero everywhere and resolves to the smallest
    # candidate, then isotonic repair restores strict order.
    smp = samples_of([(0.0, 2), (0.1, 2), (1.0, 8), (1.1, 8)])
    fn = learn_thresholds(smp, eps=1.0)
    assert all(b < a for b, a in zip(fn.breakpoints, fn.breakpoints[1:]))
    assert apply_readout(fn, 0.05) == 2
    assert apply_readout(fn, 1.05) == 8


def test_learner_tie_breaks_toward_smaller_cut():
    # Both candidates between the classes have zero error; the midpoint of
    # the closest pair is unique, but when several candidates tie the
    # smallest wins, biasing the readout upward.
    smp = samples_of([(0.0, 1), (1.0, 2), (2.0, 2), (3.0, 4)])
    fn = learn_thresholds(smp, eps=1.0)
    # tau_0 separates k<=1 from k>=2: zero-error cuts live in (0, 1]; the
    # candidate set is {-0.5, 0.5, 1.5, 2.5, 3.5} so 0.5 is chosen.
    assert fn.breakpoints[0] == pytest.approx(0.5)


def test_learner_degenerate_samples():
    with pytest.raises(InvalidInputError):
        learn_thresholds(samples_of([(0.1, 3), (0.2, 3)]), eps=0.5)
    with pytest.raises(InvalidInputError):
        learn_thresholds([], eps=0.5)


# ---------------------------------------------------------------- step function


def test_apply_boundary_conventions():
    fn = MonotoneStepFn(breakpoints=(0.0, 1.0, 2.0), levels=(2, 4, 8), kind=KIND_THRESHOLD_GRID)
    assert apply_readout(fn, -5.0) == 2  # below the first knot: first level
    assert apply_readout(fn, 0.0) == 2  # closed-left bins
    assert apply_readout(fn, 1.0) == 4
    assert apply_readout(fn, 1.5) == 4
    assert apply_readout(fn, 2.0) == 8
    assert apply_readout(fn, 99.0) == 8


def test_apply_rounds_isotonic_and_floors_at_one():
    fn = MonotoneStepFn(breakpoints=(0.0, 1.0), levels=(0.4, 2.5), kind=KIND_ISOTONIC)
    assert apply_readout(fn, -1.0) == 1
    assert apply_readout(fn, 1.0) == 3


def test_apply_rejects_nan():
    fn = MonotoneStepFn(breakpoints=(0.0,), levels=(1,), kind=KIND_THRESHOLD_GRID)
    with pytest.raises(InvalidInputError):
        apply_readout(fn, float("nan"))


def test_stepfn_invariants_enforced():
    with pytest.raises(InvalidInputError):
        MonotoneStepFn(breakpoints=(1.0, 1.0), levels=(1, 2), kind=KIND_ISOTONIC)
    with pytest.raises(InvalidInputError):
        MonotoneStepFn(breakpoints=(0.0, 1.0), levels=(3, 2), kind=KIND_ISOTONIC)
    with pytest.raises(InvalidInputError):
        MonotoneStepFn(breakpoints=(0.0,), levels=(1, 2), kind=KIND_ISOTONIC)


@settings(max_examples=50, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    n=st.integers(2, 40),
    kind=st.sampled_from(["pav", "thresholds"]),
    probes=st.lists(st.floats(-10, 10), min_size=2, max_size=10),
)
def test_fitted_readouts_are_nondecreasing(seed, n, kind, probes):
    rng = np.random.default_rng(seed)
    ks = rng.integers(1, 50, size=n)
    if kind == "thresholds" and ks.min() == ks.max():
        ks[0] = ks[0] + 1
    smp = samples_of(zip(rng.standard_normal(n), ks))
    fn = pav_fit(smp) if kind == "pav" else learn_thresholds(smp, eps=0.5)
    values = [apply_readout(fn, p) for p in sorted(probes)]
    assert all(b >= a for a, b in zip(values, values[1:]))


# ---------------------------------------------------------------- JSON


@pytest.mark.parametrize("kind", [KIND_ISOTONIC, KIND_THRESHOLD_GRID])
def test_json_roundtrip_predictions(kind):
    rng = np.random.default_rng(42)
    smp = samples_of(zip(np.sort(rng.standard_normal(30)), rng.integers(1, 40, size=30)))
    fn = pav_fit(smp) if kind == KIND_ISOTONIC else learn_thresholds(smp, eps=0.5)
    back = from_json(to_json(fn))
    assert back.kind == fn.kind
    for s in np.linspace(-4, 4, 200):
        assert apply_readout(back, float(s)) == apply_readout(fn, float(s))


def test_json_malformed():
    with pytest.raises(FormatError):
        from_json("{not json")
    with pytest.raises(FormatError):
        from_json("{\"kind\": \"isotonic\"}")
