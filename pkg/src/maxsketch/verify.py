"""Monte Carlo oracles for the estimator's supporting inequalities.

Each check draws fresh Gaussian directions, measures the quantity an
inequality bounds, and reports a machine-readable pass/fail with its
margin.  All assertions leave 4 standard errors of slack, so a correct
implementation fails any single check with probability under 1e-4: these
double as CI tests and flakiness is treated as a bug.  Every check is
deterministic in (inputs, seed).
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from maxsketch.errors import InvalidInputError, InvalidParameterError
from maxsketch.gaussmax import expected_max_iid

# Explicit constant from the mean-gap lower bound: c0 = (1 - 1/e) / (2 e^2),
# asserted at c0 / 20.
GAP_C0 = (1.0 - math.exp(-1.0)) / (2.0 * math.e**2)
GAP_CONSTANT = GAP_C0 / 20.0

_CHUNK = 4096


@dataclass(frozen=True)
class McReport:
    """Outcome of one Monte Carlo check.

    passed means the 4-sigma interval around the estimate is compatible
    with [bound_lo, bound_hi] in the direction the claim requires; margin
    is the slack that remained (negative on failure).
    """

    name: str
    estimate: float
    stderr: float
    trials: int
    bound_lo: float
    bound_hi: float
    passed: bool
    margin: float
    seed: int
    extra: dict = field(default_factory=dict)

    def to_json(self):
        def finite(v):
            # one-sided bounds carry +/-inf, which strict JSON lacks
            return v if math.isfinite(v) else None

        payload = {
            "name": self.name,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "bound": [finite(self.bound_lo), finite(self.bound_hi)],
            "pass": self.passed,
            "margin": self.margin,
            "trials": self.trials,
            "seed": self.seed,
        }
        if self.extra:
            payload["extra"] = self.extra
        return json.dumps(payload)


def _rng(seed, tag):
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag]))


def _running_moments(values, state):
    n, total, sq = state
    return n + values.size, total + values.sum(), sq + np.square(values).sum()


def _finalize(state):
    n, total, sq = state
    mean = total / n
    var = max(sq / n - mean * mean, 0.0) * n / (n - 1)
    return mean, math.sqrt(var / n)


def mc_expected_max(vectors, trials, seed, expected=None):
    """Sample mean of max_r <w, x_r> over fresh Gaussian w.

    With expected given, passes when the estimate is within 4 standard
    errors of it.
    """
    vectors = np.ascontiguousarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise InvalidInputError("need a nonempty 2-D array of vectors")
    if trials < 1000:
        raise InvalidParameterError(f"need at least 1000 trials, got {trials}")
    rng = _rng(seed, 0x11)
    d = vectors.shape[1]
    state = (0, 0.0, 0.0)
    done = 0
    while done < trials:
        c = min(_CHUNK, trials - done)
        w = rng.standard_normal((c, d))
        state = _running_moments((w @ vectors.T).max(axis=1), state)
        done += c
    mean, se = _finalize(state)
    if expected is None:
        return McReport(
            name="expected-max",
            estimate=mean,
            stderr=se,
            trials=trials,
            bound_lo=mean - 4 * se,
            bound_hi=mean + 4 * se,
            passed=True,
            margin=0.0,
            seed=int(seed),
        )
    margin = 4 * se - abs(mean - expected)
    return McReport(
        name="expected-max",
        estimate=mean,
        stderr=se,
        trials=trials,
        bound_lo=expected,
        bound_hi=expected,
        passed=bool(margin >= 0),
        margin=margin,
        seed=int(seed),
    )


def check_slepian(k, rho, trials, seed):
    """Equicorrelated maxima sandwich.

    Simulates G'_r = sqrt(1-rho) Z_r + sqrt(rho) Z, whose expected maximum
    must lie within [sqrt(1-rho), sqrt(1+rho)] * E[max_k Z].
    """
    if not 0.0 <= rho < 1.0:
        raise InvalidParameterError(f"rho must be in [0, 1), got {rho}")
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    rng = _rng(seed, 0x22)
    a, b = math.sqrt(1.0 - rho), math.sqrt(rho)
    state = (0, 0.0, 0.0)
    done = 0
    while done < trials:
        c = min(_CHUNK, trials - done)
        vals = a * rng.standard_normal((c, k)).max(axis=1) + b * rng.standard_normal(c)
        state = _running_moments(vals, state)
        done += c
    mean, se = _finalize(state)
    e_k = expected_max_iid(k)
    lo, hi = a * e_k, math.sqrt(1.0 + rho) * e_k
    margin = min(mean + 4 * se - lo, hi - (mean - 4 * se))
    return McReport(
        name="slepian",
        estimate=mean,
        stderr=se,
        trials=trials,
        bound_lo=lo,
        bound_hi=hi,
        passed=bool(margin >= 0),
        margin=margin,
        seed=int(seed),
        extra={"k": int(k), "rho": float(rho)},
    )


def check_perturbation(stream, trials, seed, paired=True):
    """Within-cluster noise moves the expected max by at most sqrt(2 eta ln n).

    Estimates E[max over stream] - E[max over centers] with common random
    numbers (the same w drives both maxima per trial), which shrinks the
    variance of the difference; paired=False draws independent directions
    for the second term, for comparison.
    """
    if trials < 1000:
        raise InvalidParameterError(f"need at least 1000 trials, got {trials}")
    x = stream.vectors
    centers = stream.centers.centers
    n, d = x.shape
    bound = math.sqrt(2.0 * stream.spec.eta * math.log(n))
    rng = _rng(seed, 0x33)
    state = (0, 0.0, 0.0)
    done = 0
    while done < trials:
        c = min(_CHUNK, trials - done)
        w = rng.standard_normal((c, d))
        stream_max = (w @ x.T).max(axis=1)
        w2 = w if paired else rng.standard_normal((c, d))
        center_max = (w2 @ centers.T).max(axis=1)
        state = _running_moments(stream_max - center_max, state)
        done += c
    mean, se = _finalize(state)
    margin = bound + 4 * se - abs(mean)
    return McReport(
        name="perturbation",
        estimate=mean,
        stderr=se,
        trials=trials,
        bound_lo=-bound,
        bound_hi=bound,
        passed=bool(margin >= 0),
        margin=margin,
        seed=int(seed),
        extra={"eta": stream.spec.eta, "n": int(n), "paired": bool(paired)},
    )


def check_gap(k, eps, seed=0):
    """Expected-max gap between k and ceil((1+eps) k) i.i.d. normals.

    Both terms are one-dimensional integrals, so this check uses quadrature
    rather than sampling and asserts the explicit lower bound
    (c0/20) * eps / sqrt(ln k).  When the ceiling adds no indices the claim
    is vacuous and only flagged.
    """
    if k < 2:
        raise InvalidParameterError(f"k must be >= 2, got {k}")
    if not 0.0 < eps <= 1.0:
        raise InvalidParameterError(f"eps must be in (0, 1], got {eps}")
    k_hi = math.ceil((1.0 + eps) * k)
    if k_hi == k:
        return McReport(
            name="gap",
            estimate=0.0,
            stderr=0.0,
            trials=0,
            bound_lo=0.0,
            bound_hi=math.inf,
            passed=True,
            margin=0.0,
            seed=int(seed),
            extra={"k": int(k), "eps": float(eps), "degenerate": True},
        )
    delta1 = expected_max_iid(k_hi) - expected_max_iid(k)
    bound = GAP_CONSTANT * eps / math.sqrt(math.log(k))
    return McReport(
        name="gap",
        estimate=delta1,
        stderr=0.0,
        trials=0,
        bound_lo=bound,
        bound_hi=math.inf,
        passed=bool(delta1 >= bound),
        margin=delta1 - bound,
        seed=int(seed),
        extra={
            "k": int(k),
            "eps": float(eps),
            "k_hi": int(k_hi),
            "measured_ratio": delta1 * math.sqrt(math.log(k)) / eps,
            "degenerate": False,
        },
    )


def check_concentration(stream, m, redraws, seed):
    """Statistic concentration across independent projection redraws.

    Recomputes S with fresh m-projection sets; the empirical standard
    deviation must stay within 1.5/sqrt(m) (the subgaussian scale with
    slack) and the exceedance rate at t = 3/sqrt(m) within
    2 exp(-9/2) plus 4-sigma binomial slack.
    """
    if redraws < 100:
        raise InvalidParameterError(f"need at least 100 redraws, got {redraws}")
    if m < 1:
        raise InvalidParameterError(f"m must be >= 1, got {m}")
    x = stream.vectors
    d = x.shape[1]
    rng = _rng(seed, 0x44)
    s_vals = np.empty(redraws)
    for i in range(redraws):
        w = rng.standard_normal((m, d))
        s_vals[i] = (w @ x.T).max(axis=1).mean()
    std = float(s_vals.std(ddof=1))
    t = 3.0 / math.sqrt(m)
    rate = float(np.mean(np.abs(s_vals - s_vals.mean()) >= t))
    std_bound = 1.5 / math.sqrt(m)
    p0 = 2.0 * math.exp(-4.5)
    rate_bound = p0 + 4.0 * math.sqrt(p0 * (1.0 - p0) / redraws)
    passed = std <= std_bound and rate <= rate_bound
    return McReport(
        name="concentration",
        estimate=std,
        stderr=std / math.sqrt(2.0 * (redraws - 1)),
        trials=redraws,
        bound_lo=0.0,
        bound_hi=std_bound,
        passed=bool(passed),
        margin=min(std_bound - std, rate_bound - rate),
        seed=int(seed),
        extra={
            "m": int(m),
            "exceedance_rate": rate,
            "exceedance_bound": rate_bound,
            "threshold": t,
        },
    )
