"""Threshold-grid estimator mapping a sketch statistic to a count.

The grid holds geometric levels t_0=2, t_{r+1} = ceil((1+eps) * t_r), the
last level clamped to n.  Each level carries a data-independent threshold
theta_r = (U(t_r) + L(ceil((1+eps) t_r))) / 2 built from expected maxima of
i.i.d. normals, where the bands

    U(t) = sqrt(1+rho) * E[max_t Z] + sqrt(2 eta ln n)
    L(t) = sqrt(1-rho) * E[max_t Z] - sqrt(2 eta ln n)

absorb center correlation (rho) and within-cluster slack (eta).  The
estimate is t_{r+1} for the first threshold the statistic falls under.
Soundness requires every gap L(ceil((1+eps) t)) - U(t) to be positive;
building a grid that violates this is an error, not a warning.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from maxsketch.errors import GridSoundnessError, InvalidInputError, InvalidParameterError
from maxsketch.gaussmax import DEFAULT_TOL, GaussianMaxTable

# The analysis never pins its absolute constants; these defaults are loose
# empirical gates (the positive-gap check is the binding one) and every
# caller can override them.
DEFAULT_C_RHO = 0.05
DEFAULT_C_ETA = 0.01
DEFAULT_M_CONSTANT = 8.0


@dataclass(frozen=True)
class EstimatorParams:
    """Problem parameters: stream bound n, accuracy eps, failure delta,
    assumed center-correlation bound rho and within-cluster slack eta.

    rho and eta are treated as user-supplied assumed bounds; for labeled
    data the streamgen validator measures honest values.
    """

    n: int
    eps: float
    delta: float
    rho: float = 0.0
    eta: float = 0.0
    m: int | None = None

    def __post_init__(self):
        if self.n < 2:
            raise InvalidParameterError(f"n must be >= 2, got {self.n}")
        if not 0.0 < self.eps <= 0.5:
            raise InvalidParameterError(f"eps must be in (0, 1/2], got {self.eps}")
        if not 0.0 < self.delta < 1.0:
            raise InvalidParameterError(f"delta must be in (0, 1), got {self.delta}")
        if not 0.0 <= self.rho < 1.0:
            raise InvalidParameterError(f"rho must be in [0, 1), got {self.rho}")
        if not 0.0 <= self.eta < 1.0:
            raise InvalidParameterError(f"eta must be in [0, 1), got {self.eta}")
        if self.m is not None and self.m < 1:
            raise InvalidParameterError(f"m must be >= 1, got {self.m}")

    @property
    def noise_term(self):
        """sqrt(2 eta ln n), the band half-width from within-cluster slack."""
        return math.sqrt(2.0 * self.eta * math.log(self.n))


def grid_levels(n, eps):
    """Geometric count levels 2 = t_0 < t_1 < ... <= n (last clamped to n).

    Successive levels are ceil((1+eps) * t); repeated ceilings collapse so
    levels are strictly increasing.
    """
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")
    if eps <= 0:
        raise InvalidParameterError(f"eps must be positive, got {eps}")
    levels = [2]
    while levels[-1] < n:
        # In exact arithmetic ceil((1+eps) t) >= t+1 for any eps > 0; when
        # eps*t underflows the float product, step by one rather than stall.
        nxt = max(math.ceil((1.0 + eps) * levels[-1]), levels[-1] + 1)
        levels.append(min(int(nxt), int(n)))
    return np.asarray(levels, dtype=np.int64)


def band_upper(t, params, table=None):
    """U(t): upper bound on the expected statistic of a t-center stream."""
    if t < 1:
        raise InvalidParameterError(f"t must be >= 1, got {t}")
    table = table or _shared_table()
    return math.sqrt(1.0 + params.rho) * table.value(t) + params.noise_term


def band_lower(t, params, table=None):
    """L(t): lower bound on the expected statistic of a t-center stream."""
    if t < 1:
        raise InvalidParameterError(f"t must be >= 1, got {t}")
    table = table or _shared_table()
    return math.sqrt(1.0 - params.rho) * table.value(t) - params.noise_term


_SHARED_TABLE = None


def _shared_table():
    global _SHARED_TABLE
    if _SHARED_TABLE is None:
        _SHARED_TABLE = GaussianMaxTable(DEFAULT_TOL)
    return _SHARED_TABLE


@dataclass(frozen=True)
class ThresholdGrid:
    """Levels t_r with thresholds theta_r; thetas are strictly increasing.

    thetas[r] separates "<= t_r centers" from ">= ceil((1+eps) t_r)
    centers"; uppers/lowers_next hold the U and L values behind each
    threshold for audit.
    """

    levels: np.ndarray
    thetas: np.ndarray
    uppers: np.ndarray
    lowers_next: np.ndarray
    params: EstimatorParams

    @property
    def size(self):
        """Number of thresholds R (levels has R+1 entries)."""
        return len(self.thetas)

    def to_csv(self):
        """Audit export: one row per threshold, 17 significant digits."""
        lines = ["r,t_r,theta_r,U_tr,L_tr1"]
        for r in range(self.size):
            lines.append(
                f"{r},{self.levels[r]},{self.thetas[r]:.17g},"
                f"{self.uppers[r]:.17g},{self.lowers_next[r]:.17g}"
            )
        return "\n".join(lines) + "\n"


def build_grid(params, table=None, c_rho=DEFAULT_C_RHO, c_eta=DEFAULT_C_ETA):
    """Construct the threshold grid for params, checking soundness.

    Warns (does not fail) when rho or eta exceed the loose parameter gates;
    raises GridSoundnessError when any level's gap L(t') - U(t) is not
    strictly positive, since the estimate would be meaningless there.

    The threshold at the final level is built against the unclamped
    geometric successor ceil((1+eps) t_{R-1}).  Clamping that successor to
    n would shrink the last gap below zero for perfectly reasonable
    parameters, and the output at the last level is the clamped level
    either way.
    """
    table = table or _shared_table()
    log_n = math.log(params.n)
    if params.rho > c_rho * params.eps / log_n:
        warnings.warn(
            f"rho={params.rho} exceeds {c_rho}*eps/ln(n)={c_rho * params.eps / log_n:.4g}; "
            "the multiplicative guarantee may not hold",
            stacklevel=2,
        )
    if params.eta > c_eta * params.eps**2 / log_n**2:
        warnings.warn(
            f"eta={params.eta} exceeds {c_eta}*eps^2/ln(n)^2="
            f"{c_eta * params.eps ** 2 / log_n ** 2:.4g}; "
            "the multiplicative guarantee may not hold",
            stacklevel=2,
        )

    levels = grid_levels(params.n, params.eps)
    thetas = np.empty(len(levels) - 1)
    uppers = np.empty_like(thetas)
    lowers_next = np.empty_like(thetas)
    for r in range(len(levels) - 1):
        t = int(levels[r])
        succ = math.ceil((1.0 + params.eps) * t)
        upper = band_upper(t, params, table)
        lower_next = band_lower(succ, params, table)
        if not lower_next - upper > 0.0:
            raise GridSoundnessError(
                f"gap L({succ}) - U({t}) = {lower_next - upper:.6g} is not positive "
                f"at level t_{r} = {t}; reduce eta/rho or increase eps"
            )
        uppers[r] = upper
        lowers_next[r] = lower_next
        thetas[r] = 0.5 * (upper + lower_next)
    if np.any(np.diff(thetas) <= 0):
        raise GridSoundnessError("thresholds are not strictly increasing")
    return ThresholdGrid(
        levels=levels, thetas=thetas, uppers=uppers, lowers_next=lowers_next, params=params
    )


def estimate(s, grid):
    """Count estimate for statistic s: t_{r+1} at the first r with s <= theta_r.

    Falls back to the last (n-clamped) level when s is above every
    threshold.  Thresholds are strictly increasing so binary search gives
    the same answer as a linear scan.
    """
    if math.isnan(s):
        raise InvalidInputError("statistic is NaN")
    r = int(np.searchsorted(grid.thetas, s, side="left"))
    if r < grid.size:
        return int(grid.levels[r + 1])
    return int(grid.levels[-1])


def fired_index(s, grid):
    """Index of the threshold that fired for s, or None if none did."""
    if math.isnan(s):
        raise InvalidInputError("statistic is NaN")
    r = int(np.searchsorted(grid.thetas, s, side="left"))
    return r if r < grid.size else None


def required_m(n, eps, delta, constant=DEFAULT_M_CONSTANT):
    """Projection count sufficient for the (eps, delta) guarantee.

    ceil(C * ln n * ln(2R / delta) / eps^2) with R the number of grid
    thresholds, i.e. the union-bound form over the geometric grid.
    """
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")
    if eps <= 0:
        raise InvalidParameterError(f"eps must be positive, got {eps}")
    if not 0.0 < delta < 1.0:
        raise InvalidParameterError(f"delta must be in (0, 1), got {delta}")
    r_count = max(len(grid_levels(n, eps)) - 1, 1)
    return int(math.ceil(constant * math.log(n) * math.log(2.0 * r_count / delta) / eps**2))
