"""CLT-based inference: bootstrap standard errors, confidence intervals, and
a two-sample divergence test.

The ensemble estimator is asymptotically normal, but no closed-form variance
is available, so the standard error comes from a nonparametric bootstrap:
both samples are resampled with replacement (independently), the ensemble
estimate is recomputed per replicate, and the replicate standard deviation
is used to standardize.  Replicate RNG streams are keyed by replicate index
so results do not depend on execution order.
"""

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import ensemble_estimate, solve_weights
from .errors import ParameterError
from .neighbors import PointSet
from .synth import rng_stream

# Stream-id offsets separating the x and y bootstrap resampling streams.
_BOOT_STREAM_X = 0x626F6F74_0000
_BOOT_STREAM_Y = 0x626F6F74_8000


def normal_cdf(z):
    """Standard normal CDF via erfc (accurate to ~1e-16)."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


# Coefficients of Acklam's rational approximation to the standard normal
# quantile (relative error < 1.15e-9); one Newton step against erfc-based
# normal_cdf then pushes the absolute error below 1e-13.
_ACKLAM_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
             1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ACKLAM_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
             6.680131188771972e+01, -1.328068155288572e+01)
_ACKLAM_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
             -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ACKLAM_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
             3.754408661907416e+00)


def normal_quantile(p):
    """Inverse standard normal CDF (Acklam approximation + Newton polish)."""
    if not (0.0 < p < 1.0):
        raise ParameterError("quantile level must lie in (0, 1), got %g" % p)
    a, b, c, d = _ACKLAM_A, _ACKLAM_B, _ACKLAM_C, _ACKLAM_D
    p_low, p_high = 0.02425, 1.0 - 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        z = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    elif p <= p_high:
        q = p - 0.5
        r = q * q
        z = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / (
            ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
        )
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        z = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    err = normal_cdf(z) - p
    z -= err * math.sqrt(2.0 * math.pi) * math.exp(0.5 * z * z)
    return z


@dataclass(frozen=True)
class InferenceResult:
    estimate: float
    std_error: float
    ci_low: float
    ci_high: float
    z_score: float
    p_value: float
    bootstrap_reps: int
    level: float = 0.95
    null_value: float = 0.0
    reject: bool = False


def _resample(points, rng):
    idx = rng.integers(0, points.shape[0], size=points.shape[0])
    return PointSet(points[idx])


def bootstrap_replicates(x, y, config, spec, reps, seed, mode="robust", weights=None):
    if reps < 10:
        raise ParameterError("reps must be >= 10, got %d" % reps)
    if weights is None:
        weights = solve_weights(config)
    values = np.empty(reps)
    for r in range(reps):
        xs = _resample(x.points, rng_stream(seed, _BOOT_STREAM_X + r))
        ys = _resample(y.points, rng_stream(seed, _BOOT_STREAM_Y + r))
        values[r] = ensemble_estimate(xs, ys, config, spec, mode=mode, weights=weights).value
    return values


def bootstrap_std(x, y, config, spec, reps=200, seed=0, mode="robust", weights=None):
    """Bootstrap standard error of the ensemble estimate."""
    values = bootstrap_replicates(x, y, config, spec, reps, seed, mode=mode, weights=weights)
    return float(np.std(values, ddof=1))


def confidence_interval(x, y, config, spec, level=0.95, reps=200, seed=0, null_value=0.0,
                        mode="robust", weights=None):
    """Normal-theory interval: estimate +/- z_{(1+level)/2} * bootstrap std."""
    if not (0.0 < level < 1.0):
        raise ParameterError("level must lie in (0, 1)")
    if weights is None:
        weights = solve_weights(config)
    estimate = ensemble_estimate(x, y, config, spec, mode=mode, weights=weights).value
    std = bootstrap_std(x, y, config, spec, reps=reps, seed=seed, mode=mode, weights=weights)
    z_crit = normal_quantile(0.5 * (1.0 + level))
    ci_low = estimate - z_crit * std
    ci_high = estimate + z_crit * std
    if std > 0.0:
        z = (estimate - null_value) / std
    else:
        z = 0.0 if estimate == null_value else math.copysign(math.inf, estimate - null_value)
    p = 2.0 * (1.0 - normal_cdf(abs(z)))
    return InferenceResult(estimate, std, ci_low, ci_high, z, p, reps, level, null_value,
                           reject=p < 1.0 - level)


def two_sample_test(x, y, config, spec, null_value, level=0.05, reps=200, seed=0,
                    mode="robust", weights=None):
    """Two-sided test of H0: G(f1, f2) = null_value via the bootstrap CLT.

    Requires a functional with constant g(t, t) so the no-difference null
    has a known value (renyi_integral: 1, kl and l2: 0).
    """
    if not (0.0 < level < 1.0):
        raise ParameterError("level must lie in (0, 1)")
    probe = np.array([0.5, 1.0, 2.0, 7.0])
    diag = np.asarray(spec.eval(probe, probe), dtype=np.float64)
    if np.ptp(diag) > 1e-9:
        raise ParameterError(
            "two_sample_test requires g(t, t) constant; functional %r varies on the diagonal"
            % spec.name
        )
    if weights is None:
        weights = solve_weights(config)
    estimate = ensemble_estimate(x, y, config, spec, mode=mode, weights=weights).value
    std = bootstrap_std(x, y, config, spec, reps=reps, seed=seed, mode=mode, weights=weights)
    if std == 0.0:
        if estimate != null_value:
            raise ParameterError("degenerate variance: std_error=0 with estimate != null")
        z = 0.0
    else:
        z = (estimate - null_value) / std
    p = 2.0 * (1.0 - normal_cdf(abs(z)))
    z_crit = normal_quantile(1.0 - level / 2.0)
    ci_low = estimate - z_crit * std
    ci_high = estimate + z_crit * std
    return InferenceResult(estimate, std, ci_low, ci_high, z, p, reps, 1.0 - level, null_value,
                           reject=p < level)
