"""Benchmark harness: MSE-convergence experiments over (N, d, estimator) grids.

Each grid cell runs independent trials with fresh samples from the two
truncated Gaussians, shares one neighbor-distance sweep per trial across all
requested estimators, and aggregates bias/variance/MSE against the synth
module's oracle truth.  Trial RNG streams are indexed by (d, N, trial, role)
so aggregates are independent of execution order and thread count.
"""

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .ensemble import EnsembleConfig, _round_half_away, k_schedule, solve_weights
from .errors import ConfigurationError, ParameterError
from .functionals import make_functional, neighbor_tables, plugin_profile
from .synth import TruncatedGaussianSpec, mc_truth, sample_truncated_gaussian, true_renyi_integral

CSV_HEADER = "d,n,estimator,trials,mean_estimate,true_value,bias,variance,mse,wall_time_ms"

_ESTIMATORS = ("plugin", "odin1", "odin2")

# Stream id layout for trial sampling: (d, N, trial, role) packed into the
# Philox stream word.  role 0 = f2 sample (x), role 1 = f1 sample (y).
def _trial_stream(d, n, trial, role):
    return (((d << 50) | (n << 26) | trial) << 1) | role


_TRUTH_STREAM = 1 << 62


@dataclass(frozen=True)
class ExperimentConfig:
    dims: tuple = (7,)
    n_grid: tuple = (100, 200, 400, 800, 1600)
    trials: int = 200
    estimators: tuple = ("plugin", "odin1", "odin2")
    functional: str = "renyi_integral"
    alpha: float = 0.5
    mean1: float = 0.7
    mean2: float = 0.3
    variance: float = 0.1
    l_values_odin1: tuple = tuple(np.linspace(0.3, 3.0, 50))
    # ODin2 grid: by default the smallest index maps to k = round(1.4 * N^delta)
    # and the remaining members take the next consecutive k values, i.e.
    # l_i = (k0 + i) / N^delta.  An explicit l_values_odin2 overrides this.
    l_values_odin2: tuple = ()
    odin2_l_min: float = 1.4
    odin2_count: int = 25
    delta: float = 0.5
    nu: int = 2
    eta: float = 1.0
    solver: str = "relaxed"
    plugin_k: int = 0  # 0 means round(sqrt(N))
    k_min: int = 3
    seed: int = 0
    threads: int = 1
    timing: bool = False
    mc_truth_n: int = 10**6

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        object.__setattr__(self, "l_values_odin1", tuple(float(l) for l in self.l_values_odin1))
        object.__setattr__(self, "l_values_odin2", tuple(float(l) for l in self.l_values_odin2))
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if list(self.n_grid) != sorted(set(self.n_grid)):
            raise ConfigurationError("n_grid must be strictly increasing")
        for e in self.estimators:
            if e not in _ESTIMATORS:
                raise ConfigurationError("unknown estimator %r" % e)
        for n in self.n_grid:
            max_k = self._max_scheduled_k(n)
            if max_k > n - 1:
                raise ConfigurationError(
                    "N=%d too small: max scheduled k=%d exceeds N-1" % (n, max_k)
                )

    def _max_scheduled_k(self, n):
        ks = []
        if "plugin" in self.estimators:
            ks.append(self.plugin_k or _round_half_away(math.sqrt(n)))
        if "odin1" in self.estimators:
            ks.append(_round_half_away(max(self.l_values_odin1) * math.sqrt(n)))
        if "odin2" in self.estimators:
            ks.append(_round_half_away(max(self.odin2_l_grid(n)) * n**self.delta))
        return max(ks) if ks else 1

    def functional_spec(self):
        if self.functional == "renyi_integral":
            return make_functional("renyi_integral", alpha=self.alpha)
        return make_functional(self.functional)

    def density_specs(self, d):
        return (
            TruncatedGaussianSpec(d, (self.mean1,), self.variance),
            TruncatedGaussianSpec(d, (self.mean2,), self.variance),
        )

    def odin2_l_grid(self, n):
        if self.l_values_odin2:
            return self.l_values_odin2
        base = n**self.delta
        k0 = _round_half_away(self.odin2_l_min * base)
        return tuple((k0 + i) / base for i in range(self.odin2_count))

    def ensemble_config(self, estimator, d, n):
        if estimator == "odin1":
            return EnsembleConfig("odin1", self.l_values_odin1, d, n, eta=self.eta,
                                  solver=self.solver, k_min=self.k_min)
        return EnsembleConfig("odin2", self.odin2_l_grid(n), d, n, delta=self.delta,
                              nu=self.nu, eta=self.eta, solver=self.solver, k_min=self.k_min)

    def canonical(self):
        """Deterministic flat key=value rendering for provenance comments."""
        items = []
        for name in sorted(self.__dataclass_fields__):
            value = getattr(self, name)
            if isinstance(value, tuple):
                value = ",".join("%.17g" % v if isinstance(v, float) else str(v) for v in value)
            items.append("%s=%s" % (name, value))
        return " ".join(items)


@dataclass(frozen=True)
class ResultRow:
    d: int
    n: int
    estimator: str
    trial_count: int
    mean_estimate: float
    true_value: float
    bias: float
    variance: float
    mse: float
    wall_time_ms: float = 0.0
    error: str = None


def _cell_truth(config, d):
    spec1, spec2 = config.density_specs(d)
    if config.functional == "renyi_integral":
        return true_renyi_integral(spec1, spec2, config.alpha)
    return mc_truth(spec1, spec2, config.functional_spec(), config.mc_truth_n,
                    config.seed, stream=_TRUTH_STREAM + d).value


def run_experiment(config):
    """Run the full (d, N, estimator) grid and return aggregated rows."""
    spec = config.functional_spec()
    rows = []
    for d in config.dims:
        truth = _cell_truth(config, d)
        spec1, spec2 = config.density_specs(d)
        for n in config.n_grid:
            t0 = time.perf_counter()
            try:
                per_estimator = _run_cell(config, spec, spec1, spec2, d, n)
            except Exception as exc:  # record and continue with the grid
                elapsed = (time.perf_counter() - t0) * 1e3 if config.timing else 0.0
                nan = float("nan")
                for est in config.estimators:
                    rows.append(ResultRow(d, n, est, config.trials, nan, truth, nan, nan, nan,
                                          elapsed, error=str(exc)))
                continue
            elapsed = (time.perf_counter() - t0) * 1e3 if config.timing else 0.0
            for est in config.estimators:
                values = per_estimator[est]
                mean = float(np.mean(values))
                bias = mean - truth
                variance = float(np.var(values))  # population variance over trials
                mse = bias * bias + variance
                rows.append(ResultRow(d, n, est, config.trials, mean, truth, bias,
                                      variance, mse, elapsed))
    return rows


def _run_cell(config, spec, spec1, spec2, d, n):
    plans = {}
    union_ks = set()
    if "plugin" in config.estimators:
        k_p = config.plugin_k or _round_half_away(math.sqrt(n))
        plans["plugin"] = ("plugin", k_p)
        union_ks.add(k_p)
    for est in ("odin1", "odin2"):
        if est not in config.estimators:
            continue
        econf = config.ensemble_config(est, d, n)
        sched, _ = k_schedule(econf)
        weights = solve_weights(econf)
        plans[est] = ("ensemble", sched, weights.weights)
        union_ks.update(k for _, k in sched)
    union_ks = sorted(union_ks)
    k_max = max(union_ks)

    def run_trial(trial):
        x = sample_truncated_gaussian(spec2, n, config.seed, _trial_stream(d, n, trial, 0))
        y = sample_truncated_gaussian(spec1, n, config.seed, _trial_stream(d, n, trial, 1))
        tables = neighbor_tables(x, y, k_max)
        values, _ = plugin_profile(x, y, union_ks, spec, tables=tables)
        by_k = dict(zip(union_ks, values))
        out = {}
        for est, plan in plans.items():
            if plan[0] == "plugin":
                out[est] = float(by_k[plan[1]])
            else:
                _, sched, w = plan
                v = np.array([by_k[k] for _, k in sched])
                out[est] = float(np.dot(w, v))
        return out

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            trial_results = list(pool.map(run_trial, range(config.trials)))
    else:
        trial_results = [run_trial(t) for t in range(config.trials)]
    return {est: np.array([r[est] for r in trial_results]) for est in plans}


def fit_loglog_slope(rows):
    """OLS slope of log(mse) against log(N) for one estimator and dimension."""
    rows = [r for r in rows if r.error is None]
    if len(rows) < 3:
        raise ParameterError("need at least 3 rows to fit a slope, got %d" % len(rows))
    if len({(r.d, r.estimator) for r in rows}) != 1:
        raise ParameterError("rows must be filtered to one (d, estimator) pair")
    if any(not r.mse > 0 for r in rows):
        raise ParameterError("all rows must have positive mse")
    logn = np.log([r.n for r in rows])
    logm = np.log([r.mse for r in rows])
    return float(np.polyfit(logn, logm, 1)[0])


def _fmt(value):
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def rows_to_csv(rows, provenance=None):
    lines = []
    if provenance:
        lines.append("# %s" % provenance)
    lines.append(CSV_HEADER)
    for r in rows:
        lines.append(",".join([
            str(r.d), str(r.n), r.estimator, str(r.trial_count),
            _fmt(r.mean_estimate), _fmt(r.true_value), _fmt(r.bias),
            _fmt(r.variance), _fmt(r.mse), _fmt(r.wall_time_ms),
        ]))
    return "\n".join(lines) + "\n"


def _fmt_json(value):
    if isinstance(value, float) and not math.isfinite(value):
        return "null"
    return _fmt(value)


def rows_to_json(rows):
    # Hand-rendered so floats carry 17 significant digits.
    parts = []
    for r in rows:
        fields = [
            '"d": %d' % r.d,
            '"n": %d' % r.n,
            '"estimator": %s' % json.dumps(r.estimator),
            '"trials": %d' % r.trial_count,
            '"mean_estimate": %s' % _fmt_json(r.mean_estimate),
            '"true_value": %s' % _fmt_json(r.true_value),
            '"bias": %s' % _fmt_json(r.bias),
            '"variance": %s' % _fmt_json(r.variance),
            '"mse": %s' % _fmt_json(r.mse),
            '"wall_time_ms": %s' % _fmt_json(r.wall_time_ms),
        ]
        parts.append("{" + ", ".join(fields) + "}")
    return "[\n" + ",\n".join(parts) + "\n]\n" if parts else "[]\n"


def emit(rows, format, path, provenance=None):
    """Write rows to ``path`` as CSV or JSON."""
    if format == "csv":
        text = rows_to_csv(rows, provenance=provenance)
    elif format == "json":
        text = rows_to_json(rows)
    else:
        raise ParameterError("format must be 'csv' or 'json'")
    with open(path, "w") as fh:
        fh.write(text)
    return path
