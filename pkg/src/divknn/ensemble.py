"""Weighted ensembles of k-NN plug-in estimators with bias-cancelling weights.

Two ensemble constructions are provided.  ODin1 uses the neighbor schedule
k(l) = l * sqrt(N); ODin2 uses k(l) = l * N^delta.  Each mode generates a
system of bias basis functions psi_i(l) = l^a paired with rate factors
phi_i(N) = N^b.  The ensemble weights are chosen so the weighted sums of the
psi_i over the l grid (nearly) vanish, cancelling the leading bias terms
without ever computing the unknown bias constants.
"""

import math
import warnings as _warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, ParameterError, SolverError
from .functionals import plugin_profile

DEFAULT_DELTA = 0.5
DEFAULT_NU = 2
DEFAULT_ETA = 1.0
DEFAULT_K_MIN = 3


@dataclass(frozen=True)
class EnsembleConfig:
    mode: str  # "odin1" | "odin2"
    l_values: tuple
    d: int
    n: int
    delta: float = DEFAULT_DELTA
    nu: int = DEFAULT_NU
    eta: float = DEFAULT_ETA
    solver: str = "relaxed"  # "exact" | "relaxed"
    k_min: int = DEFAULT_K_MIN

    def __post_init__(self):
        mode = self.mode.lower()
        if mode not in ("odin1", "odin2"):
            raise ConfigurationError("mode must be 'odin1' or 'odin2', got %r" % self.mode)
        object.__setattr__(self, "mode", mode)
        lv = tuple(float(l) for l in self.l_values)
        if len(lv) < 1:
            raise ConfigurationError("need at least one l value")
        if any(l <= 0 for l in lv):
            raise ConfigurationError("all l values must be > 0")
        if len(set(lv)) != len(lv):
            raise ConfigurationError("l values must be distinct")
        object.__setattr__(self, "l_values", lv)
        if self.d < 1 or self.n < 2:
            raise ConfigurationError("need d >= 1 and n >= 2")
        if self.solver not in ("exact", "relaxed"):
            raise ConfigurationError("solver must be 'exact' or 'relaxed'")
        if mode == "odin2":
            if not (0.0 < self.delta < 1.0):
                raise ConfigurationError("odin2 requires delta in (0, 1)")
            if self.nu < 1:
                raise ConfigurationError("odin2 requires nu >= 1")
            if self.nu < math.ceil(1.0 / self.delta):
                _warnings.warn(
                    "nu=%d < ceil(1/delta)=%d: the parametric MSE rate is not "
                    "guaranteed for this configuration" % (self.nu, math.ceil(1.0 / self.delta))
                )
        if self.eta <= 0:
            raise ConfigurationError("eta must be > 0")

    @property
    def L(self):
        return len(self.l_values)


class BasisEntry(NamedTuple):
    label: str
    l_exponent: float  # psi(l) = l ** l_exponent
    n_exponent: float  # phi(N) = N ** n_exponent


@dataclass(frozen=True)
class BasisSystem:
    entries: tuple
    mode: str

    @property
    def count(self):
        return len(self.entries)

    def psi_matrix(self, l_values):
        """(I, L) matrix of psi_i evaluated on the l grid."""
        lv = np.asarray(l_values, dtype=np.float64)
        if self.count == 0:
            return np.zeros((0, lv.size))
        return np.vstack([lv**e.l_exponent for e in self.entries])

    def scaled_rows(self, l_values, n):
        """(I, L) matrix of sqrt(N) * phi_i(N) * psi_i(l_j), the relaxed-program rows."""
        psi = self.psi_matrix(l_values)
        scale = np.array([n ** (0.5 + e.n_exponent) for e in self.entries])
        return scale[:, None] * psi


@dataclass(frozen=True)
class WeightSolution:
    weights: np.ndarray
    residuals: np.ndarray  # gamma_w(i) = sum_l w(l) psi_i(l), per basis entry
    objective: float  # achieved epsilon (relaxed) or ||w||_2 (exact)
    solver_iterations: int
    l_values: tuple = ()


@dataclass(frozen=True)
class EstimateReport:
    value: float
    per_k: tuple  # sequence of (l, k, plug-in estimate at k)
    weights: WeightSolution
    warnings: tuple = ()
    degeneracy_count: int = 0


def _round_half_away(x):
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def k_schedule(config):
    """Map each l to a neighbor count k(l), clamped to [k_min, N-1].

    Returns (schedule, warnings) where schedule is a list of (l, k) pairs.
    Collisions (two l rounding to the same k) are retained but reported.
    """
    n = config.n
    base = math.sqrt(n) if config.mode == "odin1" else n**config.delta
    lo = max(config.k_min, 1)
    hi = n - 1
    if lo > hi:
        raise ConfigurationError("k_min=%d exceeds M2=%d" % (config.k_min, hi))
    sched = []
    warn = []
    for l in config.l_values:
        k = _round_half_away(l * base)
        k = min(max(k, lo), hi)
        sched.append((l, k))
    ks = [k for _, k in sched]
    if len(config.l_values) > 1 and len(set(ks)) == 1:
        raise ConfigurationError(
            "all l values map to k=%d: ensemble degenerate, widen the l grid" % ks[0]
        )
    seen = {}
    for l, k in sched:
        if k in seen:
            warn.append("k collision: l=%g and l=%g both map to k=%d" % (seen[k], l, k))
        else:
            seen[k] = l
    return sched, warn


def build_basis(config):
    """Construct the bias basis system for the configured ensemble mode."""
    d = config.d
    if config.mode == "odin1":
        entries = [BasisEntry("i=%d" % i, i / d, -i / (2.0 * d)) for i in range(1, d + 1)]
        entries.append(BasisEntry("i=%d" % (d + 1), -1.0, -0.5))
    else:
        delta, nu = config.delta, config.nu
        j_max = math.ceil(d / (2.0 * (1.0 - delta)))
        entries = []
        seen = set()
        for j in range(0, j_max + 1):
            for q in range(0, nu + 1):
                rate = (1.0 - delta) * j / d + q * delta / 2.0
                if not (0.0 < rate < 0.5):
                    continue
                if not (j + q / 2.0 > 0.5):
                    continue
                key = (round(j - q / 2.0, 12), round(-rate, 12))
                if key in seen:
                    continue
                seen.add(key)
                entries.append(BasisEntry("j=%d,q=%d" % (j, q), j - q / 2.0, -rate))
    basis = BasisSystem(tuple(entries), config.mode)
    if basis.count >= config.L:
        raise ConfigurationError(
            "basis has I=%d entries but only L=%d ensemble members; "
            "increase L above I" % (basis.count, config.L)
        )
    return basis


def solve_weights_exact(basis, l_values):
    """Minimum-norm weights with exact bias cancellation (KKT linear system).

    Solves min ||w||_2 subject to sum(w) = 1 and psi_i . w = 0 for every
    basis entry, via the saddle system [2I, A^T; A, 0] [w; lam] = [0; b].
    """
    lv = np.asarray(l_values, dtype=np.float64)
    L = lv.size
    psi = basis.psi_matrix(lv)
    A = np.vstack([np.ones((1, L)), psi])
    m = A.shape[0]
    if m > L:
        raise SolverError("constraint count %d exceeds ensemble size L=%d" % (m, L))
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] < 1e-10 * sv[0]:
        bad = _near_dependent_rows(A, basis)
        raise SolverError("constraint matrix is rank deficient (%s)" % bad)
    K = np.zeros((L + m, L + m))
    K[:L, :L] = 2.0 * np.eye(L)
    K[:L, L:] = A.T
    K[L:, :L] = A
    rhs = np.zeros(L + m)
    rhs[L] = 1.0
    sol = np.linalg.solve(K, rhs)
    for _ in range(2):  # iterative refinement for ill-conditioned instances
        sol += np.linalg.solve(K, rhs - K @ sol)
    w = sol[:L]
    residuals = psi @ w if basis.count else np.zeros(0)
    return WeightSolution(w, residuals, float(np.linalg.norm(w)), 0, tuple(lv))


def _near_dependent_rows(A, basis):
    labels = ["sum"] + [e.label for e in basis.entries]
    norms = np.linalg.norm(A, axis=1)
    unit = A / norms[:, None]
    gram = np.abs(unit @ unit.T)
    np.fill_diagonal(gram, 0.0)
    i, j = np.unravel_index(np.argmax(gram), gram.shape)
    if gram[i, j] > 1.0 - 1e-8:
        return "rows %s and %s are nearly collinear" % (labels[i], labels[j])
    return "no single offending row pair; check the l grid"


def solve_weights_relaxed(basis, l_values, n, eta, max_iters=200000):
    """Relaxed weight program: min epsilon with scaled residual and norm caps.

    Epigraph form: minimize max(max_i |a_i . w|, ||w||^2 / eta) over the
    hyperplane sum(w) = 1, where a_i = sqrt(N) * phi_i(N) * psi_i(l).  Solved
    by projected subgradient descent with a Polyak level step: the step
    targets (best value - delta) and delta is halved whenever progress
    stalls, restarting from the incumbent.  Terminates once delta falls
    below max(1e-18, 1e-14 * best), which puts the objective gap far below
    the 1e-8 feasibility slack of the solution invariants.
    """
    lv = np.asarray(l_values, dtype=np.float64)
    L = lv.size
    if L < 2:
        raise ParameterError("relaxed solver requires L >= 2")
    if eta <= 0:
        raise ParameterError("eta must be > 0")
    a = basis.scaled_rows(lv, n)
    w = np.full(L, 1.0 / L)
    if basis.count == 0:
        # Norm minimization alone: uniform weights are optimal.
        return WeightSolution(w, np.zeros(0), 1.0 / (L * eta), 0, tuple(lv))
    best_f = np.inf
    best_w = w.copy()
    delta = None
    stall = 0
    t = 0
    for t in range(1, max_iters + 1):
        vals = a @ w
        i = int(np.argmax(np.abs(vals)))
        cmax = abs(vals[i])
        qn = (w @ w) / eta
        f = max(cmax, qn)
        if f < best_f:
            gain = best_f - f
            best_f = f
            best_w = w.copy()
        else:
            gain = 0.0
        if delta is None:
            delta = 0.5 * f if f > 0 else 1.0
        # Only improvements commensurate with the current level count as
        # progress; otherwise a trickle of negligible gains would keep the
        # level from ever tightening.
        if gain > 0.01 * delta:
            stall = 0
        else:
            stall += 1
            if stall >= 100:
                delta *= 0.5
                stall = 0
                w = best_w.copy()
                if delta < max(1e-18, 1e-14 * best_f):
                    break
                continue
        target = max(0.0, best_f - delta)
        g = np.sign(vals[i]) * a[i] if cmax >= qn else 2.0 * w / eta
        g = g - g.mean()  # project the subgradient onto the sum-zero subspace
        gn = g @ g
        if gn < 1e-30:
            break
        w = w - ((f - target) / gn) * g
        w = w - (w.sum() - 1.0) / L
    else:
        residuals = basis.psi_matrix(lv) @ best_w
        raise SolverError(
            "relaxed solver hit the %d-iteration cap" % max_iters,
            best_weights=best_w,
            residuals=residuals,
        )
    residuals = basis.psi_matrix(lv) @ best_w
    return WeightSolution(best_w, residuals, float(best_f), t, tuple(lv))


def solve_weights(config, basis=None):
    """Solve the weight program selected by the config."""
    if config.L == 1:
        # A single member: the sum constraint pins w = [1] in either program.
        return WeightSolution(np.array([1.0]), np.zeros(0), 1.0, 0, config.l_values)
    if basis is None:
        basis = build_basis(config)
    if config.solver == "exact":
        return solve_weights_exact(basis, config.l_values)
    return solve_weights_relaxed(basis, config.l_values, config.n, config.eta)


def ensemble_estimate(x, y, config, spec, mode="robust", weights=None, tables=None):
    """Weighted ensemble estimate sum_l w(l) * Ghat_{k(l)} with diagnostics.

    Uses k1 = k2 = k(l) with N taken as the f2 sample size.  ``weights`` may
    carry a precomputed WeightSolution (weights depend only on the config, so
    bootstrap and benchmark loops solve once and reuse).
    """
    warn = []
    if config.n != x.n:
        warn.append("config.n=%d but f2 sample has N=%d; schedule uses config.n" % (config.n, x.n))
    sched, sched_warn = k_schedule(config)
    warn.extend(sched_warn)
    if weights is None:
        weights = solve_weights(config)
    ks = [k for _, k in sched]
    unique_ks = sorted(set(ks))
    values, degs = plugin_profile(x, y, unique_ks, spec, mode=mode, tables=tables)
    by_k = dict(zip(unique_ks, values))
    deg_by_k = dict(zip(unique_ks, degs))
    per_k = tuple((l, k, float(by_k[k])) for l, k in sched)
    v = np.array([by_k[k] for _, k in sched])
    value = float(np.dot(weights.weights, v))
    degeneracy = int(sum(deg_by_k[k] for k in unique_ks))
    return EstimateReport(value, per_k, weights, tuple(warn), degeneracy)
