"""Divergence functional registry and the leave-one-out k-NN plug-in estimator.

Conventions, loudly: the estimated quantity is the integral of
``g(f1(x), f2(x))`` weighted by ``f2``.  The *x* argument of
:func:`plugin_estimate` is the sample drawn from ``f2`` (the outer,
averaging sample of size N2); the *y* argument is the sample drawn from
``f1``.  Density estimates at each x-point use the k1-th neighbor distance
into y (M1 = N1, no self-exclusion) and the k2-th neighbor distance within
x excluding the point itself (M2 = N2 - 1).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .neighbors import DEGENERATE_RHO, NeighborIndex, PointSet, unit_ball_volume

# Density estimates are clamped into this box before evaluating g in robust
# mode; the true positivity bounds of the densities are unknown at runtime.
EVAL_FLOOR = 1e-12
EVAL_CEIL = 1e12

BUILTIN_FUNCTIONALS = ("renyi_integral", "kl", "reverse_kl", "l2", "shannon_entropy", "custom")


@dataclass(frozen=True)
class FunctionalSpec:
    """A named functional g(t1, t2) evaluated on positive density values."""

    name: str
    params: dict = field(default_factory=dict)
    eval: callable = None
    lipschitz_hint: bool = True

    def __call__(self, t1, t2):
        return self.eval(t1, t2)


def make_functional(name, **params):
    """Build one of the built-in functionals, or wrap a custom g.

    renyi_integral(alpha): g(t1,t2) = (t1/t2)^alpha, so the f2-weighted
    integral is the Renyi-alpha integral of f1 against f2.
    custom: pass g=callable(t1, t2) vectorized over numpy arrays.
    """
    if name == "renyi_integral":
        alpha = float(params.get("alpha", 0.5))
        if alpha in (0.0, 1.0):
            raise ParameterError("renyi_integral requires alpha not in {0, 1}")
        return FunctionalSpec(name, {"alpha": alpha}, lambda t1, t2: (t1 / t2) ** alpha)
    if name == "kl":
        return FunctionalSpec(name, {}, lambda t1, t2: (t1 / t2) * np.log(t1 / t2))
    if name == "reverse_kl":
        return FunctionalSpec(name, {}, lambda t1, t2: np.log(t2 / t1))
    if name == "l2":
        return FunctionalSpec(name, {}, lambda t1, t2: (t1 - t2) ** 2 / t2)
    if name == "shannon_entropy":
        return FunctionalSpec(name, {}, lambda t1, t2: -np.log(t2))
    if name == "custom":
        g = params.get("g")
        if g is None or not callable(g):
            raise ParameterError("custom functional requires a callable g=...")
        return FunctionalSpec(
            "custom", {}, g, lipschitz_hint=bool(params.get("lipschitz_hint", True))
        )
    raise ParameterError("unknown functional %r (known: %s)" % (name, ", ".join(BUILTIN_FUNCTIONALS)))


@dataclass(frozen=True)
class PluginEstimate:
    value: float
    k1: int
    k2: int
    n1: int
    n2: int
    degeneracy_count: int = 0


def _density_values(dist, k, m, d, mode):
    """Vectorized k-NN density from neighbor distances, with clamp counting."""
    degenerate = int(np.count_nonzero(dist <= DEGENERATE_RHO))
    if degenerate and mode == "strict":
        from .errors import DegeneracyError

        raise DegeneracyError("degenerate neighbor distance (duplicate points?)")
    rho = np.maximum(dist, DEGENERATE_RHO)
    return k / (m * unit_ball_volume(d) * rho**d), degenerate


def plugin_profile(x, y, ks, spec, mode="robust", tables=None):
    """Plug-in estimates for several k values (k1 = k2 = k), sharing distance tables.

    Returns (values, degeneracy_counts) aligned with ``ks``.  ``tables`` may
    carry precomputed ``(rho1_table, rho2_table)`` sorted-distance arrays so a
    benchmark trial can serve several estimators from one neighbor sweep.
    """
    if x.dim != y.dim:
        raise ParameterError("dimension mismatch: x has d=%d, y has d=%d" % (x.dim, y.dim))
    if x.n < 2:
        raise ParameterError("need N2 >= 2 for leave-one-out estimation")
    ks = [int(k) for k in ks]
    m1, m2 = y.n, x.n - 1
    k_max = max(ks)
    for k in ks:
        if k < 1 or k > min(m1, m2):
            raise ParameterError("k=%d out of range (M1=%d, M2=%d)" % (k, m1, m2))
    if tables is None:
        tables = neighbor_tables(x, y, k_max)
    rho1_table, rho2_table = tables
    d = x.dim
    values = np.empty(len(ks))
    degs = np.empty(len(ks), dtype=int)
    for j, k in enumerate(ks):
        f1, deg1 = _density_values(rho1_table[:, k - 1], k, m1, d, mode)
        f2, deg2 = _density_values(rho2_table[:, k - 1], k, m2, d, mode)
        if mode == "robust":
            f1 = np.clip(f1, EVAL_FLOOR, EVAL_CEIL)
            f2 = np.clip(f2, EVAL_FLOOR, EVAL_CEIL)
        values[j] = float(np.mean(spec.eval(f1, f2)))
        degs[j] = deg1 + deg2
    return values, degs


def neighbor_tables(x, y, k_max):
    """Sorted neighbor-distance tables (x into y; x into x leave-one-out)."""
    index_y = NeighborIndex(y)
    index_x = NeighborIndex(x)
    rho1 = index_y.kth_distance_table(x.points, min(k_max, y.n))
    rho2 = index_x.kth_distance_table(x.points, min(k_max, x.n - 1), leave_one_out=True)
    return rho1, rho2


def plugin_estimate(x, y, k1, k2, spec, mode="robust"):
    """Leave-one-out k-NN plug-in estimate of the divergence functional.

    x: PointSet sampled from f2 (outer sample).  y: PointSet sampled from f1.
    """
    if not isinstance(x, PointSet):
        x = PointSet(np.asarray(x))
    if not isinstance(y, PointSet):
        y = PointSet(np.asarray(y))
    if x.dim != y.dim:
        raise ParameterError("dimension mismatch: x has d=%d, y has d=%d" % (x.dim, y.dim))
    if x.n < 2:
        raise ParameterError("need N2 >= 2 for leave-one-out estimation")
    k1, k2 = int(k1), int(k2)
    m1, m2 = y.n, x.n - 1
    if k1 < 1 or k1 > m1:
        raise ParameterError("k1=%d out of range for M1=%d" % (k1, m1))
    if k2 < 1 or k2 > m2:
        raise ParameterError("k2=%d out of range for M2=%d" % (k2, m2))
    index_y = NeighborIndex(y)
    index_x = NeighborIndex(x)
    rho1 = index_y.kth_distance_table(x.points, k1)[:, k1 - 1]
    rho2 = index_x.kth_distance_table(x.points, k2, leave_one_out=True)[:, k2 - 1]
    d = x.dim
    f1, deg1 = _density_values(rho1, k1, m1, d, mode)
    f2, deg2 = _density_values(rho2, k2, m2, d, mode)
    if mode == "robust":
        f1 = np.clip(f1, EVAL_FLOOR, EVAL_CEIL)
        f2 = np.clip(f2, EVAL_FLOOR, EVAL_CEIL)
    value = float(np.mean(spec.eval(f1, f2)))
    return PluginEstimate(value, k1, k2, y.n, x.n, deg1 + deg2)
