"""Command-line interface: estimate, bench, weights, truth.

Flags are the source of truth; a flat key=value config file (``--config``)
supplies defaults that any flag overrides.  Benchmark output embeds the
canonical configuration as a header comment for provenance.
"""

import argparse
import json
import sys

import numpy as np

from .bench import ExperimentConfig, emit, fit_loglog_slope, run_experiment
from .ensemble import EnsembleConfig, ensemble_estimate, k_schedule, solve_weights
from .errors import ParameterError
from .functionals import make_functional
from .inference import confidence_interval
from .neighbors import PointSet
from .synth import TruncatedGaussianSpec, mc_truth, true_renyi_integral


def _parse_scalar(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def _load_config_file(path):
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParameterError("config line without '=': %r" % line)
            key, _, raw = line.partition("=")
            key = key.strip().replace("-", "_")
            raw = raw.strip()
            if "," in raw:
                values[key] = [_parse_scalar(v) for v in raw.split(",")]
            else:
                values[key] = _parse_scalar(raw)
    return values


def _csv_list(cast):
    def parse(text):
        return [cast(v) for v in text.split(",") if v != ""]

    return parse


def _add_functional_flags(p):
    p.add_argument("--functional", default="renyi_integral",
                   choices=["renyi_integral", "kl", "reverse_kl", "l2", "shannon_entropy"])
    p.add_argument("--alpha", type=float, default=0.5)


def _add_ensemble_flags(p):
    p.add_argument("--mode", default="odin1", choices=["odin1", "odin2"])
    p.add_argument("--l-min", type=float, default=0.3)
    p.add_argument("--l-max", type=float, default=3.0)
    p.add_argument("--l-count", type=int, default=50)
    p.add_argument("--l-list", type=_csv_list(float), default=None,
                   help="explicit l grid; overrides --l-min/--l-max/--l-count")
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--nu", type=int, default=2)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--solver", default="relaxed", choices=["exact", "relaxed"])
    p.add_argument("--k-min", type=int, default=3)


def _l_values(args):
    if args.l_list:
        return tuple(args.l_list)
    return tuple(np.linspace(args.l_min, args.l_max, args.l_count))


def build_parser():
    parser = argparse.ArgumentParser(prog="divknn",
                                     description="k-NN ensemble divergence estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="one-shot estimate with confidence interval")
    p.add_argument("--f1-sample", required=True, help="CSV sample drawn from f1")
    p.add_argument("--f2-sample", required=True, help="CSV sample drawn from f2 (outer sample)")
    p.add_argument("--header", action="store_true", help="skip one header line in inputs")
    _add_functional_flags(p)
    _add_ensemble_flags(p)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", default="text", choices=["text", "json"])

    p = sub.add_parser("bench", help="grid MSE-convergence experiment")
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--dims", type=_csv_list(int), default=[7])
    p.add_argument("--n-grid", type=_csv_list(int), default=[100, 200, 400, 800, 1600])
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--estimators", type=_csv_list(str), default=["plugin", "odin1", "odin2"])
    _add_functional_flags(p)
    _add_ensemble_flags(p)
    p.add_argument("--l-list-odin2", type=_csv_list(float), default=[],
                   help="explicit ODin2 l grid; default takes 25 consecutive k "
                        "values starting at k = round(1.4 * N^delta)")
    p.add_argument("--mean1", type=float, default=0.7)
    p.add_argument("--mean2", type=float, default=0.3)
    p.add_argument("--variance", type=float, default=0.1)
    p.add_argument("--k", type=int, default=0, help="plugin k; 0 means round(sqrt(N))")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--timing", action="store_true",
                   help="record wall times (breaks byte-level determinism)")
    p.add_argument("--slopes", action="store_true", help="print log-log MSE slopes to stderr")
    p.add_argument("--format", default="csv", choices=["csv", "json"])
    p.add_argument("--out", required=True)

    p = sub.add_parser("weights", help="print the solved ensemble weight vector")
    _add_ensemble_flags(p)
    p.add_argument("-d", "--dim", type=int, required=True)
    p.add_argument("-n", "--n", type=int, required=True)

    p = sub.add_parser("truth", help="print the oracle value of the functional")
    _add_functional_flags(p)
    p.add_argument("-d", "--dim", type=int, required=True)
    p.add_argument("--mean1", type=float, default=0.7)
    p.add_argument("--mean2", type=float, default=0.3)
    p.add_argument("--variance", type=float, default=0.1)
    p.add_argument("--mc-n", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _functional_from_args(args):
    if args.functional == "renyi_integral":
        return make_functional("renyi_integral", alpha=args.alpha)
    return make_functional(args.functional)


def _read_sample(path, skip_header):
    data = np.loadtxt(path, delimiter=",", skiprows=1 if skip_header else 0, ndmin=2)
    return PointSet(data)


def cmd_estimate(args):
    y = _read_sample(args.f1_sample, args.header)
    x = _read_sample(args.f2_sample, args.header)
    spec = _functional_from_args(args)
    config = EnsembleConfig(args.mode, _l_values(args), x.dim, x.n, delta=args.delta,
                            nu=args.nu, eta=args.eta, solver=args.solver, k_min=args.k_min)
    null = 1.0 if args.functional == "renyi_integral" else 0.0
    result = confidence_interval(x, y, config, spec, level=args.level, reps=args.reps,
                                 seed=args.seed, null_value=null)
    if args.format == "json":
        print(json.dumps({
            "estimate": result.estimate, "std_error": result.std_error,
            "ci_low": result.ci_low, "ci_high": result.ci_high,
            "z_score": result.z_score, "p_value": result.p_value,
            "level": result.level, "null_value": result.null_value,
            "bootstrap_reps": result.bootstrap_reps,
        }))
    else:
        print("estimate   %.10g" % result.estimate)
        print("std_error  %.10g" % result.std_error)
        print("ci%g%%     [%.10g, %.10g]" % (100 * args.level, result.ci_low, result.ci_high))
        print("z vs %g    %.6g  (p=%.6g)" % (result.null_value, result.z_score, result.p_value))
    return 0


def cmd_bench(args):
    overrides = _load_config_file(args.config) if args.config else {}
    defaults = build_parser().parse_args(["bench", "--out", args.out])
    values = {}
    for key in ("dims", "n_grid", "trials", "estimators", "functional", "alpha", "mean1",
                "mean2", "variance", "delta", "nu", "eta", "solver", "k_min", "seed",
                "threads", "timing"):
        file_val = overrides.get(key)
        arg_val = getattr(args, key)
        default = getattr(defaults, key)
        values[key] = arg_val if arg_val != default or file_val is None else file_val
    if isinstance(values["dims"], (int, float)):
        values["dims"] = [int(values["dims"])]
    if isinstance(values["estimators"], str):
        values["estimators"] = [values["estimators"]]
    config = ExperimentConfig(
        dims=tuple(values["dims"]), n_grid=tuple(values["n_grid"]), trials=values["trials"],
        estimators=tuple(values["estimators"]), functional=values["functional"],
        alpha=values["alpha"], mean1=values["mean1"], mean2=values["mean2"],
        variance=values["variance"], l_values_odin1=_l_values(args),
        l_values_odin2=tuple(args.l_list_odin2), delta=values["delta"], nu=values["nu"],
        eta=values["eta"], solver=values["solver"], plugin_k=args.k, k_min=values["k_min"],
        seed=values["seed"], threads=values["threads"], timing=values["timing"])
    rows = run_experiment(config)
    emit(rows, args.format, args.out, provenance=config.canonical())
    if args.slopes:
        for d in config.dims:
            for est in config.estimators:
                sel = [r for r in rows if r.d == d and r.estimator == est]
                try:
                    slope = fit_loglog_slope(sel)
                    print("slope d=%d %s: %.4f" % (d, est, slope), file=sys.stderr)
                except ParameterError as exc:
                    print("slope d=%d %s: n/a (%s)" % (d, est, exc), file=sys.stderr)
    return 0


def cmd_weights(args):
    config = EnsembleConfig(args.mode, _l_values(args), args.dim, args.n, delta=args.delta,
                            nu=args.nu, eta=args.eta, solver=args.solver, k_min=args.k_min)
    solution = solve_weights(config)
    sched, warn = k_schedule(config)
    for (l, k), w in zip(sched, solution.weights):
        print("l=%-10.6g k=%-6d w=%.17g" % (l, k, w))
    print("objective=%.17g sum=%.17g" % (solution.objective, float(np.sum(solution.weights))))
    for message in warn:
        print("warning: %s" % message, file=sys.stderr)
    return 0


def cmd_truth(args):
    spec1 = TruncatedGaussianSpec(args.dim, (args.mean1,), args.variance)
    spec2 = TruncatedGaussianSpec(args.dim, (args.mean2,), args.variance)
    if args.functional == "renyi_integral":
        print("%.17g" % true_renyi_integral(spec1, spec2, args.alpha))
    else:
        result = mc_truth(spec1, spec2, _functional_from_args(args), args.mc_n, args.seed)
        print("%.17g  (mc std error %.3g)" % (result.value, result.std_error))
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {
        "estimate": cmd_estimate,
        "bench": cmd_bench,
        "weights": cmd_weights,
        "truth": cmd_truth,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
