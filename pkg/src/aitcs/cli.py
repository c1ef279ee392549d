"""Command-line front end: ``aitcs {solve,analyze,generate,experiment,replay}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Every command writes a ``manifest.json`` next to its outputs; ``aitcs replay``
re-runs a manifest and reproduces the outputs byte for byte.
"""
import argparse
import csv
import json
import math
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis, experiments
from .io import fmt, read_matrix, read_vector, write_matrix, write_trace_csv, write_vector
from .probgen import ProblemSpec, generate
from .solver import SolverConfig, denormalize_solution, normalize_columns, solve
from .thresholding import OPERATOR_NAMES, get_operator

EXPERIMENT_KINDS = ("sparsity_sweep", "normalization_compare", "phase_transition",
                    "verify_convergence_bound")


class ConfigError(ValueError):
    """Bad user configuration; maps to exit status 2."""


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _step(text):
    if text == "adaptive":
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"step must be a positive number or 'adaptive', got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"step must be positive, got {v}")
    return v


def _seed(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=_seed, default=None, help="master seed (required for generate/experiment)")
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker processes for trials")
    p.add_argument("--output-dir", default=".", help="directory for all outputs")
    return p


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="aitcs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"aitcs {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="recover a sparse vector with AIT")
    s.add_argument("--matrix", required=True, help="measurement matrix (.csv or .bin)")
    s.add_argument("--rhs", required=True, help="observation vector (.csv or .bin)")
    s.add_argument("--truth", help="optional ground truth; fills the error columns of the trace")
    s.add_argument("--operator", choices=OPERATOR_NAMES, default="hard")
    s.add_argument("--scad-a", type=float, default=3.7)
    s.add_argument("--k", type=_positive_int, required=True, help="specified sparsity level")
    s.add_argument("--step", type=_step, default=1.0, help="constant step size or 'adaptive'")
    s.add_argument("--max-iter", type=_positive_int, default=2000)
    s.add_argument("--tol", type=float, default=1e-12)
    s.add_argument("--normalize", action="store_true", help="solve on the column-normalized matrix")
    s.add_argument("--format", choices=("csv", "bin"), default="csv")

    a = sub.add_parser("analyze", parents=[common], help="matrix constants and theorem conditions")
    a.add_argument("--matrix", required=True)
    a.add_argument("--k-star", type=_positive_int, required=True)
    a.add_argument("--operator", choices=OPERATOR_NAMES, default="hard")
    a.add_argument("--p", type=float, default=2.0, help="norm exponent p (q is its conjugate)")
    a.add_argument("--step", type=float, default=1.0)
    a.add_argument("--budget", type=_positive_int, default=analysis.DEFAULT_BUDGET)
    a.add_argument("--normalize", action="store_true", help="normalize columns before analysis")

    g = sub.add_parser("generate", parents=[common], help="draw a seeded test problem")
    g.add_argument("--m", type=_positive_int, required=True)
    g.add_argument("--n", type=_positive_int, required=True)
    g.add_argument("--k-star", type=_positive_int, required=True)
    g.add_argument("--variance", type=float, default=None, help="entry variance of A (default 1/m)")
    g.add_argument("--signal", choices=("gaussian", "binary"), default="gaussian")
    g.add_argument("--snr-db", type=float, default=None)
    g.add_argument("--noise-reference", choices=("measurement", "entry"), default="measurement")
    g.add_argument("--format", choices=("csv", "bin"), default="csv")

    e = sub.add_parser("experiment", parents=[common], help="run a JSON experiment spec")
    e.add_argument("spec", help="path to a JSON spec, or the name of a bundled one (e.g. fig3)")
    e.add_argument("--full-scale", action="store_true",
                   help="phase transitions only: use the n=512, m=50..500 grid")

    r = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    r.add_argument("manifest")
    r.add_argument("--output-dir", default=None, help="write to a different directory")
    return parser


def _write_manifest(out, command, argv, config, seed, outputs, started):
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seed": seed,
        "version": __version__,
        "outputs": sorted(outputs),
        "duration_s": round(time.time() - started, 3),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _write_rows(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c)) for c in columns])


def _cell(v):
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, float):
        return fmt(v)
    return str(v)


def cmd_solve(args, out):
    A = read_matrix(args.matrix)
    b = read_vector(args.rhs)
    truth = read_vector(args.truth) if args.truth else None
    op = get_operator(args.operator, scad_a=args.scad_a)
    nmap = None
    if args.normalize:
        A, nmap = normalize_columns(A)
        if truth is not None:
            # the trace lives in the normalized frame
            truth = truth * nmap.lambda_diag
    cfg = SolverConfig(k=args.k, step=args.step, max_iter=args.max_iter, stop_tol=args.tol,
                       diagnostic_truth=truth)
    res = solve(A, b, cfg, op)
    x = res.x if nmap is None else denormalize_solution(res.x, nmap)
    sol = f"solution.{args.format}"
    write_vector(out / sol, x)
    write_trace_csv(out / "trace.csv", res.trace)
    print(f"status={res.status} iterations={res.iterations} residual={res.trace[-1].residual_l2:.3e}")
    config = {k: v for k, v in vars(args).items() if k not in ("func",)}
    return [sol, "trace.csv"], config, 0 if res.status != "diverged" else 1


def cmd_analyze(args, out):
    A = read_matrix(args.matrix)
    if args.normalize:
        A, _ = normalize_columns(A)
    elif np.max(np.abs(np.linalg.norm(A, axis=0) - 1.0)) > 1e-10:
        raise ConfigError("analysis assumes unit-norm columns; pass --normalize")
    pair = analysis.NormPair.from_p(args.p)
    rep = analysis.analyze(A, args.k_star, args.operator, pair, step=args.step, budget=args.budget)
    (out / "analysis.json").write_text(rep.to_json() + "\n")
    print(rep.table())
    return ["analysis.json"], dict(vars(args)), 0


def cmd_generate(args, out):
    if args.seed is None:
        raise ConfigError("--seed is required for generate")
    spec = ProblemSpec(m=args.m, n=args.n, k_star=args.k_star, matrix_variance=args.variance,
                       signal_dist=args.signal, snr_db=args.snr_db, seed=args.seed,
                       noise_reference=args.noise_reference)
    prob = generate(spec)
    ext = args.format
    names = {"A": f"A.{ext}", "b": f"b.{ext}", "x_star": f"x_star.{ext}", "epsilon": f"epsilon.{ext}"}
    write_matrix(out / names["A"], prob.A)
    write_vector(out / names["b"], prob.b)
    write_vector(out / names["x_star"], prob.x_star)
    write_vector(out / names["epsilon"], prob.epsilon)
    (out / "problem.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    return sorted(names.values()) + ["problem.json"], spec.to_dict(), 0


def load_spec(ref):
    """Read an experiment spec from a path or a bundled name like ``fig3``."""
    path = Path(ref)
    if path.exists():
        text = path.read_text()
    else:
        name = ref if ref.endswith(".json") else ref + ".json"
        bundled = resources.files("aitcs").joinpath("configs", name)
        if not bundled.is_file():
            raise ConfigError(f"no experiment spec at {ref!r} and no bundled spec named {name!r}")
        text = bundled.read_text()
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {ref}: {exc}") from None
    validate_spec(spec)
    return spec


_REQUIRED = {
    "sparsity_sweep": ("m", "n", "k_star", "k_values", "algorithms"),
    "normalization_compare": ("m", "n", "k_star", "algorithms"),
    "phase_transition": ("n", "m_grid", "algorithms"),
    "verify_convergence_bound": ("instances", "checks"),
}


def validate_spec(spec):
    if not isinstance(spec, dict):
        raise ConfigError("experiment spec must be a JSON object")
    kind = spec.get("kind")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"'kind' must be one of {EXPERIMENT_KINDS}, got {kind!r}")
    if not isinstance(spec.get("name", ""), str) or not spec.get("name"):
        raise ConfigError("'name' must be a nonempty string")
    missing = [k for k in _REQUIRED[kind] if k not in spec]
    if missing:
        raise ConfigError(f"{kind} spec is missing {missing}")
    if "seed" in spec or "master_seed" in spec:
        raise ConfigError("seeds come from --seed, not from the spec")
    try:
        for a in spec.get("algorithms", []):
            experiments.Algorithm.parse(a)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad algorithm entry: {exc}") from None


def _problem_spec(spec, seed):
    return ProblemSpec(
        m=spec["m"], n=spec["n"], k_star=spec["k_star"],
        matrix_variance=spec.get("matrix_variance"),
        signal_dist=spec.get("signal_dist", "gaussian"),
        snr_db=spec.get("snr_db"), seed=seed,
        noise_reference=spec.get("noise_reference", "measurement"),
    )


def phase_spec(spec, seed, full_scale=False):
    """Build a :class:`PhaseTransitionSpec` from a validated JSON spec."""
    n, m_grid = spec["n"], spec["m_grid"]
    if full_scale:
        n, m_grid = 512, list(range(50, 501, 50))
    return experiments.PhaseTransitionSpec(
        n=n, m_grid=m_grid, trials_per_point=spec.get("trials_per_point", 20),
        signal_dist=spec.get("signal_dist", "gaussian"), algorithms=spec["algorithms"],
        bisection_resolution=spec.get("bisection_resolution", 1), master_seed=seed,
        max_iter=spec.get("max_iter", 1000), stop_tol=spec.get("stop_tol", 1e-12))


def run_experiment(spec, seed, jobs=1, full_scale=False):
    """Dispatch a validated spec; returns ``(columns, rows, summary)``."""
    kind = spec["kind"]
    if kind == "sparsity_sweep":
        kv = spec["k_values"]
        ks = list(range(kv["start"], kv["stop"] + 1, kv.get("stride", 1))) if isinstance(kv, dict) else kv
        rows = experiments.sparsity_sweep(
            _problem_spec(spec, seed), ks, spec["algorithms"], trials=spec.get("trials", 1),
            max_iter=spec.get("max_iter", 2000), stop_tol=spec.get("stop_tol", 1e-12), jobs=jobs)
        thr = spec.get("success_threshold", 1e-10)
        summary = {"success_threshold": thr, "k_star": spec["k_star"], "feasible_interval": {}}
        for a in spec["algorithms"]:
            name = experiments.Algorithm.parse(a).name
            iv = experiments.feasible_interval(rows, name, thr)
            below = [r for r in rows if r["algorithm"] == name and r["k"] < spec["k_star"]]
            summary["feasible_interval"][name] = {
                "interval": list(iv) if iv else None,
                "all_fail_below_k_star": all(r["success_rate"] == 0.0 for r in below),
            }
        cols = ["algorithm", "k", "mean_precision", "max_precision", "success_rate"]
        return cols, rows, summary
    if kind == "normalization_compare":
        rows = experiments.normalization_compare(
            _problem_spec(spec, seed), spec["algorithms"], trials=spec.get("trials", 10),
            max_iter=spec.get("max_iter", 2000), stop_tol=spec.get("stop_tol", 1e-12), jobs=jobs)
        summary = {}
        for r in rows:
            summary.setdefault(r["algorithm"], {})["normalized" if r["normalized"] else "raw"] = r["mean_precision"]
        cols = ["algorithm", "normalized", "mean_precision", "success_rate"]
        return cols, rows, summary
    if kind == "phase_transition":
        pts_spec = phase_spec(spec, seed, full_scale)
        n = pts_spec.n
        points = experiments.phase_transition(pts_spec, jobs=jobs)
        rows = [dict(p.__dict__) for p in points]
        summary = {"n": n, "signal_dist": pts_spec.signal_dist,
                   "curves": {}}
        for p in points:
            summary["curves"].setdefault(p.algorithm, []).append([p.m_over_n, p.k_over_m])
        cols = ["algorithm", "m", "k", "m_over_n", "k_over_m", "success_rate_at_k", "rate_above"]
        return cols, rows, summary
    # verify_convergence_bound
    rows = []
    for i, inst in enumerate(spec["instances"]):
        prob = experiments.certified_instance(
            inst["n"], inst["k_star"], perturbation=inst.get("perturbation", 0.05),
            snr_db=inst.get("snr_db"), seed=seed + i)
        for chk in spec["checks"]:
            rows.extend(_bound_rows(i, inst, prob, chk))
    summary = {"checks": len(rows), "all_hold": all(r["holds"] for r in rows),
               "total_violations": sum(r["violations"] for r in rows)}
    cols = ["instance", "n", "k_star", "operator", "mode", "norms", "step", "rho", "violations", "holds"]
    return cols, rows, summary


def _bound_rows(i, inst, prob, chk):
    op = get_operator(chk["operator"])
    mode = chk.get("mode", "thm2")
    p = chk.get("p", 2.0 if mode != "thm3" else 1.0)
    pair = analysis.NormPair.from_p(p)
    steps = chk.get("steps", [1.0])
    if steps == "interval":
        steps = _interior_steps(prob.A, inst["k_star"], op, mode, pair)
    rows = []
    for s in steps:
        rep = experiments.verify_convergence_bound(prob, op, mode=mode, norms=pair, step=s,
                                                   max_iter=chk.get("max_iter", 100))
        rows.append({"instance": i, "n": inst["n"], "k_star": inst["k_star"], "operator": op.name,
                     "mode": mode, "norms": rep.norms, "step": float(s), "rho": rep.rho,
                     "violations": rep.violations, "holds": rep.holds})
    return rows


def _interior_steps(A, k_star, op, mode, pair):
    """Steps just inside both ends of the admissible interval, plus s = 1."""
    if mode == "thm4":
        return [1.0]
    _, _, L = analysis.contraction_constants(k_star, pair, op.c1, op.c2)
    if mode == "thm3":
        lo, hi = analysis.coherence_step_interval(analysis.coherence(A), L)
    else:
        beta, _ = analysis.gric(A, 3 * k_star + 1, pair)
        lo, hi = analysis.step_interval(k_star, pair, beta, L)
    eps = 1e-3 * (hi - lo)
    return [lo + eps, 1.0, hi - eps]


def cmd_experiment(args, out):
    if args.seed is None:
        raise ConfigError("--seed is required for experiment commands")
    spec = load_spec(args.spec)
    cols, rows, summary = run_experiment(spec, args.seed, jobs=args.jobs, full_scale=args.full_scale)
    stem = f"{spec['name']}_seed{args.seed}"
    _write_rows(out / f"{stem}.csv", rows, cols)
    summary = {"kind": spec["kind"], "name": spec["name"], "seed": args.seed, "result": summary}
    (out / f"{stem}_summary.json").write_text(
        json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    print(json.dumps(_jsonable(summary["result"]), indent=2, sort_keys=True))
    config = {"spec": spec, "full_scale": args.full_scale, "jobs": args.jobs}
    return [f"{stem}.csv", f"{stem}_summary.json"], config, 0


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def cmd_replay(args):
    manifest = json.loads(Path(args.manifest).read_text())
    argv = list(manifest["argv"])
    if args.output_dir is not None:
        if "--output-dir" in argv:
            i = argv.index("--output-dir")
            argv[i + 1] = args.output_dir
        else:
            argv += ["--output-dir", args.output_dir]
    return main(argv)


_COMMANDS = {"solve": cmd_solve, "analyze": cmd_analyze, "generate": cmd_generate,
             "experiment": cmd_experiment}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "replay":
        try:
            return cmd_replay(args)
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            print(f"aitcs: cannot replay {args.manifest}: {exc}", file=sys.stderr)
            return 2
    started = time.time()
    out = Path(args.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        outputs, config, status = _COMMANDS[args.command](args, out)
    except (ConfigError, analysis.BudgetExceeded, experiments.HypothesisNotCertified) as exc:
        print(f"aitcs {args.command}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"aitcs {args.command}: {exc}", file=sys.stderr)
        return 1
    _write_manifest(out, args.command, argv, _jsonable(config), args.seed, outputs, started)
    return status


if __name__ == "__main__":
    sys.exit(main())
