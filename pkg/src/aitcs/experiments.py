"""Experiment drivers: sparsity sweeps, normalization comparison, phase
transitions, and per-iteration checks of the linear convergence bounds."""
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import analysis
from .probgen import ProblemSpec, Problem, generate, make_rng, relative_error, is_success
from .solver import (
    IterState, SolverConfig, ait_step, denormalize_solution, normalize_columns, solve,
)
from .thresholding import get_operator

__all__ = [
    "Algorithm",
    "TrialResult",
    "PhaseTransitionSpec",
    "CurvePoint",
    "BoundReport",
    "HypothesisNotCertified",
    "run_trial",
    "sparsity_sweep",
    "feasible_interval",
    "normalization_compare",
    "phase_transition",
    "verify_convergence_bound",
    "certified_instance",
]

_DIST_CODE = {"gaussian": 0, "binary": 1}


@dataclass(frozen=True)
class Algorithm:
    """A thresholding operator paired with a step-size strategy."""

    op: str
    step: Union[float, str] = 1.0

    def __post_init__(self):
        get_operator(self.op)
        if self.step != "adaptive":
            object.__setattr__(self, "step", float(self.step))

    @property
    def name(self):
        base = {"two_thirds": "TwoThirds", "scad": "SCAD"}.get(self.op, self.op.capitalize())
        if self.step == "adaptive":
            return "N" + base
        return base if self.step == 1.0 else f"{base}(s={self.step:g})"

    @classmethod
    def parse(cls, obj):
        if isinstance(obj, Algorithm):
            return obj
        if isinstance(obj, str):
            return cls(obj)
        if isinstance(obj, dict):
            return cls(obj["op"], obj.get("step", 1.0))
        op, step = obj
        return cls(op, step)

    def to_dict(self):
        return {"op": self.op, "step": self.step}


@dataclass(frozen=True)
class TrialResult:
    success: bool
    precision: float
    iterations: int

    def __iter__(self):
        return iter((self.success, self.precision, self.iterations))


def run_trial(problem, algorithm, k=None, normalize=False, max_iter=2000, stop_tol=1e-12):
    """Solve one instance and score it.

    ``precision`` is the relative l2 error; ``success`` uses the relative
    l-infinity criterion. ``k`` defaults to the true sparsity.
    """
    alg = Algorithm.parse(algorithm)
    k = int(problem.x_star.astype(bool).sum()) if k is None else int(k)
    cfg = SolverConfig(k=k, step=alg.step, max_iter=max_iter, stop_tol=stop_tol, record_trace=False)
    if normalize:
        A_hat, nmap = normalize_columns(problem.A)
        res = solve(A_hat, problem.b, cfg, alg.op)
        x = denormalize_solution(res.x, nmap)
    else:
        res = solve(problem.A, problem.b, cfg, alg.op)
        x = res.x
    if not np.all(np.isfinite(x)):
        return TrialResult(False, math.inf, res.iterations)
    return TrialResult(is_success(x, problem.x_star), relative_error(x, problem.x_star), res.iterations)


def _map(fn, items, jobs):
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def _sweep_task(args):
    spec, j, alg, k, normalize, max_iter, stop_tol = args
    prob = generate(spec, j)
    return run_trial(prob, alg, k=k, normalize=normalize, max_iter=max_iter, stop_tol=stop_tol)


def sparsity_sweep(base_spec, k_range, algorithms, trials=1, max_iter=2000, stop_tol=1e-12,
                   normalize=False, jobs=1):
    """Mean relative l2 precision for each algorithm and specified sparsity k.

    Every (algorithm, k) cell is evaluated on the same ``trials`` instances.
    Returns a list of row dicts ordered by algorithm then k.
    """
    k_range = [int(k) for k in k_range]
    if not k_range:
        raise ValueError("k_range must be nonempty")
    algs = [Algorithm.parse(a) for a in algorithms]
    tasks = [(base_spec, j, a, k, normalize, max_iter, stop_tol)
             for a in algs for k in k_range for j in range(trials)]
    results = _map(_sweep_task, tasks, jobs)
    rows = []
    for i, (a, k) in enumerate((a, k) for a in algs for k in k_range):
        chunk = results[i * trials:(i + 1) * trials]
        prec = [r.precision for r in chunk]
        rows.append({
            "algorithm": a.name,
            "k": k,
            "mean_precision": float(np.mean(prec)),
            "max_precision": float(np.max(prec)),
            "success_rate": float(np.mean([r.success for r in chunk])),
        })
    return rows


def feasible_interval(rows, algorithm, threshold):
    """Longest run of consecutive k (from the sweep rows) whose worst-trial precision
    is at most ``threshold``; returns ``(k_first, k_last)`` or ``None``."""
    pts = sorted((r["k"], r["max_precision"]) for r in rows if r["algorithm"] == algorithm)
    best, cur = None, None
    for k, prec in pts:
        if prec <= threshold:
            cur = (cur[0], k) if cur else (k, k)
            if best is None or cur[1] - cur[0] > best[1] - best[0]:
                best = cur
        else:
            cur = None
    return best


def normalization_compare(spec, algorithms, trials=10, max_iter=2000, stop_tol=1e-12, jobs=1):
    """Mean precision on the raw matrix and through normalize/denormalize.

    Both paths see the same ``trials`` seeded instances. Rows are ordered by
    algorithm, unnormalized first.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    algs = [Algorithm.parse(a) for a in algorithms]
    tasks = [(spec, j, a, None, norm, max_iter, stop_tol)
             for a in algs for norm in (False, True) for j in range(trials)]
    results = _map(_sweep_task, tasks, jobs)
    rows = []
    for i, (a, norm) in enumerate((a, nm) for a in algs for nm in (False, True)):
        chunk = results[i * trials:(i + 1) * trials]
        rows.append({
            "algorithm": a.name,
            "normalized": norm,
            "mean_precision": float(np.mean([r.precision for r in chunk])),
            "success_rate": float(np.mean([r.success for r in chunk])),
        })
    return rows


@dataclass
class PhaseTransitionSpec:
    n: int = 128
    m_grid: tuple = (16, 32, 48, 64, 80, 96, 112, 128)
    trials_per_point: int = 20
    signal_dist: str = "gaussian"
    algorithms: tuple = (Algorithm("scad", "adaptive"), Algorithm("soft", "adaptive"))
    bisection_resolution: int = 1
    master_seed: int = 0
    max_iter: int = 1000
    stop_tol: float = 1e-12

    def __post_init__(self):
        self.m_grid = tuple(int(m) for m in self.m_grid)
        if any(b <= a for a, b in zip(self.m_grid, self.m_grid[1:])):
            raise ValueError("m_grid must be increasing")
        if any(m < 1 or m > self.n for m in self.m_grid):
            raise ValueError("every m must lie in [1, n]")
        if self.trials_per_point < 1 or self.bisection_resolution < 1:
            raise ValueError("trials_per_point and bisection_resolution must be >= 1")
        if self.signal_dist not in _DIST_CODE:
            raise ValueError(f"unknown signal_dist {self.signal_dist!r}")
        self.algorithms = tuple(Algorithm.parse(a) for a in self.algorithms)


@dataclass(frozen=True)
class CurvePoint:
    algorithm: str
    m: int
    k: int
    m_over_n: float
    k_over_m: float
    success_rate_at_k: float
    rate_above: float  # success rate at k + resolution (nan when beyond m)


def _pt_task(args):
    spec, alg, m, k, j = args
    pspec = ProblemSpec(m=m, n=spec.n, k_star=k, signal_dist=spec.signal_dist,
                        seed=spec.master_seed)
    prob = generate(pspec, _DIST_CODE[spec.signal_dist], m, k, j)
    res = run_trial(prob, alg, max_iter=spec.max_iter, stop_tol=spec.stop_tol)
    return res.success


def _success_rate(spec, alg, m, k, jobs):
    tasks = [(spec, alg, m, k, j) for j in range(spec.trials_per_point)]
    return float(np.mean(_map(_pt_task, tasks, jobs)))


def phase_transition(spec, jobs=1, return_rates=False):
    """50% success boundary in k for each m, located by bisection over [1, m].

    The search keeps ``lo`` (success rate >= 1/2, with k = 0 as a virtual
    success) and ``hi`` (rate < 1/2, with k = m + 1 as a virtual failure) and
    stops once ``hi - lo <= bisection_resolution``. Trial j at (m, k) draws
    the same instance for every algorithm.
    """
    points = []
    rates = {}
    for alg in spec.algorithms:
        for m in spec.m_grid:
            cache = {}

            def rate(k):
                if k not in cache:
                    cache[k] = _success_rate(spec, alg, m, k, jobs)
                return cache[k]

            lo, hi = 0, m + 1
            while hi - lo > spec.bisection_resolution:
                mid = (lo + hi) // 2
                if rate(mid) >= 0.5:
                    lo = mid
                else:
                    hi = mid
            above = lo + spec.bisection_resolution
            r_above = rate(above) if above <= m else float("nan")
            points.append(CurvePoint(
                algorithm=alg.name, m=m, k=lo,
                m_over_n=m / spec.n, k_over_m=lo / m,
                success_rate_at_k=cache.get(lo, float("nan")),
                rate_above=r_above,
            ))
            rates[(alg.name, m)] = dict(sorted(cache.items()))
    return (points, rates) if return_rates else points


class HypothesisNotCertified(ValueError):
    """The theorem's hypothesis could not be verified on the given instance."""


@dataclass
class BoundReport:
    mode: str
    norms: str
    step: float
    rho: float
    constant: float  # coefficient of the noise term
    noise_term: float
    holds: bool
    violations: int
    iterations: int
    errors: np.ndarray = field(repr=False)
    bounds: np.ndarray = field(repr=False)
    constants: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "mode": self.mode, "norms": self.norms, "step": self.step, "rho": self.rho,
            "constant": self.constant, "noise_term": self.noise_term, "holds": self.holds,
            "violations": self.violations, "iterations": self.iterations,
            "constants": self.constants,
            "errors": [float(e) for e in self.errors],
            "bounds": [float(b) for b in self.bounds],
        }


def verify_convergence_bound(problem, op, mode="thm2", norms=(2.0, 2.0), step=1.0,
                             max_iter=200, x0=None, budget=analysis.DEFAULT_BUDGET):
    """Check the per-iteration error bound of a linear convergence theorem.

    ``mode`` selects the guarantee:

    * ``"thm2"``: gRIC form in the (p, q) norms; needs an exact
      beta_{3k*+1,p,q} < 1/L and ``step`` inside ``(s_lo, s_hi)``.
    * ``"thm3"``: coherence form in l1 / l-infinity; needs
      ``mu < 1/((3-c2) k*)`` and ``step`` in the widened coherence interval.
    * ``"thm4"``: Hard operator at ``step = 1``; needs ``delta_{3k*+1} < 0.618``.

    The solver runs with ``k = k*``. Raises :class:`HypothesisNotCertified`
    when the hypothesis does not hold exactly.
    """
    op = get_operator(op)
    A = np.asarray(problem.A, dtype=float)
    if np.max(np.abs(np.linalg.norm(A, axis=0) - 1.0)) > 1e-10:
        raise HypothesisNotCertified("the bounds assume unit-norm columns")
    x_star = np.asarray(problem.x_star, dtype=float)
    k_star = int(np.count_nonzero(x_star))
    n = A.shape[1]
    big = 3 * k_star + 1
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    AtE = A.T @ np.asarray(problem.epsilon, dtype=float)
    consts = {"k_star": k_star}

    if mode == "thm2":
        pair = analysis._as_pair(norms)
        beta, exact = analysis.gric(A, big, pair, budget=budget)
        if not exact:
            raise HypothesisNotCertified(f"beta at (p,q)=({pair.label()}) is not exactly computable")
        _, _, L = analysis.contraction_constants(k_star, pair, op.c1, op.c2)
        if not beta < 1.0 / L:
            raise HypothesisNotCertified(f"beta_{big} = {beta:.6g} >= 1/L = {1.0 / L:.6g}")
        s_lo, s_hi = analysis.step_interval(k_star, pair, beta, L)
        if not s_lo < step < s_hi:
            raise HypothesisNotCertified(f"step {step} outside ({s_lo:.6g}, {s_hi:.6g})")
        _, rho = analysis.convergence_rate(step, k_star, pair, beta, L)
        p, q = pair.p, pair.q
        const = step * L / (1.0 - rho)
        consts.update(beta=beta, L=L, s_lo=s_lo, s_hi=s_hi)
    elif mode == "thm3":
        pair = analysis.NormPair(1.0, math.inf)
        mu = analysis.coherence(A)
        if not analysis.coherence_conditions(mu, k_star, op.c2)["thm3_strict"]:
            raise HypothesisNotCertified(f"mu = {mu:.6g} >= 1/((3-c2)k*)")
        _, _, L = analysis.contraction_constants(k_star, pair, op.c1, op.c2)
        s_lo, s_hi = analysis.coherence_step_interval(mu, L)
        if not s_lo < step < s_hi:
            raise HypothesisNotCertified(f"step {step} outside ({s_lo:.6g}, {s_hi:.6g})")
        _, rho = analysis.coherence_rate(step, mu, L)
        p, q = 1.0, math.inf
        const = step * L / (1.0 - rho)
        consts.update(mu=mu, L=L, s_lo=s_lo, s_hi=s_hi)
    elif mode == "thm4":
        if op.name != "hard":
            raise HypothesisNotCertified("the golden-ratio bound covers the hard operator only")
        if step != 1.0:
            raise HypothesisNotCertified("the golden-ratio bound needs step = 1")
        pair = analysis.NormPair(2.0, 2.0)
        delta = analysis.ric(A, big, budget=budget)
        if not delta < analysis.GOLDEN:
            raise HypothesisNotCertified(f"delta_{big} = {delta:.6g} >= (sqrt(5)-1)/2")
        rho = analysis.hard_golden_rate(delta)
        p, q = 2.0, 2.0
        const = (math.sqrt(5.0) + 1.0) / (2.0 - 2.0 * rho)
        consts.update(delta=delta)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    cfg = SolverConfig(k=k_star, step=step, max_iter=max_iter, stop_tol=0.0, record_trace=False)
    noise = float(np.linalg.norm(AtE, ord=q))
    e0 = float(np.linalg.norm(x_star - x0, ord=p))
    slack = 1e-12 * max(1.0, e0)
    state = IterState.initial(n, x0)
    errs, bounds = [e0], [e0 + const * noise]
    for t in range(1, max_iter + 1):
        state = ait_step(state, A, problem.b, cfg, op)
        errs.append(float(np.linalg.norm(state.x - x_star, ord=p)))
        bounds.append(rho**t * e0 + const * noise)
    errs, bounds = np.array(errs), np.array(bounds)
    viol = int(np.sum(errs > bounds + slack))
    return BoundReport(
        mode=mode, norms=pair.label(), step=float(step), rho=float(rho), constant=float(const),
        noise_term=noise, holds=viol == 0, violations=viol, iterations=max_iter,
        errors=errs, bounds=bounds, constants=consts,
    )


def certified_instance(n, k_star, perturbation=0.05, snr_db=None, seed=0, signal_dist="gaussian"):
    """Square identity-perturbed problem with unit columns, small enough for exact constants.

    ``A = normalize(I + perturbation * G)`` with Gaussian ``G``; ``x_star`` has
    ``k_star`` nonzeros and ``b = A x_star + eps``.
    """
    rng = make_rng(seed, n, k_star)
    G = rng.standard_normal((n, n))
    A, _ = normalize_columns(np.eye(n) + perturbation * G)
    support = np.sort(rng.choice(n, size=k_star, replace=False))
    x = np.zeros(n)
    if signal_dist == "gaussian":
        vals = rng.standard_normal(k_star)
        vals[vals == 0] = 1.0
    else:
        vals = rng.choice(np.array([-1.0, 1.0]), size=k_star)
    x[support] = vals
    clean = A @ x
    eps = np.zeros(n)
    if snr_db is not None:
        w = rng.standard_normal(n)
        eps = w * (np.linalg.norm(clean) / 10.0 ** (snr_db / 20.0) / np.linalg.norm(w))
    return Problem(A=A, b=clean + eps, x_star=x, epsilon=eps, I_star=support)
