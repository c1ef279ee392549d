"""Matrix constants (coherence, RIC, generalized RIC) and convergence constants.

Exact values come from enumerating supports, which is only feasible for small
matrices; enumeration beyond ``budget`` supports raises :class:`BudgetExceeded`
instead of silently returning an estimate.
"""
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .thresholding import get_operator

__all__ = [
    "BudgetExceeded",
    "NormPair",
    "AnalysisReport",
    "DEFAULT_BUDGET",
    "GOLDEN",
    "coherence",
    "ric",
    "gric",
    "quadratic_form_sup",
    "norm_equivalence_check",
    "contraction_constants",
    "step_interval",
    "convergence_rate",
    "coherence_rate",
    "coherence_step_interval",
    "coherence_conditions",
    "hard_golden_rate",
    "check_uniqueness_condition",
    "brute_force_sparsest",
    "analyze",
]

DEFAULT_BUDGET = 2_000_000
# (sqrt(5) - 1) / 2, the Hard-operator RIC threshold
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

_N_RESTARTS = 64
_N_STEPS = 500
_BATCH = 20_000


class BudgetExceeded(ValueError):
    """Exact support enumeration would exceed the configured budget."""


@dataclass(frozen=True)
class NormPair:
    """Conjugate exponents ``1/p + 1/q = 1``; ``q = inf`` pairs with ``p = 1``."""

    p: float
    q: float

    def __post_init__(self):
        p, q = float(self.p), float(self.q)
        if not (1 <= p < math.inf):
            raise ValueError(f"p must lie in [1, inf), got {p}")
        if not (1 < q <= math.inf):
            raise ValueError(f"q must lie in (1, inf], got {q}")
        if abs(1.0 / p + 1.0 / q - 1.0) > 1e-12:
            raise ValueError(f"(p, q) = ({p}, {q}) is not a conjugate pair")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @classmethod
    def from_p(cls, p):
        p = float(p)
        return cls(p, math.inf if p == 1 else p / (p - 1.0))

    @property
    def kappa_exponent(self):
        """``max(1/q - 1/p, 0)``."""
        return max(1.0 / self.q - 1.0 / self.p, 0.0)

    def label(self):
        q = "inf" if math.isinf(self.q) else f"{self.q:g}"
        return f"{self.p:g},{q}"


def _as_pair(norms):
    if isinstance(norms, NormPair):
        return norms
    p, q = norms
    return NormPair(p, q)


def _column_norms(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("A must be a matrix")
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0):
        raise ValueError(f"zero column(s) at {np.flatnonzero(norms == 0).tolist()}")
    return A, norms


def coherence(A):
    """Largest normalized absolute inner product between distinct columns."""
    A, norms = _column_norms(A)
    if A.shape[1] < 2:
        raise ValueError("coherence needs at least two columns")
    G = np.abs((A / norms).T @ (A / norms))
    np.fill_diagonal(G, 0.0)
    return float(G.max())


def _check_budget(n, k, budget):
    count = math.comb(n, k)
    if count > budget:
        raise BudgetExceeded(
            f"C({n}, {k}) = {count} supports exceeds the enumeration budget of {budget}; "
            "shrink n or k")
    return count


def _effective_k(n, k):
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k}")
    # the supremum runs over |S| <= k, so k beyond n saturates at n
    return min(int(k), n)


def _support_batches(n, k):
    it = itertools.combinations(range(n), k)
    while True:
        chunk = list(itertools.islice(it, _BATCH))
        if not chunk:
            return
        yield np.array(chunk, dtype=int)


def _gram_deviation(A):
    A = np.asarray(A, dtype=float)
    return np.eye(A.shape[1]) - A.T @ A


def ric(A, k, budget=DEFAULT_BUDGET):
    """Exact restricted isometry constant by enumerating all size-k supports.

    For each support S this is the spectral norm of ``I - A_S^T A_S``; the
    result is the maximum over supports.
    """
    A, _ = _column_norms(A)
    n = A.shape[1]
    k = _effective_k(n, k)
    _check_budget(n, k, budget)
    M = _gram_deviation(A)
    best = 0.0
    for S in _support_batches(n, k):
        sub = M[S[:, :, None], S[:, None, :]]
        ev = np.linalg.eigvalsh(sub)
        best = max(best, float(np.abs(ev).max()))
    return best


def _lp_norm(x, p, axis=0):
    return np.linalg.norm(x, ord=p, axis=axis)


def _dual_direction(v, r):
    """Unit-l_{r*} vector attaining ``<v, x> = ||v||_r`` (columnwise)."""
    a = np.abs(v)
    scale = a.max(axis=0, keepdims=True)
    scale[scale == 0] = 1.0
    a = a / scale
    w = np.sign(v) * a ** (r - 1.0)
    rstar = r / (r - 1.0)
    nrm = _lp_norm(w, rstar)
    nrm[nrm == 0] = 1.0
    return w / nrm


def _qf_ascent(M, p, rng, restarts=_N_RESTARTS, steps=_N_STEPS):
    """Multi-start ascent for ``max |z^T M z| / ||z||_p^2``; returns (value, argmax)."""
    k = M.shape[0]
    starts = [np.eye(k), rng.standard_normal((k, restarts))]
    _, vecs = np.linalg.eigh(M)
    starts.append(vecs)
    Z0 = np.concatenate(starts, axis=1)
    best_val, best_z = 0.0, Z0[:, :1]
    for sign in (1.0, -1.0):
        Ms = sign * M
        Z = Z0 / _lp_norm(Z0, p)
        val = np.einsum("ir,ij,jr->r", Z, Ms, Z)
        lr = np.full(Z.shape[1], 0.5)
        for _ in range(steps):
            grad = 2.0 * Ms @ Z
            cand = Z + lr * grad
            cand = cand / _lp_norm(cand, p)
            cval = np.einsum("ir,ij,jr->r", cand, Ms, cand)
            up = cval > val
            Z[:, up] = cand[:, up]
            val[up] = cval[up]
            lr = np.where(up, lr * 1.2, lr * 0.5)
            if np.all(lr < 1e-12):
                break
        j = int(np.argmax(val))
        if val[j] > best_val:
            best_val, best_z = float(val[j]), Z[:, j : j + 1].copy()
    return best_val, best_z


def _pq_norm_lower_bound(M, pair, rng, extra_starts=None,
                         restarts=_N_RESTARTS, steps=_N_STEPS):
    """Lower bound on ``max ||M x||_q`` over ``||x||_p = 1`` by a nonlinear power method."""
    p, q = pair.p, pair.q
    k = M.shape[0]
    starts = [np.eye(k), rng.standard_normal((k, restarts))]
    if extra_starts is not None:
        starts.append(extra_starts)
    X = np.concatenate(starts, axis=1)
    X = X / _lp_norm(X, p)
    best = float(_lp_norm(M @ X, q).max())
    for _ in range(steps):
        Y = M @ X
        W = _dual_direction(Y, q)  # unit in l_p, attains ||Y||_q
        V = M.T @ W
        X = _dual_direction(V, q)  # unit in l_p
        val = float(_lp_norm(M @ X, q).max())
        if val <= best * (1 + 1e-14):
            best = max(best, val)
            break
        best = val
    return best


def gric(A, k, norms, budget=DEFAULT_BUDGET, seed=0):
    """Generalized RIC ``beta_{k,p,q}``; returns ``(value, exact)``.

    Exact at (1, inf) (largest entry of ``I - A_S^T A_S``) and (2, 2) (equals
    the RIC). Other pairs give a multi-start lower bound with ``exact=False``.
    """
    pair = _as_pair(norms)
    A, _ = _column_norms(A)
    n = A.shape[1]
    k = _effective_k(n, k)
    M = _gram_deviation(A)
    if pair.p == 1:
        if k == 1:
            return float(np.abs(np.diag(M)).max()), True
        return float(np.abs(M).max()), True
    if pair.p == 2:
        return ric(A, k, budget=budget), True
    _check_budget(n, k, budget)
    rng = np.random.default_rng(seed)
    best = 0.0
    for S in itertools.combinations(range(n), k):
        sub = M[np.ix_(S, S)]
        _, z = _qf_ascent(sub, pair.p, rng)
        best = max(best, _pq_norm_lower_bound(sub, pair, rng, extra_starts=z))
    return best, False


def quadratic_form_sup(A, k, p, budget=DEFAULT_BUDGET, seed=0):
    """``sup |z^T (A^T A - I) z| / ||z||_p^2`` over k-sparse z.

    Exact (the RIC) at p = 2; otherwise a multi-start lower bound.
    """
    A, _ = _column_norms(A)
    n = A.shape[1]
    k = _effective_k(n, k)
    if float(p) == 2.0:
        return ric(A, k, budget=budget)
    _check_budget(n, k, budget)
    M = _gram_deviation(A)
    rng = np.random.default_rng(seed)
    best = 0.0
    for S in itertools.combinations(range(n), k):
        val, _ = _qf_ascent(M[np.ix_(S, S)], float(p), rng)
        best = max(best, val)
    return best


def norm_equivalence_check(x, p, q, slack=1e-12):
    """Check both sparse norm-equivalence forms with ``k = ||x||_0``.

    Ordered form (requires ``q <= p``): ``||x||_p <= ||x||_q <= k^(1/q-1/p) ||x||_p``.
    Unified form (any pair): ``||x||_p <= k^max(1/p-1/q, 0) ||x||_q``.
    """
    x = np.asarray(x, dtype=float)
    k = int(np.count_nonzero(x))
    if k == 0:
        return True
    # scale by max |x| so large exponents cannot overflow
    top = float(np.abs(x).max())
    np_, nq = (top * np.linalg.norm(x / top, ord=r) for r in (p, q))
    inv = lambda r: 0.0 if math.isinf(r) else 1.0 / r  # noqa: E731
    scale = max(np_, nq, 1.0)
    ok = True
    if q <= p:
        ok &= np_ <= nq + slack * scale
        ok &= nq <= k ** (inv(q) - inv(p)) * np_ + slack * scale
    ok &= np_ <= k ** max(inv(p) - inv(q), 0.0) * nq + slack * scale
    ok &= nq <= k ** max(inv(q) - inv(p), 0.0) * np_ + slack * scale
    return bool(ok)


def contraction_constants(k_star, norms, c1, c2):
    """``(L1, L2, L)`` for true sparsity ``k_star`` and boundedness constants."""
    pair = _as_pair(norms)
    if not 0 <= c2 <= c1 <= 1:
        raise ValueError("need 0 <= c2 <= c1 <= 1")
    p = pair.p
    ratio = 0.0 if math.isinf(pair.q) else p / pair.q
    e = max(1.0 - ratio, 0.0)
    L1 = 2 ** (p - 1) * k_star**e + (2 ** (p - 1) - c2**p + 1) * k_star
    L2 = 2**p * (2 * k_star) ** e + 2 ** (p - 1) * c1**p * k_star
    return L1, L2, min(L1 ** (1 / p), L2 ** (1 / p))


def _kappa(k_star, pair):
    return (2 * k_star) ** pair.kappa_exponent


def step_interval(k_star, norms, beta, L):
    """Admissible step sizes ``(s_lo, s_hi)``; requires ``beta < 1/L``."""
    pair = _as_pair(norms)
    if not beta < 1.0 / L:
        raise ValueError(f"hypothesis violated: beta = {beta} >= 1/L = {1.0 / L}")
    kap = _kappa(k_star, pair)
    return (kap - 1.0 / L) / (kap - beta), (kap + 1.0 / L) / (kap + beta)


def convergence_rate(s, k_star, norms, beta, L):
    """``(gamma_s, rho_s)`` with ``gamma_s = |1-s| kappa + s beta`` and ``rho_s = gamma_s L``."""
    pair = _as_pair(norms)
    gamma = abs(1.0 - s) * _kappa(k_star, pair) + s * beta
    return gamma, gamma * L


def coherence_rate(s, mu, L):
    """Sharper (1, inf) constants: ``gamma_s = max(|1-s|, s mu)``."""
    gamma = max(abs(1.0 - s), s * mu)
    return gamma, gamma * L


def coherence_step_interval(mu, L):
    """Open step-size range ``(1 - 1/L, min(1/(L mu), 1 + 1/L))`` for the coherence rate."""
    hi = 1.0 + 1.0 / L if mu == 0 else min(1.0 / (L * mu), 1.0 + 1.0 / L)
    return 1.0 - 1.0 / L, hi


def coherence_conditions(mu, k_star, c2):
    """Both forms of the coherence condition.

    ``thm3_strict``: ``mu < 1/((3-c2) k*)``;
    ``table2_form``: ``mu < 1/((3-c2) k* - 1)``.
    """
    d = (3.0 - c2) * k_star
    return {
        "thm3_strict": bool(0 <= mu < 1.0 / d),
        "table2_form": bool(mu < 1.0 / (d - 1.0)) if d > 1 else bool(mu < math.inf),
    }


def hard_golden_rate(delta):
    """``((sqrt(5)+1)/2) * delta``; below 1 exactly when ``delta < (sqrt(5)-1)/2``."""
    return (math.sqrt(5.0) + 1.0) / 2.0 * delta


def check_uniqueness_condition(beta_2k, k, norms):
    """``beta_{2k,p,q} < (2k)^min(1/q - 1/p, 0)``.

    beta = 0 (orthonormal support columns) is accepted: uniqueness is then trivial.
    """
    pair = _as_pair(norms)
    bound = (2 * k) ** min(1.0 / pair.q - 1.0 / pair.p, 0.0)
    return bool(0 <= beta_2k < bound)


def brute_force_sparsest(A, b, k_max, fit_tol=1e-9, budget=DEFAULT_BUDGET):
    """All distinct solutions of ``A x = b`` supported on at most ``k_max`` columns.

    Each support of size ``<= k_max`` gets a least-squares fit; fits with
    residual ``<= fit_tol`` are kept, deduplicated, and returned as
    ``(support, x)`` pairs where ``support`` is the nonzero set of ``x``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    k_max = min(int(k_max), n)
    total = sum(math.comb(n, r) for r in range(1, k_max + 1))
    if total > budget:
        raise BudgetExceeded(f"{total} supports exceeds the enumeration budget of {budget}")
    found = []
    scale = max(1.0, float(np.linalg.norm(b)))
    if np.linalg.norm(b) <= fit_tol:
        return [(tuple(), np.zeros(n))]
    for r in range(1, k_max + 1):
        for S in itertools.combinations(range(n), r):
            cols = list(S)
            coef, *_ = np.linalg.lstsq(A[:, cols], b, rcond=None)
            if np.linalg.norm(A[:, cols] @ coef - b) > fit_tol:
                continue
            x = np.zeros(n)
            x[cols] = coef
            x[np.abs(x) <= fit_tol * scale] = 0.0
            if any(np.allclose(x, y, atol=1e3 * fit_tol * scale, rtol=0) for _, y in found):
                continue
            found.append((tuple(int(i) for i in np.flatnonzero(x)), x))
    return found


@dataclass
class AnalysisReport:
    operator: str
    k_star: int
    norms: NormPair
    step: float
    mu: float
    delta: dict = field(default_factory=dict)
    beta: dict = field(default_factory=dict)
    L1: float = float("nan")
    L2: float = float("nan")
    L: float = float("nan")
    gamma_s: float = float("nan")
    rho_s: float = float("nan")
    s_lo: float = float("nan")
    s_hi: float = float("nan")
    conditions: dict = field(default_factory=dict)

    def to_dict(self):
        beta = {
            f"{k}|{pq}": {"value": v, "exact": ex} for (k, pq), (v, ex) in sorted(self.beta.items())
        }
        clean = lambda v: None if isinstance(v, float) and math.isnan(v) else v  # noqa: E731
        return {
            "operator": self.operator,
            "k_star": self.k_star,
            "p": self.norms.p,
            "q": "inf" if math.isinf(self.norms.q) else self.norms.q,
            "step": self.step,
            "mu": self.mu,
            "delta": {str(k): v for k, v in sorted(self.delta.items())},
            "beta": beta,
            "L1": self.L1,
            "L2": self.L2,
            "L": self.L,
            "gamma_s": clean(self.gamma_s),
            "rho_s": clean(self.rho_s),
            "s_lo": clean(self.s_lo),
            "s_hi": clean(self.s_hi),
            "conditions": dict(self.conditions),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, **kw)

    def table(self):
        """Plain-text certificate."""
        d = self.to_dict()
        lines = [f"operator={self.operator}  k*={self.k_star}  (p,q)=({self.norms.label()})  s={self.step:g}",
                 f"  mu            {self.mu:.6g}"]
        for k, v in d["delta"].items():
            lines.append(f"  delta_{k:<8}{v:.6g}")
        for key, b in d["beta"].items():
            tag = "exact" if b["exact"] else "lower bound"
            lines.append(f"  beta[{key}]  {b['value']:.6g} ({tag})")
        for name in ("L1", "L2", "L", "gamma_s", "rho_s", "s_lo", "s_hi"):
            v = d[name]
            lines.append(f"  {name:<14}{'n/a' if v is None else format(v, '.6g')}")
        for name, ok in sorted(self.conditions.items()):
            lines.append(f"  [{'PASS' if ok else 'FAIL'}] {name}")
        return "\n".join(lines)


def analyze(A, k_star, op="hard", norms=(2.0, 2.0), step=1.0, budget=DEFAULT_BUDGET,
            delta_levels=None):
    """Compute every constant and theorem condition for a unit-column matrix.

    ``delta_levels`` defaults to ``1 .. 3k*+1`` (capped at n).
    """
    op = get_operator(op)
    pair = _as_pair(norms)
    A, _ = _column_norms(A)
    n = A.shape[1]
    big = 3 * k_star + 1
    levels = sorted(set(delta_levels or range(1, big + 1)) | {2 * k_star, big})
    levels = [r for r in levels if r <= n] or [n]

    mu = coherence(A)
    rep = AnalysisReport(operator=op.name, k_star=k_star, norms=pair, step=float(step), mu=mu)
    for r in levels:
        rep.delta[r] = ric(A, r, budget=budget)
    for r in sorted({2 * k_star, big}):
        rep.beta[(r, "1,inf")] = (gric(A, r, (1, math.inf), budget=budget)[0], True)
        rep.beta[(r, "2,2")] = (rep.delta[min(r, n)], True)
        if pair.p not in (1.0, 2.0):
            rep.beta[(r, pair.label())] = gric(A, r, pair, budget=budget)

    L1, L2, L = contraction_constants(k_star, pair, op.c1, op.c2)
    rep.L1, rep.L2, rep.L = L1, L2, L
    beta_big, beta_exact = rep.beta[(big, pair.label())]
    beta_2k = rep.beta[(2 * k_star, pair.label())][0]
    rep.gamma_s, rep.rho_s = convergence_rate(step, k_star, pair, beta_big, L)
    thm2 = beta_big < 1.0 / L
    if thm2:
        rep.s_lo, rep.s_hi = step_interval(k_star, pair, beta_big, L)

    _, _, L_rip = contraction_constants(k_star, (2, 2), op.c1, op.c2)
    delta_big = rep.delta[min(big, n)]
    coh = coherence_conditions(mu, k_star, op.c2)
    rep.conditions = {
        "thm1_unique": check_uniqueness_condition(beta_2k, k_star, pair),
        # a lower-bound beta cannot certify the hypothesis
        "thm2_applies": bool(thm2 and beta_exact),
        "thm3_applies": coh["thm3_strict"],
        "thm3_strict": coh["thm3_strict"],
        "table2_form": coh["table2_form"],
        "cor3_applies": bool(delta_big < 1.0 / L_rip),
        "thm4_applies": bool(delta_big < GOLDEN),
        "step_in_interval": bool(thm2 and rep.s_lo < step < rep.s_hi),
    }
    return rep
