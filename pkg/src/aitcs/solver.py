"""Adaptively iterative thresholding (AIT) for sparse recovery.

Each iteration takes a gradient (Landweber) step, keeps the k largest
entries in magnitude, and shrinks them with a thresholding operator whose
threshold is the (k+1)-th largest magnitude.
"""
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .thresholding import ThresholdingOperator, get_operator, _DEFINING

__all__ = [
    "SolverConfig",
    "IterState",
    "TraceRecord",
    "SolveTrace",
    "SolveResult",
    "NormalizationMap",
    "gradient_step",
    "select_support_and_tau",
    "adaptive_step",
    "ait_step",
    "solve",
    "normalize_columns",
    "denormalize_solution",
    "lemma3_diagnostic",
]

# below this relative size the adaptive step denominator is treated as zero
_ADAPTIVE_GUARD = 1e-14


@dataclass
class SolverConfig:
    """Settings for one AIT run.

    ``step`` is a positive float for a constant step size or the string
    ``"adaptive"`` for the normalized (NAIT) step.
    """

    k: int
    step: Union[float, str] = 1.0
    max_iter: int = 2000
    stop_tol: float = 1e-12
    record_trace: bool = True
    diagnostic_truth: Optional[np.ndarray] = None

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        self.k = int(self.k)
        if isinstance(self.step, str):
            if self.step != "adaptive":
                raise ValueError(f"step must be a positive number or 'adaptive', got {self.step!r}")
        elif not float(self.step) > 0:
            raise ValueError(f"constant step must be positive, got {self.step}")
        else:
            self.step = float(self.step)
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter}")
        if self.stop_tol < 0:
            raise ValueError("stop_tol must be nonnegative")

    @property
    def adaptive(self):
        return self.step == "adaptive"


@dataclass
class IterState:
    x: np.ndarray
    z: np.ndarray
    tau: float
    support: np.ndarray
    t: int = 0
    step_used: float = float("nan")

    @classmethod
    def initial(cls, n, x0=None):
        x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
        if x.shape != (n,):
            raise ValueError(f"x0 must have length {n}")
        return cls(x=x, z=x.copy(), tau=0.0, support=np.flatnonzero(x), t=0)


@dataclass
class TraceRecord:
    t: int
    tau: float
    support: np.ndarray
    step: float
    residual_l2: float
    err_l1: Optional[float] = None
    err_l2: Optional[float] = None
    err_linf: Optional[float] = None
    lemma3_ok: Optional[bool] = None


@dataclass
class SolveTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)


@dataclass
class SolveResult:
    x: np.ndarray
    trace: SolveTrace
    status: str
    iterations: int

    def __iter__(self):
        # allows ``x, trace, status = solve(...)``
        return iter((self.x, self.trace, self.status))


@dataclass(frozen=True)
class NormalizationMap:
    lambda_diag: np.ndarray

    def __post_init__(self):
        if np.any(~(np.asarray(self.lambda_diag) > 0)):
            raise ValueError("column norms must be strictly positive")


def _check_dims(A, b, x=None):
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"A must be a matrix, got shape {A.shape}")
    if b.shape != (A.shape[0],):
        raise ValueError(f"b has shape {b.shape}, expected ({A.shape[0]},)")
    if x is not None and np.shape(x) != (A.shape[1],):
        raise ValueError(f"x has shape {np.shape(x)}, expected ({A.shape[1]},)")
    return A, b


def gradient_step(A, b, x, s):
    """Return ``x - s * A^T (A x - b)``."""
    A, b = _check_dims(A, b, x)
    x = np.asarray(x, dtype=float)
    return x - s * (A.T @ (A @ x - b))


def select_support_and_tau(z, k):
    """Indices of the k largest |z_i| and the (k+1)-th largest magnitude.

    Ties are broken toward the lowest index. The threshold is 0 when
    ``k + 1 > len(z)``. The returned support is sorted by magnitude rank.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    mags = np.abs(np.asarray(z, dtype=float))
    n = mags.size
    # stable sort on -|z| keeps lower indices first among equal magnitudes
    order = np.argsort(-mags, kind="stable")
    support = order[:k]
    tau = float(mags[order[k]]) if k < n else 0.0
    return support, tau


def adaptive_step(A, b, x, support):
    """Normalized step ``||g_I||^2 / ||A_I g_I||^2`` with ``g = A^T (b - A x)``.

    Falls back to 1 when the denominator is negligible (zero residual).
    """
    A, b = _check_dims(A, b, x)
    support = np.asarray(support, dtype=int)
    if support.size == 0:
        raise ValueError("adaptive step needs a nonempty support")
    g = A.T @ (b - A @ np.asarray(x, dtype=float))
    g_s = g[support]
    num = float(g_s @ g_s)
    Ag = A[:, support] @ g_s
    den = float(Ag @ Ag)
    if den <= _ADAPTIVE_GUARD * (num + 1.0):
        return 1.0
    return num / den


def _threshold_on_support(op, z, support, tau):
    x = np.zeros_like(z)
    if tau == 0:
        x[support] = z[support]
    else:
        zs = z[support]
        # with ties at the threshold a support entry can equal tau; h_tau sends it to 0
        live = np.abs(zs) > tau
        vals = np.zeros_like(zs)
        if np.any(live):
            vals[live] = _DEFINING[op.name](zs[live], tau, op)
        x[support] = vals
    return x


def ait_step(state, A, b, config, op):
    """One pass of gradient step, support/threshold selection and update."""
    op = get_operator(op)
    A, b = _check_dims(A, b, state.x)
    x = state.x
    if config.adaptive:
        support_prev = state.support if state.t > 0 else np.flatnonzero(x)
        if support_prev.size == 0:
            # empty starting point: use the k largest entries of the gradient
            support_prev, _ = select_support_and_tau(A.T @ (b - A @ x), config.k)
        s = adaptive_step(A, b, x, support_prev)
    else:
        s = config.step
    z = x - s * (A.T @ (A @ x - b))
    support, tau = select_support_and_tau(z, config.k)
    x_new = _threshold_on_support(op, z, support, tau)
    return IterState(x=x_new, z=z, tau=tau, support=support, t=state.t + 1, step_used=s)


def _record(state, A, b, truth):
    r = A @ state.x - b
    rec = TraceRecord(
        t=state.t,
        tau=state.tau,
        support=np.sort(state.support),
        step=state.step_used,
        residual_l2=float(np.linalg.norm(r)),
    )
    if truth is not None:
        e = state.x - truth
        rec.err_l1 = float(np.abs(e).sum())
        rec.err_l2 = float(np.linalg.norm(e))
        rec.err_linf = float(np.abs(e).max())
        rec.lemma3_ok = lemma3_diagnostic(state, truth, q=np.inf)
    return rec


def solve(A, b, config, op, x0=None):
    """Run AIT until the relative iterate change drops below ``stop_tol``.

    Returns a :class:`SolveResult` with the final iterate, the trace, and a
    status of ``"converged"``, ``"max_iter"``, or ``"diverged"`` (the iterate
    overflowed; the run stops at the first non-finite iterate).
    """
    op = get_operator(op)
    A, b = _check_dims(A, b)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise ValueError("A and b must be finite")
    truth = None
    if config.diagnostic_truth is not None:
        truth = np.asarray(config.diagnostic_truth, dtype=float)
        if truth.shape != (A.shape[1],):
            raise ValueError("diagnostic_truth has the wrong length")
    state = IterState.initial(A.shape[1], x0)
    trace = SolveTrace()
    status = "max_iter"
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(config.max_iter):
            new = ait_step(state, A, b, config, op)
            if config.record_trace:
                trace.records.append(_record(new, A, b, truth))
            # the norm overflows before any entry does
            if not np.isfinite(np.linalg.norm(new.x)):
                state = new
                status = "diverged"
                break
            change = np.linalg.norm(new.x - state.x)
            scale = max(1.0, float(np.linalg.norm(state.x)))
            state = new
            if change <= config.stop_tol * scale:
                status = "converged"
                break
    return SolveResult(x=state.x, trace=trace, status=status, iterations=state.t)


def normalize_columns(A_raw):
    """Scale columns to unit l2 norm; returns ``(A_hat, NormalizationMap)``."""
    A_raw = np.asarray(A_raw, dtype=float)
    norms = np.linalg.norm(A_raw, axis=0)
    if np.any(norms == 0):
        raise ValueError(f"zero column(s) at {np.flatnonzero(norms == 0).tolist()}")
    return A_raw / norms, NormalizationMap(lambda_diag=norms)


def denormalize_solution(x_hat, nmap):
    """Map a solution for ``A_hat`` back to the raw frame: ``x_hat / lambda``."""
    x_hat = np.asarray(x_hat, dtype=float)
    if x_hat.shape != nmap.lambda_diag.shape:
        raise ValueError("solution and normalization map lengths differ")
    return x_hat / nmap.lambda_diag


def lemma3_diagnostic(state, truth, q=2.0):
    """Check ``tau <= ||(z - truth)|_{I+}||_q`` on the k+1 largest entries of z.

    The support size k is read from ``state.support``.
    """
    z = np.asarray(state.z, dtype=float)
    k = len(state.support)
    order = np.argsort(-np.abs(z), kind="stable")
    idx = order[: k + 1]
    diff = z[idx] - np.asarray(truth, dtype=float)[idx]
    rhs = np.linalg.norm(diff, ord=q)
    return bool(state.tau <= rhs + 1e-12 * max(1.0, rhs))
