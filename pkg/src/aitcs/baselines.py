"""Orthogonal matching pursuit, used as a sanity baseline next to AIT."""
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = ["OmpConfig", "OmpResult", "RankDeficientWarning", "omp_solve"]


class RankDeficientWarning(UserWarning):
    """The least-squares fit on the selected support was rank deficient."""


@dataclass(frozen=True)
class OmpConfig:
    k_max: int
    residual_tol: float = 0.0

    def __post_init__(self):
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise ValueError(f"k_max must be a positive integer, got {self.k_max}")
        if self.residual_tol < 0:
            raise ValueError("residual_tol must be nonnegative")


@dataclass
class OmpResult:
    x: np.ndarray
    support: list
    residual_norms: list
    rank_deficient: bool = False

    def __iter__(self):
        return iter((self.x, self.support))


def omp_solve(A, b, config):
    """Greedy support growth with a least-squares refit after every pick.

    Stops after ``k_max`` picks or once ``||r|| <= residual_tol``. A
    rank-deficient refit falls back to the minimum-norm solution and is
    flagged on the result (and with a :class:`RankDeficientWarning`).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if b.shape != (m,):
        raise ValueError(f"b has shape {b.shape}, expected ({m},)")
    col_norms = np.linalg.norm(A, axis=0)
    if np.any(col_norms == 0):
        raise ValueError("A has a zero column")

    support = []
    coef = np.zeros(0)
    r = b.copy()
    history = [float(np.linalg.norm(r))]
    deficient = False
    for _ in range(min(config.k_max, n)):
        if history[-1] <= config.residual_tol:
            break
        corr = np.abs(A.T @ r) / col_norms
        corr[support] = -np.inf
        j = int(np.argmax(corr))
        support.append(j)
        As = A[:, support]
        coef, _, rank, _ = np.linalg.lstsq(As, b, rcond=None)
        if rank < len(support):
            deficient = True
        r = b - As @ coef
        history.append(float(np.linalg.norm(r)))
    if deficient:
        warnings.warn("rank-deficient support in OMP; used the minimum-norm fit",
                      RankDeficientWarning, stacklevel=2)
    x = np.zeros(n)
    x[support] = coef
    return OmpResult(x=x, support=support, residual_norms=history, rank_deficient=deficient)
