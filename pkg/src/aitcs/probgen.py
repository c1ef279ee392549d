"""Seeded generation of compressed-sensing instances and recovery metrics."""
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

__all__ = [
    "ProblemSpec",
    "Problem",
    "make_rng",
    "generate",
    "relative_error",
    "is_success",
    "SUCCESS_TOL",
]

SUCCESS_TOL = 1e-3


def make_rng(master_seed, *key):
    """Philox generator for ``master_seed`` and an integer spawn key.

    Distinct keys give independent streams; the same key always gives the
    same stream on every platform.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ProblemSpec:
    m: int
    n: int
    k_star: int
    matrix_variance: Optional[float] = None  # None means 1/m
    signal_dist: str = "gaussian"
    snr_db: Optional[float] = None  # None means noiseless
    seed: int = 0
    # "measurement": ||A x*|| / ||eps|| hits the SNR exactly;
    # "entry": eps_i ~ N(0, sigma^2) with sigma = 10^(-SNR/20) against unit-variance nonzeros
    noise_reference: str = "measurement"

    def __post_init__(self):
        for name in ("m", "n", "k_star"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v}")
        if self.k_star > min(self.m, self.n):
            raise ValueError("k_star must not exceed min(m, n)")
        if self.matrix_variance is not None and not self.matrix_variance > 0:
            raise ValueError("matrix_variance must be positive")
        if self.signal_dist not in ("gaussian", "binary"):
            raise ValueError(f"signal_dist must be 'gaussian' or 'binary', got {self.signal_dist!r}")
        if self.noise_reference not in ("measurement", "entry"):
            raise ValueError(f"noise_reference must be 'measurement' or 'entry', got {self.noise_reference!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def variance(self):
        return 1.0 / self.m if self.matrix_variance is None else float(self.matrix_variance)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class Problem:
    A: np.ndarray
    b: np.ndarray
    x_star: np.ndarray
    epsilon: np.ndarray
    I_star: np.ndarray
    spec: Optional[ProblemSpec] = None


def generate(spec, *key):
    """Draw ``A``, a k_star-sparse ``x_star`` and noise, with ``b = A x_star + eps``.

    Extra ``key`` integers select a sub-stream of ``spec.seed`` (one per trial).
    """
    rng = make_rng(spec.seed, *key)
    A = rng.standard_normal((spec.m, spec.n)) * np.sqrt(spec.variance)
    support = np.sort(rng.choice(spec.n, size=spec.k_star, replace=False))
    x_star = np.zeros(spec.n)
    if spec.signal_dist == "gaussian":
        vals = rng.standard_normal(spec.k_star)
        # a draw of exactly 0 would break the sparsity count
        vals[vals == 0] = 1.0
    else:
        vals = rng.choice(np.array([-1.0, 1.0]), size=spec.k_star)
    x_star[support] = vals
    clean = A @ x_star
    eps = np.zeros(spec.m)
    if spec.snr_db is not None:
        w = rng.standard_normal(spec.m)
        if spec.noise_reference == "measurement":
            target = np.linalg.norm(clean) / 10.0 ** (spec.snr_db / 20.0)
            eps = w * (target / np.linalg.norm(w))
        else:
            eps = w * 10.0 ** (-spec.snr_db / 20.0)
    b = clean + eps
    return Problem(A=A, b=b, x_star=x_star, epsilon=eps, I_star=support, spec=spec)


def relative_error(x_rec, x_star, norm="l2"):
    """``||x_rec - x_star|| / ||x_star||`` in the l2 or l-infinity norm."""
    ords = {"l2": 2, "linf": np.inf, "l1": 1}
    if norm not in ords:
        raise ValueError(f"norm must be one of {sorted(ords)}")
    x_star = np.asarray(x_star, dtype=float)
    denom = np.linalg.norm(x_star, ord=ords[norm])
    if denom == 0:
        raise ValueError("ground truth is the zero vector")
    return float(np.linalg.norm(np.asarray(x_rec, dtype=float) - x_star, ord=ords[norm]) / denom)


def is_success(x_rec, x_star, tol=SUCCESS_TOL):
    """Recovery succeeds when the relative l-infinity error is at most ``tol``."""
    return relative_error(x_rec, x_star, "linf") <= tol
