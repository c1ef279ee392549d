"""Thresholding operators h_tau built from odd, monotone defining functions.

Every operator is parameterized by its threshold ``tau`` directly: the jump
point of h_tau sits exactly at ``tau``, so the regularization parameter of
the half and 2/3 operators is derived from ``tau`` rather than supplied.
"""
from dataclasses import dataclass

import numpy as np

__all__ = [
    "OPERATOR_NAMES",
    "ThresholdingOperator",
    "get_operator",
    "apply_defining",
    "apply_threshold",
    "apply_vector",
    "estimate_boundedness",
]

OPERATOR_NAMES = ("hard", "soft", "half", "two_thirds", "scad")

# (c1, c2) boundedness constants: u - c1*tau <= f_tau(u) <= u - c2*tau
_BOUNDS = {
    "hard": (0.0, 0.0),
    "half": (1.0 / 3.0, 0.0),
    "two_thirds": (0.5, 0.0),
    "soft": (1.0, 1.0),
    "scad": (1.0, 0.0),
}


@dataclass(frozen=True)
class ThresholdingOperator:
    name: str
    scad_a: float = 3.7

    def __post_init__(self):
        if self.name not in _BOUNDS:
            raise ValueError(
                f"unknown operator {self.name!r}; expected one of {OPERATOR_NAMES}")
        if self.name == "scad" and not self.scad_a > 2:
            raise ValueError(f"scad_a must exceed 2, got {self.scad_a}")

    @property
    def c1(self):
        return _BOUNDS[self.name][0]

    @property
    def c2(self):
        return _BOUNDS[self.name][1]


def get_operator(op, scad_a=3.7):
    """Accept an operator instance or its name."""
    if isinstance(op, ThresholdingOperator):
        return op
    return ThresholdingOperator(str(op), scad_a=scad_a)


def _f_hard(u, tau, op):
    return u.copy()


def _f_soft(u, tau, op):
    return u - np.sign(u) * tau


def _f_scad(u, tau, op):
    a = op.scad_a
    au = np.abs(u)
    s = np.sign(u)
    return np.where(
        au <= 2 * tau,
        s * (au - tau),
        np.where(au <= a * tau, ((a - 1) * u - s * a * tau) / (a - 2), u),
    )


def _f_half(u, tau, op):
    # Cosine form of the l_{1/2} thresholding rule for
    # min (x-u)^2 + lam*|x|^{1/2}, whose jump point is (54^{1/3}/4) lam^{2/3}.
    lam = (4.0 * tau / 54.0 ** (1.0 / 3.0)) ** 1.5
    arg = (lam / 8.0) * (np.abs(u) / 3.0) ** -1.5
    phi = np.arccos(np.clip(arg, -1.0, 1.0))
    return (2.0 / 3.0) * u * (1.0 + np.cos(2.0 * np.pi / 3.0 - (2.0 / 3.0) * phi))


def _f_two_thirds(u, tau, op):
    # Root form of the l_{2/3} thresholding rule for
    # min (x-u)^2 + lam*|x|^{2/3}, whose jump point is (2/3)(3 lam^3)^{1/4}.
    lam = ((1.5 * tau) ** 4 / 3.0) ** (1.0 / 3.0)
    au = np.abs(u)
    psi = np.arccosh(np.maximum(27.0 * au**2 / (16.0 * lam**1.5), 1.0))
    phi = (2.0 / np.sqrt(3.0)) * lam**0.25 * np.sqrt(np.cosh(psi / 3.0))
    inner = np.maximum(2.0 * au / phi - phi**2, 0.0)
    return np.sign(u) * ((phi + np.sqrt(inner)) / 2.0) ** 3


_DEFINING = {
    "hard": _f_hard,
    "soft": _f_soft,
    "scad": _f_scad,
    "half": _f_half,
    "two_thirds": _f_two_thirds,
}


def apply_defining(op, u, tau):
    """Evaluate the defining function f_tau(u) for ``|u| > tau > 0``.

    Works on scalars and arrays; raises ``ValueError`` outside the domain.
    """
    op = get_operator(op)
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    arr = np.asarray(u, dtype=float)
    if np.any(np.abs(arr) <= tau):
        raise ValueError("defining function requires |u| > tau")
    out = _DEFINING[op.name](arr, float(tau), op)
    return float(out) if out.ndim == 0 else out


def apply_vector(op, z, tau):
    """Componentwise h_tau: f_tau above the threshold, zero otherwise.

    ``tau == 0`` is treated as the identity map.
    """
    op = get_operator(op)
    z = np.asarray(z, dtype=float)
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    if tau == 0:
        return z.copy()
    out = np.zeros_like(z)
    mask = np.abs(z) > tau
    if np.any(mask):
        out[mask] = _DEFINING[op.name](z[mask], float(tau), op)
    return out


def apply_threshold(op, u, tau):
    """Scalar h_tau(u)."""
    return float(apply_vector(op, np.array([u], dtype=float), tau)[0])


def estimate_boundedness(op, u_grid, tau_grid):
    """Brute-force (c1, c2) from the shrinkage ``(u - f_tau(u)) / tau``.

    Returns the max and min of the shrinkage ratio over all grid pairs
    ``u > tau``; this is the empirical counterpart of the declared constants.
    ``u_grid`` is either shared by every tau or a 2-D array with one row per
    entry of ``tau_grid``.
    """
    op = get_operator(op)
    taus = np.asarray(tau_grid, dtype=float).ravel()
    u_all = np.asarray(u_grid, dtype=float)
    if u_all.size == 0 or taus.size == 0:
        raise ValueError("grids must be nonempty")
    if np.any(taus <= 0):
        raise ValueError("tau grid must be positive")
    # a 2-D u_grid pairs row i with tau_grid[i]
    per_tau = u_all.ndim == 2 and u_all.shape[0] == taus.size
    ratios = []
    for i, tau in enumerate(taus):
        u = u_all[i] if per_tau else u_all.ravel()
        if np.any(u <= tau):
            raise ValueError(f"every grid point must satisfy u > tau (tau={tau})")
        ratios.append((u - _DEFINING[op.name](u, float(tau), op)) / tau)
    ratios = np.concatenate(ratios)
    return float(ratios.max()), float(ratios.min())
