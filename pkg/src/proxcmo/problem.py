"""Problem containers, the smoothed saddle function, and residual measures.

A :class:`CompositeProblem` bundles the oracles of

    minimize  f(x) + g(x)   subject to  h(x) = 0

where f is smooth, g has a cheap prox, and h is smooth (affine whenever a
certificate is wanted).  Everything is immutable after construction and all
operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .prox import MoreauEnvelope

__all__ = [
    "SpectralConstants",
    "AffineConstraint",
    "SystemState",
    "CompositeProblem",
    "aug_lagrangian",
    "kkt_residual",
    "saddle_residual",
    "spectral_constants",
]

_RANK_TOL = 1e-10


@dataclass(frozen=True)
class SpectralConstants:
    """Curvature and constraint-conditioning constants used by certificates.

    m_f/L_f bound the Hessian spectrum of f, a1/a2 the spectrum of C C^T for
    an affine constraint h(x) = Cx + b.  Any entry may be None when unknown;
    the gain checkers refuse to certify without the ones they need.
    """

    m_f: float | None = None
    L_f: float | None = None
    a1: float | None = None
    a2: float | None = None

    def __post_init__(self):
        if self.m_f is not None and self.L_f is not None and self.m_f > self.L_f:
            raise ValueError("need m_f <= L_f")
        if self.a1 is not None and self.a2 is not None and self.a1 > self.a2:
            raise ValueError("need a1 <= a2")


class AffineConstraint:
    """h(x) = C x + b with C full row rank."""

    def __init__(self, C, b):
        C = np.atleast_2d(np.asarray(C, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if C.shape[0] != b.size:
            raise ValueError(f"C has {C.shape[0]} rows but b has {b.size} entries")
        if C.shape[0] > C.shape[1]:
            raise ValueError("more constraint rows than variables")
        smin = np.linalg.svd(C, compute_uv=False)[-1]
        if smin <= _RANK_TOL:
            raise ValueError(f"constraint matrix is row rank deficient (sigma_min={smin:.2e})")
        self.C = C
        self.b = b

    @property
    def dim(self) -> int:
        return self.C.shape[0]

    def value(self, x):
        return self.C @ x + self.b

    def jacobian(self, x):
        return self.C


@dataclass
class SystemState:
    """Stacked solver state: primal x, optional dual alpha, optional dual lam."""

    x: np.ndarray
    alpha: np.ndarray | None = None
    lam: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if self.alpha is not None:
            self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        if self.lam is not None:
            self.lam = np.asarray(self.lam, dtype=float).reshape(-1)

    def copy(self) -> "SystemState":
        return SystemState(
            self.x.copy(),
            None if self.alpha is None else self.alpha.copy(),
            None if self.lam is None else self.lam.copy(),
        )


def _empty_h(x):
    return np.zeros(0)


class CompositeProblem:
    """Oracle bundle for an equality-constrained composite problem."""

    def __init__(self, dim_x, f_value, f_grad, g, h_value=None, h_jacobian=None,
                 dim_h=0, constants: SpectralConstants | None = None):
        self.n = int(dim_x)
        self.m = int(dim_h)
        if self.n <= 0 or self.m < 0:
            raise ValueError("need dim_x > 0 and dim_h >= 0")
        self.f_value = f_value
        self.f_grad = f_grad
        self.g = g
        if self.m == 0:
            self._h_value = _empty_h
            self._h_jac = lambda x, n=self.n: np.zeros((0, n))
        else:
            if h_value is None or h_jacobian is None:
                raise ValueError("constrained problem needs h_value and h_jacobian")
            self._h_value = h_value
            self._h_jac = h_jacobian
        self.constants = constants or SpectralConstants()

    @classmethod
    def with_affine_constraint(cls, dim_x, f_value, f_grad, g,
                               constraint: AffineConstraint,
                               constants: SpectralConstants | None = None):
        return cls(dim_x, f_value, f_grad, g,
                   h_value=constraint.value, h_jacobian=constraint.jacobian,
                   dim_h=constraint.dim, constants=constants)

    def h_value(self, x):
        return self._h_value(x)

    def h_jacobian(self, x):
        return self._h_jac(x)

    def objective(self, x) -> float:
        return float(self.f_value(x)) + float(self.g.g_value(x))

    def check_state(self, s: SystemState, need_alpha=False, need_lam=False):
        if s.x.size != self.n:
            raise ValueError(f"x has size {s.x.size}, expected {self.n}")
        if need_alpha:
            if s.alpha is None or s.alpha.size != self.n:
                raise ValueError("state is missing a dual alpha of the primal size")
        if need_lam and self.m > 0:
            if s.lam is None or s.lam.size != self.m:
                raise ValueError(f"state is missing a multiplier of size {self.m}")


def aug_lagrangian(p: CompositeProblem, s: SystemState, mu: float) -> float:
    """Smoothed saddle function f(x) + M_mu(x + mu a) - mu/2 |a|^2 + lam.h(x)."""
    p.check_state(s, need_alpha=True, need_lam=True)
    env = MoreauEnvelope(p.g, mu)
    val = float(p.f_value(s.x)) + env.value(s.x + mu * s.alpha)
    val -= 0.5 * mu * float(np.dot(s.alpha, s.alpha))
    if p.m > 0:
        val += float(np.dot(s.lam, p.h_value(s.x)))
    return val


def kkt_residual(p: CompositeProblem, s: SystemState, mu: float):
    """Stationarity and feasibility residuals at a state.

    Stationarity is measured by the prox fixed-point gap
    ``|x - prox_{mu g}(x - mu (grad f + J_h^T lam))|``, which is zero exactly
    at first-order points and well defined for any g with a prox.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    p.check_state(s, need_lam=True)
    grad = np.asarray(p.f_grad(s.x), dtype=float)
    if p.m > 0:
        grad = grad + p.h_jacobian(s.x).T @ s.lam
    r_stat = float(np.linalg.norm(s.x - p.g.eval(s.x - mu * grad, mu)))
    r_feas = float(np.linalg.norm(p.h_value(s.x))) if p.m else 0.0
    return r_stat, r_feas


def saddle_residual(p: CompositeProblem, s: SystemState, mu: float) -> float:
    """Norm of the stacked saddle-point optimality system of the smoothed
    Lagrangian: gradient in x, gradient in alpha, and feasibility."""
    p.check_state(s, need_alpha=True, need_lam=True)
    env = MoreauEnvelope(p.g, mu)
    mgrad = env.gradient(s.x + mu * s.alpha)
    g1 = np.asarray(p.f_grad(s.x), dtype=float) + mgrad
    if p.m > 0:
        g1 = g1 + p.h_jacobian(s.x).T @ s.lam
    g2 = mu * mgrad - mu * s.alpha
    g3 = p.h_value(s.x)
    return float(np.sqrt(np.dot(g1, g1) + np.dot(g2, g2) + np.dot(g3, g3)))


def spectral_constants(obj, require_full_rank: bool = False):
    """Extreme eigenvalues of A^T A (for a data matrix) or C C^T (constraint).

    Returns ``(lo, hi)``; for a quadratic fit term f = |Ax - b|^2 / 2 these
    are (m_f, L_f), for an affine constraint they are (a1, a2).
    """
    if isinstance(obj, AffineConstraint):
        mat = obj.C @ obj.C.T
        require_full_rank = True
    else:
        A = np.atleast_2d(np.asarray(obj, dtype=float))
        if A.size == 0:
            raise ValueError("matrix is empty")
        mat = A.T @ A
    mat = 0.5 * (mat + mat.T)
    w = np.linalg.eigvalsh(mat)
    lo, hi = float(max(w[0], 0.0)), float(w[-1])
    if require_full_rank and lo <= _RANK_TOL * max(hi, 1.0):
        raise ValueError(f"matrix is rank deficient (smallest eigenvalue {lo:.2e})")
    return lo, hi
