"""Shared instance builders with analytically known equilibria.

The closed-loop systems contract toward their own equilibrium; these
builders place that equilibrium in closed form so Lyapunov envelopes can be
checked against an exactly known target.
"""

import numpy as np

from proxcmo.problem import AffineConstraint, CompositeProblem, SpectralConstants
from proxcmo.prox import L1Norm


def _spd_matrix(rng, n, lo, hi):
    """Symmetric matrix with known extreme eigenvalues lo and hi."""
    eigs = np.concatenate([[lo, hi], rng.uniform(lo, hi, size=n - 2)]) if n > 2 \
        else np.array([lo, hi])
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return (Q * eigs) @ Q.T, lo, hi


def quadratic_l1_problem(H, q, rho, constraint=None, constants=None):
    H = np.asarray(H, dtype=float)
    q = np.asarray(q, dtype=float)
    n = q.size
    f_value = lambda x: 0.5 * float(x @ H @ x) + float(q @ x)
    f_grad = lambda x: H @ x + q
    if constraint is None:
        return CompositeProblem(n, f_value, f_grad, L1Norm(rho),
                                constants=constants)
    return CompositeProblem.with_affine_constraint(
        n, f_value, f_grad, L1Norm(rho), constraint, constants=constants)


def make_static_instance(seed, n=6, m=2, rho=1.0, m_f_min=0.5, L_f_max=3.0):
    """Constrained quadratic + l1 instance whose first-order point (x*, lam*=0)
    is also the equilibrium of the static closed loop.

    Choosing lam* = 0 makes the prox balance of the static loop coincide with
    the first-order condition, so the converged point is a true KKT point.
    Returns (problem, x_star); the equilibrium multiplier is the zero vector.
    """
    rng = np.random.default_rng(seed)
    H, m_f, L_f = _spd_matrix(rng, n, m_f_min, L_f_max)
    x_star = np.where(rng.random(n) < 0.4, 0.0, rng.normal(size=n))
    s = np.where(x_star != 0, rho * np.sign(x_star),
                 rng.uniform(-0.9 * rho, 0.9 * rho, size=n))
    C = rng.normal(size=(m, n))
    q = -H @ x_star - s
    constraint = AffineConstraint(C, -C @ x_star)
    w = np.linalg.eigvalsh(C @ C.T)
    constants = SpectralConstants(m_f=m_f, L_f=L_f,
                                  a1=float(w[0]), a2=float(w[-1]))
    problem = quadratic_l1_problem(H, q, rho, constraint, constants)
    return problem, x_star


def make_dynamic_unconstrained_instance(seed, gains, n=6, rho=1.0,
                                        m_f_min=0.5, L_f_max=3.0):
    """Unconstrained quadratic + l1 instance with the closed-form equilibrium
    of the dynamic controller at the given gains.

    The equilibrium satisfies grad f(x) = -s and alpha = c s with
    c = (k1 - k3)/k2 and s the envelope gradient there; per component either
    the shifted point keeps g active (s_i at the subdifferential boundary) or
    sits exactly on the kink.  Returns (problem, x_bar, alpha_bar).
    """
    rng = np.random.default_rng(seed)
    H, m_f, L_f = _spd_matrix(rng, n, m_f_min, L_f_max)
    mu = gains.mu
    c = (gains.k1 - gains.k3) / gains.k2
    shift = mu * (c - 1.0)
    x_bar = np.empty(n)
    s = np.empty(n)
    active = rng.random(n) < 0.5
    for i in range(n):
        if active[i]:
            sign = -1.0 if rng.random() < 0.5 else 1.0
            s[i] = rho * sign
            x_bar[i] = sign * (max(0.0, -shift * rho) + rng.uniform(0.5, 1.5))
        else:
            s[i] = rng.uniform(-0.9, 0.9) * rho
            x_bar[i] = -shift * s[i]
    q = -H @ x_bar - s
    constants = SpectralConstants(m_f=m_f, L_f=L_f)
    problem = quadratic_l1_problem(H, q, rho, constants=constants)
    return problem, x_bar, c * s
