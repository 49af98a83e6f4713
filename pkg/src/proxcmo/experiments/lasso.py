"""Unbiased sparse recovery benchmark.

The instance is an l1-regularized least-squares fit whose equality
constraint A^T (Ax - b) = 0 pins the least-squares optimality condition, so
the recovered solution keeps the sparsity benefits of the regularizer
without its shrinkage bias.  With noiseless data the constraint set is the
single point x_true, which makes exact support recovery checkable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dynamics import GainSet, Variant, simulate, zero_state
from ..integrate import IntegratorConfig, NonFinite, StepUnderflow
from ..problem import AffineConstraint, CompositeProblem, SpectralConstants, spectral_constants
from ..prox import L1Norm

__all__ = [
    "LassoInstance",
    "build_lasso",
    "default_gains",
    "support_error",
    "count_nonzeros",
    "run_lasso_suite",
]

NONZERO_THRESHOLD = 1e-4  # |x_i| above this counts as support

METHODS = (Variant.DYNAMIC_PROXCMO, Variant.STATIC_PROXCMO,
           Variant.PI_PGD, Variant.GRAD_FLOW)


@dataclass(frozen=True)
class LassoInstance:
    A: np.ndarray
    b: np.ndarray
    rho: float
    x_true: np.ndarray
    support_true: np.ndarray  # boolean mask of length n

    @property
    def n(self) -> int:
        return self.A.shape[1]


def build_lasso(n: int = 40, m: int = 44, s: int = 8, rho: float = 1.0,
                seed: int = 0):
    """Draw a random instance and its oracle bundle.

    Sensing matrix entries are N(0, 1/m); the s-sparse ground truth has
    nonzero magnitudes uniform in [0.5, 1] with random signs, and b is the
    noiseless response.  Deterministic for a fixed seed.
    """
    if not (m >= n >= s >= 1):
        raise ValueError("need m >= n >= s >= 1")
    if rho <= 0:
        raise ValueError("rho must be positive")
    rng = np.random.default_rng(seed)
    support = rng.choice(n, size=s, replace=False)
    x_true = np.zeros(n)
    x_true[support] = rng.choice([-1.0, 1.0], size=s) * rng.uniform(0.5, 1.0, size=s)
    A = rng.normal(0.0, np.sqrt(1.0 / m), size=(m, n))
    gram = A.T @ A
    m_f, L_f = spectral_constants(A)
    if m_f <= 1e-10:
        raise ValueError("A^T A is numerically rank deficient; use another seed")
    b = A @ x_true
    Atb = A.T @ b

    constraint = AffineConstraint(gram, -Atb)
    a1, a2 = spectral_constants(constraint)

    def f_value(x):
        r = A @ x - b
        return 0.5 * float(np.dot(r, r))

    def f_grad(x):
        return gram @ x - Atb

    problem = CompositeProblem.with_affine_constraint(
        n, f_value, f_grad, L1Norm(rho), constraint,
        constants=SpectralConstants(m_f=m_f, L_f=L_f, a1=a1, a2=a2))
    mask = np.zeros(n, dtype=bool)
    mask[support] = True
    return LassoInstance(A, b, rho, x_true, mask), problem


def default_gains(problem: CompositeProblem) -> dict:
    """Per-method gain sets for this benchmark; overridable per run."""
    L_f = problem.constants.L_f or 1.0
    return {
        Variant.DYNAMIC_PROXCMO: GainSet(mu=0.5, k1=-10.0, k2=-1.0, k3=-9.0,
                                         ki=0.8, kp=1.0),
        Variant.STATIC_PROXCMO: GainSet(mu=0.5, ki=0.8, kp=1.0),
        Variant.PI_PGD: GainSet(gamma=1.0 / L_f, kp=20.0, ki=20.0),
        Variant.GRAD_FLOW: GainSet(),
    }


def count_nonzeros(x, threshold: float = NONZERO_THRESHOLD) -> int:
    return int(np.count_nonzero(np.abs(x) > threshold))


def support_error(x, x_true, threshold: float = NONZERO_THRESHOLD) -> int:
    """Number of entries whose nonzero indicator disagrees with the truth."""
    return int(np.count_nonzero((np.abs(x) > threshold)
                                != (np.abs(x_true) > threshold)))


def _paths(instance: LassoInstance, traj):
    X = traj.y[:, :instance.n]
    residual = np.linalg.norm(X @ instance.A.T - instance.b, axis=1)
    l1 = np.sum(np.abs(X), axis=1)
    l0 = np.array([count_nonzeros(x) for x in X])
    serr = np.array([support_error(x, instance.x_true) for x in X])
    return residual, l1, l0, serr


def run_lasso_suite(instance: LassoInstance, problem: CompositeProblem,
                    methods=None, gains: dict | None = None,
                    cfg: IntegratorConfig | None = None) -> dict:
    """Run every requested method on one instance.

    Integrator failures are recorded per method rather than raised, so a
    diverging comparator does not abort the suite.  Each report carries the
    per-sample residual, l1, l0 and support-error paths plus final values.
    """
    methods = list(methods or METHODS)
    all_gains = default_gains(problem)
    if gains:
        all_gains.update(gains)
    cfg = cfg or IntegratorConfig(t_end=1000.0, max_step=0.5, stop_residual=1e-8)

    reports = {}
    for method in methods:
        report = {"method": method.value, "status": "ok", "error": None}
        try:
            traj = simulate(method, problem, all_gains[method],
                            s0=zero_state(method, problem), cfg=cfg)
        except (StepUnderflow, NonFinite) as exc:
            report["status"] = "integrator-failure"
            report["error"] = f"{type(exc).__name__}: {exc}"
            reports[method.value] = report
            continue
        residual, l1, l0, serr = _paths(instance, traj)
        x_final = traj.y_final[:instance.n]
        report.update(
            t=traj.t,
            residual=residual,
            l1=l1,
            l0=l0,
            support_error=serr,
            trajectory=traj,
            x_final=x_final,
            final_residual=float(residual[-1]),
            final_l1=float(l1[-1]),
            final_l0=int(l0[-1]),
            final_support_error=int(serr[-1]),
            final_res_stat=float(traj.metrics["res_stat"][-1]),
            final_res_feas=float(traj.metrics["res_feas"][-1]),
            l1_overshoot=float(np.max(l1) / l1[-1] - 1.0) if l1[-1] > 0 else 0.0,
            n_steps=traj.n_steps,
            t_final=traj.t_final,
        )
        reports[method.value] = report
    return reports
