"""Feasibility and rate certificates for the closed-loop gain conditions.

Three checkers, one per stability result:

* ``certify_static`` ("t1"): static controller on a constrained problem;
  derives kp from the free parameter epsilon and reports the guaranteed
  exponential rate together with the weight rho of the quadratic
  Lyapunov function diag(rho I, I) on (x, lam).
* ``certify_dynamic_unconstrained`` ("t3"): dynamic controller without
  equality constraints; Lyapunov weights diag(k3/mu I, I) on (x, alpha).
* ``certify_dynamic_constrained`` ("t4"): dynamic controller with equality
  constraints; Lyapunov weights diag(k3/mu I, I, gamma I) on (x, alpha, lam).

Checkers never raise on bad gains: they return an infeasible certificate
with every violated condition named, so experiment gains that fall outside
the certified region still run with a warning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .problem import SystemState

__all__ = [
    "StabilityCertificate",
    "certify_static",
    "certify_dynamic_unconstrained",
    "certify_dynamic_constrained",
    "tune_static_epsilon",
    "lyapunov_value",
]

T4_EPS_GRID = 1000  # interior grid points of the epsilon scan


@dataclass
class StabilityCertificate:
    tag: str                       # "t1" | "t3" | "t4"
    feasible: bool
    rate: float                    # guaranteed exponential rate, 0 if infeasible
    lyapunov_weights: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    derived: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        def clean(v):
            return None if v is None or not np.isfinite(v) else float(v)

        return {
            "tag": self.tag,
            "feasible": self.feasible,
            "rate": clean(self.rate),
            "lyapunov_weights": {k: clean(v) for k, v in self.lyapunov_weights.items()},
            "violations": list(self.violations),
            **{k: clean(v) for k, v in self.derived.items()},
        }


def certify_static(m_f, L_f, mu, k_i, epsilon, a1) -> StabilityCertificate:
    """Certificate for the static controller.

    Requires epsilon in (0, 3 m_f / (4 (L_f + 1/mu) - 3 m_f)); the derived
    proportional gain is kp = epsilon k_i / (L_f + 1/mu) and the guaranteed
    rate is the smaller of the curvature term and kp a1.
    """
    violations = []
    if not m_f > 0:
        violations.append("m_f > 0")
    if not L_f >= m_f:
        violations.append("L_f >= m_f")
    if not mu > 0:
        violations.append("mu > 0")
    if not k_i > 0:
        violations.append("k_i > 0")
    if not a1 > 0:
        violations.append("a1 > 0")
    if not epsilon > 0:
        violations.append("epsilon > 0")

    derived = {}
    weights = {}
    rate = 0.0
    if m_f > 0 and L_f >= m_f and mu > 0:
        big = L_f + 1.0 / mu
        eps_max = 3.0 * m_f / (4.0 * big - 3.0 * m_f)
        derived["epsilon_max"] = eps_max
        if not epsilon < eps_max:
            violations.append("epsilon < 3*m_f/(4*(L_f + 1/mu) - 3*m_f)")
        k_p = epsilon * k_i / big
        derived["k_p"] = k_p
        if not violations:
            curvature = (1.5 * m_f * (1.0 + epsilon) / (1.0 - epsilon)
                         - 2.0 * epsilon / (1.0 - epsilon) * big)
            rate = min(curvature, k_p * a1)
            weights["rho"] = k_i - k_p * big
    feasible = not violations and rate > 0
    if not feasible:
        rate = 0.0
        weights = {}
    return StabilityCertificate("t1", feasible, rate, weights, violations, derived)


def tune_static_epsilon(m_f, L_f, mu, k_i, a1, n_grid: int = 1000):
    """Scan epsilon over its admissible interval and return the certificate
    with the best guaranteed rate (the rate is not monotone in epsilon)."""
    big = L_f + 1.0 / mu
    eps_max = 3.0 * m_f / (4.0 * big - 3.0 * m_f)
    best = None
    for j in range(1, n_grid + 1):
        eps = eps_max * j / (n_grid + 1)
        cert = certify_static(m_f, L_f, mu, k_i, eps, a1)
        if cert.feasible and (best is None or cert.rate > best[1].rate):
            best = (eps, cert)
    if best is None:
        raise ValueError("no feasible epsilon found; check the constants")
    return best


def certify_dynamic_unconstrained(k1, k2, k3, mu, m_f, L_f) -> StabilityCertificate:
    """Certificate for the dynamic controller on an unconstrained problem.

    Feasible when k1, k3 > 0 and k2 lies strictly below the critical value
    -k3 - (k1^2 mu / (2 k3)) (L_f^2 / m_f); the rate is
    min(m_f, -2 (k2 - k2_crit)).
    """
    violations = []
    if not k1 > 0:
        violations.append("k1 > 0")
    if not k3 > 0:
        violations.append("k3 > 0")
    if not mu > 0:
        violations.append("mu > 0")
    if not m_f > 0:
        violations.append("m_f > 0")
    if not L_f >= m_f:
        violations.append("L_f >= m_f")

    derived = {}
    weights = {}
    rate = 0.0
    if k3 != 0 and m_f > 0 and mu > 0:
        k2_crit = -k3 - (k1 ** 2 * mu / (2.0 * k3)) * (L_f ** 2 / m_f)
        derived["k2_crit"] = k2_crit
        if not k2 < k2_crit:
            violations.append("k2 < k2_crit")
        if not violations:
            rate = min(m_f, -2.0 * (k2 - k2_crit))
            weights["k3_over_mu"] = k3 / mu
    feasible = not violations and rate > 0
    if not feasible:
        rate = 0.0
        weights = {}
    return StabilityCertificate("t3", feasible, rate, weights, violations, derived)


def certify_dynamic_constrained(k1, k2, k3, mu, m_f, L_f, a1, k_i, k_p) -> StabilityCertificate:
    """Certificate for the dynamic controller on a constrained problem.

    The underlying analysis couples the Lyapunov weight gamma to the gains
    through k3/mu = gamma k_i and mu gamma k_i = k1, which jointly force
    k1 = k3; gamma is derived as k1 / (mu k_i).  The free parameter epsilon
    is scanned over (0, -k2 (1/mu + L_f)^2) on a fixed grid and the value
    maximizing the curvature rate term is kept.
    """
    violations = []
    for name, val in (("k1", k1), ("k3", k3), ("k_i", k_i), ("k_p", k_p),
                      ("mu", mu), ("m_f", m_f), ("a1", a1)):
        if not val > 0:
            violations.append(f"{name} > 0")
    if not L_f >= m_f:
        violations.append("L_f >= m_f")
    if abs(k1 - k3) > 1e-12 * max(1.0, abs(k1), abs(k3)):
        violations.append("proof coupling k1 = k3")

    derived = {}
    weights = {}
    rate = 0.0
    if mu > 0 and k_i > 0:
        gamma = k1 / (mu * k_i)
        derived["gamma"] = gamma
        if k3 != 0 and m_f > 0:
            k2_crit = -k3 - (k1 ** 2 * mu / (2.0 * k3)) * (L_f ** 2 / m_f)
            derived["k2_crit"] = k2_crit
            if not k2 < k2_crit:
                violations.append("k2 < k2_crit")
            if gamma > 0 and k_p > 0:
                coupling_bound = -2.0 * k1 ** 2 / (gamma * k_p) - 2.0 * k_p * gamma
                derived["k2_coupling_bound"] = coupling_bound
                if not k2 < coupling_bound:
                    violations.append("k2 < -2*k1^2/(gamma*k_p) - 2*k_p*gamma")
        if not violations:
            big2 = (1.0 / mu + L_f) ** 2
            eps_max = -k2 * big2
            delta_bound = 2.0 * m_f * k1 / mu + k1 ** 2 / (mu * k2)
            best_eps = None
            best_term = -np.inf
            for j in range(1, T4_EPS_GRID + 1):
                eps = eps_max * j / (T4_EPS_GRID + 1)
                delta = eps - eps ** 2 / (k2 * big2)
                if not delta < delta_bound:
                    continue
                term = 2.0 * m_f + k1 / k2 - mu * delta / k1
                if term > best_term:
                    best_term = term
                    best_eps = eps
            if best_eps is None:
                violations.append("delta < 2*m_f*k1/mu + k1^2/(mu*k2)")
            elif best_term <= 0:
                violations.append("2*m_f + k1/k2 - mu*delta/k1 > 0")
            else:
                derived["epsilon"] = best_eps
                derived["delta"] = best_eps - best_eps ** 2 / (k2 * big2)
                rate = min(-2.0 * (k2 - derived["k2_crit"]), k_p * a1,
                           -k2 / 2.0, best_term)
                weights["k3_over_mu"] = k3 / mu
                weights["gamma"] = gamma
    feasible = not violations and rate > 0
    if not feasible:
        rate = 0.0
        weights = {}
    return StabilityCertificate("t4", feasible, rate, weights, violations, derived)


def lyapunov_value(cert: StabilityCertificate, s: SystemState,
                   s_star: SystemState) -> float:
    """Weighted squared distance (s - s*)^T P (s - s*) with the certificate's
    block weights.  Only meaningful for a feasible certificate."""
    if not cert.feasible:
        raise ValueError("cannot evaluate the Lyapunov function of an "
                         "infeasible certificate")

    def sq(a, b):
        if a is None and b is None:
            return 0.0
        if a is None or b is None or a.size != b.size:
            raise ValueError("states have inconsistent blocks")
        d = a - b
        return float(np.dot(d, d))

    if cert.tag == "t1":
        return cert.lyapunov_weights["rho"] * sq(s.x, s_star.x) + sq(s.lam, s_star.lam)
    if cert.tag == "t3":
        return (cert.lyapunov_weights["k3_over_mu"] * sq(s.x, s_star.x)
                + sq(s.alpha, s_star.alpha))
    if cert.tag == "t4":
        return (cert.lyapunov_weights["k3_over_mu"] * sq(s.x, s_star.x)
                + sq(s.alpha, s_star.alpha)
                + cert.lyapunov_weights["gamma"] * sq(s.lam, s_star.lam))
    raise ValueError(f"unknown certificate tag {cert.tag!r}")
