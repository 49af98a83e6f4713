"""Closed-loop vector fields for the Prox-CMO family and baseline flows.

Every variant is an autonomous ODE on a stacked state (x, alpha, lam) whose
equilibria relate to first-order points of the underlying composite problem.
The multiplier law is proportional-integral in the constraint output; its
rate depends on x' and is inlined symbolically so every system is an
explicit ODE rather than a DAE.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .integrate import IntegratorConfig, Trajectory, integrate_adaptive
from .problem import CompositeProblem, SystemState, kkt_residual

__all__ = [
    "Variant",
    "GainSet",
    "plant_rhs",
    "static_proxcmo_rhs",
    "dynamic_proxcmo_rhs",
    "dynamic_unconstrained_rhs",
    "baseline_rhs",
    "state_dims",
    "pack_state",
    "unpack_state",
    "flat_rhs",
    "stationarity_residual",
    "simulate",
]


class Variant(str, Enum):
    """Closed-loop system selector; fixes which dual blocks the state carries."""

    STATIC_PROXCMO = "static"
    DYNAMIC_PROXCMO = "dynamic"
    DYNAMIC_UNCONSTRAINED = "dynamic-unconstrained"
    PROX_GRAD_FLOW = "pgf"
    NS_PDGD = "ns-pdgd"
    PI_PGD = "pi-pgd"
    PI_CMO = "pi-cmo"
    GRAD_FLOW = "grad-flow"

    @property
    def has_alpha(self) -> bool:
        return self in (Variant.DYNAMIC_PROXCMO, Variant.DYNAMIC_UNCONSTRAINED,
                        Variant.NS_PDGD)

    @property
    def has_lambda(self) -> bool:
        return self in (Variant.STATIC_PROXCMO, Variant.DYNAMIC_PROXCMO,
                        Variant.PI_PGD, Variant.PI_CMO)

    @property
    def smooth_only(self) -> bool:
        """True for flows that ignore the nonsmooth term g."""
        return self in (Variant.PI_CMO, Variant.GRAD_FLOW)


@dataclass(frozen=True)
class GainSet:
    """Controller parameters; fields unused by a variant are ignored."""

    mu: float = 1.0
    kp: float = 0.0
    ki: float = 0.0
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        vals = (self.mu, self.kp, self.ki, self.k1, self.k2, self.k3, self.gamma)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("gains must be finite")
        if self.mu <= 0:
            raise ValueError("mu must be positive")

    def validate_for(self, variant: Variant):
        if variant is Variant.PI_PGD and self.gamma <= 0:
            raise ValueError("PI-PGD needs gamma > 0")
        return self

    def replace(self, **kw) -> "GainSet":
        cur = dict(mu=self.mu, kp=self.kp, ki=self.ki, k1=self.k1,
                   k2=self.k2, k3=self.k3, gamma=self.gamma)
        cur.update(kw)
        return GainSet(**cur)


def _jac_lam(p, x, lam):
    if p.m == 0:
        return np.zeros(p.n)
    return p.h_jacobian(x).T @ lam


def plant_rhs(p: CompositeProblem, s: SystemState, gains: GainSet):
    """Open-loop flow of the smoothed saddle function in x, with the two
    regulated outputs: the prox gap y1 and the constraint value y2."""
    p.check_state(s, need_alpha=True, need_lam=True)
    mu = gains.mu
    v = s.x + mu * s.alpha
    prox_v = p.g.eval(v, mu)
    mgrad = (v - prox_v) / mu
    xdot = -np.asarray(p.f_grad(s.x), dtype=float) - mgrad - _jac_lam(p, s.x, s.lam)
    y1 = s.x - prox_v
    y2 = p.h_value(s.x)
    return xdot, y1, y2


def _pgf_xdot(p, x, mu):
    # shared by the static closed loop and the PGF baseline so the m=0
    # reduction is exact at the bit level
    w = x - mu * np.asarray(p.f_grad(x), dtype=float)
    return (p.g.eval(w, mu) - x) / mu


def static_proxcmo_rhs(p: CompositeProblem, s: SystemState, gains: GainSet):
    """Static controller alpha = -grad f(x) closed with the PI multiplier law."""
    p.check_state(s, need_lam=True)
    xdot = _pgf_xdot(p, s.x, gains.mu)
    if p.m == 0:
        return xdot, np.zeros(0)
    J = p.h_jacobian(s.x)
    xdot = xdot - J.T @ s.lam
    lamdot = gains.kp * (J @ xdot) + gains.ki * p.h_value(s.x)
    return xdot, lamdot


def dynamic_proxcmo_rhs(p: CompositeProblem, s: SystemState, gains: GainSet):
    """Dynamic dual controller for alpha closed with the PI multiplier law."""
    p.check_state(s, need_alpha=True, need_lam=True)
    mu = gains.mu
    v = s.x + mu * s.alpha
    mgrad = (v - p.g.eval(v, mu)) / mu
    gradf = np.asarray(p.f_grad(s.x), dtype=float)
    jl = _jac_lam(p, s.x, s.lam)
    xdot = -gradf - mgrad - jl
    alphadot = gains.k1 * (gradf + jl) + gains.k2 * s.alpha + gains.k3 * mgrad
    if p.m == 0:
        return xdot, alphadot, np.zeros(0)
    J = p.h_jacobian(s.x)
    lamdot = gains.kp * (J @ xdot) + gains.ki * p.h_value(s.x)
    return xdot, alphadot, lamdot


def dynamic_unconstrained_rhs(p: CompositeProblem, s: SystemState, gains: GainSet):
    """Dynamic controller specialized to problems without equality constraints."""
    if p.m != 0:
        raise ValueError("unconstrained variant requires dim_h == 0")
    xdot, alphadot, _ = dynamic_proxcmo_rhs(p, s, gains)
    return xdot, alphadot


def baseline_rhs(variant: Variant, p: CompositeProblem, s: SystemState, gains: GainSet):
    """Right-hand sides of the comparison flows.

    PROX_GRAD_FLOW: x' = -(x - prox_{mu g}(x - mu grad f)) / mu
    NS_PDGD:        proximal primal-dual flow with integral alpha action
    PI_PGD:         constraint term inside the prox argument, PI multiplier
    PI_CMO:         smooth flow x' = -grad f - J_h^T lam, PI multiplier
    GRAD_FLOW:      x' = -grad f
    """
    if variant is Variant.PROX_GRAD_FLOW:
        p.check_state(s)
        return (_pgf_xdot(p, s.x, gains.mu),)
    if variant is Variant.NS_PDGD:
        p.check_state(s, need_alpha=True)
        mu = gains.mu
        v = s.x + mu * s.alpha
        mgrad = (v - p.g.eval(v, mu)) / mu
        xdot = -np.asarray(p.f_grad(s.x), dtype=float) - mgrad
        alphadot = mu * mgrad - mu * s.alpha
        return xdot, alphadot
    if variant is Variant.PI_PGD:
        p.check_state(s, need_lam=True)
        gains.validate_for(variant)
        gamma = gains.gamma
        grad = np.asarray(p.f_grad(s.x), dtype=float) + _jac_lam(p, s.x, s.lam)
        xdot = p.g.eval(s.x - gamma * grad, gamma) - s.x
        if p.m == 0:
            return xdot, np.zeros(0)
        J = p.h_jacobian(s.x)
        lamdot = gains.kp * (J @ xdot) + gains.ki * p.h_value(s.x)
        return xdot, lamdot
    if variant is Variant.PI_CMO:
        p.check_state(s, need_lam=True)
        xdot = -np.asarray(p.f_grad(s.x), dtype=float) - _jac_lam(p, s.x, s.lam)
        if p.m == 0:
            return xdot, np.zeros(0)
        J = p.h_jacobian(s.x)
        lamdot = gains.kp * (J @ xdot) + gains.ki * p.h_value(s.x)
        return xdot, lamdot
    if variant is Variant.GRAD_FLOW:
        p.check_state(s)
        return (-np.asarray(p.f_grad(s.x), dtype=float),)
    raise ValueError(f"unknown baseline variant {variant!r}")


def rhs(variant: Variant, p: CompositeProblem, s: SystemState, gains: GainSet):
    """Dispatch to the variant's vector field; returns per-block derivatives."""
    if variant is Variant.STATIC_PROXCMO:
        return static_proxcmo_rhs(p, s, gains)
    if variant is Variant.DYNAMIC_PROXCMO:
        return dynamic_proxcmo_rhs(p, s, gains)
    if variant is Variant.DYNAMIC_UNCONSTRAINED:
        return dynamic_unconstrained_rhs(p, s, gains)
    return baseline_rhs(variant, p, s, gains)


def state_dims(variant: Variant, p: CompositeProblem):
    """Block sizes (len x, len alpha, len lam) of the variant's flat state."""
    na = p.n if variant.has_alpha else 0
    nl = p.m if variant.has_lambda else 0
    return p.n, na, nl


def pack_state(s: SystemState) -> np.ndarray:
    parts = [s.x]
    if s.alpha is not None:
        parts.append(s.alpha)
    if s.lam is not None:
        parts.append(s.lam)
    return np.concatenate(parts)


def unpack_state(variant: Variant, p: CompositeProblem, y: np.ndarray) -> SystemState:
    n, na, nl = state_dims(variant, p)
    if y.size != n + na + nl:
        raise ValueError(f"flat state has size {y.size}, expected {n + na + nl}")
    x = y[:n]
    alpha = y[n:n + na] if na else None
    lam = y[n + na:] if nl or variant.has_lambda else None
    return SystemState(x, alpha, lam)


def zero_state(variant: Variant, p: CompositeProblem) -> SystemState:
    n, na, nl = state_dims(variant, p)
    return SystemState(np.zeros(n),
                       np.zeros(na) if na else None,
                       np.zeros(nl) if variant.has_lambda else None)


def flat_rhs(variant: Variant, p: CompositeProblem, gains: GainSet):
    """Vector field as a callable(t, flat_y) -> flat_ydot for the integrator.

    These closures inline the block-wise functions above without the state
    container, since they sit on the integrator's innermost loop; the
    equivalence is pinned by a test comparing both paths on random states.
    """
    gains.validate_for(variant)
    n, na, nl = state_dims(variant, p)
    dim = n + na + nl
    mu, kp, ki = gains.mu, gains.kp, gains.ki
    k1, k2, k3, gamma = gains.k1, gains.k2, gains.k3, gains.gamma
    g = p.g
    f_grad = p.f_grad
    h_value = p.h_value
    h_jacobian = p.h_jacobian

    if variant in (Variant.STATIC_PROXCMO, Variant.PROX_GRAD_FLOW):
        def f(t, y):
            x = y[:n]
            xdot = (g.eval(x - mu * f_grad(x), mu) - x) / mu
            if not nl:
                return xdot
            lam = y[n:]
            J = h_jacobian(x)
            xdot -= J.T @ lam
            out = np.empty(dim)
            out[:n] = xdot
            out[n:] = kp * (J @ xdot) + ki * h_value(x)
            return out
        return f

    if variant in (Variant.DYNAMIC_PROXCMO, Variant.DYNAMIC_UNCONSTRAINED):
        if variant is Variant.DYNAMIC_UNCONSTRAINED and p.m != 0:
            raise ValueError("unconstrained variant requires dim_h == 0")

        def f(t, y):
            x = y[:n]
            a = y[n:2 * n]
            v = x + mu * a
            mgrad = (v - g.eval(v, mu)) / mu
            gf = f_grad(x)
            out = np.empty(dim)
            if nl:
                lam = y[2 * n:]
                J = h_jacobian(x)
                jl = J.T @ lam
                xdot = -gf - mgrad - jl
                out[n:2 * n] = k1 * (gf + jl) + k2 * a + k3 * mgrad
                out[2 * n:] = kp * (J @ xdot) + ki * h_value(x)
            else:
                xdot = -gf - mgrad
                out[n:2 * n] = k1 * gf + k2 * a + k3 * mgrad
            out[:n] = xdot
            return out
        return f

    if variant is Variant.NS_PDGD:
        def f(t, y):
            x = y[:n]
            a = y[n:]
            v = x + mu * a
            mgrad = (v - g.eval(v, mu)) / mu
            out = np.empty(dim)
            out[:n] = -f_grad(x) - mgrad
            out[n:] = mu * mgrad - mu * a
            return out
        return f

    if variant is Variant.PI_PGD:
        def f(t, y):
            x = y[:n]
            grad = f_grad(x)
            if not nl:
                return g.eval(x - gamma * grad, gamma) - x
            lam = y[n:]
            J = h_jacobian(x)
            xdot = g.eval(x - gamma * (grad + J.T @ lam), gamma) - x
            out = np.empty(dim)
            out[:n] = xdot
            out[n:] = kp * (J @ xdot) + ki * h_value(x)
            return out
        return f

    if variant is Variant.PI_CMO:
        def f(t, y):
            x = y[:n]
            if not nl:
                return -np.asarray(f_grad(x), dtype=float)
            lam = y[n:]
            J = h_jacobian(x)
            xdot = -f_grad(x) - J.T @ lam
            out = np.empty(dim)
            out[:n] = xdot
            out[n:] = kp * (J @ xdot) + ki * h_value(x)
            return out
        return f

    if variant is Variant.GRAD_FLOW:
        def f(t, y):
            return -np.asarray(f_grad(y[:n]), dtype=float)
        return f

    raise ValueError(f"unknown variant {variant!r}")


def stationarity_residual(variant: Variant, p: CompositeProblem, gains: GainSet,
                          s: SystemState):
    """(r_stat, r_feas) used for stopping and reporting, per variant.

    Prox-based flows use the prox fixed-point residual at the variant's own
    smoothing parameter; the smooth flows use the plain gradient norm of the
    Lagrangian they descend.
    """
    if variant is Variant.GRAD_FLOW:
        return float(np.linalg.norm(p.f_grad(s.x))), 0.0
    if variant is Variant.PI_CMO:
        grad = np.asarray(p.f_grad(s.x), dtype=float) + _jac_lam(p, s.x, s.lam)
        return float(np.linalg.norm(grad)), float(np.linalg.norm(p.h_value(s.x)))
    mu = gains.gamma if variant is Variant.PI_PGD else gains.mu
    lam = s.lam if s.lam is not None else (np.zeros(p.m) if p.m else None)
    return kkt_residual(p, SystemState(s.x, s.alpha, lam), mu)


def simulate(variant: Variant, p: CompositeProblem, gains: GainSet,
             s0: SystemState | None = None, cfg: IntegratorConfig | None = None,
             record_metrics: bool = True, stop_on: str = "stationarity") -> Trajectory:
    """Integrate one closed-loop run and attach per-sample metrics.

    Metrics recorded per sample: ``res_stat``, ``res_feas`` (the variant's
    stationarity pair) and ``obj`` (f + g, which may be +inf while an
    indicator constraint is violated along the path).

    ``stop_on`` selects what ``cfg.stop_residual`` measures: the first-order
    ``"stationarity"`` pair (default), or ``"equilibrium"``, the larger of
    the vector-field sup norm and the constraint norm.  The latter suits
    flows whose rest point is not an exact first-order point (the static
    controller's multiplier enters outside the prox, which biases its
    stationarity reading away from zero even at rest).
    """
    cfg = cfg or IntegratorConfig()
    s0 = s0 or zero_state(variant, p)
    p.check_state(s0, need_alpha=variant.has_alpha,
                  need_lam=variant.has_lambda)
    f = flat_rhs(variant, p, gains)

    residual = None
    if cfg.stop_residual is not None and stop_on == "equilibrium":
        def residual(t, y):
            rf = float(np.linalg.norm(p.h_value(y[:p.n]))) if p.m else 0.0
            return max(float(np.max(np.abs(f(t, y)))), rf)
    elif cfg.stop_residual is not None and stop_on == "stationarity":
        def residual(t, y):
            rs, rf = stationarity_residual(variant, p, gains,
                                           unpack_state(variant, p, y))
            return max(rs, rf)
    elif stop_on not in ("stationarity", "equilibrium"):
        raise ValueError(f"unknown stop_on mode {stop_on!r}")

    traj = integrate_adaptive(f, pack_state(s0), cfg, residual=residual)
    traj.blocks = state_dims(variant, p)
    if record_metrics:
        res_stat = np.empty(traj.t.size)
        res_feas = np.empty(traj.t.size)
        obj = np.empty(traj.t.size)
        for i in range(traj.t.size):
            s = unpack_state(variant, p, traj.y[i])
            res_stat[i], res_feas[i] = stationarity_residual(variant, p, gains, s)
            obj[i] = p.objective(s.x)
        traj.metrics["res_stat"] = res_stat
        traj.metrics["res_feas"] = res_feas
        traj.metrics["obj"] = obj
    return traj
