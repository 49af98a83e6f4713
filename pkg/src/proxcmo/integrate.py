"""Explicit ODE integration with adaptive step control and early stopping.

The adaptive routine is an embedded Runge-Kutta pair of orders 4 and 5
(Dormand-Prince coefficients, first-same-as-last).  Steps are accepted when
every component of the local error estimate is below
``abs_tol + rel_tol * |state|``; the step factor is clipped to [0.2, 5].
An optional residual callback terminates a run early once the closed-loop
stationarity measure drops below ``stop_residual``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "StepUnderflow",
    "NonFinite",
    "IntegratorConfig",
    "Trajectory",
    "integrate_adaptive",
    "integrate_fixed_rk4",
]


class StepUnderflow(RuntimeError):
    """The error controller asked for a step below min_step (stiffness)."""

    def __init__(self, t, message=None):
        self.t = float(t)
        super().__init__(message or f"step size underflow at t={t:.6g}")


class NonFinite(RuntimeError):
    """The state developed NaN or Inf entries."""

    def __init__(self, t, message=None):
        self.t = float(t)
        super().__init__(message or f"non-finite state at t={t:.6g}")


@dataclass(frozen=True)
class IntegratorConfig:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-6
    t_end: float = 100.0
    max_step: float = 0.1
    min_step: float = 1e-9
    stop_residual: float | None = None
    record_stride: int = 1
    residual_stride: int = 1  # accepted steps between stop-residual checks

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if self.min_step > self.max_step:
            raise ValueError("need min_step <= max_step")
        if self.stop_residual is not None and self.stop_residual <= 0:
            raise ValueError("stop_residual must be positive when set")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if self.residual_stride < 1:
            raise ValueError("residual_stride must be >= 1")


@dataclass
class Trajectory:
    """Recorded samples of one integration run.

    ``y`` holds one flat state per row; ``metrics`` maps a name to one value
    per recorded row and is filled by the closed-loop drivers, never by the
    integrator itself.  ``blocks`` carries the (x, alpha, lam) block sizes
    when the run came from a closed-loop system.
    """

    t: np.ndarray
    y: np.ndarray
    metrics: dict = field(default_factory=dict)
    stopped_early: bool = False
    final_residual: float | None = None
    n_steps: int = 0
    n_evals: int = 0
    blocks: tuple | None = None

    @property
    def y_final(self) -> np.ndarray:
        return self.y[-1]

    @property
    def t_final(self) -> float:
        return float(self.t[-1])


# Dormand-Prince 5(4) tableau.  The fifth-order solution is propagated; the
# difference against the embedded fourth-order solution estimates the error.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])
_E = _B5 - _B4

_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_SAFETY = 0.9


def _initial_step(y0, f0, cfg):
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(y0)
    d0 = np.max(np.abs(y0) / scale) if y0.size else 0.0
    d1 = np.max(np.abs(f0) / scale) if y0.size else 0.0
    if d1 <= 1e-12:
        h = cfg.max_step
    else:
        h = 0.01 * max(d0, 1.0) / d1
    return min(h, cfg.max_step, cfg.t_end)


def integrate_adaptive(rhs, y0, cfg: IntegratorConfig, residual=None) -> Trajectory:
    """Integrate ``y' = rhs(t, y)`` from t=0 to ``cfg.t_end``.

    Parameters
    ----------
    rhs : callable(t, y) -> ndarray
    y0 : initial flat state
    cfg : IntegratorConfig
    residual : optional callable(t, y) -> float, checked at accepted steps
        against ``cfg.stop_residual`` for early termination.

    Raises
    ------
    StepUnderflow
        if error control needs a step below ``cfg.min_step``.
    NonFinite
        if the state or its derivative stops being finite.
    """
    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    t = 0.0
    k = np.empty((7, y.size))
    k[0] = rhs(t, y)
    n_evals = 1
    if not np.all(np.isfinite(k[0])):
        raise NonFinite(t, "non-finite derivative at the initial state")
    h = _initial_step(y, k[0], cfg)

    ts = [0.0]
    ys = [y.copy()]
    n_steps = 0
    stopped = False
    final_res = None
    last_recorded = 0
    tail = 1e-12 * max(1.0, cfg.t_end)
    stage = np.empty_like(y)   # scratch buffers; the step loop is hot
    err_vec = np.empty_like(y)
    b1 = np.empty_like(y)
    b2 = np.empty_like(y)

    while t < cfg.t_end - tail:
        h = min(h, cfg.max_step, cfg.t_end - t)
        tail_limited = h >= cfg.t_end - t - tail
        with np.errstate(over="ignore", invalid="ignore"):
            for i in range(1, 7):
                np.matmul(k[:i].T, _A[i], out=stage)
                stage *= h
                stage += y
                k[i] = rhs(t + _C[i] * h, stage)
            y_new = y + h * (k.T @ _B5)
            np.matmul(k.T, _E, out=err_vec)
            err_vec *= h
        n_evals += 6
        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(err_vec))):
            raise NonFinite(t + h)
        if y.size:
            np.abs(y, out=b1)
            np.abs(y_new, out=b2)
            np.maximum(b1, b2, out=b1)
            b1 *= cfg.rel_tol
            b1 += cfg.abs_tol
            np.abs(err_vec, out=b2)
            b2 /= b1
            err = float(b2.max())
        else:
            err = 0.0

        if err <= 1.0:
            t = cfg.t_end if tail_limited else t + h
            y = y_new
            k[0] = k[6]  # first-same-as-last
            n_steps += 1
            if n_steps - last_recorded >= cfg.record_stride:
                ts.append(t)
                ys.append(y.copy())
                last_recorded = n_steps
            if (residual is not None and cfg.stop_residual is not None
                    and n_steps % cfg.residual_stride == 0):
                res = float(residual(t, y))
                if res <= cfg.stop_residual:
                    stopped = True
                    final_res = res
            factor = _MAX_FACTOR if err == 0.0 else min(
                _MAX_FACTOR, max(_MIN_FACTOR, _SAFETY * err ** -0.2))
            h *= factor
            if stopped:
                break
        else:
            factor = max(_MIN_FACTOR, _SAFETY * err ** -0.2)
            h *= factor
            if h < cfg.min_step:
                raise StepUnderflow(t)

    if last_recorded != n_steps or not ts:
        ts.append(t)
        ys.append(y.copy())
    traj = Trajectory(
        t=np.asarray(ts),
        y=np.asarray(ys),
        stopped_early=stopped,
        final_residual=final_res,
        n_steps=n_steps,
        n_evals=n_evals,
    )
    return traj


def integrate_fixed_rk4(rhs, y0, dt: float, t_end: float) -> Trajectory:
    """Classical fixed-step fourth-order integration from t=0 to t_end.

    Used as an independent cross-check of the adaptive pair.  ``dt`` must not
    exceed ``t_end``; a shorter final step lands exactly on ``t_end`` when
    it is not an exact multiple.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if dt > t_end:
        raise ValueError(f"dt={dt} exceeds t_end={t_end}")
    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    n_full = int(np.floor(t_end / dt + 1e-12))
    remainder = t_end - n_full * dt
    steps = [dt] * n_full
    if remainder > 1e-12 * max(1.0, t_end):
        steps.append(remainder)

    ts = [0.0]
    ys = [y.copy()]
    t = 0.0
    n_evals = 0
    for h in steps:
        with np.errstate(over="ignore", invalid="ignore"):
            k1 = rhs(t, y)
            k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
            k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
            k4 = rhs(t + h, y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
        n_evals += 4
        if not np.all(np.isfinite(y)):
            raise NonFinite(t)
        ts.append(t)
        ys.append(y.copy())
    ts[-1] = t_end
    return Trajectory(t=np.asarray(ts), y=np.asarray(ys),
                      n_steps=len(steps), n_evals=n_evals)
