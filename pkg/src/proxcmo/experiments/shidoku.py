"""Shidoku (4x4 Sudoku) as a nonsmooth constrained feasibility problem.

Sixteen cell variables must land on {1,2,3,4} (enforced through the integer
cell indicator and its rounding prox) while rows, columns, 2x2 corner
blocks and the four given cells are pinned by equality constraints: each
group must sum to 10 and multiply to 24, which on {1,2,3,4}^4 holds exactly
for the permutations of (1,2,3,4).  The problem is nonconvex, so success is
always verified by an independent rule checker, never by residuals.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..dynamics import GainSet, Variant, simulate, unpack_state
from ..integrate import (
    IntegratorConfig,
    NonFinite,
    StepUnderflow,
    integrate_adaptive,
    integrate_fixed_rk4,
)
from ..problem import CompositeProblem, SystemState
from ..prox import ShidokuIndicator, ZeroFunction, project_shidoku

__all__ = [
    "GIVENS",
    "SOLUTION",
    "ShidokuInstance",
    "build_shidoku",
    "default_gains",
    "check_grid",
    "run_shidoku",
]

SUM_TARGET = 10.0
PROD_TARGET = 24.0

# (row, col, value), 1-based grid coordinates
GIVENS = ((1, 2, 1), (1, 4, 4), (3, 1, 2), (3, 3, 3))

SOLUTION = np.array([
    [3, 1, 2, 4],
    [4, 2, 1, 3],
    [2, 4, 3, 1],
    [1, 3, 4, 2],
], dtype=float)

METHODS = (Variant.STATIC_PROXCMO, Variant.DYNAMIC_PROXCMO, Variant.PI_CMO)


def _cell(i, j) -> int:
    return 4 * (i - 1) + (j - 1)


def _groups():
    rows = [np.array([_cell(i, j) for j in range(1, 5)]) for i in range(1, 5)]
    cols = [np.array([_cell(i, j) for i in range(1, 5)]) for j in range(1, 5)]
    blocks = [np.array([_cell(i, j) for i in (bi, bi + 1) for j in (bj, bj + 1)])
              for bi in (1, 3) for bj in (1, 3)]
    return rows + cols + blocks


@dataclass(frozen=True)
class ShidokuInstance:
    givens: tuple
    groups: tuple         # twelve index quadruples (rows, cols, blocks)
    picmo: bool           # cell-membership recast as polynomial rows, g dropped

    @property
    def dim_h(self) -> int:
        return 24 + len(self.givens) + (16 if self.picmo else 0)


def _poly_cell(t):
    # (t-1)(t-2)(t-3)(t-4) expanded, and its derivative
    val = ((t - 1.0) * (t - 2.0)) * ((t - 3.0) * (t - 4.0))
    der = 4.0 * t ** 3 - 30.0 * t ** 2 + 70.0 * t - 50.0
    return val, der


def build_shidoku(picmo: bool = False):
    """Instance plus oracle bundle; f is identically zero.

    Constraint rows are ordered: 12 group sums, 12 group products, one affine
    row per given cell, then (picmo only) 16 polynomial cell-membership rows.
    The oracles are fully vectorized; they sit on the integrator's hot path.
    """
    groups = tuple(_groups())
    inst = ShidokuInstance(GIVENS, groups, picmo)
    n = 16
    m = inst.dim_h
    G = np.stack(groups)                      # 12 x 4 member indices
    given_idx = np.array([_cell(i, j) for i, j, _ in GIVENS])
    given_val = np.array([float(v) for _, _, v in GIVENS])
    prod_rows = (12 + np.arange(12))[:, None]

    J_const = np.zeros((m, n))                # sum and given rows never change
    for k in range(12):
        J_const[k, G[k]] = 1.0
    J_const[np.arange(24, 28), given_idx] = 1.0

    def h_value(x):
        out = np.empty(m)
        cells = x[G]
        np.add.reduce(cells, axis=1, out=out[:12])
        out[:12] -= SUM_TARGET
        np.multiply.reduce(cells, axis=1, out=out[12:24])
        out[12:24] -= PROD_TARGET
        np.subtract(x[given_idx], given_val, out=out[24:28])
        if picmo:
            out[28:] = _poly_cell(x)[0]
        return out

    def h_jacobian(x):
        J = J_const.copy()
        cells = x[G]
        front = cells[:, 0] * cells[:, 1]
        back = cells[:, 2] * cells[:, 3]
        leave_one_out = np.empty((12, 4))
        np.multiply(cells[:, 1], back, out=leave_one_out[:, 0])
        np.multiply(cells[:, 0], back, out=leave_one_out[:, 1])
        np.multiply(front, cells[:, 3], out=leave_one_out[:, 2])
        np.multiply(front, cells[:, 2], out=leave_one_out[:, 3])
        J[prod_rows, G] = leave_one_out
        if picmo:
            J[np.arange(28, 44), np.arange(16)] = _poly_cell(x)[1]
        return J

    g = ZeroFunction() if picmo else ShidokuIndicator()
    zero_grad = np.zeros(n)
    zero_grad.flags.writeable = False
    problem = CompositeProblem(
        n, lambda x: 0.0, lambda x: zero_grad, g,
        h_value=h_value, h_jacobian=h_jacobian, dim_h=m)
    return inst, problem


def default_gains() -> dict:
    return {
        Variant.STATIC_PROXCMO: GainSet(mu=4.0, ki=1.0, kp=2.0),
        Variant.DYNAMIC_PROXCMO: GainSet(mu=1.0, kp=0.1, ki=1.0,
                                         k1=-0.1, k2=-1.0, k3=0.9),
        Variant.PI_CMO: GainSet(ki=1.0, kp=0.1),
    }


def check_grid(grid, givens=GIVENS) -> bool:
    """Independent rule checker: every row, column and corner block is a
    permutation of {1,2,3,4} and the given cells hold their values."""
    grid = np.asarray(grid)
    if grid.shape != (4, 4):
        return False
    want = {1, 2, 3, 4}
    for k in range(4):
        if set(grid[k, :].tolist()) != want or set(grid[:, k].tolist()) != want:
            return False
    for bi in (0, 2):
        for bj in (0, 2):
            if set(grid[bi:bi + 2, bj:bj + 2].ravel().tolist()) != want:
                return False
    return all(grid[i - 1, j - 1] == v for i, j, v in givens)


def _run_one(method_value: str, gains: GainSet, x0: np.ndarray,
             cfg: IntegratorConfig, check_every: float,
             keep_trajectory: bool = False):
    """One restart; module level so process pools can ship it.

    Integration proceeds in chunks of ``check_every`` time units; a run ends
    early once the rounded grid passes the rule checker while the state sits
    close to it (constraint norm below 0.5), which saves most of the stiff
    tail without changing the verdict.  The stiff multiplier loop makes these
    systems expensive for an explicit pair, so the saving matters.
    """
    method = Variant(method_value)
    inst, problem = build_shidoku(picmo=(method is Variant.PI_CMO))
    s = SystemState(
        x0,
        np.zeros(16) if method.has_alpha else None,
        np.zeros(problem.m) if method.has_lambda else None)
    rec = {"success": False, "steps": 0, "t_final": 0.0, "error": None}
    chunks = []
    t_done = 0.0
    try:
        while t_done < cfg.t_end - 1e-9:
            chunk = replace(cfg, t_end=min(check_every, cfg.t_end - t_done))
            traj = simulate(method, problem, gains, s0=s, cfg=chunk,
                            record_metrics=keep_trajectory)
            rec["steps"] += traj.n_steps
            if keep_trajectory:
                chunks.append((t_done, traj))
            t_done += traj.t_final
            s = unpack_state(method, problem, traj.y_final)
            grid = project_shidoku(s.x).reshape(4, 4).astype(int)
            if (check_grid(grid, inst.givens)
                    and np.linalg.norm(problem.h_value(s.x)) <= 0.5):
                break
            if traj.stopped_early:
                break
    except (StepUnderflow, NonFinite) as exc:
        rec["error"] = f"{type(exc).__name__}: {exc}"
        rec["t_final"] = t_done
        return rec, None, _stitch(chunks)
    rec["t_final"] = t_done
    grid = project_shidoku(s.x).reshape(4, 4).astype(int)
    rec["success"] = check_grid(grid, inst.givens)
    return rec, grid, _stitch(chunks)


def _stitch(chunks):
    """Concatenate chunked trajectories into one, offsetting the times."""
    if not chunks:
        return None
    from ..integrate import Trajectory

    ts = []
    ys = []
    metrics = {k: [] for k in chunks[0][1].metrics}
    for offset, traj in chunks:
        ts.append(traj.t + offset)
        ys.append(traj.y)
        for k in metrics:
            metrics[k].append(traj.metrics[k])
    out = Trajectory(
        t=np.concatenate(ts), y=np.vstack(ys),
        metrics={k: np.concatenate(v) for k, v in metrics.items()},
        stopped_early=chunks[-1][1].stopped_early,
        final_residual=chunks[-1][1].final_residual,
        n_steps=sum(c[1].n_steps for c in chunks),
        n_evals=sum(c[1].n_evals for c in chunks),
        blocks=chunks[-1][1].blocks)
    return out


def _run_one_packed(args):
    return _run_one(*args)


def _batched_oracles(picmo: bool):
    """Vectorized constraint oracles over a batch of grids X with shape (B, 16)."""
    groups = tuple(_groups())
    G = np.stack(groups)
    given_idx = np.array([_cell(i, j) for i, j, _ in GIVENS])
    given_val = np.array([float(v) for _, _, v in GIVENS])
    m = 24 + 4 + (16 if picmo else 0)
    J_const = np.zeros((m, 16))
    for k in range(12):
        J_const[k, G[k]] = 1.0
    J_const[np.arange(24, 28), given_idx] = 1.0

    def h_batch(X):
        B = X.shape[0]
        out = np.empty((B, m))
        cells = X[:, G]                          # (B, 12, 4)
        out[:, :12] = cells.sum(axis=2) - SUM_TARGET
        out[:, 12:24] = cells.prod(axis=2) - PROD_TARGET
        out[:, 24:28] = X[:, given_idx] - given_val
        if picmo:
            out[:, 28:] = _poly_cell(X)[0]
        return out

    def jac_batch(X):
        B = X.shape[0]
        J = np.broadcast_to(J_const, (B, m, 16)).copy()
        cells = X[:, G]
        front = cells[:, :, 0] * cells[:, :, 1]
        back = cells[:, :, 2] * cells[:, :, 3]
        lo = np.empty((B, 12, 4))
        lo[:, :, 0] = cells[:, :, 1] * back
        lo[:, :, 1] = cells[:, :, 0] * back
        lo[:, :, 2] = front * cells[:, :, 3]
        lo[:, :, 3] = front * cells[:, :, 2]
        rows = (12 + np.arange(12))[None, :, None]
        J[np.arange(B)[:, None, None], rows, G[None, :, :]] = lo
        if picmo:
            J[:, np.arange(28, 44), np.arange(16)] = _poly_cell(X)[1]
        return J

    return m, h_batch, jac_batch


def _ensemble_rhs(method: Variant, gains: GainSet, n_runs: int):
    """Stacked vector field for n_runs independent restarts of one method."""
    picmo = method is Variant.PI_CMO
    m, h_batch, jac_batch = _batched_oracles(picmo)
    mu, kp, ki = gains.mu, gains.kp, gains.ki
    k1, k2, k3 = gains.k1, gains.k2, gains.k3
    na = 16 if method.has_alpha else 0
    dim = 16 + na + m

    def prox(V):
        return np.clip(np.ceil(V - 0.5), 1.0, 4.0)

    def f(t, y):
        Y = y.reshape(n_runs, dim)
        X = Y[:, :16]
        lam = Y[:, 16 + na:]
        J = jac_batch(X)
        jl = np.einsum("bmn,bm->bn", J, lam)
        out = np.empty_like(Y)
        if method is Variant.STATIC_PROXCMO:
            xdot = (prox(X) - X) / mu - jl
        elif method is Variant.DYNAMIC_PROXCMO:
            A = Y[:, 16:32]
            V = X + mu * A
            mgrad = (V - prox(V)) / mu
            xdot = -mgrad - jl
            out[:, 16:32] = k1 * jl + k2 * A + k3 * mgrad
        else:  # PI_CMO: smooth flow, cell membership lives in h
            xdot = -jl
        out[:, :16] = xdot
        out[:, 16 + na:] = kp * np.einsum("bmn,bn->bm", J, xdot) + ki * h_batch(X)
        return out.reshape(-1)

    return dim, f


ENSEMBLE_DT = {
    Variant.STATIC_PROXCMO: 4e-4,
    Variant.DYNAMIC_PROXCMO: 1e-3,
    Variant.PI_CMO: 1e-3,
}


def run_shidoku_ensemble(method: Variant, gains: GainSet | None = None,
                         n_runs: int = 20, seed: int = 0, dt: float | None = None,
                         t_end: float = 100.0, check_every: float = 5.0,
                         stepper: str = "fixed",
                         cfg: IntegratorConfig | None = None) -> dict:
    """All restarts propagated together as one stacked system.

    The restarts are independent, so stacking them lets one vectorized
    update advance the whole population, which is roughly an order of
    magnitude cheaper than per-run integration at these sizes.  With
    ``stepper="fixed"`` the step sits below the stability cap observed for
    the default gains (the multiplier loop is stiff); ``"adaptive"`` runs
    the embedded pair on the stacked state instead (every run shares one
    step size, but transients in any run just shrink it rather than
    overflowing).  Runs are scored after every ``check_every`` window,
    finished runs drop out of the batch, and the sweep stops once every run
    is solved or ``t_end`` is reached.  Verdicts use the same rule checker
    as :func:`run_shidoku`.
    """
    if method not in METHODS:
        raise ValueError(f"unsupported method {method!r} for this puzzle")
    if stepper not in ("fixed", "adaptive"):
        raise ValueError("stepper must be 'fixed' or 'adaptive'")
    gains = gains or default_gains()[method]
    dt = dt or ENSEMBLE_DT[method]
    cfg = cfg or IntegratorConfig(t_end=t_end, abs_tol=1e-6, rel_tol=1e-4,
                                  record_stride=1000, max_step=0.05)
    rng = np.random.default_rng(seed)
    x0s = np.stack([np.abs(rng.normal(0.0, 1.0, size=16)) for _ in range(n_runs)])
    dim, f = _ensemble_rhs(method, gains, n_runs)
    Y = np.zeros((n_runs, dim))
    Y[:, :16] = x0s

    solved = np.zeros(n_runs, dtype=bool)
    failed = np.zeros(n_runs, dtype=bool)
    t_solved = np.full(n_runs, np.nan)
    inst, problem = build_shidoku(picmo=(method is Variant.PI_CMO))
    _, f_single = _ensemble_rhs(method, gains, 1)
    t_done = 0.0
    total_steps = 0

    while t_done < t_end - 1e-9 and not np.all(solved | failed):
        horizon = min(check_every, t_end - t_done)
        active = np.flatnonzero(~(solved | failed))
        # the batch shrinks as runs finish, so late straggler windows only
        # pay for the runs still moving
        _, f_active = _ensemble_rhs(method, gains, active.size)
        try:
            if stepper == "adaptive":
                traj = integrate_adaptive(f_active, Y[active].reshape(-1),
                                          replace(cfg, t_end=horizon))
            else:
                traj = integrate_fixed_rk4(f_active, Y[active].reshape(-1),
                                           dt, horizon)
            Y[active] = traj.y_final.reshape(active.size, dim)
            total_steps += traj.n_steps
        except NonFinite:
            # some run overflowed mid-window; replay runs one by one for this
            # window so the divergent ones can be frozen out individually
            for b in active:
                try:
                    tb = integrate_fixed_rk4(f_single, Y[b], dt, horizon)
                    Y[b] = tb.y_final
                except NonFinite:
                    failed[b] = True
                    Y[b] = 0.0
        t_done += horizon
        for b in active:
            if failed[b]:
                continue
            grid = project_shidoku(Y[b, :16]).reshape(4, 4).astype(int)
            if (check_grid(grid, inst.givens)
                    and np.linalg.norm(problem.h_value(Y[b, :16])) <= 0.5):
                solved[b] = True
                t_solved[b] = t_done

    runs = []
    grids = []
    for b in range(n_runs):
        grid = project_shidoku(Y[b, :16]).reshape(4, 4).astype(int)
        ok = bool(solved[b]) or (not failed[b] and check_grid(grid, inst.givens))
        runs.append({"run": b, "success": ok, "steps": total_steps,
                     "t_final": float(t_solved[b]) if solved[b] else t_done,
                     "error": "non-finite state" if failed[b] else None})
        grids.append(None if failed[b] else grid)
    successes = sum(r["success"] for r in runs)
    return {
        "method": method.value,
        "n_runs": n_runs,
        "successes": successes,
        "success_rate": successes / n_runs if n_runs else 0.0,
        "runs": runs,
        "grids": grids,
        "n_variables": 16,
        "n_constraint_rows": 24 + 4 + (16 if method is Variant.PI_CMO else 0),
    }


def run_shidoku(method: Variant, gains: GainSet | None = None, n_runs: int = 20,
                seed: int = 0, cfg: IntegratorConfig | None = None,
                check_every: float = 5.0, n_workers: int = 1,
                keep_trajectories: bool = False) -> dict:
    """Monte Carlo restarts from |N(0,1)| cell initializations.

    Multipliers always start at zero.  The final state is rounded onto the
    integer cells and scored by the rule checker; integrator failures count
    as unsuccessful runs instead of raising.  Restarts are independent, so
    ``n_workers > 1`` fans them out over processes; results are identical to
    the sequential order either way (the initial points are drawn up front).
    """
    if method not in METHODS:
        raise ValueError(f"unsupported method {method!r} for this puzzle")
    gains = gains or default_gains()[method]
    # cell rounding only needs ~1e-2 state accuracy; looser tolerances cut
    # the rejection churn at the prox discontinuities considerably
    cfg = cfg or IntegratorConfig(t_end=100.0, abs_tol=1e-6, rel_tol=1e-4,
                                  record_stride=50)
    rng = np.random.default_rng(seed)
    x0s = [np.abs(rng.normal(0.0, 1.0, size=16)) for _ in range(n_runs)]
    arglist = [(method.value, gains, x0, cfg, check_every, keep_trajectories)
               for x0 in x0s]
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            outs = list(pool.map(_run_one_packed, arglist))
    else:
        outs = [_run_one(*args) for args in arglist]

    runs = []
    grids = []
    trajectories = []
    for k, (rec, grid, traj) in enumerate(outs):
        rec["run"] = k
        runs.append(rec)
        grids.append(grid)
        trajectories.append(traj)
    successes = sum(r["success"] for r in runs)
    _, problem = build_shidoku(picmo=(method is Variant.PI_CMO))
    out = {
        "method": method.value,
        "n_runs": n_runs,
        "successes": successes,
        "success_rate": successes / n_runs if n_runs else 0.0,
        "runs": runs,
        "grids": grids,
        "n_variables": 16,
        "n_constraint_rows": problem.m,
    }
    if keep_trajectories:
        out["trajectories"] = trajectories
    return out
