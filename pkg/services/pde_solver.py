"""
IMEX finite-volume integrator for one regularization level.

u: implicit (d_eps u)_xx in the composite variable q = d_eps u, explicit
upwind taxis flux and explicit reaction.
w: lagged-coefficient implicit diffusion eps (w_x / sqrt(g(w)))_x and explicit
absorption.
"""
import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from models.errors import DomainError, LinearSolveFailure, PositivityLoss
from models.problem import DerivedConstants, ProblemSpec
from models.run import DiagnosticSeries, RegLevel, RunResult, RunStatus, Snapshot, State, StepControls
from services.estimates import step_monitors
from services.grid import Grid1D, divergence, face_average
from utils import tridiag

logger = logging.getLogger(__name__)


def _taxis_velocity(u: np.ndarray, w: np.ndarray, level: RegLevel, grid: Grid1D):
    """Interior face velocities V and the upwind densities they act on."""
    wx = np.diff(w) / grid.h
    u_up = np.where(wx >= 0, u[:-1], u[1:])
    d_face = face_average(level.d_eps)[1:-1]
    V = d_face * wx / (1.0 + level.eta_eps * u_up) ** 2
    return V, u_up


def _absorption(u: np.ndarray, w: np.ndarray, level: RegLevel, spec: ProblemSpec) -> np.ndarray:
    return u / (1.0 + level.eta_eps * u) * spec.g_at(w)


def _w_face_coefficient(w: np.ndarray, level: RegLevel, spec: ProblemSpec) -> np.ndarray:
    gw = spec.g_at(w)
    if np.any(gw <= 0):
        raise DomainError("g(w) <= 0 in the w-diffusion coefficient")
    c = level.eps / np.sqrt(gw)
    return 0.5 * (c[1:] + c[:-1])


def stable_dt(state: State, level: RegLevel, spec: ProblemSpec, grid: Grid1D, controls: StepControls) -> float:
    """Largest step keeping the explicit parts positivity preserving."""
    u, w = state.u, state.w
    h = grid.h
    V, _ = _taxis_velocity(u, w, level, grid)
    f_minus = float(np.max(spec.f_minus_at(grid.centers, u, w)))
    vmax = float(np.max(np.abs(V))) if V.size else 0.0

    candidates = [controls.dt_max]
    rate = vmax / h + f_minus
    if rate > 0:
        candidates.append(controls.cfl / rate)

    with np.errstate(divide="ignore", invalid="ignore"):
        loss = np.where(w > 0, _absorption(u, w, level, spec) / w, 0.0)
    loss_max = float(np.max(loss))
    if loss_max > 0:
        candidates.append(controls.cfl / loss_max)

    if not controls.theta_w:
        w_face = 0.5 * (w[1:] + w[:-1])
        root_g = float(np.min(np.sqrt(np.maximum(spec.g_at(w_face), 0.0))))
        candidates.append(controls.cfl * h * h * min(1.0, root_g / level.eps))
    return min(candidates)


def step(state: State, dt: float, level: RegLevel, spec: ProblemSpec, consts: DerivedConstants,
         grid: Grid1D, controls: StepControls) -> State:
    """Advance (u, w) by dt.

    Raises:
        PositivityLoss: u or w drops below zero beyond tolerance, or g(w) <= 0
        LinearSolveFailure: a tridiagonal solve broke down
    """
    u, w = state.u, state.w
    n, h = grid.n, grid.h
    x = grid.centers
    d = level.d_eps

    # u: explicit taxis and reaction
    V, u_up = _taxis_velocity(u, w, level, grid)
    flux = np.zeros(n + 1)
    flux[1:-1] = V * u_up
    rhs = u - dt * divergence(flux, grid) + dt * u * spec.f_at(x, u, w)

    # u: implicit (d u)_xx with reflecting ghost cells
    r = dt / (h * h)
    neighbours = np.full(n, 2.0)
    neighbours[0] = neighbours[-1] = 1.0
    diag = 1.0 + r * d * neighbours
    lower = np.zeros(n)
    upper = np.zeros(n)
    lower[1:] = -r * d[:-1]
    upper[:-1] = -r * d[1:]
    u_new = tridiag.solve(lower, diag, upper, rhs)
    if np.min(u_new) < -controls.tol_lb:
        raise PositivityLoss(f"u dropped to {np.min(u_new):.3e}", dt)
    u_new = np.maximum(u_new, 0.0)

    # w: explicit absorption, lagged-coefficient diffusion
    kappa = _w_face_coefficient(w, level, spec)
    w_rhs = w - dt * _absorption(u, w, level, spec)
    if controls.theta_w:
        k_diag = np.zeros(n)
        k_diag[:-1] += kappa
        k_diag[1:] += kappa
        k_lower = np.zeros(n)
        k_upper = np.zeros(n)
        k_lower[1:] = -r * kappa
        k_upper[:-1] = -r * kappa
        w_new = tridiag.solve(k_lower, 1.0 + r * k_diag, k_upper, w_rhs)
    else:
        w_flux = np.zeros(n + 1)
        w_flux[1:-1] = kappa * np.diff(w) / h
        w_new = w_rhs + dt * divergence(w_flux, grid)

    if np.min(w_new) < -controls.tol_lb:
        raise PositivityLoss(f"w dropped to {np.min(w_new):.3e}", dt)
    if np.any(spec.g_at(w_new) <= 0):
        raise PositivityLoss("g(w) became nonpositive", dt)

    return State(t=state.t + dt, u=u_new, w=w_new)


def _detector(row: dict, controls: StepControls) -> Optional[str]:
    """Name of the first extensibility surrogate above its ceiling."""
    if not math.isfinite(row["max_u"]) or row["max_u"] > controls.u_ceiling:
        return "u_inf"
    if not math.isfinite(row["w_h1"]) or row["w_h1"] > controls.w_h1_ceiling:
        return "w_h1"
    if row["inv_g"] > controls.inv_g_ceiling:
        return "inv_g"
    return None


def run(level: RegLevel, spec: ProblemSpec, consts: DerivedConstants, grid: Grid1D, T: float,
        controls: Optional[StepControls] = None, output_times: Optional[Sequence[float]] = None) -> RunResult:
    """Integrate one level on [0, T], recording diagnostics each step."""
    controls = controls or StepControls()
    if output_times is None:
        output_times = np.linspace(0.0, T, 101)
    outputs = sorted({float(t) for t in output_times if 0.0 <= t <= T})
    within_gate = T <= level.gate(consts.Gamma)
    if not within_gate:
        logger.warning(f"Level eps={level.eps:g} runs beyond its gate {level.gate(consts.Gamma):.6g} < T={T:g}; "
                       "lower barrier not guaranteed")
    logger.info(f"Starting run eps={level.eps:g}, n={grid.n}, T={T:g}")

    state = State(t=0.0, u=spec.u0_at(grid.centers), w=level.w0_eps.copy())
    snapshots: List[Snapshot] = []
    rows = []
    status = RunStatus()
    out_idx = 0
    t_tol = 1e-12 * max(1.0, T)
    breached = set()

    def check_barriers(r: dict) -> None:
        # warned once per run; audit_run reports the worst value
        for name, excess in (("w_upper", r["max_w"] - consts.M - controls.tol_ub),
                             ("u_nonnegative", -r["min_u"] - controls.tol_lb)):
            if excess > 0 and name not in breached:
                breached.add(name)
                logger.warning(f"Level eps={level.eps:g}: barrier {name} broken by {excess:.3e} at t={r['t']:.6g}")

    def record(s: State, dt: float) -> dict:
        row = step_monitors(s, level, spec, consts, grid)
        row["t"] = s.t
        row["dt"] = dt
        rows.append(row)
        check_barriers(row)
        return row

    def snapshot_if_due(s: State) -> int:
        idx = out_idx
        while idx < len(outputs) and outputs[idx] <= s.t + t_tol:
            if abs(outputs[idx] - s.t) <= t_tol:
                snapshots.append(Snapshot(t=outputs[idx], u=s.u.copy(), w=s.w.copy()))
            idx += 1
        return idx

    row = record(state, 0.0)
    out_idx = snapshot_if_due(state)
    quantity = _detector(row, controls)
    if quantity is not None:
        status = RunStatus(kind="blow_up", t=0.0, quantity=quantity, message="ceiling exceeded at t=0")

    steps = 0
    while status.completed and state.t < T - t_tol:
        if steps >= controls.max_steps:
            status = RunStatus(kind="blow_up", t=state.t, quantity="step_limit",
                               message=f"max_steps={controls.max_steps} reached")
            break
        dt = stable_dt(state, level, spec, grid, controls)
        target = outputs[out_idx] if out_idx < len(outputs) else T
        dt = min(dt, target - state.t, T - state.t)
        try:
            new_state = step(state, dt, level, spec, consts, grid, controls)
        except PositivityLoss as e:
            status = RunStatus(kind="blow_up", t=state.t, quantity="positivity", message=f"{e} (dt={e.dt:.3e})")
            break
        except (LinearSolveFailure, DomainError) as e:
            status = RunStatus(kind="blow_up", t=state.t, quantity="solver", message=str(e))
            break
        if abs(new_state.t - target) <= t_tol:
            new_state = State(t=target, u=new_state.u, w=new_state.w)
        state = new_state
        steps += 1

        row = record(state, dt)
        out_idx = snapshot_if_due(state)
        quantity = _detector(row, controls)
        if quantity is not None:
            status = RunStatus(kind="blow_up", t=state.t, quantity=quantity,
                               message=f"{quantity} exceeded its ceiling")

    if status.completed:
        logger.info(f"Run eps={level.eps:g} completed in {steps} steps")
    else:
        logger.warning(f"Run eps={level.eps:g} stopped at t={status.t:.6g}: {status.message}")

    return RunResult(
        level=level,
        snapshots=snapshots,
        series=DiagnosticSeries.from_rows(rows),
        status=status,
        T=T,
        within_gate=within_gate,
    )
