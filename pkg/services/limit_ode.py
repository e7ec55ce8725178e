"""
Pointwise ODE system followed by the limit on the degeneracy set:

    u_t = u f(x, u, w),    w_t = -u g(w)
"""
import logging
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from models.errors import InvariantViolation
from models.problem import DerivedConstants, ProblemSpec
from services.grid import DegeneracyMask, Grid1D

logger = logging.getLogger(__name__)

SLACK = 1e-9


class OdeTrajectory(BaseModel):
    """Trajectories at one or more locations; arrays are (times, locations)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    times: np.ndarray
    x: np.ndarray
    u_hat: np.ndarray
    w_hat: np.ndarray
    cells: Optional[np.ndarray] = None

    def at(self, t: float):
        """(u_hat, w_hat) at the stored time nearest to t."""
        k = int(np.argmin(np.abs(self.times - t)))
        return self.u_hat[k], self.w_hat[k]

    def __len__(self) -> int:
        return self.x.shape[0]


def default_dt(T: float) -> float:
    return min(1e-3, T / 1000.0)


def _rk4(spec: ProblemSpec, x: np.ndarray, u0: np.ndarray, w0: np.ndarray, T: float, dt: float):
    def rhs(u, w):
        return u * spec.f_at(x, u, w), -u * spec.g_at(w)

    steps = max(1, int(math.ceil(T / dt - 1e-12)))
    dt = T / steps
    times = np.linspace(0.0, T, steps + 1)
    U = np.empty((steps + 1, x.size))
    W = np.empty((steps + 1, x.size))
    U[0], W[0] = u0, w0
    u, w = u0.astype(float), w0.astype(float)
    for k in range(steps):
        k1u, k1w = rhs(u, w)
        k2u, k2w = rhs(u + 0.5 * dt * k1u, w + 0.5 * dt * k1w)
        k3u, k3w = rhs(u + 0.5 * dt * k2u, w + 0.5 * dt * k2w)
        k4u, k4w = rhs(u + dt * k3u, w + dt * k3w)
        u = u + dt / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        w = w + dt / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w)
        U[k + 1], W[k + 1] = u, w
    return times, U, W


def _check_bounds(times, x, U, W, u0, M: float, rhoM: float) -> None:
    if np.any(U < -SLACK):
        raise InvariantViolation("u_hat became negative")
    if np.any(W < -SLACK) or np.any(W > M + SLACK):
        raise InvariantViolation(f"w_hat left [0, M={M:g}]")
    ceiling = u0[None, :] * np.exp(rhoM * times)[:, None]
    if np.any(U > ceiling * (1 + SLACK) + SLACK):
        raise InvariantViolation("u_hat exceeded u0 e^{rho(M) t}")


def solve_limit_ode(x: float, u0: float, w0: float, spec: ProblemSpec, T: float, dt: Optional[float] = None,
                    consts: Optional[DerivedConstants] = None) -> OdeTrajectory:
    """Classical RK4 at one location with invariants asserted at every time."""
    if u0 < 0 or w0 < 0:
        raise InvariantViolation("initial values must be nonnegative")
    return _solve(np.array([x], dtype=float), np.array([u0], dtype=float), np.array([w0], dtype=float),
                  spec, T, dt, consts)


def _solve(x, u0, w0, spec, T, dt, consts, cells=None) -> OdeTrajectory:
    dt = dt or default_dt(T)
    times, U, W = _rk4(spec, x, u0, w0, T, dt)
    M = consts.M if consts is not None else max(float(np.max(w0)), 0.0)
    rhoM = consts.rhoM if consts is not None else float(spec.rho_at(M))
    _check_bounds(times, x, U, W, u0, M, rhoM)
    return OdeTrajectory(times=times, x=x, u_hat=U, w_hat=W, cells=cells)


def solve_limit_field(mask: DegeneracyMask, spec: ProblemSpec, grid: Grid1D, T: float,
                      dt: Optional[float] = None, consts: Optional[DerivedConstants] = None,
                      w0: Optional[np.ndarray] = None) -> OdeTrajectory:
    """Solve at every zero cell, vectorized over cells.

    ``w0`` overrides the initial tissue per cell (e.g. a level's w0_eps).
    """
    cells = np.nonzero(mask.zero_cells)[0]
    x = grid.centers[cells]
    u0 = spec.u0_at(x)
    w_init = spec.w0_at(x) if w0 is None else np.asarray(w0, dtype=float)[cells]
    if cells.size == 0:
        empty = np.empty((0, 0))
        return OdeTrajectory(times=np.empty(0), x=x, u_hat=empty, w_hat=empty, cells=cells)
    try:
        return _solve(x, u0, w_init, spec, T, dt, consts, cells)
    except InvariantViolation:
        for i, cell in enumerate(cells):
            try:
                _solve(x[i:i + 1], u0[i:i + 1], w_init[i:i + 1], spec, T, dt, consts)
            except InvariantViolation as e:
                raise InvariantViolation(f"cell {cell}: {e}") from e
        raise
