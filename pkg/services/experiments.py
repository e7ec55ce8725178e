"""
Cross-level experiments: eps sweeps, Cauchy tables, the limit-ODE oracle on
the degeneracy set, weak-identity residuals and self-convergence.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.integrate import trapezoid

from config.settings import settings
from models.errors import EmptySchedule, NoDegeneracy, RunFailure
from models.problem import DerivedConstants, ProblemSpec
from models.reports import (CauchyRow, ConvergenceRow, OdeErrorRow, SelfConvergenceReport, SweepResult,
                            WeakResidualEntry, WeakResidualReport)
from models.run import DEFAULT_A, RunResult, Schedule, StepControls
from services import pde_solver
from services.estimates import audit_run
from services.grid import DegeneracyMask, Grid1D
from services.limit_ode import solve_limit_field
from services.regularization import build_level

logger = logging.getLogger(__name__)


def _workers(count: int, threads: Optional[int]) -> int:
    return max(1, min(threads or settings.threads, count))


def run_sweep(spec: ProblemSpec, consts: DerivedConstants, grid: Grid1D, schedule: Schedule, T: float,
              controls: Optional[StepControls] = None, output_times: Optional[Sequence[float]] = None,
              threads: Optional[int] = None, thresholds: Sequence[float] = (1.0, 10.0, 100.0)) -> SweepResult:
    """Run and audit every level concurrently; the finest level is the candidate.

    Raises:
        EmptySchedule: the schedule has no levels
        RunFailure: a level stopped early, with its index and eps
    """
    if len(schedule.levels) == 0:
        raise EmptySchedule("sweep needs at least one level")
    controls = controls or StepControls()
    if output_times is None:
        output_times = np.linspace(0.0, T, 101)

    def execute(level):
        return pde_solver.run(level, spec, consts, grid, T, controls, output_times)

    logger.info(f"Sweeping {len(schedule.levels)} level(s) on n={grid.n}, T={T:g}")
    with ThreadPoolExecutor(max_workers=_workers(len(schedule.levels), threads)) as pool:
        runs = list(pool.map(execute, schedule.levels))

    for k, result in enumerate(runs):
        if not result.status.completed:
            raise RunFailure(f"level {k} (eps={result.level.eps:g}) stopped at t={result.status.t:.6g}: "
                             f"{result.status.message}", level_index=k, eps=result.level.eps)
        if not result.within_gate:
            logger.warning(f"Level {k} (eps={result.level.eps:g}) lies outside the eps* selection for T={T:g}")

    def audit(result):
        return audit_run(result, result.level, spec, consts, grid, T, controls, thresholds=thresholds)

    with ThreadPoolExecutor(max_workers=_workers(len(runs), threads)) as pool:
        reports = list(pool.map(audit, runs))

    return SweepResult(schedule=schedule, runs=runs, reports=reports)


def _space_time_l1(a: np.ndarray, b: np.ndarray, times: np.ndarray, grid: Grid1D, region: np.ndarray) -> float:
    per_t = grid.h * np.sum(np.abs(a - b)[:, region], axis=1)
    return float(trapezoid(per_t, times)) if times.size > 1 else 0.0


def l1_distance(run_a: RunResult, run_b: RunResult, grid: Grid1D, region: np.ndarray) -> Tuple[float, float]:
    """Space-time L1 distances of u and w over a cell region."""
    times = run_a.times
    if run_b.times.shape != times.shape or not np.allclose(run_b.times, times):
        raise ValueError("runs must share output times")
    return (_space_time_l1(run_a.u_matrix(), run_b.u_matrix(), times, grid, region),
            _space_time_l1(run_a.w_matrix(), run_b.w_matrix(), times, grid, region))


def cauchy_table(sweep: SweepResult, spec: ProblemSpec, grid: Grid1D, d_floor: float,
                 mask: Optional[DegeneracyMask] = None) -> List[CauchyRow]:
    """Distances between consecutive levels over {d > d_floor} x (0, T)."""
    region = spec.d_at(grid.centers) > d_floor
    if mask is not None:
        region &= mask.positive_cells
    if not region.any():
        logger.warning(f"Cauchy region {{d > {d_floor:g}}} is empty; distances reported as 0")
    rows = []
    for k, (coarse, fine) in enumerate(zip(sweep.runs, sweep.runs[1:])):
        du, dw = l1_distance(coarse, fine, grid, region) if region.any() else (0.0, 0.0)
        rows.append(CauchyRow(k=k + 1, eps_coarse=coarse.level.eps, eps_fine=fine.level.eps, dist_u=du, dist_w=dw))
    return rows


def compare_limit_ode(sweep: SweepResult, spec: ProblemSpec, consts: DerivedConstants, grid: Grid1D,
                      mask: DegeneracyMask) -> List[OdeErrorRow]:
    """Sup errors against the limit ODE over interior zero cells and output times.

    The ODE of each level starts from (u0, w0_eps) of that level.
    """
    if not mask.has_interior:
        raise NoDegeneracy("no interior zero cells; increase resolution or decrease margin")
    rows = []
    for result in sweep.runs:
        traj = solve_limit_field(mask, spec, grid, result.T, consts=consts, w0=result.level.w0_eps)
        pick = mask.interior_zero_cells[traj.cells]
        cells = traj.cells[pick]
        err_u = err_w = last_u = last_w = 0.0
        for snap in result.snapshots:
            u_hat, w_hat = traj.at(snap.t)
            last_u = float(np.max(np.abs(snap.u[cells] - u_hat[pick])))
            last_w = float(np.max(np.abs(snap.w[cells] - w_hat[pick])))
            err_u, err_w = max(err_u, last_u), max(err_w, last_w)
        rows.append(OdeErrorRow(eps=result.level.eps, err_u=err_u, err_w=err_w, err_u_final=last_u,
                                err_w_final=last_w, cells=int(cells.size)))
    return rows


class PhiTerm(BaseModel):
    """coef * cos(k pi xhat) * Theta(t)."""
    coef: float = 1.0
    k: int = Field(0, ge=0)
    profile: Literal["sin2", "cos2"] = "sin2"


class PhiFunction(BaseModel):
    """Linear combination of separable terms; phi_x = 0 at both ends and phi(., T) = 0."""
    terms: List[PhiTerm] = Field(default_factory=list)
    label: str = ""

    def __add__(self, other: "PhiFunction") -> "PhiFunction":
        return PhiFunction(terms=self.terms + other.terms, label=f"{self.label}+{other.label}")

    def evaluate(self, x: np.ndarray, t: np.ndarray, a: float, b: float, T: float):
        """phi, phi_t, phi_x, phi_xx as (times, cells) arrays."""
        L = b - a
        xhat = (x - a) / L
        shape = (t.size, x.size)
        phi, phi_t, phi_x, phi_xx = (np.zeros(shape) for _ in range(4))
        for term in self.terms:
            w = term.k * math.pi / L
            X = np.cos(term.k * math.pi * xhat)
            Xx = -w * np.sin(term.k * math.pi * xhat)
            Xxx = -w * w * X
            if term.profile == "sin2":
                theta = np.sin(math.pi * t / T) ** 2
                theta_t = math.pi / T * np.sin(2 * math.pi * t / T)
            else:
                theta = np.cos(0.5 * math.pi * t / T) ** 2
                theta_t = -0.5 * math.pi / T * np.sin(math.pi * t / T)
            phi += term.coef * np.outer(theta, X)
            phi_t += term.coef * np.outer(theta_t, X)
            phi_x += term.coef * np.outer(theta, Xx)
            phi_xx += term.coef * np.outer(theta, Xxx)
        return phi, phi_t, phi_x, phi_xx


def default_battery(size: int = 6) -> List[PhiFunction]:
    """cos(k pi xhat) x {sin^2(pi t/T), cos^2(pi t/(2T))} for k = 0, 1, 2, ..."""
    battery = []
    k = 0
    while len(battery) < size:
        for profile in ("sin2", "cos2"):
            if len(battery) < size:
                battery.append(PhiFunction(terms=[PhiTerm(k=k, profile=profile)], label=f"cos{k}_{profile}"))
        k += 1
    return battery


def _positive_gradient(w: np.ndarray, positive: np.ndarray, h: float) -> np.ndarray:
    """Cell w_x on {d > 0}: centered, one-sided next to zero cells, reflecting at the ends."""
    n = w.size
    left = np.concatenate(([w[0]], w[:-1]))
    right = np.concatenate((w[1:], [w[-1]]))
    left_ok = np.concatenate(([True], positive[:-1]))
    right_ok = np.concatenate((positive[1:], [True]))
    centered = (right - left) / (2 * h)
    forward = (right - w) / h
    backward = (w - left) / h
    out = np.where(left_ok & right_ok, centered,
                   np.where(right_ok, forward, np.where(left_ok, backward, 0.0)))
    out[~positive] = 0.0
    return out


class WeakDefects(BaseModel):
    """Signed defects (LHS - RHS) of both identities and the L1 term magnitudes."""
    defect_u: float
    defect_w: float
    scale_u: float
    scale_w: float


def weak_defects(candidate: RunResult, spec: ProblemSpec, grid: Grid1D, phi: PhiFunction) -> WeakDefects:
    """Assemble both weak identities for one test function."""
    x = grid.centers
    h = grid.h
    times = candidate.times
    T = candidate.T
    U = candidate.u_matrix()
    Wm = candidate.w_matrix()
    d = spec.d_at(x)
    positive = d > 0

    P, Pt, Px, Pxx = phi.evaluate(x, times, spec.a, spec.b, T)
    wx = np.vstack([_positive_gradient(w, positive, h) for w in Wm])
    F = np.vstack([spec.f_at(x, u, w) for u, w in zip(U, Wm)])
    G = spec.g_at(Wm)
    u0 = spec.u0_at(x)
    w0 = spec.w0_at(x)

    def st(values):
        per_t = h * np.sum(values, axis=1)
        return float(trapezoid(per_t, times)) if times.size > 1 else 0.0

    du = np.where(positive, d, 0.0)[None, :] * U
    terms_u = [
        -st(U * Pt),
        -float(h * np.sum(u0 * P[0])),
        -st(du * Pxx),
        -st(du * wx * Px),
        -st(U * F * P),
    ]
    terms_w = [
        st(Wm * Pt),
        float(h * np.sum(w0 * P[0])),
        -st(U * G * P),
    ]
    return WeakDefects(
        defect_u=float(sum(terms_u)),
        defect_w=float(sum(terms_w)),
        scale_u=float(sum(abs(v) for v in terms_u)),
        scale_w=float(sum(abs(v) for v in terms_w)),
    )


def weak_residual(candidate: RunResult, spec: ProblemSpec, grid: Grid1D, battery_size: int = 6,
                  battery: Optional[List[PhiFunction]] = None) -> WeakResidualReport:
    """Normalized residuals |LHS - RHS| / (sum of term magnitudes); 0/0 := 0."""
    battery = battery if battery is not None else default_battery(battery_size)
    entries = []
    for phi in battery:
        raw = weak_defects(candidate, spec, grid, phi)
        entries.append(WeakResidualEntry(
            label=phi.label,
            residual_u=abs(raw.defect_u) / raw.scale_u if raw.scale_u > 0 else 0.0,
            residual_w=abs(raw.defect_w) / raw.scale_w if raw.scale_w > 0 else 0.0,
            defect_u=abs(raw.defect_u),
            defect_w=abs(raw.defect_w),
            scale_u=raw.scale_u,
            scale_w=raw.scale_w,
        ))
    return WeakResidualReport(entries=entries, battery=", ".join(p.label for p in battery))


def weak_residual_study(spec: ProblemSpec, consts: DerivedConstants, pairs: Sequence[Tuple[float, int]], T: float,
                        controls: Optional[StepControls] = None, battery_size: int = 6, A: float = DEFAULT_A,
                        threads: Optional[int] = None) -> List[Tuple[float, int, WeakResidualReport]]:
    """Weak residuals along a paired (eps, n) refinement."""
    controls = controls or StepControls()

    def execute(pair):
        eps, n = pair
        grid = Grid1D(a=spec.a, b=spec.b, n=n)
        level = build_level(spec, consts, grid, eps, A)
        result = pde_solver.run(level, spec, consts, grid, T, controls)
        if not result.status.completed:
            raise RunFailure(f"eps={eps:g}, n={n}: {result.status.message}", level_index=pairs.index(pair), eps=eps)
        return eps, n, weak_residual(result, spec, grid, battery_size)

    with ThreadPoolExecutor(max_workers=_workers(len(pairs), threads)) as pool:
        return list(pool.map(execute, list(pairs)))


def concentration_diagnostic(run: RunResult, mask: DegeneracyMask, grid: Grid1D) -> np.ndarray:
    """Mass fraction inside {d = 0} at each snapshot."""
    out = []
    for snap in run.snapshots:
        total = grid.h * np.sum(snap.u)
        out.append(grid.h * np.sum(snap.u[mask.zero_cells]) / total if total > 0 else 0.0)
    return np.array(out)


def _project(fine: np.ndarray, n: int) -> np.ndarray:
    ratio = fine.size // n
    if ratio * n != fine.size:
        raise ValueError(f"reference resolution {fine.size} is not a multiple of {n}")
    return fine.reshape(n, ratio).mean(axis=1)


def self_convergence(spec: ProblemSpec, consts: DerivedConstants, eps: float, ns: Sequence[int], n_ref: int,
                     T: float, controls: Optional[StepControls] = None, A: float = DEFAULT_A,
                     threads: Optional[int] = None) -> SelfConvergenceReport:
    """L1 errors at T against a fine reference, with dt_max scaled like h."""
    controls = controls or StepControls()
    ns = sorted(ns)
    base = ns[0]

    def execute(n):
        grid = Grid1D(a=spec.a, b=spec.b, n=n)
        level = build_level(spec, consts, grid, eps, A)
        scaled = controls.model_copy(update={"dt_max": controls.dt_max * base / n})
        result = pde_solver.run(level, spec, consts, grid, T, scaled, output_times=[0.0, T])
        if not result.status.completed:
            raise RunFailure(f"n={n}: {result.status.message}", level_index=0, eps=eps)
        return result.snapshots[-1].u

    resolutions = list(ns) + [n_ref]
    with ThreadPoolExecutor(max_workers=_workers(len(resolutions), threads)) as pool:
        finals = list(pool.map(execute, resolutions))
    reference = finals[-1]

    rows = []
    errors = []
    for k, (n, u) in enumerate(zip(ns, finals[:-1])):
        err = float((spec.length / n) * np.sum(np.abs(u - _project(reference, n))))
        order = None
        if k > 0 and err > 0 and errors[-1] > 0:
            order = math.log(errors[-1] / err) / math.log(n / ns[k - 1])
        errors.append(err)
        rows.append(ConvergenceRow(n=n, error=err, order=order))

    hs = np.array([spec.length / n for n in ns])
    fitted = float(np.polyfit(np.log(hs), np.log(np.maximum(errors, 1e-300)), 1)[0]) if len(ns) > 1 else float("nan")
    logger.info(f"Self-convergence at eps={eps:g}: errors {errors}, fitted order {fitted:.3f}")
    return SelfConvergenceReport(eps=eps, n_ref=n_ref, T=T, rows=rows, fitted_order=fitted)


def sweep_failures(cauchy: Sequence[CauchyRow], ode_errors: Sequence[OdeErrorRow],
                   weak: Optional[WeakResidualReport] = None, weak_tol: Optional[float] = None,
                   inversions: int = 1) -> List[str]:
    """Cross-level properties of a sweep, one message per violation.

    Cauchy distances must strictly decrease along the schedule (rows of an
    empty region, all zero, pass). Limit-ODE errors may rise at most
    ``inversions`` times. The aggregate weak residuals are held to
    ``weak_tol`` when one is given.
    """
    failures = []
    for name in ("dist_u", "dist_w"):
        values = [getattr(row, name) for row in cauchy]
        if any(a > 0 and b >= a for a, b in zip(values, values[1:])):
            failures.append(f"cauchy {name} not decreasing: {', '.join(f'{v:.3e}' for v in values)}")
    for name in ("err_u", "err_w"):
        values = [getattr(row, name) for row in ode_errors]
        rises = sum(b > a for a, b in zip(values, values[1:]))
        if rises > inversions:
            failures.append(f"limit ODE {name} rises {rises} times: {', '.join(f'{v:.3e}' for v in values)}")
    if weak is not None and weak_tol is not None:
        for name, value in (("u", weak.aggregate_u), ("w", weak.aggregate_w)):
            if value > weak_tol:
                failures.append(f"weak residual {name} {value:.3e} above {weak_tol:g}")
    for message in failures:
        logger.warning(f"Sweep property failed: {message}")
    return failures
