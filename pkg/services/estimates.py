"""
Computable monitors for the a priori estimates of the regularized problem.

The per-step quantities are produced by ``step_monitors`` while a run is in
progress; ``audit_run`` then compares their sups and time integrals with the
explicit constants of ``constants_c``.
"""
import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import optimize
from scipy.integrate import trapezoid

from models.errors import DomainError
from models.problem import DerivedConstants, ProblemSpec
from models.reports import (EntropyConstants, EntropyTrace, EquiintegrabilityRow, EstimateCheck,
                            EstimateReport)
from models.run import RegLevel, RunResult, State, StepControls
from services.grid import Grid1D, face_average, integrate
from services.model_spec import check_degeneracy_geometry, initial_w_energy

logger = logging.getLogger(__name__)

MASS_TOL = 1e-10
MASS_IDENTITY_TOL = 1e-12
GEOMETRY_TOL = 1e-6


def _u_log_u(u: np.ndarray) -> np.ndarray:
    safe = np.where(u > 0, u, 1.0)
    return np.where(u > 0, u * np.log(safe), 0.0)


def _face_g(w: np.ndarray, spec: ProblemSpec) -> np.ndarray:
    """g at interior face averages; raises DomainError if nonpositive."""
    g_face = spec.g_at(0.5 * (w[1:] + w[:-1]))
    if np.any(g_face <= 0):
        raise DomainError("g(w) <= 0 at a face; entropy functional undefined")
    return g_face


def entropy_y(state: State, level: RegLevel, spec: ProblemSpec, grid: Grid1D) -> float:
    """h sum u ln u + 1/2 h sum_faces d_face w_x^2 / g(w_face)."""
    u, w = state.u, state.w
    wx = np.diff(w) / grid.h
    d_face = face_average(level.d_eps)[1:-1]
    return float(grid.h * np.sum(_u_log_u(u)) + 0.5 * grid.h * np.sum(d_face * wx ** 2 / _face_g(w, spec)))


def _dissipation_parts(state: State, level: RegLevel, spec: ProblemSpec, consts: DerivedConstants,
                       grid: Grid1D) -> Dict[str, float]:
    u, w = state.u, state.w
    h = grid.h
    d_face = face_average(level.d_eps)[1:-1]
    wx = np.diff(w) / h
    ux = np.diff(u) / h

    u_up = np.where(wx >= 0, u[:-1], u[1:])
    keep = u_up >= 1e-300
    fisher = h * np.sum(d_face[keep] * ux[keep] ** 2 / u_up[keep])

    w_face = 0.5 * (w[1:] + w[:-1])
    u_face = 0.5 * (u[1:] + u[:-1])
    g_face = _face_g(w, spec)
    gp_face = spec.g_prime_at(w_face, consts.M)
    sat = u_face / (1.0 + level.eta_eps * u_face)
    log_taxis = h * np.sum(d_face * sat * gp_face / g_face * wx ** 2)

    above = u >= 1.0
    f_minus = spec.f_minus_at(grid.centers, u, w)
    sink = h * np.sum((_u_log_u(u) * f_minus)[above])
    return {"fisher": float(fisher), "log_taxis": float(log_taxis), "sink": float(sink),
            "taxis_energy": float(h * np.sum(d_face * sat * wx ** 2)),
            "w_grad_energy": float(h * np.sum(d_face * wx ** 2))}


def dissipation_h(state: State, level: RegLevel, spec: ProblemSpec, consts: DerivedConstants,
                  grid: Grid1D) -> float:
    """Fisher-type term, log-weighted taxis energy and reaction sink."""
    parts = _dissipation_parts(state, level, spec, consts, grid)
    return 0.5 * parts["fisher"] + 0.5 * parts["log_taxis"] + parts["sink"]


def step_monitors(state: State, level: RegLevel, spec: ProblemSpec, consts: DerivedConstants,
                  grid: Grid1D) -> Dict[str, float]:
    """All per-step scalar diagnostics except t and dt."""
    u, w = state.u, state.w
    parts = _dissipation_parts(state, level, spec, consts, grid)
    root_d = np.sqrt(level.d_eps)
    v = root_d * u
    g_cells = spec.g_at(w)
    min_g = float(np.min(g_cells))
    ulnu = _u_log_u(u)

    return {
        "mass": integrate(u, grid),
        "min_u": float(np.min(u)),
        "max_u": float(np.max(u)),
        "min_w": float(np.min(w)),
        "max_w": float(np.max(w)),
        "y": entropy_y(state, level, spec, grid),
        "h": 0.5 * parts["fisher"] + 0.5 * parts["log_taxis"] + parts["sink"],
        "fisher": parts["fisher"],
        "log_taxis": parts["log_taxis"],
        "sink": parts["sink"],
        "w_grad_energy": parts["w_grad_energy"],
        "taxis_energy": parts["taxis_energy"],
        "grad_l1_sq": float(np.sum(np.abs(np.diff(v))) ** 2),
        "linf_sq": float(np.max(v) ** 2),
        "l3": float(grid.h * np.sum(level.d_eps ** 1.5 * u ** 3)),
        "superlevel_entropy": float(grid.h * np.sum(ulnu[u >= 1.0])),
        "reaction": integrate(u * spec.f_at(grid.centers, u, w), grid),
        "w_h1": float(np.max(np.abs(w)) + np.max(np.abs(np.diff(w))) / grid.h),
        "inv_g": 1.0 / min_g if min_g > 0 else math.inf,
    }


def constants_c(spec: ProblemSpec, consts: DerivedConstants, level: RegLevel, T: float,
                n_samples: int = 2000, lattice: int = 101) -> EntropyConstants:
    """The constants c1..c7 of the entropy estimate.

    If c5 = rho(M) + K1 vanishes the Gronwall bound degenerates to
    c6 = y0 + c4 T.
    """
    length = spec.length
    rhoM, K1 = consts.rhoM, consts.K1
    m_T = consts.mass0 * math.exp(rhoM * T)

    c1 = (rhoM + 0.5 * K1) * m_T
    X, U, W = np.meshgrid(np.linspace(spec.a, spec.b, lattice), np.linspace(0.0, 1.0, lattice),
                          np.linspace(0.0, consts.M, lattice), indexing="ij")
    c2 = float(np.max(spec.f_minus_at(X, U, W)))
    c3 = length / math.e * (c2 + rhoM)
    c4 = c1 + c3 + K1 * length / math.e
    c5 = rhoM + K1

    x = np.linspace(spec.a, spec.b, n_samples + 1)
    y0 = float(trapezoid(_u_log_u(spec.u0_at(x)), x))
    y0 += 0.5 * (consts.d_max + 1.0) * initial_w_energy(spec, n_samples, shift=math.sqrt(level.delta_eps))
    if c5 > 0:
        c6 = (y0 + c4 / c5) * math.exp(c5 * T)
    else:
        c6 = y0 + c4 * T
    c7 = c6 + length / math.e + c4 * T + c5 * c6 * T
    return EntropyConstants(c1=c1, c2=c2, c3=c3, c4=c4, c5=c5, c6=c6, c7=c7, m_T=m_T, length=length, T=T)


def _reaction_sup(spec: ProblemSpec, M: float, u: float, n_x: int = 21, n_w: int = 21) -> float:
    X, W = np.meshgrid(np.linspace(spec.a, spec.b, n_x), np.linspace(0.0, M, n_w), indexing="ij")
    return float(np.max(u * spec.f_minus_at(X, np.full_like(X, u), W)))


def kappa_of_N(spec: ProblemSpec, M: float, N: float, u_max_scan: float = 100.0,
               n_scan: int = 2000) -> float:
    """Smallest u with u f_-(x, u, w) >= N for some (x, w); +inf if none.

    Lattice scan in u, then bisection to 1e-10 inside the first hit cell.
    """
    if N <= 0:
        raise DomainError("kappa_of_N needs N > 0")
    grid_u = np.linspace(0.0, u_max_scan, n_scan + 1)
    G = np.array([_reaction_sup(spec, M, u) for u in grid_u])
    hits = np.nonzero(G >= N)[0]
    if hits.size == 0:
        return math.inf
    j = int(hits[0])
    if j == n_scan:
        logger.warning(f"ScanTooCoarse: kappa({N:g}) found at the scan boundary u={u_max_scan:g}")
    if j == 0:
        return 0.0
    return float(optimize.bisect(lambda u: _reaction_sup(spec, M, u) - N, grid_u[j - 1], grid_u[j],
                                 xtol=1e-10))


def equiintegrability_profile(result: RunResult, spec: ProblemSpec, consts: DerivedConstants,
                              grid: Grid1D, thresholds: Sequence[float],
                              constants: Optional[EntropyConstants] = None,
                              u_max_scan: float = 100.0) -> List[EquiintegrabilityRow]:
    """Space-time tail integrals above each threshold."""
    times = result.times
    U = result.u_matrix()
    Wm = result.w_matrix()
    x = grid.centers
    ceiling_base = None
    if constants is not None:
        ceiling_base = consts.gM * constants.T * (constants.c6 + constants.length / math.e)

    f_minus = np.vstack([spec.f_minus_at(x, u, w) for u, w in zip(U, Wm)])
    g_vals = spec.g_at(Wm)

    def space_time(values):
        per_t = grid.h * np.sum(values, axis=1)
        return float(trapezoid(per_t, times)) if len(times) > 1 else 0.0

    rows = []
    for N in sorted(thresholds):
        kappa = kappa_of_N(spec, consts.M, N, u_max_scan=u_max_scan)
        above_k = U >= kappa
        above_n = U >= N

        ceiling = ceiling_base / math.log(N) if ceiling_base is not None and N > 1 else None
        rows.append(EquiintegrabilityRow(
            N=float(N),
            kappa=kappa,
            superlevel_measure=space_time(above_k.astype(float)),
            tail_f=space_time(np.where(above_k, U * f_minus, 0.0)),
            tail_g=space_time(np.where(above_n, U * g_vals, 0.0)),
            ceiling=ceiling,
        ))
    return rows


def entropy_trace(result: RunResult, constants: EntropyConstants) -> EntropyTrace:
    return EntropyTrace(times=result.series["t"], y=result.series["y"], h=result.series["h"],
                        constants=constants)


def _time_integral(result: RunResult, column: str) -> float:
    t = result.series["t"]
    return float(trapezoid(result.series[column], t)) if len(t) > 1 else 0.0


def audit_run(result: RunResult, level: RegLevel, spec: ProblemSpec, consts: DerivedConstants,
              grid: Grid1D, T: float, controls: Optional[StepControls] = None,
              thresholds: Sequence[float] = (1.0, 10.0, 100.0),
              kappa_levels: Sequence[float] = (1.0, 2.0, 4.0, 8.0)) -> EstimateReport:
    """Evaluate every monitored bound on a completed run."""
    controls = controls or StepControls()
    c = constants_c(spec, consts, level, T)
    s = result.series
    t = s["t"]
    length = spec.length
    checks = []

    # Mass: ratio against (integral of u0) e^{rho(M) t}, over steps and snapshots
    mass_ref = s["mass"][0]
    growth = np.exp(consts.rhoM * t)
    ratios = s["mass"] / (mass_ref * growth)
    snap_t = result.times
    snap_mass = np.array([integrate(snap.u, grid) for snap in result.snapshots])
    ratios = np.concatenate((ratios, snap_mass / (mass_ref * np.exp(consts.rhoM * snap_t))))
    checks.append(EstimateCheck.upper("mass_growth", 1.0 + MASS_TOL, float(np.max(ratios)),
                                      "max mass(t) / (mass(0) e^{rho(M) t})"))

    if len(t) > 1:
        defect = np.abs(s["mass"][1:] - s["mass"][:-1] - s["dt"][1:] * s["reaction"][:-1])
        rel = defect / np.maximum(s["mass"][:-1], 1e-300)
        worst = float(np.max(rel))
    else:
        worst = 0.0
    checks.append(EstimateCheck.upper("mass_identity", MASS_IDENTITY_TOL, worst,
                                      "max relative per-step mass balance defect"))

    checks.append(EstimateCheck.upper("w_upper", consts.M + controls.tol_ub, float(np.max(s["max_w"]))))
    barrier = level.lower_barrier(t, consts.Gamma) - controls.tol_lb
    k = int(np.argmin(s["min_w"] - barrier))
    checks.append(EstimateCheck.lower("w_lower", float(barrier[k]), float(s["min_w"][k]),
                                      f"worst at t={t[k]:.6g}"))

    checks.append(EstimateCheck.upper("entropy_bound", c.c6, float(np.max(s["y"])), "sup_t y(t) <= c6"))
    checks.append(EstimateCheck.upper("dissipation_budget", c.c7, _time_integral(result, "h"),
                                      "integral of h <= c7"))
    top = c.c6 + length / math.e
    checks.append(EstimateCheck.upper("superlevel_entropy", top, float(np.max(s["superlevel_entropy"]))))
    checks.append(EstimateCheck.upper("fisher_budget", 2 * c.c7, _time_integral(result, "fisher")))
    checks.append(EstimateCheck.upper("log_weighted_taxis", 2 * c.c7, _time_integral(result, "log_taxis")))
    checks.append(EstimateCheck.upper("reaction_sink_budget", c.c7, _time_integral(result, "sink")))
    checks.append(EstimateCheck.upper("weighted_w_grad", 2 * consts.gM * top, float(np.max(s["w_grad_energy"]))))
    checks.append(EstimateCheck.upper("weighted_taxis_energy", 2 * c.c7 / consts.gamma_low,
                                      _time_integral(result, "taxis_energy")))

    b1 = 2 * c.m_T * (2 * c.c7) + 0.5 * consts.K1 * c.m_T ** 2 * T
    root = math.sqrt(consts.d_max + 1.0)
    b_inf = 2 * (root * c.m_T / length) ** 2 * T + 2 * b1
    checks.append(EstimateCheck.upper("l1_grad_sq", b1, _time_integral(result, "grad_l1_sq")))
    checks.append(EstimateCheck.upper("linf_sq", b_inf, _time_integral(result, "linf_sq")))
    checks.append(EstimateCheck.upper("l3_weighted", root * c.m_T * b_inf, _time_integral(result, "l3")))

    kappa_rows = [{"N": float(N), "kappa": kappa_of_N(spec, consts.M, N)} for N in kappa_levels]
    kappas = [r["kappa"] for r in kappa_rows]
    inversions = sum(1 for p, q in zip(kappas, kappas[1:]) if q < p)
    checks.append(EstimateCheck.upper("kappa_table", 0.0, float(inversions), "kappa(N) nondecreasing"))

    equi = equiintegrability_profile(result, spec, consts, grid, thresholds, constants=c)
    tails_ok = all(q.tail_f <= p.tail_f and q.tail_g <= p.tail_g and q.superlevel_measure <= p.superlevel_measure
                   for p, q in zip(equi, equi[1:]))
    slack = min([r.ceiling - r.tail_g for r in equi if r.ceiling is not None] or [0.0])
    checks.append(EstimateCheck(name="equiintegrability_table", kind="upper", bound=0.0, observed=-slack,
                                margin=slack, passed=bool(tails_ok and slack >= 0),
                                detail="tails nonincreasing in N and below g(M) T (c6 + |Omega|/e) / ln N"))

    x_dense = np.linspace(spec.a, spec.b, 20 * grid.n + 1)
    geometry = check_degeneracy_geometry(x_dense, spec.d_at(x_dense), consts.K1)
    checks.append(EstimateCheck.upper("dist_sq_geometry", 1.0 + GEOMETRY_TOL, geometry.ratio,
                                      "no degeneracy" if geometry.no_degeneracy else ""))

    report = EstimateReport(eps=level.eps, within_gate=result.within_gate, checks=checks,
                            kappa_table=kappa_rows, equiintegrability=equi)
    for check in report.failed:
        logger.warning(f"Estimate check {check.name} failed at eps={level.eps:g}: "
                       f"observed {check.observed:.6g} vs bound {check.bound:.6g}")
    return report
