"""
Construction of the regularized family: smoothed diffusion, threshold,
saturation, lifted initial datum and the horizon gate.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from config.settings import settings
from models.errors import BracketFailure, DomainError, InvariantViolation
from models.problem import CheckResult, DerivedConstants, ProblemSpec
from models.run import DEFAULT_A, RegLevel, Schedule
from services.grid import Grid1D, face_average

logger = logging.getLogger(__name__)

MOLLIFIER_NODES = 201
REL_TOL = 1e-9


def _reflect(x: np.ndarray, a: float, b: float) -> np.ndarray:
    """Map x into [a, b] by even reflection about both endpoints."""
    L = b - a
    y = np.mod(x - a, 2.0 * L)
    return a + np.where(y > L, 2.0 * L - y, y)


def _bump_weights(m: int) -> Tuple[np.ndarray, np.ndarray]:
    t = np.linspace(-1.0, 1.0, m + 2)[1:-1]
    phi = np.exp(-1.0 / (1.0 - t ** 2))
    return t, phi / phi.sum()


def mollify_sqrt_d(spec: ProblemSpec, eps: float, grid: Grid1D, nodes: int = MOLLIFIER_NODES) -> np.ndarray:
    """d_eps = (S[sqrt d])^2 + sqrt(eps) on cells.

    S is the bump mollifier of width sqrt(eps)*(b - a) applied to the evenly
    reflected sqrt(d).
    """
    sigma = math.sqrt(eps) * (spec.b - spec.a)
    t, weights = _bump_weights(nodes)
    shifted = grid.centers[:, None] + sigma * t[None, :]
    root = np.sqrt(np.maximum(spec.d_at(_reflect(shifted, spec.a, spec.b)), 0.0))
    smoothed = root @ weights
    return smoothed ** 2 + math.sqrt(eps)


def delta_eps(g: Callable, eps: float, delta: float, M: float) -> float:
    """g^{-1}(eps) by bisection on [0, min(delta^2, M)]."""
    hi = min(delta ** 2, M)

    def residual(w: float) -> float:
        return float(np.asarray(g(w), dtype=float)) - eps

    if residual(hi) <= 0:
        raise BracketFailure(f"g({hi:.6g}) <= eps={eps:.6g}; eps must be below eps0")
    try:
        return float(optimize.bisect(residual, 0.0, hi, xtol=1e-14))
    except ValueError as e:
        raise BracketFailure(str(e)) from e


def eta_eps(delta_eps_value: float, A: float = DEFAULT_A) -> float:
    """ln ln(A / sqrt(delta_eps)) / ln(A / sqrt(delta_eps))."""
    if A < DEFAULT_A * (1 - 1e-15) or not 0 < delta_eps_value < 1:
        raise DomainError(f"eta_eps needs A >= e^e and delta_eps in (0, 1), got A={A}, delta_eps={delta_eps_value}")
    L = math.log(A / math.sqrt(delta_eps_value))
    return math.log(L) / L


def level_checks(level: RegLevel, spec: ProblemSpec, consts: DerivedConstants, grid: Grid1D,
                 n_samples: int = 2000) -> List[CheckResult]:
    """Evaluate the level invariants on the grid."""
    root_eps = math.sqrt(level.eps)
    d_eps = level.d_eps
    checks = []

    lower = float(np.min(d_eps) - root_eps)
    upper = float(consts.d_max + 1.0 - np.max(d_eps))
    checks.append(CheckResult(name="d_eps_floor", passed=lower >= -REL_TOL * root_eps, margin=lower))
    checks.append(CheckResult(name="d_eps_ceiling", passed=upper >= 0, margin=upper))

    dx = np.diff(d_eps) / grid.h
    ratio = dx ** 2 / face_average(d_eps)[1:-1]
    worst = float(np.max(ratio)) if ratio.size else 0.0
    # absolute floor for quadrature rounding when K1 = 0
    floor = REL_TOL * float(np.max(d_eps)) / (grid.b - grid.a) ** 2
    checks.append(CheckResult(name="d_eps_gradient", passed=worst <= consts.K1 * (1 + REL_TOL) + floor,
                              margin=float(consts.K1 - worst), detail="max face d_x^2 / d"))

    w = np.linspace(level.delta_eps, consts.M, n_samples + 1)
    gmin = float(np.min(spec.g_at(w)))
    checks.append(CheckResult(name="g_above_eps", passed=gmin >= level.eps * (1 - REL_TOL),
                              margin=gmin - level.eps))

    checks.append(CheckResult(name="delta_eps_range", passed=0 < level.delta_eps < spec.delta ** 2,
                              margin=float(spec.delta ** 2 - level.delta_eps)))

    expected = eta_eps(level.delta_eps, level.A)
    checks.append(CheckResult(name="eta_eps_formula",
                              passed=abs(level.eta_eps - expected) <= 1e-15 and 0 < expected <= 1 / math.e,
                              margin=float(1 / math.e - level.eta_eps)))
    return checks


def build_level(spec: ProblemSpec, consts: DerivedConstants, grid: Grid1D, eps: float,
                A: float = DEFAULT_A) -> RegLevel:
    """Construct and verify one level."""
    if not 0 < eps < consts.eps0:
        raise InvariantViolation(f"eps={eps:.6g} outside (0, eps0={consts.eps0:.6g})")
    d_eps = mollify_sqrt_d(spec, eps, grid)
    de = delta_eps(spec.g, eps, spec.delta, consts.M)
    level = RegLevel(
        eps=eps,
        d_eps=d_eps,
        delta_eps=de,
        eta_eps=eta_eps(de, A),
        w0_eps=spec.w0_at(grid.centers) + math.sqrt(de),
        A=A,
        sup_dist=float(np.max(np.abs(d_eps - spec.d_at(grid.centers)))),
    )
    failed = [c for c in level_checks(level, spec, consts, grid) if not c.passed]
    if failed:
        names = ", ".join(f"{c.name} (margin {c.margin:.3g})" for c in failed)
        raise InvariantViolation(f"eps={eps:.6g}: {names}; grid may be too coarse for the mollifier width")
    return level


def build_schedule(spec: ProblemSpec, consts: DerivedConstants, grid: Grid1D, eps_list: Sequence[float],
                   A: float = DEFAULT_A, threads: Optional[int] = None) -> Schedule:
    """Build all levels; errors carry the offending level index."""
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise InvariantViolation("eps_list must be strictly decreasing")

    def build(item):
        k, eps = item
        try:
            return build_level(spec, consts, grid, eps, A)
        except (InvariantViolation, BracketFailure, DomainError) as e:
            raise e.__class__(f"level {k}: {e}") from e

    workers = min(threads or settings.threads, max(1, len(eps_list)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        levels = list(pool.map(build, enumerate(eps_list)))

    try:
        schedule = Schedule(levels=levels, eps0=consts.eps0)
    except ValueError as e:
        raise InvariantViolation(str(e)) from e
    logger.info(f"Built schedule with {len(levels)} level(s) for {spec.name}")
    return schedule


def epsilon_star(T: float, schedule: Schedule, Gamma: float) -> List[RegLevel]:
    """Levels whose gate (eta/Gamma) ln(1/sqrt(delta_eps)) is at least T."""
    if T <= 0:
        raise DomainError("horizon T must be positive")
    selected = [lv for lv in schedule.levels if T <= lv.gate(Gamma)]
    if not selected:
        logger.warning(f"Empty selection: no level is valid up to T={T:g}; extend eps_list downward")
    return selected


def level_table(schedule: Schedule, Gamma: float) -> List[Dict[str, float]]:
    """One row per level for levels.csv."""
    return [
        {
            "eps": lv.eps,
            "delta_eps": lv.delta_eps,
            "eta_eps": lv.eta_eps,
            "min_d_eps": float(np.min(lv.d_eps)),
            "gate": lv.gate(Gamma),
            "sup_dist": lv.sup_dist,
        }
        for lv in schedule.levels
    ]

