"""
Constants and hypothesis checks for the continuous problem.
"""
import logging
from typing import Callable, Optional

import numpy as np
from scipy import optimize
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.interpolate import PchipInterpolator

from models.errors import NonmonotoneG, NonpositiveGamma, NonpositivePsi
from models.problem import CheckResult, DerivedConstants, GeometryCheck, ProblemSpec, ValidationReport
from services.functions import TabulatedFunction

logger = logging.getLogger(__name__)

G_TOUCH_TOL = 1e-10


def _x_samples(spec: ProblemSpec, n_samples: int) -> np.ndarray:
    return np.linspace(spec.a, spec.b, n_samples + 1)


def _w_samples(M: float, n_samples: int) -> np.ndarray:
    """w_k = M k / n for k = 1..n."""
    return M * np.arange(1, n_samples + 1) / n_samples


def lipschitz_sqrt_d(spec: ProblemSpec, n_samples: int) -> float:
    """Largest difference quotient of sqrt(d) on a uniform sample grid."""
    x = _x_samples(spec, n_samples)
    root = np.sqrt(np.maximum(spec.d_at(x), 0.0))
    return float(np.max(np.abs(np.diff(root)) / np.diff(x)))


def derive_constants(spec: ProblemSpec, n_samples: int = 2000) -> DerivedConstants:
    """Derive M, Gamma, gamma, rho(M), K1, g(M) and eps0 by dense sampling.

    Raises:
        NonpositiveGamma: g <= 0 at some sample of (0, M]
        NonmonotoneG: g' <= 0 at some sample of [0, M]
    """
    x = _x_samples(spec, n_samples)
    M = float(np.max(spec.w0_at(x))) + spec.delta

    w = _w_samples(M, n_samples)
    gw = spec.g_at(w)
    if np.any(gw <= 0):
        bad = w[np.argmax(gw <= 0)]
        raise NonpositiveGamma(f"g({bad:.6g}) <= 0 on (0, M]")
    gp = spec.g_prime_at(np.concatenate(([0.0], w)), M)
    if np.any(gp <= 0):
        bad = np.concatenate(([0.0], w))[np.argmax(gp <= 0)]
        raise NonmonotoneG(f"g'({bad:.6g}) <= 0 on [0, M]")

    Gamma = float(max(np.max(gw / w), gp[0]))
    gamma_low = float(np.min(gp[1:] / gw))

    lip = lipschitz_sqrt_d(spec, n_samples)
    K1 = 4.0 * lip ** 2

    gM = float(spec.g_at(M))
    g_floor = float(spec.g_at(min(spec.delta ** 2, M)))
    eps0 = min(1.0, gM / 2.0, g_floor / 2.0)

    consts = DerivedConstants(
        M=M,
        Gamma=Gamma,
        gamma_low=gamma_low,
        rhoM=float(spec.rho_at(M)),
        K1=K1,
        gM=gM,
        eps0=eps0,
        d_max=float(np.max(spec.d_at(x))),
        mass0=float(trapezoid(spec.u0_at(x), x)),
    )
    logger.debug(f"Derived constants for {spec.name}: {consts.model_dump()}")
    return consts


def refined_min_g(spec: ProblemSpec, w: np.ndarray, gw: np.ndarray) -> float:
    """Smallest value of g on the samples, each interior local minimum refined
    by a bounded scalar minimization between its neighbours.

    A plain scan misses zeros that g only touches.
    """
    best = float(np.min(gw))
    interior = np.flatnonzero((gw[1:-1] < gw[:-2]) & (gw[1:-1] <= gw[2:])) + 1
    for i in interior:
        res = optimize.minimize_scalar(lambda s: float(spec.g_at(s)), bounds=(w[i - 1], w[i + 1]),
                                       method="bounded", options={"xatol": 1e-12 * w[-1]})
        best = min(best, float(res.fun))
    return best


def initial_w_energy(spec: ProblemSpec, n_samples: int, shift: float = 0.0) -> float:
    """Midpoint quadrature of w0_x^2 / g(w0 + shift), with 0/0 := 0 where w0_x = 0."""
    x = _x_samples(spec, n_samples)
    mid = 0.5 * (x[1:] + x[:-1])
    w0 = spec.w0_at(x)
    w0x = np.diff(w0) / np.diff(x)
    gm = spec.g_at(spec.w0_at(mid) + shift)
    num = w0x ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(num == 0.0, 0.0, num / np.where(gm > 0, gm, 0.0))
    ratio = np.where((num > 0) & (gm <= 0), np.inf, ratio)
    return float(np.sum(ratio * np.diff(x)))


def validate_hypotheses(spec: ProblemSpec, consts: DerivedConstants, n_samples: int = 500,
                        u_scan: Optional[float] = None, seed: Optional[int] = None,
                        n_random: int = 20000) -> ValidationReport:
    """Check every structural hypothesis on sample lattices.

    Failures are reported, never raised. ``u_scan`` is the upper end of the u
    range for the reaction majorant scan; it defaults to 10 * max u0. With a
    ``seed``, the majorant lattice is supplemented by ``n_random`` uniform
    draws from the same box.
    """
    M = consts.M
    x = _x_samples(spec, n_samples)
    checks = []

    u0 = spec.u0_at(x)
    checks.append(CheckResult(name="u0_nonnegative", passed=bool(np.min(u0) >= 0),
                              margin=float(np.min(u0))))
    checks.append(CheckResult(name="u0_nontrivial", passed=bool(np.max(u0) > 0),
                              margin=float(np.max(u0))))

    w0 = spec.w0_at(x)
    checks.append(CheckResult(name="w0_nonnegative", passed=bool(np.min(w0) >= 0),
                              margin=float(np.min(w0))))

    d = spec.d_at(x)
    checks.append(CheckResult(name="d_nonnegative", passed=bool(np.min(d) >= 0),
                              margin=float(np.min(d))))
    lip = lipschitz_sqrt_d(spec, n_samples)
    checks.append(CheckResult(name="sqrt_d_lipschitz", passed=bool(np.isfinite(lip)),
                              margin=float(lip), detail="observed Lipschitz constant of sqrt(d)"))

    if u_scan is None:
        u_scan = 10.0 * float(np.max(u0))
    n_lat = min(n_samples, 41)
    X, U, W = np.meshgrid(
        np.linspace(spec.a, spec.b, n_lat),
        np.linspace(0.0, u_scan, n_lat),
        np.linspace(0.0, M, n_lat),
        indexing="ij",
    )
    slack = float(np.min(spec.rho_at(W) - spec.f_at(X, U, W)))
    detail = f"lattice {n_lat}^3, u <= {u_scan:.6g}"
    if seed is not None:
        rng = np.random.default_rng(seed)
        xs = rng.uniform(spec.a, spec.b, n_random)
        us = rng.uniform(0.0, u_scan, n_random)
        ws = rng.uniform(0.0, M, n_random)
        slack = min(slack, float(np.min(spec.rho_at(ws) - spec.f_at(xs, us, ws))))
        detail += f" + {n_random} draws (seed {seed})"
    checks.append(CheckResult(name="f_below_rho", passed=slack >= 0, margin=slack, detail=detail))

    g0 = float(spec.g_at(0.0))
    checks.append(CheckResult(name="g_zero_at_origin", passed=abs(g0) <= 1e-12, margin=-abs(g0)))

    w_dense = _w_samples(M, 20 * n_samples)
    gw = spec.g_at(w_dense)
    gmin = refined_min_g(spec, w_dense, gw)
    checks.append(CheckResult(name="g_positive", passed=bool(gmin > G_TOUCH_TOL * consts.gM),
                              margin=gmin, detail="scan of (0, M], local minima refined"))

    gp = spec.g_prime_at(np.concatenate(([0.0], w_dense)), M)
    checks.append(CheckResult(name="g_increasing", passed=bool(np.min(gp) > 0),
                              margin=float(np.min(gp)), detail="scan of g' on [0, M]"))

    w_near = _w_samples(M / 100.0, n_samples)
    g_near = spec.g_at(w_near)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = spec.g_prime_at(w_near, M) / g_near
    ratio = np.where(g_near > 0, ratio, -np.inf)
    checks.append(CheckResult(name="g_log_slope_near_zero", passed=bool(np.min(ratio) > 0),
                              margin=float(np.min(ratio)), detail="min g'/g on (0, M/100]"))

    energy = initial_w_energy(spec, n_samples)
    checks.append(CheckResult(name="w0_weighted_energy", passed=bool(np.isfinite(energy)),
                              margin=float(energy), detail="integral of w0_x^2 / g(w0)"))

    report = ValidationReport(checks=checks)
    for check in checks:
        if not check.passed:
            logger.warning(f"Hypothesis check {check.name} failed (margin {check.margin:.6g})")
    return report


def transform_sensitivity(psi: Callable, h: Callable, v_max: float, n_samples: int = 1000) -> TabulatedFunction:
    """Tabulate g(w) = psi(V(w)) h(V(w)) on a uniform w grid, V the inverse of
    Psi(v) = integral of psi from 0 to v.

    psi(0) = 0 is accepted; psi must be positive on (0, v_max].
    """
    n_fine = max(20 * n_samples, 20000)
    v = np.linspace(0.0, v_max, n_fine + 1)
    pv = np.broadcast_to(np.asarray(psi(v), dtype=float), v.shape)
    if pv[0] < 0 or np.any(pv[1:] <= 0):
        bad = v[np.argmax(np.concatenate(([pv[0] < 0], pv[1:] <= 0)))]
        raise NonpositivePsi(f"psi({bad:.6g}) <= 0")

    big_psi = cumulative_trapezoid(pv, v, initial=0.0)
    inverse = PchipInterpolator(big_psi, v)

    w = np.linspace(0.0, big_psi[-1], n_samples + 1)
    v_of_w = np.clip(inverse(w), 0.0, v_max)
    g = np.asarray(psi(v_of_w), dtype=float) * np.asarray(h(v_of_w), dtype=float)
    return TabulatedFunction(w, np.broadcast_to(g, w.shape))


def check_degeneracy_geometry(x: np.ndarray, d: np.ndarray, K1: float, tol_zero: float = 1e-14) -> GeometryCheck:
    """Worst ratio d(x) / ((K1/4) dist(x, Z)^2) with Z the sampled zero set {d <= tol_zero}."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    zero = d <= tol_zero
    if not zero.any():
        return GeometryCheck(ratio=0.0, no_degeneracy=True)
    positive = ~zero
    if not positive.any():
        return GeometryCheck(ratio=0.0)

    z = np.sort(x[zero])
    xp = x[positive]
    idx = np.searchsorted(z, xp)
    left = z[np.clip(idx - 1, 0, z.size - 1)]
    right = z[np.clip(idx, 0, z.size - 1)]
    dist = np.minimum(np.abs(xp - left), np.abs(xp - right))

    bound = 0.25 * K1 * dist ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(bound > 0, d[positive] / bound, np.inf)
    k = int(np.argmax(ratios))
    return GeometryCheck(ratio=float(ratios[k]), worst_x=float(xp[k]))
