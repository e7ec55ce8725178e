"""
Tagged formula families.

Every parameter function of a problem (d, f, rho, g, u0, w0) is described in a
run config by a family tag plus numeric parameters. This module turns those
descriptions into vectorized callables; g families also provide an analytic
derivative.
"""
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.interpolate import PchipInterpolator

from models.errors import InvalidValue
from models.problem import ProblemSpec
from models.run_config import ProblemBlock

ParamValue = Union[float, List[float]]
Params = Dict[str, ParamValue]

SPATIAL_FAMILIES = ("constant", "plateau", "sin_squared", "cosine", "gaussian", "polynomial", "tabulated")
SCALAR_FAMILIES = ("zero", "constant", "linear", "logistic", "polynomial", "tabulated")
REACTION_FAMILIES = ("zero", "constant", "linear", "logistic", "tissue_logistic")


class TabulatedFunction:
    """Monotone (PCHIP) interpolant through sampled values.

    Outside the sample range the end slopes are continued linearly.
    """

    def __init__(self, points, values):
        points = np.asarray(points, dtype=float)
        values = np.asarray(values, dtype=float)
        if points.ndim != 1 or points.shape != values.shape or points.size < 2:
            raise InvalidValue("tabulated points and values must be 1D arrays of equal length >= 2")
        if np.any(np.diff(points) <= 0):
            raise InvalidValue("tabulated points must be strictly increasing")
        self.points = points
        self.values = values
        self._interp = PchipInterpolator(points, values, extrapolate=True)
        self._deriv = self._interp.derivative()

    def __call__(self, x):
        return self._interp(np.asarray(x, dtype=float))

    def derivative(self, x):
        return self._deriv(np.asarray(x, dtype=float))


def _get(params: Params, key: str, default: Optional[float] = None) -> float:
    if key not in params:
        if default is None:
            raise InvalidValue(f"missing parameter '{key}'")
        return default
    value = params[key]
    if isinstance(value, list):
        raise InvalidValue(f"parameter '{key}' must be a scalar")
    return float(value)


def _get_list(params: Params, key: str) -> List[float]:
    if key not in params:
        raise InvalidValue(f"missing parameter '{key}'")
    value = params[key]
    return [float(v) for v in (value if isinstance(value, list) else [value])]


def _check_keys(tag: str, params: Params, allowed: Tuple[str, ...]) -> None:
    unknown = sorted(set(params) - set(allowed))
    if unknown:
        raise InvalidValue(f"family '{tag}' does not take parameter(s) {', '.join(unknown)}")


def build_spatial(tag: str, params: Params) -> Callable:
    """Build a function of x for d, u0 or w0."""
    if tag == "constant":
        _check_keys(tag, params, ("value",))
        value = _get(params, "value")
        return lambda x: np.full(np.shape(x), value)
    if tag == "plateau":
        # scale * (max(0, |x - center| - half_width))^2
        _check_keys(tag, params, ("center", "half_width", "scale"))
        center = _get(params, "center")
        half_width = _get(params, "half_width")
        scale = _get(params, "scale", 1.0)
        return lambda x: scale * np.maximum(0.0, np.abs(np.asarray(x, dtype=float) - center) - half_width) ** 2
    if tag == "sin_squared":
        _check_keys(tag, params, ("wavenumber", "scale"))
        k = _get(params, "wavenumber", 1.0)
        scale = _get(params, "scale", 1.0)
        return lambda x: scale * np.sin(k * np.pi * np.asarray(x, dtype=float)) ** 2
    if tag == "cosine":
        _check_keys(tag, params, ("mean", "amplitude", "wavenumber"))
        mean = _get(params, "mean")
        amplitude = _get(params, "amplitude")
        k = _get(params, "wavenumber", 1.0)
        return lambda x: mean + amplitude * np.cos(k * np.pi * np.asarray(x, dtype=float))
    if tag == "gaussian":
        _check_keys(tag, params, ("center", "width", "amplitude", "base"))
        center = _get(params, "center")
        width = _get(params, "width")
        amplitude = _get(params, "amplitude")
        base = _get(params, "base", 0.0)
        if width <= 0:
            raise InvalidValue("gaussian width must be positive")
        return lambda x: base + amplitude * np.exp(-((np.asarray(x, dtype=float) - center) / width) ** 2)
    if tag == "polynomial":
        _check_keys(tag, params, ("coefficients",))
        poly = np.polynomial.Polynomial(_get_list(params, "coefficients"))
        return lambda x: poly(np.asarray(x, dtype=float))
    if tag == "tabulated":
        _check_keys(tag, params, ("points", "values"))
        return TabulatedFunction(_get_list(params, "points"), _get_list(params, "values"))
    raise InvalidValue(f"unknown spatial family '{tag}' (expected one of {', '.join(SPATIAL_FAMILIES)})")


def build_scalar(tag: str, params: Params) -> Tuple[Callable, Optional[Callable]]:
    """Build a function of w (for g or rho) and its derivative."""
    if tag == "zero":
        _check_keys(tag, params, ())
        return (lambda w: np.zeros(np.shape(w)), lambda w: np.zeros(np.shape(w)))
    if tag == "constant":
        _check_keys(tag, params, ("value",))
        value = _get(params, "value")
        return (lambda w: np.full(np.shape(w), value), lambda w: np.zeros(np.shape(w)))
    if tag == "linear":
        _check_keys(tag, params, ("slope", "intercept"))
        slope = _get(params, "slope")
        intercept = _get(params, "intercept", 0.0)
        return (
            lambda w: intercept + slope * np.asarray(w, dtype=float),
            lambda w: np.full(np.shape(w), slope),
        )
    if tag == "logistic":
        # rate * w * (1 - w / capacity)
        _check_keys(tag, params, ("rate", "capacity"))
        rate = _get(params, "rate", 1.0)
        capacity = _get(params, "capacity", 1.0)
        if capacity <= 0:
            raise InvalidValue("logistic capacity must be positive")
        return (
            lambda w: rate * np.asarray(w, dtype=float) * (1.0 - np.asarray(w, dtype=float) / capacity),
            lambda w: rate * (1.0 - 2.0 * np.asarray(w, dtype=float) / capacity),
        )
    if tag == "polynomial":
        _check_keys(tag, params, ("coefficients",))
        poly = np.polynomial.Polynomial(_get_list(params, "coefficients"))
        dpoly = poly.deriv()
        return (lambda w: poly(np.asarray(w, dtype=float)), lambda w: dpoly(np.asarray(w, dtype=float)))
    if tag == "tabulated":
        _check_keys(tag, params, ("points", "values"))
        table = TabulatedFunction(_get_list(params, "points"), _get_list(params, "values"))
        return table, table.derivative
    raise InvalidValue(f"unknown scalar family '{tag}' (expected one of {', '.join(SCALAR_FAMILIES)})")


def build_reaction(tag: str, params: Params) -> Callable:
    """Build f(x, u, w)."""
    if tag == "zero":
        _check_keys(tag, params, ())
        return lambda x, u, w: np.zeros(np.broadcast(x, u, w).shape)
    if tag == "constant":
        _check_keys(tag, params, ("value",))
        value = _get(params, "value")
        return lambda x, u, w: np.full(np.broadcast(x, u, w).shape, value)
    if tag == "linear":
        _check_keys(tag, params, ("intercept", "slope"))
        intercept = _get(params, "intercept")
        slope = _get(params, "slope")
        return lambda x, u, w: np.broadcast_to(intercept + slope * np.asarray(u, dtype=float),
                                               np.broadcast(x, u, w).shape)
    if tag == "logistic":
        _check_keys(tag, params, ("rate", "capacity"))
        rate = _get(params, "rate")
        capacity = _get(params, "capacity", 1.0)
        if capacity <= 0:
            raise InvalidValue("logistic capacity must be positive")
        return lambda x, u, w: np.broadcast_to(rate * (1.0 - np.asarray(u, dtype=float) / capacity),
                                               np.broadcast(x, u, w).shape)
    if tag == "tissue_logistic":
        _check_keys(tag, params, ("rate", "capacity"))
        rate = _get(params, "rate")
        capacity = _get(params, "capacity", 1.0)
        if capacity <= 0:
            raise InvalidValue("tissue_logistic capacity must be positive")
        return lambda x, u, w: np.broadcast_to(
            rate * np.asarray(w, dtype=float) * (1.0 - np.asarray(u, dtype=float) / capacity),
            np.broadcast(x, u, w).shape,
        )
    raise InvalidValue(f"unknown reaction family '{tag}' (expected one of {', '.join(REACTION_FAMILIES)})")


def build_problem(block: ProblemBlock) -> ProblemSpec:
    """Turn a validated [problem] block into a ProblemSpec."""
    g, g_prime = build_scalar(block.g.tag, block.g.params)
    rho, _ = build_scalar(block.rho.tag, block.rho.params)
    return ProblemSpec(
        a=block.interval[0],
        b=block.interval[1],
        d=build_spatial(block.d.tag, block.d.params),
        f=build_reaction(block.f.tag, block.f.params),
        rho=rho,
        g=g,
        g_prime=g_prime,
        u0=build_spatial(block.u0.tag, block.u0.params),
        w0=build_spatial(block.w0.tag, block.w0.params),
        delta=block.delta,
        name=block.name,
    )


BUILDERS = {
    "d": build_spatial,
    "u0": build_spatial,
    "w0": build_spatial,
    "g": build_scalar,
    "rho": build_scalar,
    "f": build_reaction,
}
