"""
Problem-level data types: the continuous problem, its derived constants and
the hypothesis report.
"""
from typing import Any, Callable, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class ProblemSpec(BaseModel):
    """The continuous problem on the interval (a, b).

    Parameter functions are vectorized callables:
    d(x), f(x, u, w), rho(w), g(w), u0(x), w0(x). ``g_prime`` is optional;
    when missing, derivatives of g are taken by finite differences.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    a: float = Field(..., description="Left endpoint")
    b: float = Field(..., description="Right endpoint")
    d: Callable[..., Any] = Field(..., description="Diffusion/taxis coefficient d(x) >= 0")
    f: Callable[..., Any] = Field(..., description="Reaction rate f(x, u, w)")
    rho: Callable[..., Any] = Field(..., description="Nondecreasing majorant of f in w")
    g: Callable[..., Any] = Field(..., description="Tissue degradation g(w)")
    g_prime: Optional[Callable[..., Any]] = Field(default=None, description="Derivative of g")
    u0: Callable[..., Any] = Field(..., description="Initial density")
    w0: Callable[..., Any] = Field(..., description="Initial tissue")
    delta: float = Field(..., gt=0, description="Margin added to sup w0")
    name: str = Field(default="problem", description="Label used in logs and reports")

    @model_validator(mode="after")
    def _check_interval(self):
        if not self.a < self.b:
            raise ValueError(f"interval endpoints must satisfy a < b, got ({self.a}, {self.b})")
        return self

    @property
    def length(self) -> float:
        return self.b - self.a

    def d_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.d(x), dtype=float), x.shape).copy()

    def u0_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.u0(x), dtype=float), x.shape).copy()

    def w0_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.w0(x), dtype=float), x.shape).copy()

    def f_at(self, x, u, w) -> np.ndarray:
        shape = np.broadcast(np.asarray(x), np.asarray(u), np.asarray(w)).shape
        return np.broadcast_to(np.asarray(self.f(x, u, w), dtype=float), shape).copy()

    def f_minus_at(self, x, u, w) -> np.ndarray:
        """Negative part max(-f, 0)."""
        return np.maximum(-self.f_at(x, u, w), 0.0)

    def rho_at(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return np.broadcast_to(np.asarray(self.rho(w), dtype=float), w.shape).copy()

    def g_at(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return np.broadcast_to(np.asarray(self.g(w), dtype=float), w.shape).copy()

    def g_prime_at(self, w, M: float) -> np.ndarray:
        """g'(w); centered differences with step 1e-6*M when no derivative is given."""
        w = np.asarray(w, dtype=float)
        if self.g_prime is not None:
            return np.broadcast_to(np.asarray(self.g_prime(w), dtype=float), w.shape).copy()
        step = 1e-6 * M
        centered = (self.g_at(w + step) - self.g_at(w - step)) / (2.0 * step)
        forward = (self.g_at(w + step) - self.g_at(w)) / step
        return np.where(w < step, forward, centered)


class DerivedConstants(BaseModel):
    """Constants of the problem derived by dense sampling."""
    model_config = ConfigDict(frozen=True)

    M: float = Field(..., description="sup w0 + delta")
    Gamma: float = Field(..., description="Upper slope: g(w) <= Gamma w on [0, M]")
    gamma_low: float = Field(..., description="Lower bound of g'/g on (0, M]")
    rhoM: float = Field(..., description="rho(M)")
    K1: float = Field(..., description="Bound of d_x^2 / d, i.e. 4 Lip(sqrt d)^2")
    gM: float = Field(..., description="g(M)")
    eps0: float = Field(..., description="Upper end of admissible regularization parameters")
    d_max: float = Field(default=0.0, description="sup d")
    mass0: float = Field(default=0.0, description="Integral of u0")


class CheckResult(BaseModel):
    """Outcome of one named check."""
    name: str
    passed: bool
    margin: float = Field(..., description="Worst margin; negative means violated")
    detail: str = ""


class ValidationReport(BaseModel):
    """Outcome of all hypothesis checks on a problem."""
    checks: List[CheckResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def get(self, name: str) -> CheckResult:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)


class GeometryCheck(BaseModel):
    """Worst ratio d(x) / ((K1/4) dist(x, {d=0})^2) over the samples."""
    ratio: float
    worst_x: Optional[float] = None
    no_degeneracy: bool = False
