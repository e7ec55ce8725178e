"""
Report models produced by the estimate monitors and the experiments.
"""
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from models.run import RunResult, Schedule


class EntropyConstants(BaseModel):
    """Explicit constants of the entropy estimate for one level and horizon."""
    model_config = ConfigDict(frozen=True)

    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    c6: float
    c7: float
    m_T: float = Field(..., description="Mass ceiling (integral of u0) e^{rho(M) T}")
    length: float
    T: float


class EstimateCheck(BaseModel):
    """One monitored bound.

    For ``kind == "upper"`` the check asserts observed <= bound; for
    ``"lower"`` observed >= bound. ``margin`` is signed so that a negative
    value is a violation in both cases.
    """
    name: str
    kind: Literal["upper", "lower"] = "upper"
    bound: float
    observed: float
    margin: float
    passed: bool
    detail: str = ""

    @classmethod
    def upper(cls, name: str, bound: float, observed: float, detail: str = "") -> "EstimateCheck":
        margin = bound - observed
        return cls(name=name, kind="upper", bound=bound, observed=observed, margin=margin,
                   passed=bool(np.isfinite(observed) and margin >= 0), detail=detail)

    @classmethod
    def lower(cls, name: str, bound: float, observed: float, detail: str = "") -> "EstimateCheck":
        margin = observed - bound
        return cls(name=name, kind="lower", bound=bound, observed=observed, margin=margin,
                   passed=bool(np.isfinite(observed) and margin >= 0), detail=detail)


class EquiintegrabilityRow(BaseModel):
    N: float
    kappa: float
    superlevel_measure: float
    tail_f: float
    tail_g: float
    ceiling: Optional[float] = None


class EstimateReport(BaseModel):
    """All monitored bounds for one run."""
    eps: float
    within_gate: bool = True
    checks: List[EstimateCheck] = Field(default_factory=list)
    kappa_table: List[Dict[str, float]] = Field(default_factory=list)
    equiintegrability: List[EquiintegrabilityRow] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def get(self, name: str) -> EstimateCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    @property
    def failed(self) -> List[EstimateCheck]:
        return [c for c in self.checks if not c.passed]


class EntropyTrace(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    times: np.ndarray
    y: np.ndarray
    h: np.ndarray
    constants: EntropyConstants


class WeakResidualEntry(BaseModel):
    """Normalized residuals of both weak identities for one test function."""
    label: str
    residual_u: float
    residual_w: float
    defect_u: float
    defect_w: float
    scale_u: float
    scale_w: float


class WeakResidualReport(BaseModel):
    entries: List[WeakResidualEntry] = Field(default_factory=list)
    battery: str = ""

    @property
    def aggregate_u(self) -> float:
        scale = sum(e.scale_u for e in self.entries)
        return sum(e.defect_u for e in self.entries) / scale if scale > 0 else 0.0

    @property
    def aggregate_w(self) -> float:
        scale = sum(e.scale_w for e in self.entries)
        return sum(e.defect_w for e in self.entries) / scale if scale > 0 else 0.0


class CauchyRow(BaseModel):
    k: int
    eps_coarse: float
    eps_fine: float
    dist_u: float
    dist_w: float


class OdeErrorRow(BaseModel):
    """Sup errors over output times, and errors at the last output time."""
    eps: float
    err_u: float
    err_w: float
    err_u_final: float = 0.0
    err_w_final: float = 0.0
    cells: int


class ConvergenceRow(BaseModel):
    n: int
    error: float
    order: Optional[float] = None


class SelfConvergenceReport(BaseModel):
    eps: float
    n_ref: int
    T: float
    rows: List[ConvergenceRow]
    fitted_order: float


class SweepResult(BaseModel):
    """Runs, audits and the limit candidate of an eps sweep."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    schedule: Schedule
    runs: List[RunResult]
    reports: List[EstimateReport]

    @property
    def candidate(self) -> RunResult:
        """The finest level's run."""
        return self.runs[-1]
