"""
Data types of a regularized run: levels, schedules, states, step controls and
the recorded trajectory.
"""
import math
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

DEFAULT_A = math.exp(math.e)


class RegLevel(BaseModel):
    """One member of the regularized family."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    eps: float = Field(..., gt=0)
    d_eps: np.ndarray = Field(..., description="Smoothed, floored diffusion on cells")
    delta_eps: float = Field(..., gt=0)
    eta_eps: float = Field(..., gt=0, lt=1)
    w0_eps: np.ndarray = Field(..., description="w0 + sqrt(delta_eps) on cells")
    A: float = DEFAULT_A
    sup_dist: float = Field(default=0.0, description="max |d_eps - d| on cells")

    @property
    def barrier_rate_scale(self) -> float:
        """ln(1/sqrt(delta_eps))."""
        return -0.5 * math.log(self.delta_eps)

    def gate(self, Gamma: float) -> float:
        """Largest horizon on which the lower barrier stays above delta_eps."""
        return self.eta_eps / Gamma * self.barrier_rate_scale

    def lower_barrier(self, t, Gamma: float):
        return math.sqrt(self.delta_eps) * np.exp(-Gamma * np.asarray(t, dtype=float) / self.eta_eps)


class Schedule(BaseModel):
    """Levels ordered by strictly decreasing eps."""
    model_config = ConfigDict(frozen=True)

    levels: List[RegLevel] = Field(default_factory=list)
    eps0: float

    @model_validator(mode="after")
    def _check_monotone(self):
        for prev, cur in zip(self.levels, self.levels[1:]):
            if not cur.eps < prev.eps:
                raise ValueError("eps must be strictly decreasing along the schedule")
            if not cur.delta_eps < prev.delta_eps:
                raise ValueError("delta_eps must be strictly decreasing along the schedule")
            if not cur.eta_eps * cur.barrier_rate_scale > prev.eta_eps * prev.barrier_rate_scale:
                raise ValueError("eta_eps * ln(1/sqrt(delta_eps)) must increase along the schedule")
        return self

    def __len__(self) -> int:
        return len(self.levels)


class StepControls(BaseModel):
    """Time-stepping knobs and blow-up ceilings."""
    model_config = ConfigDict(frozen=True)

    cfl: float = Field(default=0.45, gt=0, le=1)
    dt_max: float = Field(default=1e-3, gt=0)
    tol_lb: float = Field(default=1e-8, ge=0)
    tol_ub: float = Field(default=1e-8, ge=0)
    theta_w: bool = True

    # Surrogates of the extensibility criterion
    u_ceiling: float = Field(default=1e8, gt=0, description="Ceiling for max u")
    w_h1_ceiling: float = Field(default=1e8, gt=0, description="Ceiling for max|w| + max|w_x|")
    inv_g_ceiling: float = Field(default=1e14, gt=0, description="Ceiling for 1 / min g(w)")
    max_steps: int = Field(default=10_000_000, ge=1)


class State(BaseModel):
    """Cell values of (u, w) at time t."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    t: float
    u: np.ndarray
    w: np.ndarray


class Snapshot(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    t: float
    u: np.ndarray
    w: np.ndarray


SERIES_COLUMNS = (
    "t", "dt", "mass", "min_u", "max_u", "min_w", "max_w", "y", "h",
    "fisher", "log_taxis", "sink", "w_grad_energy", "taxis_energy",
    "grad_l1_sq", "linf_sq", "l3", "superlevel_entropy", "reaction",
    "w_h1", "inv_g",
)


class DiagnosticSeries(BaseModel):
    """Per-step scalar diagnostics; row 0 is the initial state (dt = 0)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data: Dict[str, np.ndarray]

    @classmethod
    def from_rows(cls, rows: List[Dict[str, float]]) -> "DiagnosticSeries":
        return cls(data={c: np.array([r[c] for r in rows], dtype=float) for c in SERIES_COLUMNS})

    def __getitem__(self, column: str) -> np.ndarray:
        return self.data[column]

    def __len__(self) -> int:
        return len(self.data["t"])


class RunStatus(BaseModel):
    kind: Literal["completed", "blow_up"] = "completed"
    t: Optional[float] = None
    quantity: Optional[str] = None
    message: str = ""

    @property
    def completed(self) -> bool:
        return self.kind == "completed"


class RunResult(BaseModel):
    """Trajectory of one level: snapshots at output times plus per-step series."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    level: RegLevel
    snapshots: List[Snapshot]
    series: DiagnosticSeries
    status: RunStatus
    T: float
    within_gate: bool = True

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def u_matrix(self) -> np.ndarray:
        return np.vstack([s.u for s in self.snapshots])

    def w_matrix(self) -> np.ndarray:
        return np.vstack([s.w for s in self.snapshots])
