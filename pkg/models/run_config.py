"""
Run configuration schema.

The text format lives in config/parser.py; these models only validate
values and apply defaults.
"""
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models.run import DEFAULT_A, StepControls

ParamValue = Union[float, List[float]]


class FunctionSpec(BaseModel):
    """A formula family tag with its numeric parameters."""
    model_config = ConfigDict(extra="forbid")

    tag: str
    params: Dict[str, ParamValue] = Field(default_factory=dict)


class ProblemBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "problem"
    interval: List[float] = Field(default_factory=lambda: [0.0, 1.0])
    d: FunctionSpec
    f: FunctionSpec = Field(default_factory=lambda: FunctionSpec(tag="zero"))
    rho: FunctionSpec = Field(default_factory=lambda: FunctionSpec(tag="zero"))
    g: FunctionSpec
    u0: FunctionSpec
    w0: FunctionSpec
    delta: float = Field(..., gt=0)

    @field_validator("interval")
    @classmethod
    def _check_interval(cls, v: List[float]) -> List[float]:
        if len(v) != 2 or not v[0] < v[1]:
            raise ValueError("interval must be two numbers a < b")
        return v


class DiscretizationBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(default=200, ge=4)
    cfl: float = Field(default=0.45, gt=0, le=1)
    dt_max: float = Field(default=1e-3, gt=0)
    tol_lb: float = Field(default=1e-8, ge=0)
    tol_ub: float = Field(default=1e-8, ge=0)
    theta_w: bool = True
    u_ceiling: float = Field(default=1e8, gt=0)
    w_h1_ceiling: float = Field(default=1e8, gt=0)
    inv_g_ceiling: float = Field(default=1e14, gt=0)
    max_steps: int = Field(default=10_000_000, ge=1)
    n_samples: int = Field(default=2000, ge=10)

    def controls(self) -> StepControls:
        return StepControls(
            cfl=self.cfl, dt_max=self.dt_max, tol_lb=self.tol_lb, tol_ub=self.tol_ub, theta_w=self.theta_w,
            u_ceiling=self.u_ceiling, w_h1_ceiling=self.w_h1_ceiling, inv_g_ceiling=self.inv_g_ceiling,
            max_steps=self.max_steps,
        )


class ScheduleBlock(BaseModel):
    """Either an explicit eps_list or a geometric generator base * ratio^k."""
    model_config = ConfigDict(extra="forbid")

    eps_list: List[float] = Field(default_factory=list)
    base: Optional[float] = Field(default=None, gt=0)
    ratio: Optional[float] = Field(default=None, gt=0, lt=1)
    count: Optional[int] = Field(default=None, ge=1)
    A: float = Field(default=DEFAULT_A)

    @field_validator("eps_list")
    @classmethod
    def _check_decreasing(cls, v: List[float]) -> List[float]:
        if any(e <= 0 for e in v):
            raise ValueError("eps_list entries must be positive")
        if any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("eps_list must be strictly decreasing")
        return v

    @field_validator("A")
    @classmethod
    def _check_A(cls, v: float) -> float:
        if v < DEFAULT_A * (1 - 1e-15):
            raise ValueError(f"A must be at least e^e = {DEFAULT_A!r}")
        return v

    @model_validator(mode="after")
    def _check_generator(self):
        generator = (self.base, self.ratio, self.count)
        if any(g is not None for g in generator):
            if any(g is None for g in generator):
                raise ValueError("geometric schedule needs base, ratio and count")
            if self.eps_list:
                raise ValueError("give either eps_list or base/ratio/count, not both")
        return self

    def resolved(self) -> List[float]:
        if self.base is not None:
            return [self.base * self.ratio ** k for k in range(self.count)]
        return list(self.eps_list)


class ExperimentBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    T: float = Field(default=1.0, gt=0)
    output_times: Optional[List[float]] = None
    output_count: int = Field(default=101, ge=2)
    d_floor: float = Field(default=0.01, ge=0)
    margin: float = Field(default=0.1, ge=0)
    battery_size: int = Field(default=6, ge=1)
    u_scan: Optional[float] = Field(default=None, gt=0)
    thresholds: List[float] = Field(default_factory=lambda: [1.0, 10.0, 100.0], min_length=1)
    tol_zero: Optional[float] = Field(default=None, ge=0)
    weak_tol: Optional[float] = Field(default=None, gt=0)

    @field_validator("output_times")
    @classmethod
    def _check_times(cls, v: Optional[List[float]]) -> Optional[List[float]]:
        if v is not None and any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("output_times must be strictly increasing")
        return v

    def resolved_times(self) -> List[float]:
        if self.output_times is not None:
            return list(self.output_times)
        return [self.T * k / (self.output_count - 1) for k in range(self.output_count)]


class OutputBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: str = "output"
    plots: bool = True
    seed: int = 0


class RunConfig(BaseModel):
    """A complete run configuration."""
    model_config = ConfigDict(extra="forbid")

    problem: ProblemBlock
    discretization: DiscretizationBlock = Field(default_factory=DiscretizationBlock)
    schedule: ScheduleBlock = Field(default_factory=ScheduleBlock)
    experiment: ExperimentBlock = Field(default_factory=ExperimentBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)


SECTIONS = {
    "problem": ProblemBlock,
    "discretization": DiscretizationBlock,
    "schedule": ScheduleBlock,
    "experiment": ExperimentBlock,
    "output": OutputBlock,
}
FUNCTION_KEYS = ("d", "f", "rho", "g", "u0", "w0")
LIST_KEYS = ("interval", "eps_list", "output_times", "thresholds")
