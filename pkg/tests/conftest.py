"""
Shared fixtures: the plateau problem on (0, 1).

    d(x)  = (max(0, |x - 0.5| - 0.2))^2      zero on [0.3, 0.7]
    u0(x) = 1 + cos(2 pi x) / 2
    w0(x) = 0.5 + 0.3 cos(pi x)
    g(w)  = w,  f = rho = 0,  delta = 0.2     (M = 1)
"""
import numpy as np
import pytest

from models.run import RegLevel, StepControls
from models.run_config import FunctionSpec, ProblemBlock
from services.functions import build_problem
from services.grid import Grid1D
from services.model_spec import derive_constants

PLATEAU_CFG = """\
# plateau problem
[problem]
name = plateau
interval = 0, 1
d = plateau(center=0.5, half_width=0.2)
u0 = cosine(mean=1, amplitude=0.5, wavenumber=2)
w0 = cosine(mean=0.5, amplitude=0.3, wavenumber=1)
g = linear(slope=1)
delta = 0.2

[discretization]
n = 200

[schedule]
eps_list = 0.01, 0.001, 0.0001

[experiment]
T = 1
"""


def make_block(**overrides) -> ProblemBlock:
    fields = dict(
        name="plateau",
        d=FunctionSpec(tag="plateau", params={"center": 0.5, "half_width": 0.2}),
        u0=FunctionSpec(tag="cosine", params={"mean": 1.0, "amplitude": 0.5, "wavenumber": 2.0}),
        w0=FunctionSpec(tag="cosine", params={"mean": 0.5, "amplitude": 0.3, "wavenumber": 1.0}),
        g=FunctionSpec(tag="linear", params={"slope": 1.0}),
        delta=0.2,
    )
    fields.update(overrides)
    return ProblemBlock(**fields)


def make_spec(**overrides):
    return build_problem(make_block(**overrides))


def manual_level(grid: Grid1D, eps: float = 1e-2, d_value: float = 1.0, eta: float = 0.25,
                 delta_eps: float = 1e-2, w0=None) -> RegLevel:
    """A level with constant d_eps, bypassing the construction checks."""
    w0 = np.full(grid.n, 0.5) if w0 is None else np.asarray(w0, dtype=float)
    return RegLevel(eps=eps, d_eps=np.full(grid.n, d_value), delta_eps=delta_eps, eta_eps=eta, w0_eps=w0)


@pytest.fixture
def plateau_spec():
    return make_spec()


@pytest.fixture
def plateau_consts(plateau_spec):
    return derive_constants(plateau_spec)


@pytest.fixture
def grid100():
    return Grid1D(a=0.0, b=1.0, n=100)


@pytest.fixture
def grid200():
    return Grid1D(a=0.0, b=1.0, n=200)


@pytest.fixture
def controls():
    return StepControls()


@pytest.fixture
def plateau_cfg(tmp_path):
    path = tmp_path / "plateau.cfg"
    path.write_text(PLATEAU_CFG, encoding="utf-8")
    return path
