import logging

import numpy as np
import pytest

from models.run import State, StepControls
from models.run_config import FunctionSpec
from services import pde_solver
from services.grid import Grid1D, integrate
from services.model_spec import derive_constants
from services.regularization import build_level

from conftest import make_spec, manual_level


class TestStableDt:

    def test_advective_bound(self, plateau_spec, grid100):
        level = manual_level(grid100)
        state = State(t=0.0, u=np.zeros(grid100.n), w=grid100.centers.copy())
        dt = pde_solver.stable_dt(state, level, plateau_spec, grid100, StepControls(dt_max=1.0))
        assert dt == pytest.approx(0.0045)

    def test_flat_tissue_gives_dt_max(self, plateau_spec, grid100, controls):
        level = manual_level(grid100)
        state = State(t=0.0, u=np.ones(grid100.n), w=np.full(grid100.n, 0.5))
        assert pde_solver.stable_dt(state, level, plateau_spec, grid100, controls) == controls.dt_max

    def test_refinement_halves_the_advective_bound(self, plateau_spec):
        dts = []
        for n in (100, 200):
            grid = Grid1D(a=0.0, b=1.0, n=n)
            state = State(t=0.0, u=np.zeros(n), w=grid.centers.copy())
            dts.append(pde_solver.stable_dt(state, manual_level(grid), plateau_spec, grid, StepControls(dt_max=1.0)))
        assert dts[1] == pytest.approx(dts[0] / 2)

    def test_explicit_tissue_diffusion_adds_parabolic_bound(self, plateau_spec, grid100):
        level = manual_level(grid100)
        state = State(t=0.0, u=np.zeros(grid100.n), w=grid100.centers.copy())
        dt = pde_solver.stable_dt(state, level, plateau_spec, grid100, StepControls(dt_max=1.0, theta_w=False))
        assert dt == pytest.approx(0.45 * grid100.h ** 2)


class TestStep:

    def test_absorption_only(self, plateau_spec, plateau_consts, grid100, controls):
        level = manual_level(grid100, eta=0.25)
        state = State(t=0.0, u=np.ones(grid100.n), w=np.full(grid100.n, 0.6))
        new = pde_solver.step(state, 0.1, level, plateau_spec, plateau_consts, grid100, controls)
        np.testing.assert_allclose(new.u, 1.0, rtol=1e-12)
        np.testing.assert_allclose(new.w, 0.552, rtol=1e-12)
        assert new.t == pytest.approx(0.1)

    def test_zero_density_leaves_pure_tissue_diffusion(self, plateau_spec, plateau_consts, grid100, controls):
        level = build_level(plateau_spec, plateau_consts, grid100, 1e-2)
        state = State(t=0.0, u=np.zeros(grid100.n), w=level.w0_eps.copy())
        new = pde_solver.step(state, 0.01, level, plateau_spec, plateau_consts, grid100, controls)
        assert np.all(new.u == 0.0)
        assert new.w.max() < state.w.max()
        assert new.w.min() > state.w.min()

    def test_mass_balance_per_step(self, plateau_spec, plateau_consts, grid100, controls):
        level = build_level(plateau_spec, plateau_consts, grid100, 1e-3)
        state = State(t=0.0, u=plateau_spec.u0_at(grid100.centers), w=level.w0_eps.copy())
        mass0 = integrate(state.u, grid100)
        for _ in range(50):
            dt = pde_solver.stable_dt(state, level, plateau_spec, grid100, controls)
            state = pde_solver.step(state, dt, level, plateau_spec, plateau_consts, grid100, controls)
        assert abs(integrate(state.u, grid100) - mass0) <= 1e-12 * mass0
        assert state.u.min() >= 0.0


class TestRun:

    def test_plateau_run_conserves_mass(self, plateau_spec, plateau_consts, grid100):
        level = build_level(plateau_spec, plateau_consts, grid100, 1e-3)
        result = pde_solver.run(level, plateau_spec, plateau_consts, grid100, 0.2)
        assert result.status.completed
        assert result.within_gate
        mass = result.series["mass"]
        assert np.max(np.abs(mass - mass[0])) <= 1e-10 * mass[0]
        assert result.series["min_u"].min() >= 0.0
        assert result.series["max_w"].max() <= plateau_consts.M + 1e-8
        assert result.series["t"][-1] == 0.2

    def test_snapshots_land_on_output_times(self, plateau_spec, plateau_consts, grid100):
        level = build_level(plateau_spec, plateau_consts, grid100, 1e-3)
        times = [0.0, 0.0123, 0.05, 0.1]
        result = pde_solver.run(level, plateau_spec, plateau_consts, grid100, 0.1, output_times=times)
        assert result.times.tolist() == times
        assert result.u_matrix().shape == (4, grid100.n)

    def test_nondegenerate_problem_completes(self):
        spec = make_spec(d=FunctionSpec(tag="constant", params={"value": 1.0}))
        consts = derive_constants(spec)
        grid = Grid1D(a=0.0, b=1.0, n=50)
        level = build_level(spec, consts, grid, 1e-2)
        result = pde_solver.run(level, spec, consts, grid, 1.0)
        assert result.status.completed
        assert not result.within_gate
        assert len(result.snapshots) == 101
        assert result.series["max_u"].max() < 10.0

    def test_low_ceiling_trips_the_detector(self, plateau_spec, plateau_consts, grid100):
        level = build_level(plateau_spec, plateau_consts, grid100, 1e-3)
        controls = StepControls(u_ceiling=0.75)
        result = pde_solver.run(level, plateau_spec, plateau_consts, grid100, 1.0, controls)
        assert result.status.kind == "blow_up"
        assert result.status.quantity == "u_inf"
        assert result.status.t == 0.0

    def test_step_limit(self, plateau_spec, plateau_consts, grid100):
        level = build_level(plateau_spec, plateau_consts, grid100, 1e-3)
        result = pde_solver.run(level, plateau_spec, plateau_consts, grid100, 1.0, StepControls(max_steps=3))
        assert not result.status.completed
        assert result.status.quantity == "step_limit"
        assert len(result.series) == 4

    def test_explicit_tissue_diffusion(self, plateau_spec, plateau_consts, grid100):
        level = build_level(plateau_spec, plateau_consts, grid100, 1e-3)
        result = pde_solver.run(level, plateau_spec, plateau_consts, grid100, 0.01, StepControls(theta_w=False),
                                output_times=[0.0, 0.01])
        assert result.status.completed
        assert result.series["min_w"].min() > 0.0

    def test_upper_barrier_breach_is_logged_once(self, plateau_spec, plateau_consts, grid100, caplog):
        level = manual_level(grid100, w0=np.full(grid100.n, 1.5))
        caplog.set_level(logging.WARNING, logger="services.pde_solver")
        result = pde_solver.run(level, plateau_spec, plateau_consts, grid100, 0.01, output_times=[0.0, 0.01])
        assert result.status.completed
        assert result.series["max_w"][-1] > plateau_consts.M
        breaches = [r for r in caplog.records if "barrier w_upper" in r.getMessage()]
        assert len(breaches) == 1
        assert "t=0" in breaches[0].getMessage()

    def test_admissible_run_logs_no_breach(self, plateau_spec, plateau_consts, grid100, caplog):
        level = build_level(plateau_spec, plateau_consts, grid100, 1e-3)
        caplog.set_level(logging.WARNING, logger="services.pde_solver")
        pde_solver.run(level, plateau_spec, plateau_consts, grid100, 0.05)
        assert not [r for r in caplog.records if "barrier" in r.getMessage()]
