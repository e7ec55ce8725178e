import numpy as np
import pytest

from services.grid import Grid1D, classify, divergence, face_average, face_gradient, integrate


def test_grid_geometry():
    grid = Grid1D(a=0.0, b=2.0, n=8)
    assert grid.h == pytest.approx(0.25)
    assert grid.centers[0] == pytest.approx(0.125)
    assert grid.faces.shape == (9,)
    assert grid.faces[-1] == pytest.approx(2.0)


def test_grid_rejects_reversed_interval():
    with pytest.raises(ValueError):
        Grid1D(a=1.0, b=0.0, n=10)


class TestFaceGradient:

    def test_constant_field(self):
        grid = Grid1D(a=0.0, b=1.0, n=10)
        assert np.all(face_gradient(np.full(10, 3.0), grid) == 0.0)

    def test_linear_field(self):
        grid = Grid1D(a=0.0, b=1.0, n=10)
        grad = face_gradient(grid.centers, grid)
        np.testing.assert_allclose(grad[1:-1], 1.0)
        assert grad[0] == 0.0 and grad[-1] == 0.0

    def test_step_field(self):
        grid = Grid1D(a=0.0, b=1.0, n=10)
        v = (grid.centers > 0.5).astype(float)
        grad = face_gradient(v, grid)
        assert np.count_nonzero(grad) == 1
        assert grad[5] == pytest.approx(1.0 / grid.h)


def test_face_average_boundaries():
    avg = face_average(np.array([1.0, 3.0, 5.0]))
    np.testing.assert_allclose(avg, [1.0, 2.0, 4.0, 5.0])


def test_summation_by_parts():
    rng = np.random.default_rng(3)
    grid = Grid1D(a=0.0, b=1.0, n=40)
    u = rng.normal(size=grid.n)
    flux = rng.normal(size=grid.n + 1)
    flux[0] = flux[-1] = 0.0
    lhs = grid.h * np.sum(flux * face_gradient(u, grid))
    rhs = -grid.h * np.sum(u * divergence(flux, grid))
    assert lhs == pytest.approx(rhs, abs=1e-12)


class TestIntegrate:

    def test_ones(self):
        grid = Grid1D(a=0.0, b=1.0, n=17)
        assert integrate(np.ones(17), grid) == pytest.approx(1.0)

    @pytest.mark.parametrize("n", [4, 10, 33])
    def test_midpoint_rule_is_exact_for_linears(self, n):
        grid = Grid1D(a=0.0, b=1.0, n=n)
        assert integrate(grid.centers, grid) == pytest.approx(0.5, abs=1e-14)

    def test_empty_mask(self):
        grid = Grid1D(a=0.0, b=1.0, n=10)
        assert integrate(np.ones(10), grid, mask=np.zeros(10, dtype=bool)) == 0.0


class TestClassify:

    def test_no_degeneracy(self):
        grid = Grid1D(a=0.0, b=1.0, n=20)
        mask = classify(np.ones(20), grid, tol_zero=1e-14)
        assert not mask.has_zero_set
        assert mask.positive_cells.all()

    def test_plateau(self, plateau_spec, grid100):
        mask = classify(plateau_spec.d_at(grid100.centers), grid100, tol_zero=1e-14)
        zero_x = grid100.centers[mask.zero_cells]
        assert mask.zero_cells.sum() == 40
        assert zero_x.min() > 0.3 and zero_x.max() < 0.7
        assert np.array_equal(mask.positive_cells, ~mask.zero_cells)

    def test_plateau_interior_margin(self, plateau_spec, grid100):
        mask = classify(plateau_spec.d_at(grid100.centers), grid100, tol_zero=1e-14, margin=0.1)
        interior_x = grid100.centers[mask.interior_zero_cells]
        assert mask.interior_zero_cells.sum() == 20
        assert interior_x.min() > 0.4 and interior_x.max() < 0.6

    def test_zero_everywhere_is_all_interior(self):
        grid = Grid1D(a=0.0, b=1.0, n=10)
        mask = classify(np.zeros(10), grid, tol_zero=0.0, margin=0.3)
        assert mask.interior_zero_cells.all()
