import numpy as np
import pytest

from models.errors import InvalidValue
from services.functions import TabulatedFunction, build_reaction, build_scalar, build_spatial

from conftest import make_spec


def test_plateau_family_vanishes_on_the_plateau():
    d = build_spatial("plateau", {"center": 0.5, "half_width": 0.2})
    x = np.array([0.0, 0.3, 0.5, 0.7, 0.9])
    np.testing.assert_allclose(d(x), [0.09, 0.0, 0.0, 0.0, 0.04], atol=1e-15)


def test_cosine_and_constant_families():
    u0 = build_spatial("cosine", {"mean": 1.0, "amplitude": 0.5, "wavenumber": 2.0})
    assert u0(np.array([0.0, 0.25, 0.5])) == pytest.approx([1.5, 1.0, 0.5])
    one = build_spatial("constant", {"value": 1.0})
    assert one(np.zeros(3)).tolist() == [1.0, 1.0, 1.0]


def test_scalar_families_carry_derivatives():
    g, gp = build_scalar("logistic", {"rate": 1.0, "capacity": 1.0})
    w = np.array([0.1, 0.25])
    assert g(w) == pytest.approx(w * (1 - w))
    assert gp(w) == pytest.approx(1 - 2 * w)

    g, gp = build_scalar("polynomial", {"coefficients": [0.0, 2.0, 3.0]})
    assert g(np.array([1.0]))[0] == pytest.approx(5.0)
    assert gp(np.array([1.0]))[0] == pytest.approx(8.0)


def test_reaction_families_broadcast():
    f = build_reaction("linear", {"intercept": 1.0, "slope": -1.0})
    x = np.linspace(0, 1, 4)
    assert f(x, 2.0, 0.5).shape == (4,)
    assert f(x, 2.0, 0.5) == pytest.approx(-np.ones(4))

    tissue = build_reaction("tissue_logistic", {"rate": 2.0, "capacity": 1.0})
    assert tissue(0.0, 0.5, 0.5) == pytest.approx(0.5)


def test_tabulated_is_monotone_between_points():
    table = TabulatedFunction([0.0, 0.5, 1.0], [0.0, 0.9, 1.0])
    x = np.linspace(0, 1, 101)
    assert np.all(np.diff(table(x)) >= 0)
    assert table(0.5) == pytest.approx(0.9)


@pytest.mark.parametrize("builder, tag, params", [
    (build_spatial, "nope", {}),
    (build_spatial, "plateau", {"center": 0.5}),
    (build_spatial, "constant", {"value": 1.0, "extra": 2.0}),
    (build_scalar, "logistic", {"capacity": -1.0}),
    (build_reaction, "sine", {}),
])
def test_invalid_family_descriptions(builder, tag, params):
    with pytest.raises(InvalidValue):
        builder(tag, params)


def test_tabulated_requires_increasing_points():
    with pytest.raises(InvalidValue):
        TabulatedFunction([0.0, 0.0, 1.0], [0.0, 1.0, 2.0])


def test_build_problem_maps_every_function():
    spec = make_spec()
    assert spec.name == "plateau"
    assert (spec.a, spec.b) == (0.0, 1.0)
    assert spec.g_prime is not None
    assert spec.f_at(0.5, 1.0, 0.5) == pytest.approx(0.0)
    assert spec.rho_at(1.0) == pytest.approx(0.0)
