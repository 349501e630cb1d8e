"""
Unit tests for lorenz_map.py

Evaluation of the standard family, branches, critical orbits and the JSON form.
"""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from error_handler import LorenzDomainError, RepresentationError
from lorenz_map import (
    Interval,
    LorenzMap,
    StandardParams,
    critical_orbit,
    inverse_branch,
    lorenz_derivative,
    lorenz_eval,
    negative_schwarzian,
    schwarzian,
)
from tests.fixtures.maps import GRID, curved, standard


@pytest.mark.unit
class TestStandardParams:
    """Parameter validation"""

    @pytest.mark.parametrize("u, v, c, rho", [
        (1.2, 0.5, 0.5, 2.0),
        (0.5, -0.1, 0.5, 2.0),
        (0.5, 0.5, 0.0, 2.0),
        (0.5, 0.5, 1.0, 2.0),
        (0.5, 0.5, 0.5, 1.0),
        (float("nan"), 0.5, 0.5, 2.0),
    ])
    def test_out_of_range_rejected(self, u, v, c, rho):
        with pytest.raises(LorenzDomainError):
            StandardParams(u, v, c, rho)

    def test_boundary_values_accepted(self):
        params = StandardParams(0.0, 1.0, 0.3, 1.5)
        assert params.mu == pytest.approx(0.7)


@pytest.mark.unit
class TestEvaluation:
    """f = φ∘Q left of c, ψ∘Q right of c"""

    def test_standard_values(self):
        f = standard(u=0.9, v=0.8)
        assert lorenz_eval(0.0, f) == pytest.approx(0.0)
        assert lorenz_eval(1.0, f) == pytest.approx(1.0)
        assert lorenz_eval(0.25, f) == pytest.approx(0.9 * 0.75)
        assert lorenz_eval(0.75, f) == pytest.approx(1.0 - 0.8 * 0.75)

    def test_critical_values(self):
        f = standard(u=0.9, v=0.8)
        assert f.c1_minus == pytest.approx(0.9)
        assert f.c1_plus == pytest.approx(0.2)

    def test_derivative_of_power_branches(self):
        f = standard(u=0.9, v=0.8)
        assert lorenz_derivative(0.25, f) == pytest.approx(0.9 * 2 * 0.25 / 0.25)
        assert lorenz_derivative(0.75, f) == pytest.approx(0.8 * 2 * 0.25 / 0.25)

    def test_evaluation_at_critical_point_is_an_error(self):
        f = standard()
        with pytest.raises(LorenzDomainError):
            f(f.c)
        with pytest.raises(LorenzDomainError):
            f.derivative(np.array([0.1, f.c]))

    def test_evaluation_outside_unit_interval(self):
        with pytest.raises(LorenzDomainError):
            standard()(1.1)

    def test_step_sends_critical_point_right(self):
        f = standard(u=0.9, v=0.8)
        assert f.step(f.c) == pytest.approx(f.c1_plus)

    def test_coefficients_are_applied(self):
        f = curved(a=0.3, b=-0.2)
        x = np.array([0.1, 0.3, 0.7, 0.9])
        q = standard()(x)
        expected = np.where(x < 0.5, f.phi(q), f.psi(q))
        np.testing.assert_allclose(f(x), expected, atol=1e-15)

    @given(st.floats(0.0, 1.0).filter(lambda x: x != 0.5))
    def test_values_stay_in_unit_interval(self, x):
        y = curved()(x)
        assert 0.0 <= y <= 1.0

    def test_branches_increase(self):
        f = curved()
        left = f(np.linspace(0.0, 0.4999, 200))
        right = f(np.linspace(0.5001, 1.0, 200))
        assert np.all(np.diff(left) > 0)
        assert np.all(np.diff(right) > 0)


@pytest.mark.unit
class TestInverseBranches:
    """f₀⁻¹ and f₁⁻¹"""

    def test_round_trip_left(self):
        f = curved()
        xs = np.linspace(0.0, 0.49, 25)
        np.testing.assert_allclose(inverse_branch(f(xs), f, "left"), xs, atol=1e-10)

    def test_round_trip_right(self):
        f = curved()
        xs = np.linspace(0.51, 1.0, 25)
        np.testing.assert_allclose(f.inverse_branch(f(xs), "right"), xs, atol=1e-10)

    def test_outside_branch_image(self):
        f = standard(u=0.6)
        with pytest.raises(LorenzDomainError):
            inverse_branch(0.8, f, "left")

    def test_unknown_side(self):
        with pytest.raises(LorenzDomainError):
            inverse_branch(0.5, standard(), "middle")


@pytest.mark.unit
class TestDynamics:
    """Nontriviality, critical orbits and the Schwarzian"""

    def test_nontrivial(self):
        assert standard(u=0.9, v=0.8).is_nontrivial()
        assert not standard(u=0.4, v=0.8).is_nontrivial()
        assert not standard(u=0.9, v=0.3).is_nontrivial()

    def test_critical_orbit_follows_step(self):
        f = standard(u=0.9, v=0.8)
        orbit = critical_orbit(f, "-", 4)
        assert not orbit.collided
        assert orbit.points[0] == pytest.approx(0.9)
        assert orbit.points[1] == pytest.approx(float(f.step(0.9)))
        assert len(orbit.points) == 4

    def test_critical_orbit_collision(self):
        f = standard(u=0.5, v=0.8)
        orbit = critical_orbit(f, "-", 5)
        assert orbit.collided
        assert orbit.collision_step == 1

    @pytest.mark.parametrize("k", [2, 3])
    def test_critical_orbit_collision_at_last_point(self, k):
        # c₂⁻ = f(0.6) = 1 − 0.96·v = c
        f = standard(u=0.6, v=0.5 / 0.96)
        orbit = critical_orbit(f, "-", k)
        assert orbit.collision_step == 2
        assert len(orbit.points) == 2
        assert orbit.points[-1] == pytest.approx(f.c, abs=1e-13)

    def test_critical_orbit_bad_side(self):
        with pytest.raises(LorenzDomainError):
            critical_orbit(standard(), "left", 3)

    def test_standard_map_has_negative_schwarzian(self):
        assert negative_schwarzian(standard(), samples=200)

    def test_schwarzian_of_square_branch(self):
        # Q(x) = u(1 − 4(1/2 − x)²) has S = −3/(2(1/2 − x)²)
        f = standard(u=0.9, v=0.8)
        x = np.array([0.1, 0.3])
        expected = -1.5 / (0.5 - x) ** 2
        np.testing.assert_allclose(schwarzian(f, x), expected, rtol=1e-4)


@pytest.mark.unit
class TestSerialization:
    """to_dict / from_dict"""

    def test_identity_coefficients_serialize_as_id(self):
        data = standard().to_dict()
        assert data["phi"] == "id"
        assert data["psi"] == "id"
        assert data["rho"] == 2.0

    def test_grid_coefficients_preserved(self):
        f = curved(a=0.3, b=-0.2)
        g = LorenzMap.from_dict(f.to_dict(), GRID)
        xs = np.array([0.2, 0.8])
        np.testing.assert_array_equal(g(xs), f(xs))

    def test_missing_keys(self):
        with pytest.raises(LorenzDomainError):
            LorenzMap.from_dict({"u": 0.5, "v": 0.5, "c": 0.5})

    def test_bad_coefficient(self):
        with pytest.raises(RepresentationError):
            LorenzMap.from_dict({"u": 0.5, "v": 0.5, "c": 0.5, "rho": 2.0, "phi": [1, 2, 3]})

    def test_with_params(self):
        f = curved()
        g = f.with_params(u=0.95)
        assert g.u == 0.95
        assert g.phi is f.phi


@pytest.mark.unit
class TestInterval:
    """Closed subintervals of [0,1]"""

    def test_length_and_containment(self):
        iv = Interval(0.2, 0.6)
        assert iv.length == pytest.approx(0.4)
        assert iv.contains(0.2)
        assert not iv.contains(0.7)
        assert iv.contains_interval(Interval(0.3, 0.5))
        assert iv.interior_disjoint(Interval(0.6, 0.9))

    def test_out_of_order(self):
        with pytest.raises(LorenzDomainError):
            Interval(0.6, 0.2)
