"""
Unit tests for fixed_point.py

Coordinate packing, the renormalization cycle and the periodic point search.
"""

import numpy as np
import pytest

from combinatorics import MonotoneType
from error_handler import CombinatoricsLost, IslandSearchFailure, LorenzDomainError, NoConvergence
from fixed_point import (
    RenormalizationCycle,
    _advance,
    _correct_unstable,
    _reseed,
    _try_cycle,
    _uv_residual,
    find_fixed_point,
    pack,
    unpack,
)
from metrics_collector import metrics
from renormalization import map_distance
from tests.fixtures.maps import GRID, curved, island_witness, standard


@pytest.mark.unit
class TestCoordinates:
    """(u, v, c, N_φ, N_ψ) vectors"""

    def test_pack_layout(self):
        f = curved(u=0.9, v=0.8, c=0.45, a=0.3, b=-0.2)
        x = pack(f, GRID)
        assert x.size == 3 + 2 * GRID
        np.testing.assert_allclose(x[:3], [0.9, 0.8, 0.45])
        np.testing.assert_allclose(x[3:3 + GRID], 0.3)
        np.testing.assert_allclose(x[3 + GRID:], -0.2)

    def test_unpack_inverts_pack(self):
        f = curved(a=0.3, b=-0.2)
        g = unpack(pack(f, GRID), f.rho, GRID)
        assert map_distance(f, g) == 0.0

    def test_unpack_clips_parameters(self):
        x = pack(standard(), GRID)
        x[0] = 1.0 + 1e-9
        assert unpack(x, 2.0, GRID).u == 1.0


@pytest.mark.unit
class TestCycle:
    """Composition of renormalization steps"""

    def test_orbit_of_witness(self):
        cycle = RenormalizationCycle([MonotoneType(1, 3)], GRID, 1e-9)
        maps = cycle.orbit(island_witness())
        assert len(maps) == 2
        assert maps[1].is_nontrivial()

    def test_lost_combinatorics(self):
        cycle = RenormalizationCycle([MonotoneType(1, 3)], GRID, 1e-9)
        cycle.iteration = 7
        with pytest.raises(CombinatoricsLost) as exc_info:
            cycle(standard(u=0.4))
        diagnostics = exc_info.value.diagnostics
        assert diagnostics["iteration"] == 7
        assert diagnostics["type"] == [1, 3]
        assert diagnostics["cause"] == "NotRenormalizable"
        assert diagnostics["map"]["u"] == 0.4

    def test_unstable_correction_never_worsens(self):
        cycle = RenormalizationCycle([MonotoneType(1, 3)], GRID, 1e-9)
        f = island_witness()
        before = np.max(np.abs(_uv_residual(cycle, f, f.u, f.v)))
        g = _correct_unstable(cycle, f, 1e-7)
        after = np.max(np.abs(_uv_residual(cycle, g, g.u, g.v)))
        assert after <= before


@pytest.mark.unit
class TestSearch:
    """find_fixed_point"""

    def test_empty_sequence(self):
        with pytest.raises(LorenzDomainError):
            find_fixed_point([], standard())

    def test_budget_exhausted(self):
        with pytest.raises(NoConvergence) as exc_info:
            find_fixed_point([(1, 3)], island_witness(), tol=1e-300, budget=1, grid_size=GRID)
        diagnostics = exc_info.value.diagnostics
        assert len(diagnostics["trace"]) == 1
        assert diagnostics["types"] == [[1, 3]]
        assert metrics.snapshot()["fixed_point_iterations_total"] == 1

    def test_seed_must_renormalize(self):
        with pytest.raises(CombinatoricsLost):
            find_fixed_point([(1, 3)], standard(u=0.4), budget=3, grid_size=GRID)


@pytest.mark.unit
class TestIterateStaysRenormalizable:
    """Moving an iterate back into the island of its slice"""

    def test_image_kept_when_renormalizable(self):
        cycle = RenormalizationCycle([MonotoneType(1, 3)], GRID, 1e-9)
        f = _correct_unstable(cycle, island_witness(), 1e-7)
        g = cycle(f)
        nxt = _advance(cycle, f, g, 1)
        assert _try_cycle(cycle, nxt) is not None
        if _try_cycle(cycle, g) is not None:
            assert nxt is g

    def test_lost_image_is_reseeded(self, mocker):
        cycle = RenormalizationCycle([MonotoneType(1, 3)], GRID, 1e-9)
        lost = standard(u=0.4, v=0.3)
        reseeded = island_witness()
        reseed = mocker.patch("fixed_point._reseed", return_value=reseeded)
        assert _advance(cycle, lost, lost, 3) is reseeded
        reseed.assert_called_once_with(cycle, lost, 3)

    def test_failed_reseed_damps_toward_image(self, mocker):
        cycle = RenormalizationCycle([MonotoneType(1, 3)], GRID, 1e-9)
        f = island_witness()
        lost = curved(u=0.4, v=0.3, c=0.45)
        mocker.patch("fixed_point._reseed", side_effect=CombinatoricsLost("none", {}))
        nxt = _advance(cycle, f, lost, 1)
        assert _try_cycle(cycle, nxt) is not None

    def test_reseed_failure_is_lost_combinatorics(self, mocker):
        cycle = RenormalizationCycle([MonotoneType(1, 3)], GRID, 1e-9)
        cycle.iteration = 4
        mocker.patch("fixed_point.nested_island_search", side_effect=IslandSearchFailure(1))
        with pytest.raises(CombinatoricsLost) as exc_info:
            _reseed(cycle, curved(), 2)
        diagnostics = exc_info.value.diagnostics
        assert diagnostics["iteration"] == 4
        assert diagnostics["cause"] == "IslandSearchFailure"

    @pytest.mark.slow
    def test_reseed_holds_slice(self):
        cycle = RenormalizationCycle([MonotoneType(1, 3)], GRID, 1e-9)
        g = cycle(island_witness()).with_params(u=0.5, v=0.5)
        h = _reseed(cycle, g, 1)
        assert (h.c, h.rho) == (g.c, g.rho)
        assert h.phi is g.phi and h.psi is g.psi
        assert _try_cycle(cycle, h) is not None
        assert metrics.snapshot()["fixed_point_reseeds_total"] == 1


@pytest.mark.slow
@pytest.mark.unit
class TestPeriodicPointOfType13:
    """The (1,3) fixed point at rho = 2 from a depth-2 island seed"""

    TOL = 1e-6

    @pytest.fixture(scope="class")
    def result(self):
        return find_fixed_point([(1, 3)], island_witness(2), tol=self.TOL, budget=100, grid_size=GRID)

    def test_converges(self, result):
        assert result.distance <= self.TOL
        assert result.iterations == len(result.trace) <= 100
        assert result.to_dict()["types"] == [[1, 3]]

    def test_trace_decreases_over_last_iterations(self, result):
        tail = result.trace[-20:]
        assert len(tail) >= 2
        assert tail[-1] < tail[0]
        assert tail[-1] == min(tail)

    def test_cycle_image_matches(self, result):
        cycle = RenormalizationCycle(result.types, GRID, 1e-9)
        image = cycle(result.map)
        assert map_distance(image, result.map) <= self.TOL
        for name in ("u", "v", "c"):
            assert abs(getattr(image, name) - getattr(result.map, name)) < 10 * self.TOL

    def test_orbit_has_one_map_per_type(self, result):
        assert len(result.orbit) == 1
        assert map_distance(result.orbit[0], result.map) == 0.0
