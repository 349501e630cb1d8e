"""
Unit tests for attractor.py

Generation families, box dimension, the empirical measure and transfer times.
"""

import math

import numpy as np
import pytest

from attractor import (
    GenerationFamily,
    TransferSample,
    box_dimension,
    empirical_measure,
    generations,
    is_nice,
    middle_thirds_families,
    ratio_stats,
    transfer_times,
)
from error_handler import InsufficientData, LorenzDomainError, NiceIntervalError
from lorenz_map import Interval
from tests.fixtures.maps import island_witness, standard


@pytest.fixture(scope="module")
def families():
    return generations(island_witness(), [(1, 3)], 1)


@pytest.mark.unit
class TestMiddleThirds:
    """Calibration on the middle-thirds Cantor set"""

    def test_counts_and_gaps(self):
        fams = middle_thirds_families(3)
        assert [fam.count for fam in fams] == [1, 2, 4, 8]
        assert fams[1].gaps[0].lo == pytest.approx(1.0 / 3.0)
        assert fams[1].gaps[0].hi == pytest.approx(2.0 / 3.0)
        assert fams[3].total_length == pytest.approx((2.0 / 3.0) ** 3)

    def test_box_dimension(self):
        slope, stderr = box_dimension(middle_thirds_families(6))
        assert slope == pytest.approx(math.log(2) / math.log(3), abs=1e-9)
        assert stderr == pytest.approx(0.0, abs=1e-9)

    def test_ratio_stats(self):
        fams = middle_thirds_families(2)
        lo, hi, gap_lo, gap_hi = ratio_stats(fams[2], fams[1])
        assert lo == pytest.approx(1.0 / 3.0)
        assert hi == pytest.approx(1.0 / 3.0)
        assert gap_lo == pytest.approx(1.0 / 3.0)
        assert gap_hi == pytest.approx(1.0 / 3.0)

    def test_too_few_levels(self):
        with pytest.raises(InsufficientData):
            box_dimension(middle_thirds_families(1))

    def test_no_subdivision(self):
        flat = [GenerationFamily(k, [Interval(0.0, 1.0)]) for k in range(3)]
        with pytest.raises(InsufficientData):
            box_dimension(flat)


@pytest.mark.unit
class TestGenerations:
    """Generation families of a (1,3)-renormalizable map"""

    def test_return_times(self, families):
        assert len(families) == 2
        assert families[0].return_times == (1, 1)
        assert families[1].return_times == (2, 4)
        assert families[1].pieces == 6

    def test_window_contains_critical_point(self, families):
        f = island_witness()
        window = families[1].window
        assert window.lo < f.c < window.hi

    def test_intervals_nest(self, families):
        fam = families[1]
        assert 1 <= fam.count <= fam.pieces
        assert 0.0 < fam.total_length < 1.0
        for iv in fam.intervals:
            assert 0.0 <= iv.lo <= iv.hi <= 1.0
        covered = fam.total_length + sum(g.length for g in fam.gaps)
        assert covered == pytest.approx(1.0)

    def test_contains(self, families):
        fam = families[1]
        f = island_witness()
        assert fam.contains(np.array([f.c]))[0]

    def test_to_dict(self, families):
        payload = families[1].to_dict()
        assert payload["return_times"] == [2, 4]
        assert len(payload["intervals"]) == families[1].count

    def test_depth_out_of_range(self):
        with pytest.raises(LorenzDomainError):
            generations(island_witness(), [(1, 3)], 2)

    def test_failed_detection_is_noted(self):
        fams = generations(standard(u=0.9, v=0.8), [(1, 1)], 1)
        assert len(fams) == 1
        assert "detection failed at level 1" in fams[0].note


@pytest.mark.unit
class TestEmpiricalMeasure:
    """Visit histograms of the critical orbits"""

    def test_normalized(self):
        measure = empirical_measure(island_witness(), burn=50, samples=2000, bins=16, walkers=8, seed=3)
        assert measure.minus.sum() == pytest.approx(1.0)
        assert measure.plus.sum() == pytest.approx(1.0)
        assert measure.samples == 2000
        assert 0.0 <= measure.tv_distance <= 1.0

    def test_deterministic_by_seed(self):
        f = island_witness()
        a = empirical_measure(f, burn=20, samples=800, bins=8, walkers=4, seed=11)
        b = empirical_measure(f, burn=20, samples=800, bins=8, walkers=4, seed=11)
        assert a.to_dict() == b.to_dict()

    def test_trivial_map(self):
        with pytest.raises(LorenzDomainError):
            empirical_measure(standard(u=0.4), burn=10, samples=10, bins=4)

    def test_bad_sizes(self):
        with pytest.raises(LorenzDomainError):
            empirical_measure(island_witness(), burn=10, samples=0, bins=4)


@pytest.mark.unit
class TestTransferTimes:
    """First entry into a nice window"""

    def test_window_is_nice(self, families):
        assert is_nice(island_witness(), families[1].window, 2000)

    def test_window_must_straddle_c(self):
        assert not is_nice(island_witness(), Interval(0.1, 0.2), 100)

    def test_starts_inside_have_zero_time(self, families):
        window = families[1].window
        f = island_witness()
        samples = transfer_times(f, window, [f.c - 1e-6, f.c + 1e-6], 100)
        assert [s.tau for s in samples] == [0, 0]

    def test_times_land_in_window(self, families):
        f = island_witness()
        window = families[1].window
        starts = np.linspace(0.01, 0.99, 25)
        for sample in transfer_times(f, window, starts, 2000):
            if sample.escaped:
                continue
            x = float(f.iterate(sample.x, sample.tau)) if sample.tau else sample.x
            assert window.lo < x < window.hi

    def test_not_nice(self):
        f = standard(u=0.9, v=0.8)
        with pytest.raises(NiceIntervalError):
            transfer_times(f, Interval(0.1, 0.9), [0.05], 50)


@pytest.mark.unit
def test_transfer_sample_escape():
    sample = TransferSample(0.3, None, 500)
    assert sample.escaped
    assert sample.to_dict() == {"x": 0.3, "tau": "ESCAPE(500)"}
