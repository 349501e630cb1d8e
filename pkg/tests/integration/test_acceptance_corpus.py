"""
Integration tests over a scanned corpus of renormalizable maps.

The corpus is every cell of three (u, v) slices (rho = 2, 2.5, 3) with a
verified monotone type. Renormalization consistency, the a-priori bounds,
kneading admissibility and invariance are checked map by map; the attractor
statistics run on a depth-3 (1,3) island witness.
"""

import math

import numpy as np
import pytest

from attractor import (
    MERGE_TOL,
    box_dimension,
    empirical_measure,
    generations,
    middle_thirds_families,
    ratio_stats,
    transfer_times,
)
from bounds_lab import bounds_report, empirical_threshold, invariance_report
from combinatorics import MonotoneType, admissible, detect_monotone, kneading, required_prefixes
from diffeomorphism import distortion
from parameter_search import SliceConfig, scan_slice
from renormalization import renormalization_step
from tests.fixtures.maps import GRID, island_witness

CORPUS_SLICES = [
    (SliceConfig(c0=0.5, rho=2.0, grid=(24, 24), u_range=(0.5, 1.0), v_range=(0.5, 1.0), grid_size=GRID), 4),
    (SliceConfig(c0=0.5, rho=2.5, grid=(16, 16), u_range=(0.9, 1.0), v_range=(0.9, 1.0), grid_size=GRID), 6),
    (SliceConfig(c0=0.5, rho=3.0, grid=(24, 24), u_range=(0.5, 1.0), v_range=(0.5, 1.0), grid_size=GRID), 4),
]
EPS = 0.05


@pytest.fixture(scope="module")
def corpus():
    maps = []
    for cfg, max_return in CORPUS_SLICES:
        frame = scan_slice(cfg, max_return=max_return, threads=4, scan_cells=1024)
        for row in frame[frame["n"].notna()].itertuples():
            maps.append((cfg.map_at(row.u, row.v), MonotoneType(int(row.n), int(row.m))))
    return maps


def describe(f, kind):
    return f"{kind} at u={f.u!r}, v={f.v!r}, rho={f.rho}"


@pytest.mark.slow
@pytest.mark.integration
class TestCorpus:
    """Map-by-map checks on the scanned corpus"""

    def test_corpus_spans_exponents(self, corpus):
        assert len(corpus) >= 50
        assert {f.rho for f, _ in corpus} == {2.0, 2.5, 3.0}

    def test_formula_matches_return_map(self, corpus):
        for f, kind in corpus:
            step = renormalization_step(f, kind, tol=1e-9, check_points=100, grid_size=GRID)
            assert step.residual <= 1e-9, describe(f, kind)
            assert step.output.is_nontrivial(), describe(f, kind)

    @pytest.mark.parametrize("K", [0.5, 1.0, 2.0])
    def test_bounds_have_no_violations(self, corpus, K):
        for f, kind in corpus:
            data = detect_monotone(f, kind.n, kind.m)
            report = bounds_report(f, kind.n, kind.m, K=K, data=data)
            assert report.violations == [], (describe(f, kind), [c.name for c in report.violations])

    def test_kneading_admissible_with_type_prefixes(self, corpus):
        for f, kind in corpus:
            k = kneading(f, 64)
            assert admissible(k), describe(f, kind)
            minus, plus = required_prefixes([kind])
            assert str(k.k_minus).startswith(minus), describe(f, kind)
            assert str(k.k_plus).startswith(plus), describe(f, kind)

    def test_invariance_at_rho_2_5(self, corpus):
        sample = []
        for f, kind in corpus:
            if f.rho != 2.5:
                continue
            data = detect_monotone(f, kind.n, kind.m)
            sample.append((f, kind, data, renormalization_step(f, data, grid_size=GRID).output))
        assert sample

        # the budget is the largest distortion the sample actually produces
        budget = max(max(distortion(g.phi), distortion(g.psi)) for *_, g in sample) + 1e-9
        reports = [invariance_report(f, budget, EPS, kind.n, kind.m, data=data) for f, kind, data, _ in sample]
        assert all(r.applicable for r in reports)
        threshold = empirical_threshold(reports)
        assert threshold is not None
        assert all(r.invariant for r in reports if min(r.n, r.m) >= threshold)


@pytest.fixture(scope="module")
def deep():
    f = island_witness(3)
    return f, generations(f, [(1, 3)] * 3, 3)


@pytest.mark.slow
@pytest.mark.integration
class TestDeepAttractor:
    """Cantor attractor statistics of a depth-3 (1,3) map"""

    def test_generations_nest(self, deep):
        _, fams = deep
        assert len(fams) == 4
        assert [fam.return_times for fam in fams] == [(1, 1), (2, 4), (6, 10), (16, 28)]
        for parent, child in zip(fams, fams[1:]):
            assert not parent.note
            for iv in child.intervals:
                assert any(outer.contains_interval(iv, MERGE_TOL) for outer in parent.intervals)
            lo, hi, _, _ = ratio_stats(child, parent)
            assert 0.0 < lo <= hi < 1.0

    def test_total_length_decreases_geometrically(self, deep):
        _, fams = deep
        lengths = np.array([fam.total_length for fam in fams])
        assert np.all(np.diff(lengths) < 0.0)
        slope = np.polyfit(np.arange(lengths.size), np.log(lengths), 1)[0]
        assert math.exp(slope) < 1.0

    def test_box_dimension(self, deep):
        calibration, _ = box_dimension(middle_thirds_families(6))
        assert calibration == pytest.approx(math.log(2) / math.log(3), abs=0.02)
        _, fams = deep
        dimension, _ = box_dimension(fams)
        assert 0.05 < dimension < 0.95

    def test_transfer_escapes_are_rare(self, deep):
        f, fams = deep
        samples = transfer_times(f, fams[-1].window, np.linspace(0.0005, 0.9995, 1000), 100_000)
        escaped = sum(s.escaped for s in samples)
        assert escaped / len(samples) <= 1e-3

    def test_critical_orbit_measures_agree(self, deep):
        f, _ = deep
        measure = empirical_measure(f, burn=1000, samples=1_000_000, bins=64, walkers=64, seed=0)
        assert measure.tv_distance <= 0.05
