import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from configgp.design import (
    FIDELITY,
    INPUT,
    Design,
    crossed_array,
    map_ranges,
    maximin_lhd,
    maxpro,
    maxpro_criterion,
    random_lhd,
    read_csv,
    unit_design,
    write_csv,
)
from configgp.errors import StructuralError
from scipy.spatial.distance import pdist


def assert_lhd(X):
    n = X.shape[0]
    for col in X.T:
        np.testing.assert_array_equal(np.sort(np.floor(col * n)), np.arange(n))


class TestLatinHypercube:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 40), st.integers(1, 5), st.integers(0, 1000))
    def test_one_point_per_stratum(self, n, d, seed):
        assert_lhd(random_lhd(n, d, np.random.default_rng(seed)))

    def test_two_points_one_dimension(self):
        D = maximin_lhd(2, 1, seed=0, iterations=10)
        np.testing.assert_allclose(np.sort(D.points[:, 0]), [0.25, 0.75])
        assert D.criterion == pytest.approx(0.5)

    def test_maximin_improves_on_start(self):
        start = random_lhd(20, 3, np.random.default_rng(4))
        D = maximin_lhd(20, 3, seed=4, iterations=5000)
        assert_lhd(D.points)
        assert D.criterion >= pdist(start).min()

    def test_maximin_nine_points(self):
        D = maximin_lhd(9, 2, seed=0)
        assert D.criterion >= 0.20
        # regression value of the seeded generator
        assert D.criterion == pytest.approx(0.31426968052735443, rel=1e-12)

    def test_deterministic(self):
        a, b = maximin_lhd(12, 3, seed=9, iterations=500), maximin_lhd(12, 3, seed=9, iterations=500)
        np.testing.assert_array_equal(a.points, b.points)

    def test_rejects_tiny(self):
        with pytest.raises(StructuralError):
            maximin_lhd(1, 2)


class TestMaxPro:
    def test_single_pair(self):
        assert maxpro_criterion(np.array([[0.25], [0.75]])) == pytest.approx(4.0)

    def test_matches_direct_sum(self, rng):
        X = random_lhd(7, 3, rng)
        total = sum(np.prod((X[i] - X[j]) ** -2.0) for i in range(7) for j in range(i + 1, 7))
        assert maxpro_criterion(X) == pytest.approx((total / 21) ** (1 / 3), rel=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(2, 30), st.integers(1, 4), st.integers(0, 1000))
    def test_finite_on_lhd(self, n, d, seed):
        assert np.isfinite(maxpro_criterion(random_lhd(n, d, np.random.default_rng(seed))))

    def test_annealing_keeps_best(self):
        D = maxpro(50, 4, seed=1, n_inputs=2)
        assert_lhd(D.points)
        assert D.criterion <= D.initial_criterion
        assert D.roles == (INPUT, INPUT, FIDELITY, FIDELITY)

    def test_deterministic(self):
        a, b = maxpro(15, 3, seed=2, proposals=300), maxpro(15, 3, seed=2, proposals=300)
        np.testing.assert_array_equal(a.points, b.points)


class TestCrossedArray:
    def setup_method(self):
        self.inputs = Design([[0.1, 0.2], [0.6, 0.7]], [INPUT, INPUT], [(0, 1)] * 2, "manual")
        self.fids = Design([[0.1], [0.2], [0.4]], [FIDELITY], [(0, 1)], "manual")

    def test_row_count(self):
        assert crossed_array(self.inputs, self.fids).n == 6

    def test_copies_per_input(self):
        D = crossed_array(self.inputs, self.fids)
        rows, counts = np.unique(D.inputs, axis=0, return_counts=True)
        assert len(rows) == 2 and set(counts) == {3}

    def test_paired(self):
        D = crossed_array(self.inputs, self.fids, mode="paired", seed=0)
        assert D.n == 2
        assert all(t in (0.1, 0.2, 0.4) for t in D.fidelities[:, 0])

    def test_overlapping_roles(self):
        with pytest.raises(StructuralError):
            crossed_array(self.inputs, self.inputs)


class TestMapRanges:
    def test_midpoint(self):
        D = map_ranges(unit_design([[0.5]], 0, "m"), [(0.1, 0.4)])
        assert D.points[0, 0] == pytest.approx(0.25)

    def test_upper_end(self):
        D = map_ranges(unit_design([[1.0]], 0, "m"), [(0.2, 0.5)])
        assert D.points[0, 0] == pytest.approx(0.5)

    def test_identity(self, rng):
        D = unit_design(rng.random((5, 3)), 2, "m")
        np.testing.assert_array_equal(map_ranges(D, [(0, 1)] * 3).points, D.points)

    def test_inverted(self):
        with pytest.raises(StructuralError):
            map_ranges(unit_design([[0.5]], 1, "m"), [(0.4, 0.1)])


class TestCsv:
    def test_round_trip(self, tmp_path, rng):
        D = map_ranges(unit_design(rng.random((6, 4)), 2, "m"), [(0, 1), (0, 1), (0.1, 0.4), (0.1, 0.4)])
        write_csv(D, tmp_path / "d.csv")
        again = read_csv(tmp_path / "d.csv")
        np.testing.assert_array_equal(again.points, D.points)
        assert again.roles == D.roles

    def test_bad_header(self, tmp_path):
        (tmp_path / "d.csv").write_text("a,b\n0.1,0.2\n")
        with pytest.raises(StructuralError):
            read_csv(tmp_path / "d.csv")
