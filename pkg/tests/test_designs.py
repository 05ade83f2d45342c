import numpy as np
import pytest

from mlbq.designs import Design, fill_distance, generate_design, halton_sequence
from mlbq.kernels import ProductMeasure, StandardNormal, Uniform

U01 = ProductMeasure.uniform(0.0, 1.0)
U2 = ProductMeasure.uniform(0.0, 1.0, dim=2)


class TestGeneration:
    def test_grid_includes_endpoints(self):
        d = generate_design("grid", U01, 3)
        assert np.array_equal(d.points.ravel(), [0.0, 0.5, 1.0])

    def test_grid_tensor_product(self):
        d = generate_design("grid", U2, 9)
        assert d.points.shape == (9, 2)
        assert sorted(set(d.points[:, 0])) == [0.0, 0.5, 1.0]

    def test_grid_needs_power(self):
        with pytest.raises(ValueError, match="d-th power"):
            generate_design("grid", U2, 10)

    def test_grid_refuses_gaussian(self):
        m = ProductMeasure((StandardNormal(),))
        with pytest.raises(ValueError, match="bounded"):
            generate_design("grid", m, 4)

    def test_halton_van_der_corput_prefix(self):
        d = generate_design("halton", U01, 4)
        assert np.allclose(d.points.ravel(), [0.5, 0.25, 0.75, 0.125])

    def test_halton_base3_second_dimension(self):
        pts = halton_sequence(3, 2)
        assert np.allclose(pts[:, 1], [1 / 3, 2 / 3, 1 / 9])

    def test_halton_through_gaussian_marginal(self):
        m = ProductMeasure((Uniform(0, 1), StandardNormal()))
        d = generate_design("halton", m, 16)
        assert np.all(np.isfinite(d.points))
        assert d.points[:, 1].std() > 0.5  # roughly standard normal spread

    def test_lhs_stratification(self):
        d = generate_design("lhs", U01, 5, seed=42)
        strata = np.sort(np.floor(d.points.ravel() * 5).astype(int))
        assert np.array_equal(strata, np.arange(5))

    def test_lhs_stratifies_every_dimension(self):
        d = generate_design("lhs", U2, 8, seed=7)
        for j in range(2):
            strata = np.sort(np.floor(d.points[:, j] * 8).astype(int))
            assert np.array_equal(strata, np.arange(8))

    def test_lhs_with_gaussian_marginal(self):
        from scipy.special import ndtr

        m = ProductMeasure((Uniform(0, 1), StandardNormal()))
        d = generate_design("lhs", m, 10, seed=9)
        assert np.all(np.isfinite(d.points))
        # stratification survives the inverse-CDF map on the normal axis
        strata = np.sort(np.floor(ndtr(d.points[:, 1]) * 10).astype(int))
        assert np.array_equal(strata, np.arange(10))

    def test_iid_reproducible_bit_identical(self):
        for kind in ("iid", "lhs"):
            a = generate_design(kind, U2, 20, seed=11)
            b = generate_design(kind, U2, 20, seed=11)
            assert np.array_equal(a.points, b.points)
            c = generate_design(kind, U2, 20, seed=12)
            assert not np.array_equal(a.points, c.points)

    def test_deterministic_kinds_ignore_seed(self):
        assert np.array_equal(
            generate_design("grid", U01, 9).points, generate_design("grid", U01, 9).points
        )
        assert np.array_equal(
            generate_design("halton", U2, 33).points, generate_design("halton", U2, 33).points
        )

    def test_support_exhaustive(self):
        m = ProductMeasure.uniform(-2.0, 3.0, dim=2)
        for kind, seed in (("iid", 1), ("lhs", 2), ("halton", None), ("grid", None)):
            n = 49 if kind == "grid" else 50
            pts = generate_design(kind, m, n, seed=seed).points
            assert np.all(pts >= -2.0) and np.all(pts <= 3.0)

    def test_gaussian_iid_unbounded(self):
        m = ProductMeasure.standard_normal()
        pts = generate_design("iid", m, 4000, seed=3).points
        assert abs(pts.mean()) < 0.1 and abs(pts.std() - 1.0) < 0.1

    def test_mismatched_sampling_measure(self):
        # the deliberately bad design: sample from a different distribution
        target = ProductMeasure.uniform(0.0, 10.0)
        lower_half = ProductMeasure.uniform(0.0, 5.0)
        d = generate_design("iid", target, 40, seed=4, sampling_measure=lower_half)
        assert np.all(d.points <= 5.0)
        assert d.metadata["sampling_measure"] == lower_half
        with pytest.raises(ValueError, match="iid"):
            generate_design("grid", target, 4, sampling_measure=lower_half)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown design kind"):
            generate_design("sobol", U01, 4)

    def test_needs_positive_count(self):
        with pytest.raises(ValueError):
            generate_design("iid", U01, 0, seed=0)


class TestFillDistance:
    def test_three_point_grid(self):
        d = generate_design("grid", U01, 3)
        spacing = 1.0 / 1000
        assert fill_distance(d, U01, 1001) == pytest.approx(0.25, abs=spacing)

    def test_single_point(self):
        d = Design("grid", np.array([[0.5]]))
        assert fill_distance(d, U01, 1001) == pytest.approx(0.5, abs=1e-3)

    def test_equispaced_grid_formula(self):
        for n in (5, 17, 65):
            d = generate_design("grid", U01, n)
            assert fill_distance(d, U01, 4001) == pytest.approx(1.0 / (2 * (n - 1)), abs=1e-3)

    def test_grid_quasi_uniformity(self):
        # fill distance times n^(1/d) stays below 1 on the unit cube
        for n in (2, 5, 9, 33, 129):
            h = fill_distance(generate_design("grid", U01, n), U01, 4001)
            assert h * n <= 1.0 + 1e-9
        for n in (16, 64, 256):
            h = fill_distance(generate_design("grid", U2, n), U2, 201)
            assert h * np.sqrt(n) <= 1.0 + 1e-9

    def test_halton_beats_iid_fill_distance(self):
        halton_fd = fill_distance(generate_design("halton", U2, 256), U2, 101)
        wins = 0
        for seed in range(50):
            iid_fd = fill_distance(generate_design("iid", U2, 256, seed=seed), U2, 101)
            wins += halton_fd < iid_fd
        assert wins >= 45

    def test_refuses_unbounded(self):
        m = ProductMeasure.standard_normal()
        d = generate_design("iid", m, 10, seed=0)
        with pytest.raises(ValueError, match="bounded"):
            fill_distance(d, m)
