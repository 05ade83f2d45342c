import math

import numpy as np
import pytest

from mlbq.kernels import (
    BrownianMotion,
    Kernel,
    Matern,
    NoClosedFormError,
    ProductMeasure,
    SquaredExponential,
    StandardNormal,
    Uniform,
    gram,
    initial_error,
    initial_error_mc,
    initial_error_mc_factor,
    kernel_eval,
    kernel_mean,
)
from mlbq.oracles import initial_error_quadrature, kernel_mean_quadrature

U01 = ProductMeasure.uniform(0.0, 1.0)


class TestConstruction:
    def test_lengthscale_must_be_positive(self):
        for bad in (0.0, -1.0, math.nan, math.inf):
            with pytest.raises(ValueError):
                Matern(0.5, bad)
            with pytest.raises(ValueError):
                SquaredExponential(bad)

    def test_unsupported_smoothness(self):
        with pytest.raises(ValueError):
            Matern(1.5, 1.0)

    def test_amplitude_must_be_nonnegative(self):
        with pytest.raises(ValueError):
            Kernel.matern(0.5, 1.0, amplitude=-0.1)

    def test_per_dimension_lengthscales(self):
        k = Kernel.squared_exponential([0.5, 2.0], dim=2)
        assert k.lengthscales == (0.5, 2.0)
        with pytest.raises(ValueError):
            Kernel.matern(0.5, [1.0, 2.0, 3.0], dim=2)


class TestKernelEval:
    def test_matern12_at_identical_points(self):
        k = Kernel.matern(0.5, 1.0)
        assert kernel_eval(k, 0.5, 0.5) == 1.0

    def test_matern12_unit_distance(self):
        k = Kernel.matern(0.5, 1.0)
        assert kernel_eval(k, 0.0, 1.0) == pytest.approx(math.exp(-1.0), abs=1e-15)

    def test_brownian_is_min(self):
        assert kernel_eval(Kernel.brownian(), 0.3, 0.7) == 0.3

    def test_diagonal_equals_amplitude_for_stationary_factors(self):
        for k in (Kernel.matern(2.5, 0.3, amplitude=2.2), Kernel.squared_exponential(1.7, amplitude=0.4)):
            assert kernel_eval(k, 0.8, 0.8) == pytest.approx(k.amplitude, rel=1e-15)

    def test_symmetry_1000_random_pairs(self):
        rng = np.random.default_rng(0)
        kernels = [
            Kernel.matern(0.5, 0.7),
            Kernel.matern(2.5, 1.3),
            Kernel.squared_exponential(0.9),
            Kernel.brownian(),
        ]
        for _ in range(250):
            x, y = rng.random(2)
            for k in kernels:
                assert kernel_eval(k, x, y) == kernel_eval(k, y, x)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            kernel_eval(Kernel.matern(0.5, 1.0, dim=2), [0.1, 0.2], [0.3, 0.4, 0.5])

    def test_nonfinite_input(self):
        with pytest.raises(ValueError, match="finite"):
            kernel_eval(Kernel.matern(0.5, 1.0), math.nan, 0.5)


class TestGram:
    def test_single_point(self):
        assert np.array_equal(gram(Kernel.squared_exponential(1.0), [0.3]), [[1.0]])

    def test_two_point_matern(self):
        g = gram(Kernel.matern(0.5, 1.0), [0.0, 1.0])
        e = math.exp(-1.0)
        assert np.allclose(g, [[1.0, e], [e, 1.0]], atol=1e-15)

    def test_psd_on_random_points(self):
        rng = np.random.default_rng(1)
        w = rng.random((8, 1))
        g = gram(Kernel.squared_exponential(0.6), w)
        assert np.linalg.eigvalsh(g).min() >= -1e-10

    def test_psd_on_quasi_random_20_points(self):
        from mlbq.designs import generate_design

        w = generate_design("halton", ProductMeasure.uniform(0, 1, dim=2), 20).points
        for k in (Kernel.matern(0.5, 0.5, dim=2), Kernel.matern(2.5, 1.0, dim=2),
                  Kernel.squared_exponential(0.8, dim=2, amplitude=3.0)):
            g = gram(k, w)
            assert np.linalg.eigvalsh(g).min() >= -1e-8 * k.amplitude

    def test_cross_gram_shape(self):
        g = gram(Kernel.matern(0.5, 1.0), [0.1, 0.2, 0.3], [0.5, 0.9])
        assert g.shape == (3, 2)


class TestKernelMean:
    def test_matern12_uniform_example(self):
        # oracle: adaptive quadrature of exp(-|0.5 - t|) over [0, 1]
        val = kernel_mean(Kernel.matern(0.5, 1.0), U01, 0.5)
        assert val == pytest.approx(2.0 - 2.0 * math.exp(-0.5), abs=1e-12)
        assert val == pytest.approx(0.7869387, abs=1e-7)

    def test_se_uniform_example(self):
        val = kernel_mean(Kernel.squared_exponential(1.0), U01, 0.0)
        assert val == pytest.approx(0.7468241, abs=1e-7)

    def test_product_factorization_2d(self):
        k2 = Kernel.matern(0.5, 1.0, dim=2)
        u2 = ProductMeasure.uniform(0, 1, dim=2)
        one_d = kernel_mean(Kernel.matern(0.5, 1.0), U01, 0.5)
        assert kernel_mean(k2, u2, [0.5, 0.5]) == pytest.approx(one_d**2, rel=1e-12)
        assert kernel_mean(k2, u2, [0.5, 0.5]) == pytest.approx(0.6192725, abs=1e-7)

    @pytest.mark.parametrize(
        "factor_of",
        [lambda g: Matern(0.5, g), lambda g: Matern(2.5, g), lambda g: SquaredExponential(g)],
        ids=["matern12", "matern52", "se"],
    )
    def test_uniform_closed_forms_match_quadrature(self, factor_of):
        rng = np.random.default_rng(2)
        marginal = Uniform(-0.3, 1.4)
        measure = ProductMeasure((marginal,))
        for _ in range(100):
            gamma = 0.1 + 4.9 * rng.random()
            x = marginal.a + (marginal.b - marginal.a) * rng.random()
            factor = factor_of(gamma)
            impl = kernel_mean(Kernel((factor,)), measure, x)
            assert impl == pytest.approx(kernel_mean_quadrature(factor, marginal, x), abs=1e-8)

    @pytest.mark.parametrize(
        "factor", [Matern(2.5, 0.6), Matern(2.5, 2.0), SquaredExponential(1.2)], ids=["m52a", "m52b", "se"]
    )
    def test_gaussian_closed_forms_match_quadrature(self, factor):
        measure = ProductMeasure.standard_normal()
        for x in (-2.5, -0.7, 0.0, 1.1, 3.0):
            impl = kernel_mean(Kernel((factor,)), measure, x)
            assert impl == pytest.approx(kernel_mean_quadrature(factor, StandardNormal(), x), abs=1e-9)

    @pytest.mark.parametrize("factor", [Matern(2.5, 0.8), SquaredExponential(1.4)], ids=["m52", "se"])
    def test_gaussian_closed_forms_within_4_sigma_of_mc(self, factor):
        from mlbq.oracles import kernel_mean_gauss_mc

        measure = ProductMeasure.standard_normal()
        for i, x in enumerate((-1.3, 0.2, 2.4)):
            mc, se = kernel_mean_gauss_mc(factor, x, n_samples=1_000_000, seed=60 + i)
            assert kernel_mean(Kernel((factor,)), measure, x) == pytest.approx(mc, abs=4 * se)

    def test_matern52_gauss_no_overflow_far_out(self):
        # naive evaluation overflows around |x| ~ 20 / gamma
        k = Kernel.matern(2.5, 0.5)
        measure = ProductMeasure.standard_normal()
        vals = kernel_mean(k, measure, np.array([50.0, 200.0, 1000.0]))
        assert np.all(np.isfinite(vals)) and np.all(vals >= 0.0)

    def test_matern12_gauss_has_no_closed_form(self):
        with pytest.raises(NoClosedFormError, match=r"Matern\(nu=0.5\).*StandardNormal"):
            kernel_mean(Kernel.matern(0.5, 1.0), ProductMeasure.standard_normal(), 0.0)

    def test_brownian_has_no_closed_form(self):
        with pytest.raises(NoClosedFormError, match="BrownianMotion"):
            kernel_mean(Kernel.brownian(), U01, 0.5)

    def test_amplitude_linearity(self):
        k = Kernel.matern(2.5, 0.8)
        scaled = k.with_amplitude(3.5)
        x = 0.37
        assert kernel_mean(scaled, U01, x) == 3.5 * kernel_mean(k, U01, x)
        assert initial_error(scaled, U01) == 3.5 * initial_error(k, U01)
        assert kernel_eval(scaled, 0.1, 0.9) == 3.5 * kernel_eval(k, 0.1, 0.9)
        w = [0.2, 0.4, 0.9]
        assert np.array_equal(gram(scaled, w), 3.5 * gram(k, w))


class TestInitialError:
    def test_se_gauss_example(self):
        val = initial_error(Kernel.squared_exponential(2.0), ProductMeasure.standard_normal())
        assert val == pytest.approx(2.0 / math.sqrt(8.0), abs=1e-12)

    def test_matern12_uniform_example(self):
        val = initial_error(Kernel.matern(0.5, 1.0), U01)
        assert val == pytest.approx(2.0 * math.exp(-1.0), abs=1e-12)
        assert val == pytest.approx(initial_error_quadrature(Matern(0.5, 1.0), Uniform(0, 1)), abs=1e-8)

    def test_matern52_uniform_example(self):
        val = initial_error(Kernel.matern(2.5, 1.0), U01)
        assert val == pytest.approx(0.8932, abs=1e-4)
        assert val == pytest.approx(initial_error_quadrature(Matern(2.5, 1.0), Uniform(0, 1)), abs=1e-6)

    def test_value_in_zero_amplitude_interval(self):
        for k in (Kernel.matern(0.5, 0.4, amplitude=2.0), Kernel.squared_exponential(5.0, amplitude=0.3)):
            v = initial_error(k, U01)
            assert 0.0 < v <= k.amplitude

    def test_matern52_gauss_mc_fallback_matches_generic_mc(self):
        k = Kernel.matern(2.5, 1.0)
        measure = ProductMeasure.standard_normal()
        fallback = initial_error(k, measure)
        generic, se = initial_error_mc(k, measure, n_samples=1_000_000, seed=123)
        assert fallback == pytest.approx(generic, abs=4 * se)

    def test_matern52_gauss_fallback_reports_standard_error(self):
        value, se = initial_error_mc_factor(Matern(2.5, 1.3), n_samples=200_000, seed=5)
        assert 0.0 < value < 1.0 and 0.0 < se < 1e-3

    def test_gaussian_product_measure_mixed(self):
        k = Kernel((SquaredExponential(1.0), SquaredExponential(2.0)))
        measure = ProductMeasure((Uniform(0, 1), StandardNormal()))
        expected = initial_error(Kernel.squared_exponential(1.0), U01) * initial_error(
            Kernel.squared_exponential(2.0), ProductMeasure.standard_normal()
        )
        assert initial_error(k, measure) == pytest.approx(expected, rel=1e-12)


class TestProductMeasure:
    def test_requires_finite_interval(self):
        with pytest.raises(ValueError):
            Uniform(1.0, 1.0)
        with pytest.raises(ValueError):
            Uniform(0.0, math.inf)

    def test_density_bound(self):
        assert ProductMeasure.uniform(0, 4, dim=2).density_bound() == pytest.approx(1 / 16)

    def test_contains(self):
        m = ProductMeasure.uniform(0, 1, dim=2)
        assert m.contains([[0.5, 1.0], [0.0, 0.2]])
        assert not m.contains([[0.5, 1.2]])
        assert not m.contains([[math.nan, 0.5]])
        assert ProductMeasure.standard_normal().contains([[-40.0]])
