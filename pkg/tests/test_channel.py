import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from knnrice.channel import (
    InvalidParameterError,
    QuadratureConfig,
    QuadratureError,
    SampleSet,
    ShapingParams,
    cdf_reference,
    cdf_reference_many,
    pdf_reference,
    pdf_reference_many,
    read_samples_csv,
    sample,
    second_moment,
    write_samples_csv,
)

CFG = QuadratureConfig()


def independent_draw(r, s2, n, seed):
    """Oracle sampler built from scipy distributions, not from knnrice."""
    rng = np.random.default_rng(seed)
    z = stats.lognorm.rvs(s=math.sqrt(s2), scale=math.exp(-s2 / 2), size=n, random_state=rng)
    # unit-mean Rician intensity = noncentral chi-square(2, 2r) / (2(1+r))
    y = stats.ncx2.rvs(2, 2 * r, size=n, random_state=rng) / (2 * (1 + r))
    return z * y


class TestParams:
    @pytest.mark.parametrize("r,s2", [(-1, 0.2), (1, 0), (1, -0.1), (math.nan, 0.1), (1, math.inf)])
    def test_rejects_invalid(self, r, s2):
        with pytest.raises(InvalidParameterError):
            ShapingParams(r, s2)

    def test_sample_set_rejects_nonpositive(self):
        with pytest.raises(InvalidParameterError):
            SampleSet(np.array([1.0, 0.0, 2.0]))
        with pytest.raises(InvalidParameterError):
            SampleSet(np.array([1.0]))

    def test_sample_rejects_bad_count(self):
        with pytest.raises(InvalidParameterError):
            sample(ShapingParams(1, 0.1), 1, 0)


class TestSampler:
    def test_deterministic_for_seed(self):
        p = ShapingParams(4, 0.25)
        a = sample(p, 5000, 42).values
        b = sample(p, 5000, 42).values
        assert np.array_equal(a, b)
        assert not np.array_equal(a, sample(p, 5000, 43).values)

    def test_strictly_positive(self):
        for r, s2 in [(0, 1.5), (4, 0.25), (30, 2.0)]:
            assert np.all(sample(ShapingParams(r, s2), 20000, 1).values > 0)

    def test_exponential_limit(self):
        v = sample(ShapingParams(0, 1e-12), 400_000, 3).values
        se = 1 / math.sqrt(v.size)
        assert abs(v.mean() - 1) < 4 * se
        # Var of Exp(1) sample variance is (mu4 - 1)/n = 8/n
        assert abs(v.var() - 1) < 4 * math.sqrt(8 / v.size)
        assert stats.kstest(v, "expon").pvalue > 1e-3

    def test_unit_mean(self):
        p = ShapingParams(5, 0.25)
        v = sample(p, 1_000_000, 11).values
        assert abs(v.mean() - 1) < 3 * v.std() / math.sqrt(v.size)

    def test_second_moment_formula_matches_independent_oracle(self):
        # the closed form itself is checked against a sampler that shares no code
        p = ShapingParams(5, 0.25)
        ref = independent_draw(5, 0.25, 2_000_000, 99) ** 2
        assert abs(ref.mean() - second_moment(p)) < 4 * ref.std() / math.sqrt(ref.size)

    def test_sampler_second_moment(self):
        p = ShapingParams(5, 0.25)
        v2 = sample(p, 1_000_000, 12).values ** 2
        expected = math.exp(0.25) * (1 + (1 + 2 * 5) / (1 + 5) ** 2)
        assert second_moment(p) == pytest.approx(expected, rel=1e-15)
        assert abs(v2.mean() - expected) < 3 * v2.std() / math.sqrt(v2.size)

    def test_matches_independent_sampler_in_distribution(self):
        a = sample(ShapingParams(3, 0.4), 20000, 5).values
        b = independent_draw(3, 0.4, 20000, 6)
        assert stats.ks_2samp(a, b).pvalue > 1e-3

    def test_csv_round_trip(self, tmp_path):
        s = sample(ShapingParams(2, 0.3), 200, 8)
        path = tmp_path / "s.csv"
        write_samples_csv(s, path, "provenance")
        lines = path.read_text().splitlines()
        assert lines[0].startswith("#") and lines[1] == "intensity"
        assert len(lines) == 202
        back = read_samples_csv(path)
        assert np.array_equal(back.values, s.values)


class TestReferencePdf:
    def test_degenerate_lognormal_exponential(self):
        assert pdf_reference(ShapingParams(0, 1e-6), 1.0) == pytest.approx(math.exp(-1), abs=1e-4)

    def test_normalization(self):
        p = ShapingParams(4, 0.25)
        total, _ = integrate.quad(lambda i: pdf_reference(p, i, CFG), 0, np.inf, epsrel=1e-10, limit=200)
        assert abs(total - 1) < 10 * CFG.rel_tol

    def test_second_moment_by_quadrature(self):
        p = ShapingParams(5, 0.25)
        m2, _ = integrate.quad(lambda i: i * i * pdf_reference(p, i, CFG), 0, np.inf, epsrel=1e-10, limit=200)
        assert abs(m2 - second_moment(p)) < 10 * CFG.rel_tol * second_moment(p)

    def test_large_arguments_do_not_overflow(self):
        p = ShapingParams(30, 0.01)
        for i in (1e-3, 0.5, 1.0, 3.0, 20.0):
            val = pdf_reference(p, i)
            assert math.isfinite(val) and val >= 0

    def test_vectorised_agrees_with_scalar(self):
        p = ShapingParams(5, 0.6)
        x = np.array([0.05, 0.3, 0.9, 1.4, 3.0, 7.0])
        many = pdf_reference_many(p, x)
        one = np.array([pdf_reference(p, v) for v in x])
        assert np.allclose(many, one, rtol=1e-6, atol=1e-9)

    def test_non_convergence_raises_with_tolerance(self):
        cfg = QuadratureConfig(rel_tol=1e-13, max_subdivisions=2)
        with pytest.raises(QuadratureError) as info:
            pdf_reference(ShapingParams(5, 1.5), 0.7, cfg)
        assert info.value.achieved > 0

    def test_rejects_unreachable_tolerance(self):
        with pytest.raises(InvalidParameterError):
            QuadratureConfig(rel_tol=1e-16)
        with pytest.raises(InvalidParameterError):
            QuadratureConfig(max_subdivisions=1)

    def test_rejects_nonpositive_intensity(self):
        with pytest.raises(InvalidParameterError):
            pdf_reference(ShapingParams(1, 0.1), 0.0)

    @settings(max_examples=25, deadline=None)
    @given(
        r=st.floats(0, 20),
        s2=st.floats(0.01, 1.5),
        i=st.floats(1e-4, 30),
    )
    def test_nonnegative(self, r, s2, i):
        assert pdf_reference(ShapingParams(r, s2), i) >= 0


class TestReferenceCdf:
    def test_limits(self):
        p = ShapingParams(5, 0.25)
        assert cdf_reference(p, 1e-9) < 1e-6
        assert abs(cdf_reference(p, 1e4) - 1) < 10 * CFG.rel_tol

    def test_agrees_with_integrated_pdf(self):
        # two routes: conditional Rician CDF under the lognormal vs integrating the density
        p = ShapingParams(4, 0.25)
        for lam in (0.2, 0.8, 1.5, 3.0):
            direct, _ = integrate.quad(lambda i: pdf_reference(p, i), 0, lam, epsrel=1e-11, limit=200)
            assert cdf_reference(p, lam) == pytest.approx(direct, abs=1e-8)

    @settings(max_examples=15, deadline=None)
    @given(r=st.floats(0, 15), s2=st.floats(0.02, 1.2))
    def test_monotone_on_grid(self, r, s2):
        lam = np.geomspace(1e-3, 50, 60)
        values = cdf_reference_many(ShapingParams(r, s2), lam)
        assert np.all(np.diff(values) >= -1e-12)
        assert np.all((values >= 0) & (values <= 1))

    def test_vectorised_agrees_with_scalar(self):
        p = ShapingParams(5, 0.6)
        lam = np.array([0.1, 0.5, 1.0, 2.0, 6.0])
        assert np.allclose(cdf_reference_many(p, lam), [cdf_reference(p, v) for v in lam], atol=1e-8)
