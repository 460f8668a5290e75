import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcastopt.channel import RateModel
from bcastopt.demand import (
    FileCatalog,
    FileSpec,
    ZipfParams,
    aggregate_delay_tolerance,
    build_catalog,
    catalog_to_csv,
    sample_requests,
    zipf_pmf,
)
from bcastopt.errors import InvalidParameterError, PreconditionError

from conftest import catalog_from, point_rate


class TestZipfPmf:
    def test_two_files_harmonic_by_hand(self):
        p = zipf_pmf(ZipfParams(exponent=1.0, catalog_size=2))
        assert np.allclose(p, [2 / 3, 1 / 3], atol=1e-15)

    def test_near_zero_exponent_is_uniform(self):
        p = zipf_pmf(ZipfParams(exponent=1e-9, catalog_size=3))
        assert np.allclose(p, [1 / 3, 1 / 3, 1 / 3], atol=1e-6)

    def test_large_catalog_against_direct_summation(self):
        # Oracle: direct summation of the truncated harmonic series.
        harmonic = sum(1.0 / i for i in range(1, 2001))
        assert harmonic == pytest.approx(8.1784, abs=1e-3)
        p = zipf_pmf(ZipfParams(exponent=1.0, catalog_size=2000))
        assert p[0] == pytest.approx(1.0 / harmonic, abs=1e-12)

    @pytest.mark.parametrize("gamma,m", [(0.3, 11), (1.0, 999), (2.7, 40), (4.0, 100_000)])
    def test_normalization(self, gamma, m):
        p = zipf_pmf(ZipfParams(exponent=gamma, catalog_size=m))
        assert abs(p.sum() - 1.0) < 1e-12
        assert np.all(np.diff(p) < 0)

    def test_concentration_grows_with_exponent(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            g1, g2 = sorted(rng.uniform(0.05, 4.0, size=2))
            m = int(rng.integers(2, 5000))
            p1 = zipf_pmf(ZipfParams(g1, m))[0]
            p2 = zipf_pmf(ZipfParams(g2, m))[0]
            assert p2 >= p1

    @pytest.mark.parametrize("gamma,m", [(0.0, 5), (-1.0, 5), (1.0, 0)])
    def test_invalid_parameters(self, gamma, m):
        with pytest.raises(InvalidParameterError):
            ZipfParams(exponent=gamma, catalog_size=m)


class TestSampleRequests:
    @pytest.fixture()
    def catalog(self):
        return catalog_from([0.5, 0.3, 0.2], [0.5, 0.3, 0.2], [3.0, 4.0, 6.0])

    def test_no_users_all_zero(self, catalog):
        counts = sample_requests(catalog, 0, rng=1)
        assert counts.tolist() == [0, 0, 0]

    def test_single_file_catalog(self):
        catalog = catalog_from([0.5], [1.0], [3.0])
        assert sample_requests(catalog, 7, rng=3).tolist() == [7]

    def test_counts_sum_to_users(self, catalog):
        counts = sample_requests(catalog, 123, rng=9)
        assert counts.sum() == 123
        assert np.all(counts >= 0)

    def test_reproducible_for_fixed_seed(self, catalog):
        a = sample_requests(catalog, 500, rng=42)
        b = sample_requests(catalog, 500, rng=42)
        assert np.array_equal(a, b)

    def test_large_sample_matches_binomial_bounds(self):
        # Oracle: n_i ~ Binomial(N, p_i), check 3-sigma bands for a few ranks.
        m, n = 2000, 1_000_000
        p = zipf_pmf(ZipfParams(1.0, m))
        sizes = np.full(m, 0.5)
        catalog = catalog_from(sizes, p, np.full(m, 3.0))
        counts = sample_requests(catalog, n, rng=2718)
        for rank in (1, 10, 100):
            pi = p[rank - 1]
            sigma = math.sqrt(n * pi * (1 - pi))
            assert abs(counts[rank - 1] - n * pi) < 3 * sigma

    def test_negative_users_rejected(self, catalog):
        with pytest.raises(InvalidParameterError):
            sample_requests(catalog, -1, rng=0)


class TestAggregateDelayTolerance:
    def test_point_masses_by_hand(self):
        spec = FileSpec(index=1, size=5.0, delay_lo=1.0, delay_hi=1.0)
        theta = aggregate_delay_tolerance(spec, point_rate(1.0), samples=100, rng=0)
        assert theta == pytest.approx(1.0 / (5.0 - 1.0), abs=1e-12)

    def test_uniform_threshold_against_closed_form(self):
        # Oracle: for unit rate and theta ~ U(1, 2),
        # E[1/(5 - t)] = integral = ln(4/3).
        spec = FileSpec(index=1, size=5.0, delay_lo=1.0, delay_hi=2.0)
        estimate = aggregate_delay_tolerance(spec, point_rate(1.0), samples=1_000_000, rng=11)
        assert estimate == pytest.approx(math.log(4.0 / 3.0), abs=1e-3)

    def test_mixed_regions_against_closed_form(self):
        # Weighted mix of the per-region closed forms.
        model = RateModel(r_high=1.0, r_low=0.5, prob_high=0.3)
        spec = FileSpec(index=1, size=5.0, delay_lo=1.0, delay_hi=2.0)

        def region_integral(rate):
            return math.log((5.0 - rate * 1.0) / (5.0 - rate * 2.0)) / rate

        expected = 0.3 * region_integral(1.0) + 0.7 * region_integral(0.5)
        estimate = aggregate_delay_tolerance(spec, model, samples=1_000_000, rng=13)
        assert estimate == pytest.approx(expected, abs=1e-3)

    def test_zero_denominator_rejected(self):
        spec = FileSpec(index=1, size=3.0, delay_lo=3.0, delay_hi=3.0)
        with pytest.raises(PreconditionError):
            aggregate_delay_tolerance(spec, point_rate(1.0), samples=10, rng=0)

    def test_decreasing_in_file_size_for_common_draws(self):
        model = RateModel(r_high=1.0, r_low=0.5, prob_high=0.4)
        values = [
            aggregate_delay_tolerance(
                FileSpec(index=1, size=s, delay_lo=0.5, delay_hi=1.5), model,
                samples=20_000, rng=77,
            )
            for s in (4.0, 5.0, 7.0, 12.0)
        ]
        assert all(a > b for a, b in zip(values, values[1:]))


class TestBuildCatalog:
    def test_eager_delay_sensitivity_rejection_names_files(self):
        with pytest.raises(PreconditionError) as err:
            build_catalog(
                ZipfParams(1.0, 2), sizes=[5.0, 1.2], delay_lo=1.0, delay_hi=2.0,
                rate_model=point_rate(1.0), tolerance_samples=100, seed=0,
            )
        assert "file 2" in str(err.value)

    def test_catalog_invariants(self):
        catalog = build_catalog(
            ZipfParams(0.8, 5), sizes=[6.0, 5.0, 7.0, 8.0, 5.5],
            delay_lo=0.5, delay_hi=1.5, rate_model=point_rate(1.0),
            tolerance_samples=2000, seed=3,
        )
        assert abs(catalog.popularity.sum() - 1.0) < 1e-12
        assert np.all(catalog.theta > 0)
        assert catalog.mean_size == pytest.approx(catalog.sizes @ catalog.popularity)
        # theta_i > 1/f_i always (the threshold term only shrinks the denominator)
        assert np.all(catalog.theta > 1.0 / catalog.sizes)

    def test_deterministic_for_fixed_seed(self):
        kw = dict(sizes=[6.0, 5.0], delay_lo=0.5, delay_hi=1.5,
                  rate_model=point_rate(1.0), tolerance_samples=2000, seed=31)
        a = build_catalog(ZipfParams(1.0, 2), **kw)
        b = build_catalog(ZipfParams(1.0, 2), **kw)
        assert np.array_equal(a.theta, b.theta)

    def test_bad_popularity_rejected(self):
        with pytest.raises(InvalidParameterError):
            catalog_from([1.0, 1.0], [0.7, 0.7], [1.0, 1.0])

    def test_csv_export(self):
        catalog = catalog_from([0.5, 0.25], [0.6, 0.4], [2.5, 5.0])
        text = catalog_to_csv(catalog)
        lines = text.strip().splitlines()
        assert lines[0] == "i,f_i,p_i,theta_i"
        assert len(lines) == 3
        row = lines[1].split(",")
        assert int(row[0]) == 1
        assert float(row[1]) == 0.5
        assert float(row[2]) == 0.6


@given(
    gamma=st.floats(min_value=0.01, max_value=4.0, allow_nan=False),
    m=st.integers(min_value=1, max_value=5000),
)
@settings(max_examples=60, deadline=None)
def test_zipf_pmf_is_distribution(gamma, m):
    p = zipf_pmf(ZipfParams(exponent=gamma, catalog_size=m))
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.all(p > 0)
