import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankz.sampling import (
    IndexSampler,
    Rng,
    build_sampler,
    derive_trial_seed,
    parse_seed,
)


class TestRng:
    def test_same_seed_same_stream(self):
        a = Rng(1234)
        b = Rng(1234)
        assert [a.next_uint64() for _ in range(100)] == [b.next_uint64() for _ in range(100)]

    def test_different_seeds_differ(self):
        a = [Rng(1).next_uint64() for _ in range(10)]
        b = [Rng(2).next_uint64() for _ in range(10)]
        assert a != b

    def test_scalar_and_bulk_streams_identical(self):
        a = Rng(0xDEADBEEF)
        b = Rng(0xDEADBEEF)
        scalar = np.array([a.random() for _ in range(257)])
        bulk = b.random_array(257)
        assert np.array_equal(scalar, bulk)

    def test_bulk_split_matches_single_block(self):
        a = Rng(42)
        b = Rng(42)
        joined = a.random_array(100)
        parts = np.concatenate([b.random_array(33), b.random_array(1), b.random_array(66)])
        assert np.array_equal(joined, parts)

    def test_uniform_range_and_mean(self):
        u = Rng(7).random_array(200_000)
        assert np.all(u >= 0.0) and np.all(u < 1.0)
        assert abs(u.mean() - 0.5) < 0.005
        assert abs(u.var() - 1.0 / 12.0) < 0.005

    def test_negative_count_rejected(self):
        with pytest.raises(ValueError):
            Rng(0).random_array(-1)

    def test_seed_masked_to_64_bits(self):
        assert Rng(1 << 64).next_uint64() == Rng(0).next_uint64()


class TestDeriveTrialSeed:
    def test_deterministic(self):
        assert derive_trial_seed(99, 3) == derive_trial_seed(99, 3)

    def test_trials_differ_for_many_bases(self):
        rng = np.random.default_rng(0)
        bases = rng.integers(0, 2**63, size=10_000)
        for base in bases:
            assert derive_trial_seed(int(base), 0) != derive_trial_seed(int(base), 1)

    def test_two_bases_have_disjoint_seed_sets(self):
        trials = range(10_000)
        seeds_a = {derive_trial_seed(123, t) for t in trials}
        seeds_b = {derive_trial_seed(456, t) for t in trials}
        assert len(seeds_a) == 10_000
        assert len(seeds_b) == 10_000
        assert not (seeds_a & seeds_b)


class TestIndexSampler:
    def test_two_weight_frequencies(self):
        # weights (1, 4) -> probabilities (0.2, 0.8)
        sampler = build_sampler([1.0, 4.0])
        draws = sampler.draw_many(Rng(2024), 1_000_000)
        freq = np.bincount(draws, minlength=2) / 1e6
        assert abs(freq[0] - 0.2) < 0.003
        assert abs(freq[1] - 0.8) < 0.003

    def test_chi_square_fit(self):
        sampler = build_sampler([1.0, 4.0])
        draws = sampler.draw_many(Rng(555), 1_000_000)
        counts = np.bincount(draws, minlength=2)
        expected = np.array([0.2, 0.8]) * 1e6
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        assert chi2 < 10.83  # df=1 critical value at p=0.001

    def test_uniform_weights_symmetric(self):
        sampler = build_sampler([1.0, 1.0, 1.0])
        draws = sampler.draw_many(Rng(10), 300_000)
        freq = np.bincount(draws, minlength=3) / 300_000
        assert np.all(np.abs(freq - 1 / 3) < 4 * np.sqrt((1 / 3) * (2 / 3) / 300_000))

    def test_zero_weight_never_drawn(self):
        sampler = build_sampler([0.0, 5.0])
        draws = sampler.draw_many(Rng(3), 1_000_000)
        assert not np.any(draws == 0)

    def test_interior_zero_weight_never_drawn(self):
        sampler = build_sampler([2.0, 0.0, 1.0])
        draws = sampler.draw_many(Rng(8), 200_000)
        assert not np.any(draws == 1)

    def test_single_index(self):
        sampler = build_sampler([3.0])
        rng = Rng(1)
        assert all(sampler.draw(rng) == 0 for _ in range(50))

    def test_fixed_seed_fixed_indices(self):
        sampler = build_sampler([1.0, 2.0, 3.0, 4.0])
        a = Rng(77)
        b = Rng(77)
        assert [sampler.draw(a) for _ in range(100)] == [sampler.draw(b) for _ in range(100)]

    def test_scalar_draw_matches_bulk(self):
        sampler = build_sampler([0.5, 1.5, 3.0])
        a = Rng(99)
        b = Rng(99)
        scalar = [sampler.draw(a) for _ in range(500)]
        bulk = sampler.draw_many(b, 500)
        assert np.array_equal(scalar, bulk)

    def test_frequencies_match_weights_within_4_sigma(self):
        n = 1_000_000
        for seed, weights in ((1, [2.0, 3.0, 5.0]), (2, [0.1, 0.0, 0.9, 1.0])):
            w = np.asarray(weights)
            p = w / w.sum()
            draws = build_sampler(w).draw_many(Rng(seed), n)
            freq = np.bincount(draws, minlength=w.size) / n
            bound = 4 * np.sqrt(p * (1 - p) / n)
            assert np.all(np.abs(freq - p) <= np.maximum(bound, 1e-12))

    @pytest.mark.parametrize(
        "weights",
        [[], [0.0, 0.0], [-1.0, 2.0], [np.nan, 1.0], [np.inf, 1.0]],
    )
    def test_invalid_weights_rejected(self, weights):
        with pytest.raises(ValueError):
            build_sampler(weights)

    @given(
        st.lists(st.sampled_from([0.0, 0.25, 1.0, 7.5]), min_size=1, max_size=12).filter(
            lambda w: sum(w) > 0
        ),
        st.integers(min_value=0, max_value=2**32),
    )
    @settings(max_examples=50, deadline=None)
    def test_draws_always_positive_weight(self, weights, seed):
        sampler = IndexSampler(weights)
        draws = sampler.draw_many(Rng(seed), 500)
        w = np.asarray(weights)
        assert np.all(w[draws] > 0)


class TestParseSeed:
    def test_decimal_and_hex(self):
        assert parse_seed("123") == 123
        assert parse_seed("0xff") == 255
        assert parse_seed(str(2**64 - 1)) == 2**64 - 1

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            parse_seed(str(2**64))
        with pytest.raises(ValueError):
            parse_seed("-1")
