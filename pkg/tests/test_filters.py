"""Filter estimators and data-driven model selection."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specfilter import (DimensionMismatch, ModelSet, SequenceObservation, SpecFilterError,
                        apply_filter, penalized_criterion, spectral_cutoff, threshold_params,
                        threshold_select, tikhonov, ure_select)
from specfilter.filters import constant_params, selection_thresholds

from conftest import R1_X

R1_VAR = np.array([0.01, 0.04, 1.0, 100.0])


def _obs(ydag, var=R1_VAR):
    return SequenceObservation(ydag, var)


def _random_obs(rng, n):
    var = np.sort(rng.uniform(0.001, 0.5, n) ** 2)
    return SequenceObservation(rng.normal(0, 1, n) * rng.uniform(0.1, 2.0), var)


observations = st.integers(2, 9).flatmap(lambda n: st.tuples(
    st.lists(st.floats(-5, 5, allow_nan=False), min_size=n, max_size=n),
    st.lists(st.floats(1e-3, 2.0), min_size=n, max_size=n),
))


class TestModelSet:
    def test_from_indices(self):
        m = ModelSet.from_indices([0, 2], 4)
        assert m.indices == (0, 2)
        assert m == {0, 2}
        assert 2 in m and 1 not in m
        assert len(m) == 2

    def test_out_of_range(self):
        with pytest.raises(SpecFilterError):
            ModelSet.from_indices([4], 4)

    def test_is_cutoff(self):
        assert ModelSet.from_indices([0, 1], 4).is_cutoff()
        assert ModelSet.empty(4).is_cutoff()
        assert ModelSet.full(4).is_cutoff()
        assert not ModelSet.from_indices([0, 2], 4).is_cutoff()

    def test_hash_and_eq(self):
        a = ModelSet.from_indices([1], 3)
        b = ModelSet(np.array([False, True, False]))
        assert a == b and hash(a) == hash(b)
        assert a != ModelSet.from_indices([1], 4)


class TestFixedFilters:
    def test_apply_model(self):
        out = apply_filter(ModelSet.from_indices([0, 2], 4), _obs([1.0, 0.1, 2.0, 0.05]))
        np.testing.assert_array_equal(out, [1.0, 0.0, 2.0, 0.0])

    def test_apply_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            apply_filter(np.ones(3), _obs(R1_X))

    def test_spectral_cutoff(self):
        np.testing.assert_array_equal(spectral_cutoff(2, 4).weights, [1, 1, 0, 0])
        np.testing.assert_array_equal(spectral_cutoff(0, 3).weights, [0, 0, 0])
        with pytest.raises(SpecFilterError):
            spectral_cutoff(5, 4)

    def test_tikhonov_r1(self):
        w = tikhonov(1.0, R1_VAR).weights
        np.testing.assert_allclose(w, [1 / 1.01, 1 / 1.04, 0.5, 1 / 101], rtol=1e-14)

    def test_tikhonov_zero_tau_is_identity(self):
        np.testing.assert_array_equal(tikhonov(0.0, R1_VAR).weights, np.ones(4))

    def test_tikhonov_negative(self):
        with pytest.raises(SpecFilterError):
            tikhonov(-1.0, R1_VAR)


class TestURE:
    def test_r1_zero_noise(self):
        assert ure_select(_obs(R1_X)) == {0, 2}

    def test_exhaustive_minimiser(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            obs = _random_obs(rng, 8)
            best, best_val = None, np.inf
            for bits in itertools.product([False, True], repeat=8):
                mask = np.array(bits)
                val = np.sum(obs.ydag[~mask] ** 2) + 2 * np.sum(obs.variances[mask])
                if val < best_val:
                    best, best_val = mask, val
            assert ure_select(obs) == ModelSet(best)

    @given(observations)
    @settings(max_examples=200, deadline=None)
    def test_ure_is_constant_mu_half(self, data):
        obs = SequenceObservation(np.array(data[0]), np.array(data[1]))
        assert ure_select(obs) == threshold_select(obs, constant_params(obs.n, 0.5))


class TestThreshold:
    def test_r1_mu(self):
        p = threshold_params(R1_VAR, 3.0)
        np.testing.assert_allclose(p.mu, [0.0, 0.0, 3 * np.log(16), 3 * np.log(1600)], rtol=1e-14)
        np.testing.assert_allclose(p.mu[2:], [8.317766, 22.133279], rtol=1e-6)

    def test_r1_thresholds(self):
        t = selection_thresholds(R1_VAR, threshold_params(R1_VAR, 3.0))
        np.testing.assert_allclose(t, [0.0, 0.0, 12 * np.log(16), 1200 * np.log(1600)], rtol=1e-12)
        np.testing.assert_allclose(t[2:], [33.271065, 8853.310690], rtol=1e-7)

    def test_r1_zero_noise_selection(self):
        assert threshold_select(_obs(R1_X), threshold_params(R1_VAR, 3.0)) == {0, 1}

    def test_inclusive_boundary(self):
        p = threshold_params(R1_VAR, 3.0)
        t = selection_thresholds(R1_VAR, p)
        assert 2 in threshold_select(_obs([0.0, 0.0, np.sqrt(t[2]) * (1 + 1e-15), 0.0]), p)
        assert ModelSet(np.array([True, True, False, False])) == threshold_select(_obs(np.zeros(4)), p)

    def test_non_monotone_selection(self):
        """A large coefficient at a small-eigenvalue coordinate yields a non-cut-off set."""
        p = threshold_params(R1_VAR, 3.0)
        m = threshold_select(_obs([1.0, 0.1, 6.0, 0.05]), p)
        assert m == {0, 1, 2}
        obs = _obs([0.0, 0.0, 6.0, 0.0], np.array([1.0, 1.0, 1.0, 1.0]) * 0.5)
        m = threshold_select(obs, threshold_params(obs.variances, 3.0))
        assert m == {2} and not m.is_cutoff()

    def test_beta_must_be_positive(self):
        with pytest.raises(SpecFilterError):
            threshold_params(R1_VAR, 0.0)

    def test_penalised_criterion_minimiser(self):
        """The threshold set minimises ||ydag - x_m||^2 + 4 sum_{i in m} sigma_i^2 mu_i."""
        rng = np.random.default_rng(1)
        for n in range(2, 11):
            for _ in range(5):
                obs = _random_obs(rng, n)
                p = threshold_params(obs.variances, 3.0)
                sel = threshold_select(obs, p)
                best = min(
                    (penalized_criterion(np.where(mask, obs.ydag, 0.0), obs, p), mask)
                    for mask in map(np.array, itertools.product([False, True], repeat=n))
                )
                val = penalized_criterion(apply_filter(sel, obs), obs, p)
                assert val == pytest.approx(best[0], rel=1e-12, abs=1e-15)

    @given(observations, st.randoms(use_true_random=False))
    @settings(max_examples=200, deadline=None)
    def test_permutation_equivariance(self, data, rnd):
        ydag, var = np.array(data[0]), np.array(data[1])
        perm = np.array(rnd.sample(range(ydag.size), ydag.size))
        p = threshold_params(var, 3.0)
        m = threshold_select(SequenceObservation(ydag, var), p)
        pp = threshold_params(var[perm], 3.0)
        mp = threshold_select(SequenceObservation(ydag[perm], var[perm]), pp)
        np.testing.assert_array_equal(mp.mask, m.mask[perm])

    @given(observations, st.floats(1.0, 10.0))
    @settings(max_examples=200, deadline=None)
    def test_monotone_in_ydag_magnitude(self, data, factor):
        """Scaling |ydag| up never removes a coordinate."""
        ydag, var = np.array(data[0]), np.array(data[1])
        p = threshold_params(var, 3.0)
        small = threshold_select(SequenceObservation(ydag, var), p)
        large = threshold_select(SequenceObservation(ydag * factor, var), p)
        assert set(small.indices) <= set(large.indices)

    @given(observations, st.floats(0.1, 10.0), st.floats(0.1, 10.0))
    @settings(max_examples=200, deadline=None)
    def test_monotone_in_beta(self, data, b1, b2):
        """A larger beta raises every threshold, so the selection shrinks."""
        ydag, var = np.array(data[0]), np.array(data[1])
        lo, hi = sorted((b1, b2))
        obs = SequenceObservation(ydag, var)
        assert set(threshold_select(obs, threshold_params(var, hi)).indices) <= \
            set(threshold_select(obs, threshold_params(var, lo)).indices)
