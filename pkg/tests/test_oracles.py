"""Exact risks, oracles and closed-form bound sides."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specfilter import (DegenerateSignal, ModelSet, ProblemInstance, SpecFilterError,
                        exact_filter_risk, exact_model_risk, factor_two_check, lemma1_bounds,
                        oracle_filter, oracle_model, theorem1_bound, threshold_params)
from specfilter.oracles import (brute_force_oracle, corollary1_bound, enumerate_models, gaussian_K,
                                oracle_filter_risk_closed_form, oracle_model_risk_closed_form)

from conftest import random_instance

K3 = math.sqrt(1 / 3)
R1_ORACLE_FILTER_RISK = 0.8204009276


class TestExactRisk:
    def test_r1_model_risk(self, r1):
        r = exact_model_risk(ModelSet.from_indices([0, 2], 4), r1)
        assert r.bias == pytest.approx(0.0125, rel=1e-14)
        assert r.variance == pytest.approx(1.01, rel=1e-14)
        assert r.total == pytest.approx(1.0225, rel=1e-14)

    def test_empty_and_full(self, r1):
        assert exact_model_risk(ModelSet.empty(4), r1).total == pytest.approx(5.0125, rel=1e-14)
        assert exact_model_risk(ModelSet.full(4), r1).total == pytest.approx(101.05, rel=1e-14)

    def test_filter_risk_matches_model_risk_on_binary(self, r1):
        for mask in enumerate_models(4):
            m = ModelSet(mask)
            assert exact_filter_risk(m.as_filter(), r1) == pytest.approx(exact_model_risk(m, r1).total, rel=1e-14)

    def test_r1_oracle_filter(self, r1):
        w = oracle_filter(r1).weights
        np.testing.assert_allclose(w, [1 / 1.01, 0.2, 0.8, 0.0025 / 100.0025], rtol=1e-14)
        assert exact_filter_risk(w, r1) == pytest.approx(R1_ORACLE_FILTER_RISK, rel=1e-10)


class TestOracles:
    def test_r1_oracle_model(self, r1):
        m = oracle_model(r1)
        assert m == {0, 2}
        assert not m.is_cutoff()

    def test_brute_force_r1(self, r1):
        m, risk = brute_force_oracle(r1)
        assert m == {0, 2}
        assert risk == pytest.approx(1.0225, rel=1e-14)

    def test_tie_goes_to_inclusion(self):
        inst = ProblemInstance.from_spectrum([1.0], [1.0], 1.0)  # x^2 == sigma^2
        assert oracle_model(inst) == {0}
        assert brute_force_oracle(inst)[0] == {0}

    def test_enumeration_cap(self):
        with pytest.raises(SpecFilterError):
            enumerate_models(21)

    def test_closed_forms(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            inst = random_instance(rng, int(rng.integers(1, 15)))
            m_sum = exact_model_risk(oracle_model(inst), inst).total
            f_sum = exact_filter_risk(oracle_filter(inst), inst)
            assert oracle_model_risk_closed_form(inst) == pytest.approx(m_sum, rel=1e-12, abs=1e-300)
            assert oracle_filter_risk_closed_form(inst) == pytest.approx(f_sum, rel=1e-12, abs=1e-300)

    def test_oracle_filter_is_stationary(self):
        """Small perturbations of lambda* never lower the risk."""
        rng = np.random.default_rng(6)
        for _ in range(50):
            inst = random_instance(rng, 6)
            lam = oracle_filter(inst).weights
            base = exact_filter_risk(lam, inst)
            for _ in range(20):
                assert exact_filter_risk(lam + rng.normal(0, 1e-3, 6), inst) >= base - 1e-15

    @given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=12),
           st.floats(0.01, 5.0))
    @settings(max_examples=300, deadline=None)
    def test_oracle_is_exhaustive_argmin(self, xs, sigma):
        n = len(xs)
        b = np.linspace(1.0, 0.05, n)
        inst = ProblemInstance.from_spectrum(b, xs, sigma)
        m, risk = brute_force_oracle(inst)
        assert exact_model_risk(oracle_model(inst), inst).total == pytest.approx(risk, rel=1e-12, abs=0)

    def test_oracle_permutation_equivariance(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            inst = random_instance(rng, 7)
            perm = rng.permutation(7)
            # the sequence model only depends on (x_i, sigma_i^2), so permute both
            var = inst.variances[perm]
            m = (inst.x[perm] ** 2 >= var)
            np.testing.assert_array_equal(m, oracle_model(inst).mask[perm])


class TestFactorTwo:
    def test_r1(self, r1):
        rep = factor_two_check(r1)
        assert rep.lhs == pytest.approx(1.0225, rel=1e-14)
        assert rep.rhs == pytest.approx(2 * R1_ORACLE_FILTER_RISK, rel=1e-10)
        assert rep.satisfied

    def test_sweep(self):
        """Best binary filter within a factor two of the best real filter; the
        ratio reaches 2 exactly when x_i^2 = sigma_i^2."""
        ratios = []
        for t in np.geomspace(1e-3, 1e3, 601):
            inst = ProblemInstance.from_spectrum([1.0], [math.sqrt(t)], 1.0)
            rep = factor_two_check(inst)
            ratios.append(rep.lhs / (rep.rhs / 2))
            assert rep.lhs <= rep.rhs * (1 + 1e-12)
        assert max(ratios) == pytest.approx(2.0, rel=1e-2)
        inst = ProblemInstance.from_spectrum([1.0], [1.0], 1.0)
        rep = factor_two_check(inst)
        assert rep.lhs == pytest.approx(rep.rhs, rel=1e-14)


class TestTheorem1:
    def test_r1_rhs(self, r1):
        rep = theorem1_bound(r1, 3.0, K3)
        expected = 1.0225 + (36 * math.log(4) + 2 + 3 * math.log(5.0125)) * 1.01 + 2 * K3 * 3 / 4
        assert rep.rhs == pytest.approx(expected, rel=1e-14)
        assert rep.rhs == pytest.approx(59.19835, rel=1e-6)
        assert rep.constants["K1"] == 36.0
        assert rep.constants["K3"] == pytest.approx(2 * K3 * 3, rel=1e-14)

    def test_degenerate_signal(self):
        inst = ProblemInstance.from_spectrum([1.0, 0.5, 0.1], [0.0, 0.0, 0.0], 0.2)
        with pytest.raises(DegenerateSignal):
            theorem1_bound(inst, 3.0, K3)

    def test_small_n_rejected(self):
        inst = ProblemInstance.from_spectrum([1.0, 0.5], [1.0, 1.0], 0.2)
        with pytest.raises(SpecFilterError):
            theorem1_bound(inst, 3.0, K3)

    def test_corollary1_rhs(self, r1):
        t1 = theorem1_bound(r1, 3.0, K3)
        c1 = corollary1_bound(r1, 3.0, K3)
        assert c1.rhs == pytest.approx(t1.rhs - 1.0225 + 2 * R1_ORACLE_FILTER_RISK, rel=1e-12)
        assert c1.rhs >= t1.rhs

    def test_certified_vs_consistent(self, r1):
        rep = theorem1_bound(r1, 3.0, K3, lhs=59.0, stderr=0.1)
        assert rep.consistent() and not rep.certified() and not rep.passed()
        assert rep.with_lhs(50.0, 0.1).passed()


class TestLemma1:
    def test_r1_values(self, r1):
        p = threshold_params(r1.variances, 3.0)
        bounds = lemma1_bounds(r1, p, K3)
        mu3 = 3 * math.log(16)
        assert bounds[2, 0] == pytest.approx(2 * K3 * 3 * math.exp(-mu3 / 3), rel=1e-14)
        assert bounds[2, 0] == pytest.approx(0.216506, rel=1e-5)
        assert bounds[2, 1] == pytest.approx(6 * mu3 + 2, rel=1e-14)
        assert bounds[2, 1] == pytest.approx(51.9066, rel=1e-5)
        # mu = 0 coordinates
        np.testing.assert_allclose(bounds[:2, 0], 2 * K3 * 3 * np.array([0.01, 0.04]), rtol=1e-14)
        np.testing.assert_allclose(bounds[:2, 1], [0.02, 0.08], rtol=1e-14)


class TestGaussianK:
    def test_value(self):
        assert gaussian_K(3.0) == pytest.approx(K3, rel=1e-15)

    def test_inadmissible_beta(self):
        with pytest.raises(SpecFilterError):
            gaussian_K(2.0)
