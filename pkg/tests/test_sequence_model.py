"""Singular-system construction and reduction to the sequence model."""

import json

import numpy as np
import pytest

from specfilter import (DimensionMismatch, ProblemInstance, RankDeficient, SingularSystem,
                        SpecFilterError, build_singular_system, noise_variances, synthesize,
                        to_sequence)
from specfilter.formats import read_operator, write_matrix_csv
from specfilter.sequence_model import inner_n

from conftest import R1_B, R1_X


class TestBuildSingularSystem:
    def test_identity_normalisation(self):
        system = build_singular_system(np.eye(3))
        np.testing.assert_allclose(system.b, np.full(3, 1 / np.sqrt(3)), rtol=1e-14)
        a = np.eye(3)
        for i in range(3):
            np.testing.assert_allclose(a @ system.phi[i], system.b[i] * system.psi[i], atol=1e-14)

    def test_diagonal_ordering(self):
        system = build_singular_system(np.diag([0.1, 3.0, 1.0]))
        np.testing.assert_allclose(system.b * np.sqrt(3), [3.0, 1.0, 0.1], rtol=1e-14)
        assert np.all(np.diff(system.b**2) <= 0)

    def test_singular_system_relations(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(5, 8))
        system = build_singular_system(a)
        n = 5
        for i in range(n):
            np.testing.assert_allclose(a @ system.phi[i], system.b[i] * system.psi[i], atol=1e-12)
            # adjoint w.r.t. <.,.>_n on the image side is A^T / n
            np.testing.assert_allclose(a.T @ system.psi[i] / n, system.b[i] * system.phi[i], atol=1e-12)
        np.testing.assert_allclose(inner_n(system.psi, system.psi[:, None, :]), np.eye(n), atol=1e-12)

    def test_rank_deficient(self):
        a = np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        with pytest.raises(RankDeficient):
            build_singular_system(a)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            build_singular_system(np.ones((3, 2)))

    def test_increasing_spectrum_rejected(self):
        with pytest.raises(SpecFilterError):
            SingularSystem([0.1, 1.0])

    def test_zero_singular_value_rejected(self):
        with pytest.raises(SpecFilterError):
            SingularSystem([1.0, 0.0])


class TestSequenceReduction:
    def test_r1_variances(self, r1):
        np.testing.assert_allclose(r1.variances, [0.01, 0.04, 1.0, 100.0], rtol=1e-14)

    def test_noise_variances_scale(self):
        system = SingularSystem([2.0, 1.0])
        np.testing.assert_allclose(noise_variances(system, 1.0), [0.125, 0.5])

    def test_r1_round_trip(self, r1):
        # y with <y, psi_i>_n = b_i x_i
        y = r1.system.apply(r1.x)
        obs = to_sequence(y, r1.system, r1.sigma)
        np.testing.assert_allclose(obs.ydag, R1_X, rtol=1e-14)

    def test_round_trip_full_basis(self):
        rng = np.random.default_rng(11)
        a = rng.normal(size=(6, 9))
        system = build_singular_system(a)
        coeffs = rng.normal(size=6)
        x0 = synthesize(coeffs, system)
        obs = to_sequence(a @ x0, system, 0.1)
        np.testing.assert_allclose(obs.ydag, coeffs, rtol=1e-10, atol=1e-12)

    def test_parseval(self):
        rng = np.random.default_rng(5)
        system = build_singular_system(rng.normal(size=(7, 7)))
        for _ in range(100):
            c = rng.normal(size=7)
            assert np.sum(synthesize(c, system) ** 2) == pytest.approx(np.sum(c**2), rel=1e-12)

    def test_noise_is_diagonalised(self):
        """eta_i = b_i^-1 <eps, psi_i>_n has variance sigma^2 b_i^-2 / n and is uncorrelated."""
        rng = np.random.default_rng(8)
        n, sigma, reps = 5, 0.7, 100_000
        system = build_singular_system(rng.normal(size=(n, n)))
        eps = rng.normal(0, sigma, size=(reps, n))
        eta = system.project(eps) / system.b
        var = noise_variances(system, sigma)
        emp = eta.var(axis=0)
        se = var * np.sqrt(2.0 / reps)
        assert np.all(np.abs(emp - var) < 5 * se)
        corr = np.corrcoef(eta.T) - np.eye(n)
        assert np.max(np.abs(corr)) < 5 / np.sqrt(reps)

    def test_length_mismatch(self, r1):
        with pytest.raises(DimensionMismatch):
            to_sequence(np.ones(3), r1.system, 0.2)

    def test_instance_validation(self):
        with pytest.raises(SpecFilterError):
            ProblemInstance.from_spectrum(R1_B, R1_X, 0.0)
        with pytest.raises(DimensionMismatch):
            ProblemInstance.from_spectrum(R1_B, R1_X[:3], 0.2)


class TestOperatorFiles:
    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(3, 4))
        path = tmp_path / "op.csv"
        path.write_bytes(write_matrix_csv(a))
        system = read_operator(path)
        np.testing.assert_allclose(system.b, build_singular_system(a).b, rtol=1e-15)

    def test_csv_header_mismatch(self, tmp_path):
        path = tmp_path / "op.csv"
        path.write_text("2,2\n1,0\n0\n")
        with pytest.raises(SpecFilterError):
            read_operator(path)

    def test_spectrum_json(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps({"b": list(R1_B)}))
        system = read_operator(path)
        assert system.spectrum_only
        np.testing.assert_array_equal(system.b, R1_B)
