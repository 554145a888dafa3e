"""Tests for the brute-force oracles"""

import numpy as np
import pytest

from src.blackbox import BlackBoxUnitary, HermitianGenerator, from_spectrum, haar_random, identity, unseal
from src.qpe import InitialPreparation, ProtocolConfig, RegisterPreparation, blackbox_qpe
from src.spectra import autocorrelation_estimate, choose_time_step
from src.verify import (
    OracleError,
    aliasing_report,
    assemble_protocol_unitary,
    circuit_equivalence,
    exact_difference_distribution,
    exact_eigenphases,
    fejer_kernel,
    predicted_outcome_distribution,
    reference_ladder_unitary,
    run_checks,
)

MIXED = InitialPreparation.same(RegisterPreparation.maximally_mixed())


class TestExactEigenphases:
    def test_diagonal(self):
        eigen = exact_eigenphases(BlackBoxUnitary(np.diag([1, 1j])))
        np.testing.assert_allclose(eigen.phases, [0.0, np.pi / 2], atol=1e-12)

    def test_pauli_x(self):
        eigen = exact_eigenphases(BlackBoxUnitary(np.array([[0, 1], [1, 0]])))
        np.testing.assert_allclose(eigen.phases, [0.0, np.pi], atol=1e-12)
        plus = np.array([1, 1]) / np.sqrt(2)
        minus = np.array([1, -1]) / np.sqrt(2)
        assert abs(np.vdot(plus, eigen.vectors[:, 0])) == pytest.approx(1.0)
        assert abs(np.vdot(minus, eigen.vectors[:, 1])) == pytest.approx(1.0)

    def test_reconstruction(self, rng):
        box = haar_random(2, rng)
        eigen = exact_eigenphases(box)
        v = eigen.vectors
        rebuilt = (v * np.exp(1j * eigen.phases)) @ v.conj().T
        np.testing.assert_allclose(rebuilt, unseal(box), atol=1e-9)
        assert eigen.residual < 1e-9

    def test_degenerate_cluster_is_orthonormal(self, rng):
        eigen = exact_eigenphases(from_spectrum([0.5, 0.5, 0.5, 2.0], rng))
        assert [group.tolist() for group in eigen.clusters()] == [[0, 1, 2], [3]]
        np.testing.assert_allclose(eigen.vectors.conj().T @ eigen.vectors, np.eye(4), atol=1e-10)

    def test_clusters_wrap_around_the_circle(self):
        eigen = exact_eigenphases(identity(1))
        assert len(eigen.clusters()) == 1


class TestDifferenceDistribution:
    def test_identity_box(self):
        density = exact_difference_distribution(identity(2), MIXED)
        assert density.mass_at(0.0) == pytest.approx(1.0)

    def test_two_phases_mixed(self, rng):
        density = exact_difference_distribution(from_spectrum([0.0, np.pi / 2], rng), MIXED)
        assert density.mass_at(0.0) == pytest.approx(0.5)
        assert density.mass_at(np.pi / 2) == pytest.approx(0.25)
        assert density.mass_at(-np.pi / 2) == pytest.approx(0.25)

    def test_same_eigenstate(self, rng):
        prep = InitialPreparation.same(RegisterPreparation.eigenstate(1))
        density = exact_difference_distribution(haar_random(2, rng), prep)
        assert density.mass_at(0.0) == pytest.approx(1.0)

    def test_total_mass_and_symmetry(self, rng):
        density = exact_difference_distribution(haar_random(2, rng), MIXED)
        assert density.weights.sum() == pytest.approx(1.0, abs=1e-10)
        for phase, weight in zip(density.support, density.weights):
            assert density.mass_at(-phase) == pytest.approx(weight, abs=1e-10)

    def test_matches_binned_estimate_on_grid_spectra(self):
        rng = np.random.default_rng(31)
        k = 5
        for trial in range(10):
            n = 1 + trial % 3
            phases = 2 * np.pi * rng.integers(0, 1 << k, size=1 << n) / (1 << k)
            box = from_spectrum(phases, rng)
            estimate = autocorrelation_estimate(blackbox_qpe(box, MIXED, ProtocolConfig(k=k, n=n)))
            binned = exact_difference_distribution(box, MIXED).binned(k)
            np.testing.assert_allclose(estimate.grid_weights(), binned.grid_weights(), atol=1e-9)

    def test_off_grid_prediction(self, rng):
        box = haar_random(2, rng)
        prep = InitialPreparation(
            r1=RegisterPreparation.basis(1), r2=RegisterPreparation.maximally_mixed()
        )
        predicted = predicted_outcome_distribution(exact_difference_distribution(box, prep), 4)
        actual = blackbox_qpe(box, prep, ProtocolConfig(k=4, n=2)).distribution()
        np.testing.assert_allclose(actual, predicted, atol=1e-9)


class TestFejerKernel:
    def test_on_grid_values(self):
        x = 2 * np.pi * np.arange(8) / 8
        np.testing.assert_allclose(fejer_kernel(x, 3), [1, 0, 0, 0, 0, 0, 0, 0], atol=1e-12)

    def test_sums_to_one_over_grid(self):
        grid = 2 * np.pi * np.arange(16) / 16
        assert fejer_kernel(0.37 - grid, 4).sum() == pytest.approx(1.0)


class TestCircuitEquivalence:
    def test_reflexive(self, rng):
        a = unseal(haar_random(2, rng))
        result = circuit_equivalence(a, a)
        assert result.equivalent
        assert result.residual < 1e-12

    def test_global_phase(self, rng):
        b = unseal(haar_random(2, rng))
        a = np.exp(1j * np.pi / 7) * b
        assert circuit_equivalence(a, b, mode="global-phase")
        assert circuit_equivalence(b, a, mode="global-phase")

    def test_different_matrices(self, rng):
        a, b = unseal(haar_random(1, rng)), unseal(haar_random(1, rng))
        assert not circuit_equivalence(a, b)

    def test_branch_phases(self):
        a = np.diag([1, 1j, 1, 1j])
        b = np.eye(4)
        assert not circuit_equivalence(a, b, mode="global-phase")
        assert circuit_equivalence(a, b, mode="branchwise", ancilla_bits=1)

    def test_dimension_mismatch(self):
        with pytest.raises(OracleError):
            circuit_equivalence(np.eye(2), np.eye(4))

    def test_branchwise_needs_ancilla_bits(self):
        with pytest.raises(OracleError):
            circuit_equivalence(np.eye(2), np.eye(2), mode="branchwise")

    @pytest.mark.parametrize("n, k", [(1, 2), (2, 2)])
    def test_protocol_matches_explicit_ladder(self, rng, n, k):
        box = haar_random(n, rng)
        config = ProtocolConfig(k=k, n=n)
        result = circuit_equivalence(
            assemble_protocol_unitary(box, config),
            reference_ladder_unitary(box, config),
            mode="branchwise",
            ancilla_bits=k,
        )
        assert result.equivalent
        assert result.residual < 1e-9

    def test_skipped_cswap_breaks_equivalence(self, rng):
        box = haar_random(1, rng)
        config = ProtocolConfig(k=2, n=1, variant="skip-second-cswap")
        result = circuit_equivalence(
            assemble_protocol_unitary(box, config),
            reference_ladder_unitary(box, config.model_copy(update={"variant": "sandwich"})),
            mode="branchwise",
            ancilla_bits=2,
        )
        assert not result.equivalent


class TestAssembly:
    def test_identity_box(self):
        matrix = assemble_protocol_unitary(identity(1), ProtocolConfig(k=1, n=1))
        np.testing.assert_allclose(matrix, np.eye(16), atol=1e-12)

    def test_unitarity(self, rng):
        matrix = assemble_protocol_unitary(haar_random(1, rng), ProtocolConfig(k=2, n=1))
        np.testing.assert_allclose(matrix.conj().T @ matrix, np.eye(matrix.shape[0]), atol=1e-9)

    def test_full_restricts_to_compressed(self, rng):
        box = haar_random(1, rng)
        full = assemble_protocol_unitary(box, ProtocolConfig(k=2, n=1))
        compressed = assemble_protocol_unitary(box, ProtocolConfig(k=2, n=1, mode="compressed"))
        d = compressed.shape[0]
        # H is the top register, so H=|0⟩ selects the leading block
        np.testing.assert_allclose(full[:d, :d], compressed, atol=1e-12)

    def test_assembly_cap(self, rng):
        with pytest.raises(OracleError):
            assemble_protocol_unitary(haar_random(3, rng), ProtocolConfig(k=4, n=3))


class TestAliasing:
    def test_bound_respected(self, rng):
        gen = HermitianGenerator.random(2, rng).with_spread(1.3)
        report = aliasing_report(gen, choose_time_step(1.3))
        assert not report.aliased
        assert report.max_difference <= np.pi + 1e-9
        assert report.max_wrap_error < 1e-9

    def test_doubled_step_aliases(self, rng):
        gen = HermitianGenerator.random(2, rng).with_spread(1.3)
        report = aliasing_report(gen, 2 * choose_time_step(1.3))
        assert report.aliased
        assert report.max_wrap_error > 1.0


class TestRunChecks:
    def test_haar_instance_passes(self):
        box = haar_random(1, np.random.default_rng(5))
        checks = run_checks(box, MIXED, ProtocolConfig(k=2, n=1))
        assert [c.name for c in checks] == [
            "branch-correctness", "assembled-unitarity", "white-box-equivalence", "oracle-match"
        ]
        assert all(c.passed for c in checks)
        assert all(c.residual < 1e-9 for c in checks)

    def test_identity_passes(self):
        assert all(c.passed for c in run_checks(identity(1), MIXED, ProtocolConfig(k=2, n=1)))

    def test_skipped_cswap_fails(self):
        box = haar_random(1, np.random.default_rng(5))
        config = ProtocolConfig(k=2, n=1, variant="skip-second-cswap")
        checks = {c.name: c for c in run_checks(box, MIXED, config)}
        assert not checks["branch-correctness"].passed
