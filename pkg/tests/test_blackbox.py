"""Tests for the sealed black-box oracle and its instance generators"""

import numpy as np
import pytest

from src.blackbox import (
    BlackBoxError,
    BlackBoxUnitary,
    HermitianGenerator,
    apply_power,
    from_hamiltonian,
    from_spectrum,
    haar_random,
    identity,
    load_matrix,
    unseal,
)
from src.qsim import RegisterLayout, StateVector, is_unitary
from src.verify import exact_eigenphases

PAULI_Z = np.diag([1.0, -1.0]).astype(complex)


@pytest.fixture
def layout():
    return RegisterLayout.full(1, 2)


class TestApplyPower:
    def test_power_zero_is_identity(self, rng, layout, make_state):
        box = haar_random(2, rng)
        original = make_state(layout.dimension)
        state = box.apply_power(StateVector(original.copy(), layout), 0)
        np.testing.assert_allclose(state.amplitudes, original)
        assert box.calls == 1

    def test_power_two_is_two_applications(self, rng, layout, make_state):
        box = haar_random(2, rng)
        original = make_state(layout.dimension)
        once = StateVector(original.copy(), layout)
        box.apply_power(once, 1)
        box.apply_power(once, 1)
        twice = box.apply_power(StateVector(original.copy(), layout), 2)
        np.testing.assert_allclose(twice.amplitudes, once.amplitudes, atol=1e-10)

    def test_powers_compose(self, rng, make_state):
        box = haar_random(2, rng)
        layout = RegisterLayout.compressed(1, 2)
        original = make_state(layout.dimension)
        for p in range(1, 9):
            for q in range(1, 9):
                split = StateVector(original.copy(), layout)
                box.apply_power(split, q, layout.r2)
                box.apply_power(split, p, layout.r2)
                joint = box.apply_power(StateVector(original.copy(), layout), p + q, layout.r2)
                np.testing.assert_allclose(joint.amplitudes, split.amplitudes, atol=1e-9)

    def test_norm_preserved(self, rng, layout, make_state):
        box = haar_random(2, rng)
        state = box.apply_power(StateVector(make_state(layout.dimension), layout), 5)
        assert state.norm() == pytest.approx(1.0, abs=1e-10)

    def test_defaults_to_target_register(self, rng, layout, make_state):
        box = haar_random(2, rng)
        original = make_state(layout.dimension)
        a = box.apply_power(StateVector(original.copy(), layout), 3)
        b = apply_power(box, StateVector(original.copy(), layout), 3, layout.target)
        np.testing.assert_allclose(a.amplitudes, b.amplitudes)

    def test_counts_every_call(self, rng, layout):
        box = haar_random(2, rng)
        state = StateVector(np.eye(layout.dimension)[0], layout)
        for p in (1, 2, 4):
            box.apply_power(state, p, layout.r1)
        assert box.calls == 3
        box.reset_calls()
        assert box.calls == 0

    def test_register_size_mismatch(self, rng):
        box = haar_random(2, rng)
        layout = RegisterLayout.full(1, 1)
        with pytest.raises(BlackBoxError):
            box.apply_power(StateVector(np.eye(layout.dimension)[0], layout), 1)

    def test_negative_power(self, rng, layout):
        box = haar_random(2, rng)
        with pytest.raises(BlackBoxError):
            box.apply_power(StateVector(np.eye(layout.dimension)[0], layout), -1)


class TestSealing:
    def test_matrix_not_exposed(self, haar_box):
        assert not hasattr(haar_box, "matrix")
        assert not hasattr(haar_box, "_matrix")
        with pytest.raises(AttributeError):
            haar_box.__matrix

    def test_unseal_returns_copy(self, haar_box):
        copy = unseal(haar_box)
        copy[0, 0] = 42.0
        assert unseal(haar_box)[0, 0] != 42.0

    def test_repr_hides_matrix(self, haar_box):
        assert "haar" in repr(haar_box)
        assert "[" not in repr(haar_box)


class TestConstruction:
    def test_rejects_non_unitary(self):
        with pytest.raises(BlackBoxError):
            BlackBoxUnitary(np.array([[1, 1], [0, 1]]))

    def test_rejects_non_power_of_two(self):
        with pytest.raises(BlackBoxError):
            BlackBoxUnitary(np.eye(3))

    def test_rejects_oversize(self):
        with pytest.raises(BlackBoxError):
            BlackBoxUnitary(np.eye(1 << 7))

    def test_identity(self):
        np.testing.assert_allclose(unseal(identity(2)), np.eye(4))


class TestHaarRandom:
    def test_unitary(self, rng):
        u = unseal(haar_random(3, rng))
        np.testing.assert_allclose(u.conj().T @ u, np.eye(8), atol=1e-10)

    def test_same_seed_same_matrix(self):
        a = unseal(haar_random(2, np.random.default_rng(9)))
        b = unseal(haar_random(2, np.random.default_rng(9)))
        np.testing.assert_array_equal(a, b)

    def test_eigenphases_roughly_uniform(self):
        rng = np.random.default_rng(2024)
        phases = np.concatenate(
            [np.angle(np.linalg.eigvals(unseal(haar_random(2, rng)))) for _ in range(200)]
        )
        counts, _ = np.histogram(np.mod(phases, 2 * np.pi), bins=8, range=(0, 2 * np.pi))
        expected = phases.size / 8
        sigma = np.sqrt(phases.size * (1 / 8) * (7 / 8))
        assert np.all(np.abs(counts - expected) < 5 * sigma)


class TestFromSpectrum:
    def test_zero_phases_give_identity(self, rng):
        u = unseal(from_spectrum([0.0, 0.0, 0.0, 0.0], rng))
        np.testing.assert_allclose(u, np.eye(4), atol=1e-12)

    def test_two_phases_recovered(self, rng):
        eigen = exact_eigenphases(from_spectrum([0.0, np.pi], rng))
        np.testing.assert_allclose(eigen.phases, [0.0, np.pi], atol=1e-9)

    def test_comb_multiset_recovered(self, rng):
        phases = [0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4] * 2
        eigen = exact_eigenphases(from_spectrum(phases, rng))
        np.testing.assert_allclose(eigen.phases, np.sort(phases), atol=1e-9)

    def test_length_must_be_power_of_two(self, rng):
        with pytest.raises(BlackBoxError):
            from_spectrum([0.0, 1.0, 2.0], rng)


class TestFromHamiltonian:
    def test_pauli_z(self):
        u = unseal(from_hamiltonian(HermitianGenerator(PAULI_Z), np.pi / 2))
        np.testing.assert_allclose(u, np.diag([np.exp(-1j * np.pi / 2), np.exp(1j * np.pi / 2)]), atol=1e-12)

    def test_zero_hamiltonian(self):
        u = unseal(from_hamiltonian(HermitianGenerator(np.zeros((4, 4))), 1.3))
        np.testing.assert_allclose(u, np.eye(4), atol=1e-12)

    def test_eigenphases_follow_eigenvalues(self, rng):
        gen = HermitianGenerator.random(2, rng)
        t = 0.7
        eigen = exact_eigenphases(from_hamiltonian(gen, t))
        expected = np.sort(np.mod(-gen.eigenvalues() * t, 2 * np.pi))
        np.testing.assert_allclose(eigen.phases, expected, atol=1e-9)
        assert is_unitary(unseal(from_hamiltonian(gen, t)))

    def test_non_positive_time(self):
        with pytest.raises(BlackBoxError):
            from_hamiltonian(HermitianGenerator(PAULI_Z), 0.0)


class TestHermitianGenerator:
    def test_rejects_non_hermitian(self):
        with pytest.raises(BlackBoxError):
            HermitianGenerator(np.array([[0, 1], [0, 0]]))

    def test_with_spread(self, rng):
        gen = HermitianGenerator.random(2, rng).with_spread(1.5)
        assert gen.spread() == pytest.approx(1.5, abs=1e-12)
        assert gen.eigenvalues()[0] == pytest.approx(0.0, abs=1e-12)

    def test_with_spread_needs_two_levels(self):
        with pytest.raises(BlackBoxError):
            HermitianGenerator(np.eye(2)).with_spread(1.0)

    def test_from_text(self, tmp_path):
        path = tmp_path / "h.txt"
        path.write_text("1 0 0 -1\n0 1 -1 0\n")
        gen = HermitianGenerator.from_text(path)
        np.testing.assert_allclose(gen.matrix, [[1, -1j], [1j, -1]])
        assert gen.n == 1

    def test_load_matrix_rejects_odd_columns(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1 0 0\n0 1 0\n")
        with pytest.raises(BlackBoxError):
            load_matrix(path)
