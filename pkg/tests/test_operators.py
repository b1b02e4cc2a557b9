import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from weakcons.operators import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    DimensionError,
    NotHermitianError,
    Operator,
    State,
    anticommutator,
    commutator,
    evolve,
    expectation,
    identity,
    ladder,
    partial_trace,
    propagator,
    spectral_decomposition,
    tensor,
    thermal_state,
)


def random_hermitian(seed, n):
    r = np.random.default_rng(seed)
    a = r.normal(size=(n, n)) + 1j * r.normal(size=(n, n))
    return Operator(a + a.conj().T, hermitian=True)


seeds = st.integers(0, 2**32 - 1)
dims = st.integers(2, 7)


class TestOperator:
    def test_rejects_non_square(self):
        with pytest.raises(DimensionError):
            Operator(np.ones((2, 3)))

    def test_hermitian_hint_is_checked(self):
        with pytest.raises(NotHermitianError):
            Operator([[0, 1], [0, 0]], hermitian=True)

    def test_matrix_is_read_only(self):
        op = Operator(np.eye(2))
        with pytest.raises(ValueError):
            op.matrix[0, 0] = 5

    def test_arithmetic_keeps_hermiticity(self):
        s = SIGMA_X + SIGMA_Z
        assert s.hermitian
        assert not (SIGMA_X @ SIGMA_Z).hermitian
        assert (2.0 * SIGMA_Y).hermitian

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            SIGMA_X + identity(3)


class TestState:
    def test_trace_checked(self):
        with pytest.raises(ValueError, match="trace"):
            State(np.eye(2))

    def test_negative_eigenvalue_rejected(self):
        with pytest.raises(ValueError, match="negative"):
            State(np.diag([1.5, -0.5]))

    def test_pure_state_purity(self):
        assert State.pure([1, 1j]).purity() == pytest.approx(1.0)


class TestCommutators:
    def test_pauli_commutator(self):
        np.testing.assert_allclose(commutator(SIGMA_Z, SIGMA_X).matrix, 2j * SIGMA_Y.matrix)

    def test_pauli_anticommutator_vanishes(self):
        np.testing.assert_allclose(anticommutator(SIGMA_X, SIGMA_Y).matrix, 0)

    def test_identity_anticommutator(self):
        b = random_hermitian(1, 4)
        np.testing.assert_allclose(anticommutator(identity(4), b).matrix, 2 * b.matrix)

    def test_truncated_ladder_commutator(self):
        a = ladder(20)
        c = commutator(a, a.dag()).matrix
        expected = np.eye(20)
        expected[19, 19] = -19
        np.testing.assert_allclose(c, expected, atol=1e-12)

    def test_anticommutator_elementwise(self):
        a = ladder(12).matrix
        x = (a + a.T) / np.sqrt(2)
        p = 1j * (a.T - a) / np.sqrt(2)
        brute = np.zeros((12, 12), dtype=complex)
        for i in range(12):
            for j in range(12):
                brute[i, j] = sum(x[i, k] * p[k, j] + p[i, k] * x[k, j] for k in range(12))
        np.testing.assert_allclose(anticommutator(x, p).matrix, brute, atol=1e-13)

    @given(seeds, dims)
    def test_hermiticity_structure(self, seed, n):
        a, b = random_hermitian(seed, n), random_hermitian(seed + 1, n)
        c = commutator(a, b).matrix
        d = anticommutator(a, b).matrix
        assert np.max(np.abs(c + c.conj().T)) <= 1e-12 * max(1, np.abs(c).max())
        assert np.max(np.abs(d - d.conj().T)) <= 1e-12 * max(1, np.abs(d).max())


class TestSpectral:
    @given(seeds, dims)
    def test_reconstruction(self, seed, n):
        h = random_hermitian(seed, n)
        sd = spectral_decomposition(h)
        scale = np.abs(h.matrix).max()
        assert np.abs(sd.reconstruct() - h.matrix).max() <= 1e-10 * scale
        v = sd.eigenvectors
        assert np.abs(v.conj().T @ v - np.eye(n)).max() <= 1e-10

    def test_diagonal_degenerate(self):
        sd = spectral_decomposition(np.diag([2.0, 0.0, 2.0, 1.0]))
        np.testing.assert_allclose(sd.eigenvalues, [0, 1, 2, 2])
        np.testing.assert_allclose(sd.reconstruct(), np.diag([2.0, 0.0, 2.0, 1.0]))


class TestEvolve:
    def test_two_level_phase(self):
        w, t = 1.3, 0.7
        h = Operator(np.diag([w, 0.0]), hermitian=True)
        x = evolve(SIGMA_X, h, t).matrix
        expected = np.array([[0, np.exp(-1j * w * t)], [np.exp(1j * w * t), 0]])
        np.testing.assert_allclose(x, expected, atol=1e-12)

    def test_conserved_unchanged(self):
        h = random_hermitian(3, 5)
        q = Operator(h.matrix @ h.matrix, hermitian=True)
        np.testing.assert_allclose(evolve(q, h, 2.3).matrix, q.matrix, atol=1e-10 * np.abs(q.matrix).max())

    @given(seeds, st.floats(-3, 3), st.floats(-3, 3))
    def test_group_property(self, seed, t1, t2):
        h = random_hermitian(seed, 4)
        a = random_hermitian(seed + 7, 4)
        lhs = evolve(a, h, t1 + t2).matrix
        rhs = evolve(evolve(a, h, t1), h, t2).matrix
        assert np.abs(lhs - rhs).max() <= 1e-10 * max(1, np.abs(a.matrix).max())

    @given(seeds, st.floats(-5, 5))
    def test_preserves_spectrum(self, seed, t):
        h = random_hermitian(seed, 5)
        a = random_hermitian(seed + 3, 5)
        out = evolve(a, h, t)
        assert out.hermitian
        np.testing.assert_allclose(np.linalg.eigvalsh(out.matrix), np.linalg.eigvalsh(a.matrix), atol=1e-9)

    def test_propagator_matches_heisenberg(self):
        h, a = random_hermitian(5, 4), random_hermitian(6, 4)
        r = np.random.default_rng(0).normal(size=4) + 0j
        rho = State.pure(r)
        u = propagator(h, 0.8)
        schrod = expectation(a, State._trusted(u @ rho.rho @ u.conj().T))
        heis = expectation(evolve(a, h, 0.8), rho)
        assert schrod == pytest.approx(heis, abs=1e-12)


class TestThermal:
    def test_qubit_population(self):
        rho = thermal_state(np.diag([1.0, 0.0]), 1.0)
        assert rho.populations()[0] == pytest.approx(np.exp(-1) / (1 + np.exp(-1)), abs=1e-14)

    def test_high_temperature(self):
        np.testing.assert_allclose(thermal_state(np.diag([1.0, 0.0]), 1e6).populations(), 0.5, atol=1e-6)

    def test_geometric_oscillator(self):
        n = np.arange(40)
        rho = thermal_state(np.diag(n.astype(float)), 1.0)
        p = np.exp(-n) / np.exp(-n).sum()
        np.testing.assert_allclose(rho.populations(), p, atol=1e-15)

    def test_zero_temperature_degenerate_ground(self):
        rho = thermal_state(np.diag([0.0, 0.0, 1.0]), 0.0)
        np.testing.assert_allclose(rho.populations(), [0.5, 0.5, 0])

    @given(seeds, st.floats(0.05, 20))
    def test_valid_state(self, seed, kT):
        h = random_hermitian(seed, 5)
        rho = thermal_state(h, kT)
        assert np.trace(rho.rho).real == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.eigvalsh(rho.rho).min() >= -1e-12

    @given(seeds, st.floats(0.1, 10))
    def test_commutator_expectation_vanishes(self, seed, kT):
        h = random_hermitian(seed, 5)
        q = random_hermitian(seed + 1, 5)
        val = expectation(commutator(h, q), thermal_state(h, kT))
        assert abs(val) <= 1e-10 * max(1, np.abs(h.matrix).max() * np.abs(q.matrix).max())


class TestTensor:
    def test_identity(self):
        np.testing.assert_array_equal(tensor(identity(2), identity(3)).matrix, np.eye(6))

    def test_partial_trace(self):
        a, b = random_hermitian(1, 2), random_hermitian(2, 3)
        np.testing.assert_allclose(partial_trace(tensor(a, b), (2, 3), keep=0), a.matrix * np.trace(b.matrix))
        np.testing.assert_allclose(partial_trace(tensor(a, b), (2, 3), keep=1), b.matrix * np.trace(a.matrix))

    def test_lz_annihilates_vacuum(self):
        a = ladder(6).matrix
        one = np.eye(6)
        lz = Operator(1j * (np.kron(a, a.T) - np.kron(a.T, a)), hermitian=True)
        vac = np.zeros(36)
        vac[0] = 1
        assert expectation(lz, State.pure(vac)) == 0.0
        np.testing.assert_allclose(lz.matrix @ vac, 0)

    def test_expectation_residue(self):
        val, resid = expectation(SIGMA_Y, State.pure([1, 1j]), with_residue=True)
        assert val == pytest.approx(1.0)
        assert resid < 1e-15
