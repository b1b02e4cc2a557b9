import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from weakcons import models
from weakcons.correlators import at, weak_moment
from weakcons.measurement import (
    KrausFamily,
    MeasurementConfig,
    apply_weak_measurement,
    average_posterior,
    deconvolution_weights,
    deconvolve_moments,
    finite_g_moment,
    jump_estimate,
    kraus_operator,
    outcome_density,
    richardson,
    run_sequence,
    superconserving_sequence,
)
from weakcons.operators import Operator, State, commutator


def random_hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return Operator(a + a.conj().T, hermitian=True)


def random_state(rng, n):
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    r = g @ g.conj().T
    return State(r / np.trace(r))


def within(est, exact, k=3.0):
    return abs(est.value - exact) <= k * est.se


class TestConfig:
    def test_noise_variance(self):
        assert MeasurementConfig(g=0.25).noise_variance == 1.0

    @pytest.mark.parametrize("kw", [{"g": 0}, {"g": -1}, {"g": 1, "n_trajectories": 0}, {"g": 1, "seed": -1}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            MeasurementConfig(**kw)

    def test_thread_env(self, monkeypatch):
        from weakcons.measurement import resolve_jobs

        monkeypatch.setenv("WEAKCONS_THREADS", "3")
        assert resolve_jobs(None) == 3
        assert resolve_jobs(2) == 2


class TestSingleMeasurement:
    def test_eigenstate_outcomes(self, qubit, rng):
        plus = State.pure([1, 1])
        outs = []
        post = None
        for _ in range(4000):
            a, post = apply_weak_measurement(plus, qubit["X"], MeasurementConfig(g=0.25), rng)
            outs.append(a)
        outs = np.array(outs)
        assert abs(outs.mean() - 1.0) < 4 / np.sqrt(len(outs))
        assert outs.var() == pytest.approx(1.0, rel=0.1)
        np.testing.assert_allclose(post.rho, plus.rho, atol=1e-12)

    def test_density_normalized(self, qubit):
        rho = qubit.thermal(0.7)
        total, _ = integrate.quad(lambda a: outcome_density(rho, qubit["X"], 0.3, a), -np.inf, np.inf,
                                  epsabs=1e-13, epsrel=1e-13)
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_kraus_completeness(self, rng):
        a = random_hermitian(rng, 3)
        g = 0.4
        for i, j in [(0, 0), (1, 2), (2, 2)]:
            re, _ = integrate.quad(lambda x: (kraus_operator(a, g, x).conj().T @ kraus_operator(a, g, x))[i, j].real,
                                   -np.inf, np.inf, epsabs=1e-13)
            assert re == pytest.approx(float(i == j), abs=1e-10)

    def test_posterior_trace(self, qubit, rng):
        for _ in range(20):
            _, post = apply_weak_measurement(qubit.thermal(1.0), qubit["X"], 0.05, rng)
            assert np.trace(post.rho).real == pytest.approx(1.0, abs=1e-12)

    def test_average_disturbance_first_order(self, rng):
        a = random_hermitian(rng, 3).matrix
        rho = random_state(rng, 3)
        errs = []
        for g in (0.02, 0.01):
            approx = rho.rho - 0.5 * g * (a @ (a @ rho.rho - rho.rho @ a) - (a @ rho.rho - rho.rho @ a) @ a)
            errs.append(np.abs(average_posterior(rho, a, g) - approx).max())
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


class TestFiniteGOracle:
    @given(st.integers(0, 2**32 - 1), st.lists(st.integers(1, 3), min_size=1, max_size=4))
    def test_weak_limit_is_engine(self, seed, powers):
        rng = np.random.default_rng(seed)
        h = random_hermitian(rng, 3)
        rho = random_state(rng, 3)
        sched = [at(random_hermitian(rng, 3), float(k), p) for k, p in enumerate(powers)]
        exact = weak_moment(sched, rho, h)
        small = finite_g_moment(rho, sched, h, 1e-12)
        assert small == pytest.approx(exact, abs=1e-6 * max(1, abs(exact)))

    def test_deconvolution_consistent_with_raw(self, qubit):
        rho = qubit.thermal(0.8)
        sched = [at(qubit["X"], 0.0), at(qubit["Z"], 0.5), at(qubit["X"], 1.1)]
        g = 0.2
        var = 1 / (4 * g)
        w = deconvolution_weights((2, 1, 2), var, 4)
        raw = sum(w[idx] * finite_g_moment(rho, sched, qubit.hamiltonian, g, idx, deconvolved=False)
                  for idx in np.ndindex(w.shape) if w[idx] != 0)
        assert raw == pytest.approx(finite_g_moment(rho, sched, qubit.hamiltonian, g, (2, 1, 2)), abs=1e-12)

    def test_bias_is_first_order(self, qubit):
        rho = qubit.thermal(0.8)
        sched = [at(qubit["X"], 0.0), at(qubit["H"], 0.5), at(qubit["Y"], 1.1)]
        exact = weak_moment(sched, rho, qubit.hamiltonian)
        errs = [abs(finite_g_moment(rho, sched, qubit.hamiltonian, g) - exact) for g in (0.02, 0.01)]
        assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)


class TestDeconvolution:
    def test_power_two_eigenstate(self):
        z = Operator(np.diag([2.0, -1.0]), hermitian=True)
        cfg = MeasurementConfig(g=0.1, n_trajectories=400_000, seed=5)
        batch = run_sequence(State.pure([1, 0]), [at(z, 0.0)], np.zeros((2, 2)), cfg)
        raw = batch.raw_moment([2])
        corrected = deconvolve_moments(batch, cfg, (2,))
        assert corrected.value == pytest.approx(raw.value - 2.5, abs=1e-12)
        assert within(corrected, 4.0)

    def test_first_powers_identity(self):
        w = deconvolution_weights((1, 1, 1), 7.0, 4)
        assert w[1, 1, 1] == 1.0
        assert np.count_nonzero(w) == 1

    def test_unsupported_power(self, qubit):
        cfg = MeasurementConfig(g=0.1, n_trajectories=2048)
        batch = run_sequence(qubit.ground(), [at(qubit["X"], 0.0)], qubit.hamiltonian,
                             MeasurementConfig(g=0.1, n_trajectories=2048, max_power=6))
        with pytest.raises(ValueError, match="unsupported"):
            deconvolve_moments(batch, cfg, (5,))

    def test_requires_flag(self, qubit):
        cfg = MeasurementConfig(g=0.1, n_trajectories=2048, deconvolve=False)
        batch = run_sequence(qubit.ground(), [at(qubit["X"], 0.0)], qubit.hamiltonian, cfg)
        with pytest.raises(ValueError):
            deconvolve_moments(batch, cfg, (1,))


class TestTrajectories:
    def test_ground_mean_zero(self, qubit):
        cfg = MeasurementConfig(g=0.05, n_trajectories=200_000, seed=1)
        batch = run_sequence(qubit.ground(), [at(qubit["X"], 0.0)], qubit.hamiltonian, cfg)
        assert abs(batch.means[0]) <= 3 * batch.standard_errors[0]
        assert batch.n_blocks >= 32
        assert batch.outcomes.shape == (200_000, 1)
        assert batch.covariances[0, 0] == pytest.approx(1 + 1 / (4 * 0.05), rel=0.02)

    def test_strict_order_required(self, qubit):
        with pytest.raises(ValueError, match="strictly"):
            run_sequence(qubit.ground(), [at(qubit["X"], 0.0), at(qubit["X"], 0.0)], qubit.hamiltonian,
                         MeasurementConfig(g=0.1, n_trajectories=100))

    def test_energy_sequence_matches_engine(self, qubit):
        rho = qubit.thermal(1.0)
        sched = [at(qubit["H"], -1e-3), at(qubit["X"], 0.0), at(qubit["X"], 0.9)]
        cfg = MeasurementConfig(g=0.05, n_trajectories=1_000_000, seed=11, condition_last=True)
        est = deconvolve_moments(run_sequence(rho, sched, qubit.hamiltonian, cfg), cfg, (1, 1, 1))
        exact_g = finite_g_moment(rho, sched, qubit.hamiltonian, cfg.g)
        weak = weak_moment(sched, rho, qubit.hamiltonian)
        assert within(est, exact_g)
        assert abs(exact_g - weak) <= cfg.g

    def test_ordering_difference_is_jump(self, qubit):
        rho = qubit.thermal(1.0)
        cfg = MeasurementConfig(g=0.1, n_trajectories=1_000_000, seed=4, condition_last=True)
        est = jump_estimate(rho, qubit["H"], at(qubit["X"], 0.0), at(qubit["X"], 0.9), qubit.hamiltonian, cfg)
        exact = 0.5 * np.cos(0.9) * np.tanh(0.5)
        assert abs(est.value - exact) <= 3 * est.se + 0.1

    def test_matches_finite_g_oracle_raw(self, qubit):
        rho = qubit.thermal(0.5)
        sched = [at(qubit["Z"], 0.0), at(qubit["X"], 0.6), at(qubit["Y"], 1.0)]
        cfg = MeasurementConfig(g=0.3, n_trajectories=300_000, seed=8, deconvolve=False)
        batch = run_sequence(rho, sched, qubit.hamiltonian, cfg)
        for powers in [(1, 1, 1), (2, 0, 2), (1, 2, 0), (0, 1, 3)]:
            exact = finite_g_moment(rho, sched, qubit.hamiltonian, cfg.g, powers, deconvolved=False)
            assert within(batch.raw_moment(powers), exact, 4)

    @pytest.mark.parametrize("kw", [{"condition_last": True}, {"antithetic": True},
                                    {"condition_last": True, "antithetic": True}])
    def test_variance_reduction_unbiased(self, qubit, kw):
        rho = qubit.thermal(0.5)
        sched = [at(qubit["Z"], 0.0), at(qubit["X"], 0.6), at(qubit["Y"], 1.0)]
        cfg = MeasurementConfig(g=0.2, n_trajectories=400_000, seed=21, **kw)
        batch = run_sequence(rho, sched, qubit.hamiltonian, cfg)
        for powers in [(1, 1, 1), (2, 1, 1)]:
            exact = finite_g_moment(rho, sched, qubit.hamiltonian, cfg.g, powers)
            assert within(deconvolve_moments(batch, cfg, powers), exact, 4)

    def test_mixed_state_unravelling(self, planar, rng):
        rho = models.random_low_occupation_state(planar, 2, rng, rank=3)
        sched = [at(planar["Lz"], 0.0), at(planar["X"], 0.5)]
        cfg = MeasurementConfig(g=0.5, n_trajectories=200_000, seed=2)
        batch = run_sequence(rho, sched, planar.hamiltonian, cfg)
        exact = finite_g_moment(rho, sched, planar.hamiltonian, cfg.g, (1, 1))
        assert within(deconvolve_moments(batch, cfg, (1, 1)), exact, 4)

    def test_standard_error_scaling(self, qubit):
        rho = qubit.thermal(1.0)
        sched = [at(qubit["X"], 0.0), at(qubit["X"], 0.5), at(qubit["X"], 1.0)]
        # asymptotically SE ~ g^(-n/2); n = 3 here
        ses = []
        for g in (0.001, 0.01):
            cfg = MeasurementConfig(g=g, n_trajectories=200_000, seed=3)
            ses.append(deconvolve_moments(run_sequence(rho, sched, qubit.hamiltonian, cfg), cfg, (1, 1, 1)).se)
        assert ses[0] / ses[1] == pytest.approx(10 ** 1.5, rel=0.3)


class TestReproducibility:
    def test_threads_bit_identical(self, qubit):
        sched = [at(qubit["X"], 0.0), at(qubit["Z"], 0.4), at(qubit["X"], 1.0)]
        base = dict(g=0.1, n_trajectories=100_000, seed=99)
        one = run_sequence(qubit.thermal(1.0), sched, qubit.hamiltonian, MeasurementConfig(**base, n_jobs=1))
        three = run_sequence(qubit.thermal(1.0), sched, qubit.hamiltonian, MeasurementConfig(**base, n_jobs=3))
        np.testing.assert_array_equal(one.block_sums, three.block_sums)
        np.testing.assert_array_equal(one.outcomes, three.outcomes)

    def test_seed_changes_stream(self, qubit):
        sched = [at(qubit["X"], 0.0)]
        a = run_sequence(qubit.ground(), sched, qubit.hamiltonian, MeasurementConfig(g=0.1, n_trajectories=1000, seed=1))
        b = run_sequence(qubit.ground(), sched, qubit.hamiltonian, MeasurementConfig(g=0.1, n_trajectories=1000, seed=2))
        assert not np.array_equal(a.outcomes, b.outcomes)


class TestSuperconserving:
    def test_family_validation(self):
        with pytest.raises(ValueError, match="at least one"):
            KrausFamily("superconserving", ())
        with pytest.raises(ValueError, match="identity"):
            KrausFamily("superconserving", (np.diag([1.0, 0.0]),))

    def test_measured_observable_commutes(self, planar):
        fam = KrausFamily.superconserving(planar["Lz"])
        eff = fam.measured_observable(planar["X"] @ planar["X"])
        assert np.abs(commutator(eff, planar["Lz"]).matrix).max() <= 1e-10

    def test_projectors_complete(self, planar):
        fam = KrausFamily.superconserving(planar["Lz"])
        np.testing.assert_allclose(sum(fam.projectors), np.eye(planar.dim), atol=1e-12)

    def test_two_level_jump_removed(self, qubit):
        cfg = MeasurementConfig(g=0.02, n_trajectories=200_000, seed=6, condition_last=True)
        est = jump_estimate(qubit.thermal(1.0), qubit["H"], at(qubit["X"], 0.0), at(qubit["X"], 0.9),
                            qubit.hamiltonian, cfg, KrausFamily.superconserving(qubit["H"]))
        assert abs(est.value) <= 3 * est.se

    def test_commuting_observables_identical(self, planar):
        sched = [at(planar["H"], 0.0), at(planar["N"], 0.5), at(planar["Lz"], 1.0)]
        cfg = MeasurementConfig(g=0.1, n_trajectories=20_000, seed=12)
        psi = models.coherent_superposition(planar, {(1, 0): 1, (0, 1): 1j})
        plain = run_sequence(psi, sched, planar.hamiltonian, cfg)
        sc = superconserving_sequence(psi, sched, planar["Lz"], planar.hamiltonian, cfg)
        assert sc.discarded_coherence <= 1e-12
        np.testing.assert_array_equal(plain.outcomes, sc.outcomes)

    def test_commuting_observables_mixed_statistics(self, planar):
        sched = [at(planar["H"], 0.0), at(planar["N"], 0.5), at(planar["Lz"], 1.0)]
        cfg = MeasurementConfig(g=0.1, n_trajectories=100_000, seed=12)
        rho = planar.thermal(0.5)
        plain = run_sequence(rho, sched, planar.hamiltonian, cfg)
        sc = superconserving_sequence(rho, sched, planar["Lz"], planar.hamiltonian, cfg)
        diff = np.abs(plain.means - sc.means)
        assert np.all(diff <= 4 * np.hypot(plain.standard_errors, sc.standard_errors))

    def test_discarded_coherence_reported(self, qubit):
        cfg = MeasurementConfig(g=0.1, n_trajectories=1000)
        batch = superconserving_sequence(State.pure([1, 1]), [at(qubit["X"], 0.0)], qubit["H"],
                                         qubit.hamiltonian, cfg)
        assert batch.discarded_coherence == pytest.approx(np.sqrt(2) * 0.5)


def test_richardson_exact_for_polynomials():
    gs = [0.05, 0.1, 0.2]
    vals = [1.5 + 2 * g - 3 * g**2 for g in gs]
    val, se = richardson(gs, vals, [0.1, 0.1, 0.1])
    assert val == pytest.approx(1.5, abs=1e-12)
    assert se > 0.1


def test_superconserving_unravel_reproduces_state(planar):
    rho = planar.thermal(0.7).rho
    fam = KrausFamily.superconserving(planar["Lz"])
    p, v = fam.unravel(fam.dephase(rho)[0])
    np.testing.assert_allclose((v * p) @ v.conj().T, rho, atol=1e-12)
