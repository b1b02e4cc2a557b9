"""Finite-strength Gaussian Kraus measurements and trajectory Monte Carlo.

The Kraus operator for strength ``g`` is ``K(a) = (2g/pi)^(1/4) exp(-g (A - a)^2)``.
In the eigenbasis of ``A`` the outcome density is a Gaussian mixture with
means at the eigenvalues, weights equal to the eigenprojector populations and
variance ``1/(4g)``. Sequential outcomes are therefore the weak quasiprobability
convolved with independent Gaussian noise, which is undone analytically in
:func:`deconvolve_moments`.

Trajectories are simulated as pure states. A mixed initial state is unravelled
into its eigenvectors, each trajectory starting from one of them with the
matching probability.
"""

from __future__ import annotations

import enum
import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .correlators import ScheduledObservable, _ordered
from .operators import (
    Operator,
    State,
    _as_matrix,
    propagator,
    spectral_decomposition,
    HERMITIAN_TOL,
)

MAX_POWER = 4
MIN_BATCHES = 32
THREADS_ENV = "WEAKCONS_THREADS"


@dataclass(frozen=True)
class MeasurementConfig:
    """Detector strength and Monte Carlo settings.

    Parameters
    ----------
    g : float
        Measurement strength; each outcome carries Gaussian noise of variance
        ``1/(4g)``.
    n_trajectories : int
        Number of simulated measurement records.
    seed : int
        Root seed. Block ``b`` of trajectories draws from a Philox stream keyed
        by ``(seed, b)``, so results do not depend on how blocks are scheduled.
    deconvolve : bool
        Whether estimators subtract the detector-noise contribution.
    block_size : int
        Trajectories per RNG stream. Shrunk automatically so that at least 32
        blocks exist for batch-means errors.
    condition_last : bool
        Replace the moments of the final outcome by their exact conditional
        expectation given the pre-measurement state. The final measurement
        never acts back on anything, so this removes its noise from the
        estimator without changing its mean.
    antithetic : bool
        Run trajectories in groups that share every random draw except the
        signs of the detector noise of the non-final measurements (all sign
        patterns). Each trajectory is still an exact sample; the group mean
        cancels the leading noise cross terms.
    n_jobs : int or None
        Worker threads; ``None`` reads the ``WEAKCONS_THREADS`` environment
        variable and falls back to 1.
    max_power : int or None
        Highest outcome power tracked per measurement (default 4 for up to four
        measurements, else 2).
    keep_outcomes : bool or None
        Store the full outcome matrix; by default only when it stays below
        about 64 MB.
    """

    g: float
    n_trajectories: int = 100_000
    seed: int = 0
    deconvolve: bool = True
    block_size: int = 16_384
    condition_last: bool = False
    antithetic: bool = False
    n_jobs: int | None = None
    max_power: int | None = None
    keep_outcomes: bool | None = None

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError(f"measurement strength must be positive, got g={self.g}")
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")

    @property
    def noise_variance(self) -> float:
        return 1.0 / (4.0 * self.g)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def resolve_jobs(n_jobs: int | None) -> int:
    if n_jobs is not None:
        return max(1, int(n_jobs))
    env = os.environ.get(THREADS_ENV)
    return max(1, int(env)) if env else 1


# --------------------------------------------------------------------------
# single measurements

def _eig(a) -> tuple[np.ndarray, np.ndarray]:
    sd = spectral_decomposition(a)
    return sd.eigenvalues, sd.eigenvectors


def outcome_density(state: State, observable, g: float, a) -> np.ndarray:
    """Density ``p'(a) = Tr K(a) rho K(a)^dag`` as a Gaussian mixture."""
    lam, w = _eig(observable)
    pops = np.real(np.einsum("ij,ik,kj->j", w.conj(), _as_matrix(state), w))
    a = np.asarray(a, dtype=float)
    gauss = np.sqrt(2 * g / np.pi) * np.exp(-2 * g * (a[..., None] - lam) ** 2)
    return gauss @ pops


def kraus_operator(observable, g: float, a: float) -> np.ndarray:
    lam, w = _eig(observable)
    d = (2 * g / np.pi) ** 0.25 * np.exp(-g * (lam - a) ** 2)
    return (w * d) @ w.conj().T


def _strength(cfg) -> float:
    return cfg.g if isinstance(cfg, MeasurementConfig) else float(cfg)


def apply_weak_measurement(state: State, observable, cfg: MeasurementConfig | float,
                           rng: np.random.Generator):
    """Sample one outcome and return ``(a, posterior)``.

    The outcome is drawn exactly from the Gaussian mixture; the posterior is
    ``K(a) rho K(a)^dag / p'(a)``. ``cfg`` may be a config or a bare strength.
    """
    g = _strength(cfg)
    lam, w = _eig(observable)
    rho_a = w.conj().T @ _as_matrix(state) @ w
    pops = np.clip(np.real(np.diag(rho_a)), 0, None)
    k = rng.choice(len(lam), p=pops / pops.sum())
    a = lam[k] + rng.normal() / (2 * math.sqrt(g))
    f = np.exp(-g * (lam - a) ** 2 + g * np.min((lam - a) ** 2))
    post = f[:, None] * rho_a * f[None, :]
    post = w @ post @ w.conj().T
    return float(a), State._trusted(post / np.trace(post).real)


def average_posterior(state: State, observable, g: float) -> np.ndarray:
    """Unconditioned state after the measurement, ``int da K(a) rho K(a)``.

    Exact form: off-diagonal eigenbasis elements decay by
    ``exp(-g (l_m - l_n)^2 / 2)``.
    """
    lam, w = _eig(observable)
    rho_a = w.conj().T @ _as_matrix(state) @ w
    f = np.exp(-0.5 * g * (lam[:, None] - lam[None, :]) ** 2)
    return w @ (rho_a * f) @ w.conj().T


# --------------------------------------------------------------------------
# superconserving Kraus family

class KrausMode(str, enum.Enum):
    PLAIN = "plain"
    SUPERCONSERVING = "superconserving"


@dataclass(frozen=True, eq=False)
class KrausFamily:
    """Plain Gaussian Kraus operators or their superconserving restriction.

    In superconserving mode the instrument acts inside each eigenspace ``P_q``
    of the superconserved quantity: the measured observable is replaced by its
    block-diagonal part ``sum_q P_q A P_q`` and a Gaussian Kraus operator of
    that observable is applied. Each Kraus operator then has the form
    ``sum_q P_q K_a P_q`` and the family stays complete.
    """

    mode: KrausMode = KrausMode.PLAIN
    projectors: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "mode", KrausMode(self.mode))
        if self.mode is KrausMode.SUPERCONSERVING:
            if not self.projectors:
                raise ValueError("superconserving Kraus family needs at least one projector")
            ps = [np.asarray(p, dtype=complex) for p in self.projectors]
            d = ps[0].shape[0]
            if np.max(np.abs(sum(ps) - np.eye(d))) > HERMITIAN_TOL:
                raise ValueError("projectors do not resolve the identity")
            for a, b in itertools.combinations(ps, 2):
                if np.max(np.abs(a @ b)) > HERMITIAN_TOL:
                    raise ValueError("projectors are not mutually orthogonal")
            object.__setattr__(self, "projectors", tuple(ps))

    @classmethod
    def superconserving(cls, q, tol: float = 1e-9) -> "KrausFamily":
        """Eigenprojectors of ``q``, grouping eigenvalues closer than ``tol``."""
        lam, w = _eig(q)
        groups = [[0]]
        for i in range(1, len(lam)):
            if lam[i] - lam[groups[-1][-1]] <= tol:
                groups[-1].append(i)
            else:
                groups.append([i])
        projs = tuple(w[:, g] @ w[:, g].conj().T for g in groups)
        return cls(KrausMode.SUPERCONSERVING, projs)

    def measured_observable(self, a) -> np.ndarray:
        m = _as_matrix(a)
        if self.mode is KrausMode.PLAIN:
            return m
        out = sum(p @ m @ p for p in self.projectors)
        # keep the identical matrix when a already commutes, so seeded runs match plain mode
        return m if np.max(np.abs(out - m)) <= HERMITIAN_TOL else out

    def dephase(self, rho) -> tuple[np.ndarray, float]:
        """Block-diagonal part of ``rho`` and the norm of discarded coherence."""
        r = _as_matrix(rho)
        if self.mode is KrausMode.PLAIN:
            return r, 0.0
        out = sum(p @ r @ p for p in self.projectors)
        lost = float(np.linalg.norm(r - out))
        return (r if lost <= HERMITIAN_TOL else out), lost

    def unravel(self, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Eigen-decomposition of ``rho`` with vectors inside single blocks."""
        if self.mode is KrausMode.PLAIN:
            return _unravel(rho)
        probs, vecs = [], []
        for p in self.projectors:
            idx = np.flatnonzero(np.abs(np.diag(p)) > 0.5) if _is_diagonal(p) else None
            if idx is not None:
                sub = rho[np.ix_(idx, idx)]
                pr, v = _unravel(sub, normalize=False)
                full = np.zeros((rho.shape[0], v.shape[1]), dtype=complex)
                full[idx] = v
            else:
                lam, w = np.linalg.eigh(p)
                basis = w[:, lam > 0.5]
                pr, v = _unravel(basis.conj().T @ rho @ basis, normalize=False)
                full = basis @ v
            probs.append(pr)
            vecs.append(full)
        probs = np.concatenate(probs)
        vecs = np.concatenate(vecs, axis=1)
        keep = probs > 0
        return probs[keep] / probs[keep].sum(), vecs[:, keep]


def _is_diagonal(m: np.ndarray) -> bool:
    return not np.any(m - np.diag(np.diag(m)))


def _unravel(rho: np.ndarray, normalize: bool = True) -> tuple[np.ndarray, np.ndarray]:
    p, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    p = np.clip(p, 0, None)
    keep = p > 1e-14
    if not normalize:
        return p[keep], v[:, keep]
    return p[keep] / p[keep].sum(), v[:, keep]


# --------------------------------------------------------------------------
# exact finite-g ensemble moments (deterministic oracle for the Monte Carlo)

def _gauss_raw_moments(c: np.ndarray, p: int, var: float) -> np.ndarray:
    """``E[(c + n)^p]`` for ``n ~ N(0, var)``."""
    out = np.zeros_like(c, dtype=float)
    for j in range(0, p + 1, 2):
        out = out + math.comb(p, j) * c ** (p - j) * _double_factorial(j - 1) * var ** (j // 2)
    return out


def _double_factorial(n: int) -> int:
    return 1 if n <= 0 else n * _double_factorial(n - 2)


def finite_g_moment(state: State, schedule: Sequence[ScheduledObservable], h, g: float,
                    powers: Sequence[int] | None = None, deconvolved: bool = True,
                    family: KrausFamily | None = None) -> float:
    """Exact ensemble moment of a finite-strength measurement sequence.

    Every scheduled observable is measured with strength ``g`` (disturbing the
    state even when its power is 0). ``powers`` defaults to the schedule
    exponents. With ``deconvolved`` the detector-noise contribution is removed
    analytically, giving the finite-g quasiprobability moment; as ``g -> 0``
    it tends to :func:`weak_moment`.
    """
    family = family or KrausFamily()
    items = _ordered(schedule)
    if powers is None:
        powers = [s.exponent for s in items]
    if len(powers) != len(items):
        raise ValueError("need one power per scheduled observable")
    var = 1.0 / (4.0 * g)
    hm = _as_matrix(h)
    sd = spectral_decomposition(hm)
    r, _ = family.dephase(state.rho)
    r = np.array(r, dtype=complex)
    t_prev = 0.0
    n = len(items)
    for k, (s, p) in enumerate(zip(items, powers)):
        u = propagator(hm, s.time - t_prev, sd)
        r = u @ r @ u.conj().T
        t_prev = s.time
        lam, w = _eig(family.measured_observable(s.observable))
        ra = w.conj().T @ r @ w
        if k == n - 1:
            diag = np.real(np.diag(ra))
            vals = lam ** p if deconvolved else _gauss_raw_moments(lam, p, var)
            return float(diag @ vals)
        c = 0.5 * (lam[:, None] + lam[None, :])
        f = np.exp(-0.5 * g * (lam[:, None] - lam[None, :]) ** 2)
        f = f * (c ** p if deconvolved else _gauss_raw_moments(c, p, var))
        r = w @ (ra * f) @ w.conj().T
    raise AssertionError("unreachable")


# --------------------------------------------------------------------------
# trajectories

@dataclass(frozen=True)
class MomentEstimate:
    value: float
    se: float

    def __iter__(self):
        yield self.value
        yield self.se


@dataclass(eq=False)
class TrajectoryBatch:
    """Aggregated Monte Carlo record of a measurement sequence.

    ``block_sums[b][p_1, ..., p_n]`` is the sum over the trajectories of block
    ``b`` of ``prod_k a_k^(p_k)``. When ``condition_last`` is set, the powers
    of the final outcome are replaced by their conditional expectation.
    """

    labels: tuple[str, ...]
    times: tuple[float, ...]
    g: float
    seed: int
    n_trajectories: int
    block_sums: np.ndarray
    block_counts: np.ndarray
    condition_last: bool = False
    antithetic: bool = False
    outcomes: np.ndarray | None = None
    discarded_coherence: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def n_measurements(self) -> int:
        return len(self.labels)

    @property
    def max_power(self) -> int:
        return self.block_sums.shape[1] - 1

    @property
    def n_blocks(self) -> int:
        return len(self.block_counts)

    def _block_means(self, weights: np.ndarray) -> np.ndarray:
        axes = tuple(range(1, self.block_sums.ndim))
        return np.tensordot(self.block_sums, weights, axes=(axes, tuple(range(weights.ndim)))) / self.block_counts

    def estimate(self, weights: np.ndarray) -> MomentEstimate:
        """Batch-means estimate of a linear combination of raw monomials."""
        bm = self._block_means(weights)
        c = self.block_counts
        mean = float(np.sum(bm * c) / np.sum(c))
        nb = len(bm)
        se = float(np.sqrt(np.sum(c * (bm - mean) ** 2) / np.sum(c) / (nb - 1))) if nb > 1 else float("nan")
        return MomentEstimate(mean, se)

    def raw_moment(self, powers: Sequence[int]) -> MomentEstimate:
        return self.estimate(_monomial_weights(powers, self.max_power))

    @property
    def means(self) -> np.ndarray:
        return np.array([self.raw_moment(_unit(k, self.n_measurements)).value
                         for k in range(self.n_measurements)])

    @property
    def standard_errors(self) -> np.ndarray:
        return np.array([self.raw_moment(_unit(k, self.n_measurements)).se
                         for k in range(self.n_measurements)])

    @property
    def covariances(self) -> np.ndarray:
        """Raw outcome covariance matrix (noise included)."""
        n = self.n_measurements
        mu = self.means
        cov = np.empty((n, n))
        for i, j in itertools.product(range(n), repeat=2):
            p = [0] * n
            p[i] += 1
            p[j] += 1
            cov[i, j] = self.raw_moment(p).value - mu[i] * mu[j]
        return cov


def _unit(k: int, n: int) -> list[int]:
    p = [0] * n
    p[k] = 1
    return p


def _monomial_weights(powers: Sequence[int], max_power: int) -> np.ndarray:
    n = len(powers)
    w = np.zeros((max_power + 1,) * n)
    if any(p > max_power for p in powers):
        raise ValueError(f"power {max(powers)} exceeds tracked maximum {max_power}")
    w[tuple(powers)] = 1.0
    return w


def _hermite_coefficients(p: int, var: float) -> np.ndarray:
    """Coefficients c_j with ``E[sum_j c_j (A+n)^j] = A^p`` for ``n ~ N(0, var)``."""
    if p > MAX_POWER:
        raise ValueError(f"deconvolution of power {p} is unsupported (maximum {MAX_POWER})")
    c = np.zeros(p + 1)
    for j in range(0, p + 1, 2):
        c[p - j] = math.comb(p, j) * _double_factorial(j - 1) * (-var) ** (j // 2)
    return c


def deconvolution_weights(powers: Sequence[int], var: float, max_power: int) -> np.ndarray:
    """Monomial weights turning raw outcome moments into noise-free ones.

    Noises of different detectors are independent, so the correction factorizes
    into one probabilists' Hermite polynomial per measurement.
    """
    w = np.ones(())
    for p in powers:
        c = np.zeros(max_power + 1)
        hc = _hermite_coefficients(p, var)
        c[: len(hc)] = hc
        w = np.multiply.outer(w, c)
    return w


def deconvolve_moments(batch: TrajectoryBatch, cfg: MeasurementConfig,
                       powers: Sequence[Sequence[int]] | Sequence[int]):
    """Noise-corrected moments with batch-means standard errors.

    Parameters
    ----------
    powers : sequence of int, or sequence of such sequences
        One power per measurement (0 marginalizes). A single tuple returns a
        single :class:`MomentEstimate`, a list of tuples a list.
    """
    if not cfg.deconvolve:
        raise ValueError("configuration has deconvolve=False")
    single = np.isscalar(powers[0])
    plist = [powers] if single else list(powers)
    out = []
    for p in plist:
        if len(p) != batch.n_measurements:
            raise ValueError(f"need {batch.n_measurements} powers, got {len(p)}")
        out.append(batch.estimate(deconvolution_weights(p, cfg.noise_variance, batch.max_power)))
    return out[0] if single else out


def combination(batch: TrajectoryBatch, cfg: MeasurementConfig,
                terms: Sequence[tuple[float, Sequence[int]]]) -> MomentEstimate:
    """Deconvolved estimate of ``sum_i coeff_i * moment(powers_i)`` with a joint error."""
    w = sum(c * deconvolution_weights(p, cfg.noise_variance, batch.max_power) for c, p in terms)
    return batch.estimate(w)


@dataclass(frozen=True, eq=False)
class _Plan:
    items: tuple
    eigenvalues: tuple  # per measurement
    transfers: tuple  # transfers[k] maps coefficients into the eigenbasis of measurement k
    init_probs: np.ndarray
    init_vecs: np.ndarray
    max_power: int
    var: float


def _plan(state: State, schedule, h, cfg: MeasurementConfig, family: KrausFamily) -> tuple[_Plan, float]:
    items = _ordered(schedule)
    for a, b in zip(items, items[1:]):
        if not a.time < b.time:
            raise ValueError("trajectory schedules must be strictly time-ordered")
    hm = _as_matrix(h)
    sd = spectral_decomposition(hm)
    rho, lost = family.dephase(state.rho)
    probs, vecs = family.unravel(np.asarray(rho))
    lams, transfers = [], []
    t_prev = 0.0
    w_prev = np.eye(hm.shape[0])
    for s in items:
        u = propagator(hm, s.time - t_prev, sd)
        lam, w = _eig(family.measured_observable(s.observable))
        lams.append(lam)
        transfers.append(w.conj().T @ u @ w_prev)
        w_prev = w
        t_prev = s.time
    n = len(items)
    mp = cfg.max_power if cfg.max_power is not None else (MAX_POWER if n <= 4 else 2)
    return _Plan(tuple(items), tuple(lams), tuple(transfers), probs, vecs, mp, cfg.noise_variance), lost


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


def _signs(m: int) -> np.ndarray:
    """All 2^m sign patterns, shape (2^m, m)."""
    if m == 0:
        return np.ones((1, 0))
    return np.array(list(itertools.product([1.0, -1.0], repeat=m)))


def _run_block(plan: _Plan, cfg: MeasurementConfig, block: int, size: int, keep: bool):
    rng = _block_rng(cfg.seed, block)
    n = len(plan.items)
    sigma = math.sqrt(plan.var)
    g = cfg.g
    n_signed = n - 1 if cfg.condition_last else n
    signs = _signs(n_signed) if cfg.antithetic else np.ones((1, n_signed))
    gsize = signs.shape[0]
    leaders = size // gsize

    def shared(x):
        return np.repeat(x, gsize, axis=0)

    j0 = rng.choice(len(plan.init_probs), size=leaders, p=plan.init_probs)
    c = plan.init_vecs[:, shared(j0)].T.astype(complex)
    uniforms = shared(rng.random((leaders, n)))
    normals = shared(rng.standard_normal((leaders, n)))
    if cfg.antithetic:
        pattern = np.tile(signs, (leaders, 1))
        normals[:, :n_signed] *= pattern

    pw = np.empty((n, plan.max_power + 1, size))
    outcomes = np.empty((size, n)) if keep else None
    for k, (lam, t) in enumerate(zip(plan.eigenvalues, plan.transfers)):
        # coefficients live in the eigenbasis of the current measurement
        c = c @ t.T
        pops = np.abs(c) ** 2
        cum = np.cumsum(pops, axis=1)
        idx = np.sum(cum < uniforms[:, k:k + 1] * cum[:, -1:], axis=1)
        idx = np.minimum(idx, len(lam) - 1)
        a = lam[idx] + sigma * normals[:, k]
        if keep:
            outcomes[:, k] = a
        last = k == n - 1
        if last and cfg.condition_last:
            pops = pops / pops.sum(axis=1, keepdims=True)
            for p in range(plan.max_power + 1):
                pw[k, p] = pops @ _gauss_raw_moments(lam, p, plan.var)
        else:
            pw[k] = a[None, :] ** np.arange(plan.max_power + 1)[:, None]
        if not last:
            e = -g * (lam[None, :] - a[:, None]) ** 2
            c = c * np.exp(e - e.max(axis=1, keepdims=True))
            c /= np.linalg.norm(c, axis=1, keepdims=True)
    sums = _monomial_sums(pw)
    return sums, outcomes


def _monomial_sums(pw: np.ndarray) -> np.ndarray:
    n = pw.shape[0]
    letters = "abcdefgh"[:n]
    spec = ",".join(f"{c}z" for c in letters) + "->" + letters
    return np.einsum(spec, *pw, optimize=True)


def _block_layout(cfg: MeasurementConfig, group: int) -> list[int]:
    total = cfg.n_trajectories
    size = min(cfg.block_size, max(group, total // MIN_BATCHES))
    size = max(group, size - size % group)
    nfull, rest = divmod(total, size)
    sizes = [size] * nfull
    rest -= rest % group
    if rest:
        sizes.append(rest)
    return sizes


def run_sequence(state: State, schedule: Sequence[ScheduledObservable], h, cfg: MeasurementConfig,
                 family: KrausFamily | None = None) -> TrajectoryBatch:
    """Simulate sequential weak measurements trajectory by trajectory.

    The state is propagated between measurement times (starting from t = 0,
    the reference time of ``state``), each scheduled observable is measured
    with a Gaussian Kraus operator of strength ``cfg.g``, and per-block sums of
    outcome monomials are accumulated. Parallel execution over blocks gives
    bit-identical results because block streams and the final reduction order
    are fixed.
    """
    family = family or KrausFamily()
    plan, lost = _plan(state, schedule, h, cfg, family)
    n = len(plan.items)
    n_signed = n - 1 if cfg.condition_last else n
    group = 2 ** n_signed if cfg.antithetic else 1
    sizes = _block_layout(cfg, group)
    keep = cfg.keep_outcomes
    if keep is None:
        keep = sum(sizes) * n * 8 <= 64 * 2**20
    jobs = resolve_jobs(cfg.n_jobs)

    def work(b):
        return _run_block(plan, cfg, b, sizes[b], keep)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            results = list(ex.map(work, range(len(sizes))))
    else:
        results = [work(b) for b in range(len(sizes))]
    block_sums = np.stack([r[0] for r in results])
    outcomes = np.concatenate([r[1] for r in results]) if keep else None
    return TrajectoryBatch(
        labels=tuple(s.observable.label or f"O{i}" for i, s in enumerate(plan.items)),
        times=tuple(s.time for s in plan.items),
        g=cfg.g,
        seed=cfg.seed,
        n_trajectories=int(sum(sizes)),
        block_sums=block_sums,
        block_counts=np.array(sizes, dtype=float),
        condition_last=cfg.condition_last,
        antithetic=cfg.antithetic,
        outcomes=outcomes,
        discarded_coherence=lost,
        metadata={"config": cfg.to_dict(), "kraus_mode": family.mode.value},
    )


def superconserving_sequence(state: State, schedule: Sequence[ScheduledObservable], q, h,
                             cfg: MeasurementConfig) -> TrajectoryBatch:
    """:func:`run_sequence` with Kraus operators restricted to eigenspaces of ``q``.

    The input state is projected onto its block-diagonal part first; the norm
    of the discarded coherence is reported as ``batch.discarded_coherence``.
    """
    return run_sequence(state, schedule, h, cfg, KrausFamily.superconserving(q))


def richardson(gs: Sequence[float], values: Sequence[float], ses: Sequence[float] | None = None):
    """Polynomial extrapolation to ``g = 0`` through all points.

    Returns the extrapolated value and, if standard errors are given, its
    propagated standard error (independent runs assumed).
    """
    gs = np.asarray(gs, dtype=float)
    weights = np.array([
        np.prod([gj / (gj - gi) for j, gj in enumerate(gs) if j != i]) for i, gi in enumerate(gs)
    ])
    val = float(weights @ np.asarray(values, dtype=float))
    if ses is None:
        return val
    return val, float(np.sqrt(np.sum((weights * np.asarray(ses)) ** 2)))


def jump_estimate(state: State, q, a: ScheduledObservable, b: ScheduledObservable, h,
                  cfg: MeasurementConfig, family: KrausFamily | None = None,
                  delta: float = 1e-3) -> MomentEstimate:
    """Monte Carlo jump: third moment with ``q`` just after ``a`` minus just before.

    Both orderings run with the same seed and block layout, so the error is
    taken from per-block differences (common random numbers).
    """
    qm = q if isinstance(q, Operator) else Operator(q, hermitian=True)
    before = [ScheduledObservable(a.time - delta, qm), a, b]
    after = [a, ScheduledObservable(a.time + delta, qm), b]
    r_before = run_sequence(state, before, h, cfg, family)
    r_after = run_sequence(state, after, h, cfg, family)
    w = deconvolution_weights((1, 1, 1), cfg.noise_variance, r_before.max_power)
    diff = r_after._block_means(w) - r_before._block_means(w)
    c = r_before.block_counts
    mean = float(np.sum(diff * c) / np.sum(c))
    se = float(np.sqrt(np.sum(c * (diff - mean) ** 2) / np.sum(c) / (len(c) - 1)))
    return MomentEstimate(mean, se)
