"""Weak-measurement quasiprobability moments and conservation jumps.

A schedule of weakly measured observables ``O_1(t_1), ..., O_n(t_n)`` with
``t_1 < ... < t_n`` has the g -> 0 moment

    <o_1 ... o_n> = Tr[{O_1, {O_2, ... {O_{n-1}, O_n}}} rho] / 2^(n-1)

with Heisenberg operators. It is evaluated from the state side as a chain of
maps ``R -> {O_k, R}/2`` followed by ``Tr[O_n R]``, entirely in the
Hamiltonian eigenbasis so that time evolution is an elementwise phase.

An outcome raised to a power ``p`` behaves like ``p`` coincident copies of the
same measurement: the weak limit of the Gaussian instrument produces the
nested map ``R -> 2^-p {O, {O, ... {O, R}}}``. It reduces to ``O^p`` in the
last slot, or whenever ``O`` commutes with everything measured later.
"""

from __future__ import annotations

import functools
import itertools
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .operators import (
    Operator,
    State,
    SpectralDecomposition,
    commutator,
    evolve,
    spectral_decomposition,
    spectral_norm,
    _as_matrix,
    PROPAGATED_TOL,
)

MAX_SCHEDULE = 6
DEFAULT_DELTA = 1e-6
SPARSE_MIN_DIM = 64
SPARSE_DENSITY = 0.05


class OrderAmbiguousError(ValueError):
    """Two non-commuting observables were scheduled at the same time."""


class ConservationError(ValueError):
    """The supplied quantity does not commute with the Hamiltonian."""


class ContractError(RuntimeError):
    """A numerical self-consistency check failed."""


class TruncationError(ValueError):
    """Fock truncation is too small for the requested state."""


@dataclass(frozen=True, eq=False)
class ScheduledObservable:
    time: float
    observable: Operator
    exponent: int = 1

    def __post_init__(self):
        if not isinstance(self.observable, Operator):
            object.__setattr__(self, "observable", Operator(self.observable, hermitian=True))
        if int(self.exponent) != self.exponent or self.exponent < 1:
            raise ValueError(f"exponent must be a positive integer, got {self.exponent}")
        if not self.observable.is_hermitian():
            raise ValueError(f"scheduled observable {self.observable.label!r} must be Hermitian")
        object.__setattr__(self, "time", float(self.time))
        object.__setattr__(self, "exponent", int(self.exponent))

    def __repr__(self):
        p = f"^{self.exponent}" if self.exponent != 1 else ""
        return f"{self.observable.label or 'O'}{p}@{self.time:g}"


def at(observable, time: float, exponent: int = 1) -> ScheduledObservable:
    """Shorthand for :class:`ScheduledObservable`."""
    return ScheduledObservable(time, observable, exponent)


_SPECTRA: "OrderedDict[int, tuple[np.ndarray, SpectralDecomposition]]" = OrderedDict()


def cached_spectrum(h) -> SpectralDecomposition:
    """Spectral decomposition memoized on the identity of the matrix buffer."""
    m = _as_matrix(h)
    key = id(m)
    hit = _SPECTRA.get(key)
    if hit is not None and hit[0] is m:
        _SPECTRA.move_to_end(key)
        return hit[1]
    sd = spectral_decomposition(m)
    _SPECTRA[key] = (m, sd)
    if len(_SPECTRA) > 16:
        _SPECTRA.popitem(last=False)
    return sd


def _ordered(schedule: Sequence[ScheduledObservable]) -> list[ScheduledObservable]:
    items = sorted(schedule, key=lambda s: s.time)
    for _, group in itertools.groupby(items, key=lambda s: s.time):
        group = list(group)
        for a, b in itertools.combinations(group, 2):
            if a.observable is b.observable:
                continue
            c = commutator(a.observable, b.observable)
            scale = max(1.0, spectral_norm(a.observable) * spectral_norm(b.observable))
            if np.max(np.abs(c.matrix)) > PROPAGATED_TOL * scale:
                raise OrderAmbiguousError(
                    f"order ambiguous: {a!r} and {b!r} share time {a.time:g} but do not commute"
                )
    return items


@dataclass(frozen=True, eq=False)
class CorrelatorRequest:
    """A validated, time-sorted schedule together with state and Hamiltonian."""

    schedule: tuple[ScheduledObservable, ...]
    state: State
    hamiltonian: Operator

    def __post_init__(self):
        sched = tuple(self.schedule)
        if not sched:
            raise ValueError("schedule must be non-empty")
        if len(sched) > MAX_SCHEDULE:
            raise ValueError(f"schedule length {len(sched)} exceeds {MAX_SCHEDULE}")
        d = self.hamiltonian.dim
        if self.state.dim != d or any(s.observable.dim != d for s in sched):
            raise ValueError("state, Hamiltonian and observables must share one dimension")
        object.__setattr__(self, "schedule", tuple(_ordered(sched)))


def _maybe_sparse(m: np.ndarray):
    # Heisenberg evolution in the eigenbasis keeps the sparsity of ladder observables
    if m.shape[0] >= SPARSE_MIN_DIM and np.count_nonzero(m) <= SPARSE_DENSITY * m.size:
        return sparse.csr_array(m)
    return m


def _chain(items, rho_e, sd, to_e) -> complex:
    r = rho_e
    # expand exponents into coincident copies; the last item keeps its power
    expanded = []
    for s in items[:-1]:
        expanded += [(s.time, to_e(s.observable))] * s.exponent
    last = items[-1]
    for t, o in expanded:
        ot = _maybe_sparse(sd.heisenberg_eigenbasis(o, t))
        r = 0.5 * (ot @ r + (ot.T @ r.T).T)
    ol = sd.heisenberg_eigenbasis(to_e(last.observable), last.time)
    if last.exponent > 1:
        ol = np.linalg.matrix_power(ol, last.exponent)
    return np.einsum("ij,ji->", ol, r)


def weak_moment(request: CorrelatorRequest | Sequence[ScheduledObservable],
                state: State | None = None, hamiltonian: Operator | None = None) -> float:
    """Weak-limit moment of a schedule of measurement outcomes.

    Either pass a :class:`CorrelatorRequest` or ``(schedule, state, hamiltonian)``.

    Raises
    ------
    OrderAmbiguousError
        If two non-commuting observables share a time.
    """
    if not isinstance(request, CorrelatorRequest):
        request = CorrelatorRequest(tuple(request), state, hamiltonian)
    sd = cached_spectrum(request.hamiltonian)
    cache: dict[int, np.ndarray] = {}

    def to_e(op: Operator) -> np.ndarray:
        k = id(op)
        if k not in cache:
            cache[k] = sd.to_eigenbasis(op.matrix)
        return cache[k]

    rho_e = sd.to_eigenbasis(request.state.rho)
    val = _chain(request.schedule, rho_e, sd, to_e)
    return float(val.real)


def moment(state: State, hamiltonian: Operator, *schedule: ScheduledObservable) -> float:
    """Convenience wrapper: ``moment(rho, H, at(A, 0), at(B, 1))``."""
    return weak_moment(CorrelatorRequest(schedule, state, hamiltonian))


def is_conserved(q, h, tol: float = PROPAGATED_TOL) -> bool:
    c = commutator(h, q)
    return spectral_norm(c) <= tol * max(1.0, spectral_norm(q))


@dataclass(frozen=True)
class JumpReport:
    """Change of a third-order correlator when ``q`` crosses the first measurement.

    ``jump_value = after_value - before_value``, where ``before_value`` has the
    conserved quantity measured just before ``a`` and ``after_value`` just after.
    It equals ``<[[A(t2), Q], B(t3)]>/4``.
    """

    jump_value: float
    before_value: float
    after_value: float
    commutator_norm: float


def double_commutator(q, a: ScheduledObservable, b: ScheduledObservable, h) -> np.ndarray:
    """``[[A(t_a), Q], B(t_b)^p]`` in the computational basis."""
    sd = cached_spectrum(h)
    am = evolve(a.observable, h, a.time, sd).matrix
    bm = evolve(b.observable, h, b.time, sd).matrix
    if b.exponent > 1:
        bm = np.linalg.matrix_power(bm, b.exponent)
    qm = _as_matrix(q)
    inner = am @ qm - qm @ am
    return inner @ bm - bm @ inner


def jump(q, a: ScheduledObservable, b: ScheduledObservable, state: State, h,
         delta: float = DEFAULT_DELTA) -> JumpReport:
    """Jump of ``<q(t1) a(t2) b(t3)>`` as ``t1`` crosses ``t2``.

    Computed twice: directly from the double commutator and as the difference
    of two weak moments with ``q`` scheduled at ``t2 -/+ delta``. Both routes
    must agree to 1e-10 (relative to the correlator scale), and the moments are
    recomputed at ``delta/10`` to confirm they do not depend on the offset.
    """
    q = q if isinstance(q, Operator) else Operator(q, hermitian=True)
    if not is_conserved(q, h):
        raise ConservationError(
            "q does not commute with the Hamiltonian; use weak_moment for non-conserved quantities"
        )
    if a.exponent != 1:
        raise ValueError("the first observable of a jump must carry exponent 1")
    if not a.time < b.time:
        raise ValueError(f"need a.time < b.time, got {a.time} and {b.time}")
    if b.time - a.time <= delta:
        raise ValueError("b must be later than a by more than the offset delta")

    dc = double_commutator(q, a, b, h)
    direct = float(np.real(np.einsum("ij,ji->", dc, state.rho))) / 4.0

    def routes(d):
        before = weak_moment([at(q, a.time - d), a, b], state, h)
        after = weak_moment([a, at(q, a.time + d), b], state, h)
        return before, after

    before, after = routes(delta)
    before2, after2 = routes(delta / 10)
    scale = max(1.0, abs(before), abs(after))
    if max(abs(before - before2), abs(after - after2)) > PROPAGATED_TOL * scale:
        raise ContractError("moments depend on the offset delta; q is not effectively conserved")
    if abs(direct - (after - before)) > PROPAGATED_TOL * scale:
        raise ContractError(
            f"jump routes disagree: double commutator {direct!r} vs moment difference {after - before!r}"
        )
    return JumpReport(direct, before, after, spectral_norm(dc))


def second_order_time_invariance(q, a: ScheduledObservable, state: State, h,
                                 t_grid: Iterable[float]) -> float:
    """Largest deviation of ``<q(t1) a(t2)>`` from its mean over ``t1`` in ``t_grid``."""
    q = q if isinstance(q, Operator) else Operator(q, hermitian=True)
    if not is_conserved(q, h):
        raise ConservationError("q does not commute with the Hamiltonian")
    vals = np.array([weak_moment([at(q, t1), a], state, h) for t1 in t_grid])
    return float(np.max(np.abs(vals - vals.mean())))


@dataclass(frozen=True)
class WeakWayReport:
    holds: bool
    worst_pair: tuple[str, str] | None
    worst_norm: float
    norms: np.ndarray


def weak_way_check(q, observables: Sequence[Operator], indices: np.ndarray | None = None,
                   tol: float = PROPAGATED_TOL) -> WeakWayReport:
    """Check ``[[Q, A], B] = 0`` for every ordered pair of observables.

    ``indices`` restricts the spectral norm to a low-occupation block of the
    basis, which hides the cutoff artefacts of cropped ladder operators.
    """
    qm = _as_matrix(q)
    mats = [_as_matrix(o) for o in observables]
    labels = [getattr(o, "label", "") or f"O{i}" for i, o in enumerate(observables)]
    n = len(mats)
    norms = np.zeros((n, n))
    for i, j in itertools.product(range(n), repeat=2):
        inner = qm @ mats[i] - mats[i] @ qm
        dc = inner @ mats[j] - mats[j] @ inner
        if indices is not None:
            dc = dc[np.ix_(indices, indices)]
        norms[i, j] = spectral_norm(dc)
    if n == 0:
        return WeakWayReport(True, None, 0.0, norms)
    i, j = np.unravel_index(np.argmax(norms), norms.shape)
    worst = float(norms[i, j])
    return WeakWayReport(worst <= tol, (labels[i], labels[j]), worst, norms)


@functools.lru_cache(maxsize=4)
def _planar_bundle(truncation: int, omega: float):
    from .models import build

    return build("planar", truncation=truncation, omega=omega)


def finite_temperature_lz_correlator(kT: float, t2: float, t3: float, truncation: int = 40,
                                     omega: float = 1.0, tail_tol: float = 1e-7) -> float:
    """``<l_z x(t2) y(t3)>`` in the thermal planar trap with ``l_z`` measured first.

    Raises
    ------
    TruncationError
        If the thermal population on the top four levels of a mode exceeds
        ``tail_tol``.
    """
    from .models import top_level_population

    if kT <= 0:
        raise ValueError(f"kT must be positive, got {kT}")
    bundle = _planar_bundle(truncation, omega)
    rho = bundle.thermal(kT)
    tail = top_level_population(bundle, rho)
    if tail > tail_tol:
        raise TruncationError(
            f"thermal tail {tail:.2e} above {tail_tol:.0e} at kT={kT}, truncation={truncation}; "
            f"increase truncation"
        )
    t1 = min(t2, t3) - 1.0
    return weak_moment([at(bundle["Lz"], t1), at(bundle["X"], t2), at(bundle["Y"], t3)],
                       rho, bundle.hamiltonian)
