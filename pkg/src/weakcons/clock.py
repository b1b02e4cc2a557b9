"""Von Neumann detector model with clock-scheduled instantaneous kicks.

Each detector is a pointer coordinate ``x`` on a grid, prepared in
``psi(x) = (pi/2)^(-1/4) exp(-x^2)`` and kicked once by
``U = exp(-i g A (x) p_x)``, which shifts the pointer by ``g a`` on the
eigenspace of ``A`` with eigenvalue ``a``. The clock wavepacket is taken in its
narrow limit, so its only role is to fix the kick time.

Two routes are provided. :func:`sequential_clock_run` contracts each detector
as soon as it has been kicked: a detector is never coupled again, so the joint
expectation of pointer products equals a chain of system-space maps
``R -> sum P_a R P_a' w(a, a')`` with ``w`` the detector matrix element of
``x`` (or ``1`` for unread detectors) between the two displaced pointer
states. This is exact and costs only system-sized matrices.
:func:`explicit_clock_run` keeps the full joint wavefunction on the detector
grids and serves as an audit of the contraction on small problems.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .operators import Operator, State, _as_matrix, propagator, spectral_decomposition

MAX_DETECTORS = 4
DEFAULT_BUDGET = 512 * 2**20


class GridError(ValueError):
    """Detector grid cannot represent the requested displacement."""


class MemoryBudgetError(MemoryError):
    """Explicit joint state would exceed the memory budget."""


@dataclass(frozen=True)
class DetectorSpec:
    n_grid: int = 256
    x_range: float = 8.0

    def __post_init__(self):
        if self.n_grid < 16:
            raise GridError(f"n_grid={self.n_grid} too small")
        if self.dx > 0.25:
            raise GridError(f"grid spacing {self.dx:.3g} does not resolve the pointer width 0.5")

    @property
    def dx(self) -> float:
        return 2 * self.x_range / self.n_grid

    @property
    def grid(self) -> np.ndarray:
        return (np.arange(self.n_grid) - (self.n_grid - 1) / 2) * self.dx

    def pointer(self, shift: float | np.ndarray = 0.0) -> np.ndarray:
        """Initial pointer wavefunction displaced by ``shift`` (rows per shift)."""
        s = np.asarray(shift, dtype=float)[..., None]
        return (np.pi / 2) ** -0.25 * np.exp(-((self.grid - s) ** 2))

    def check_displacement(self, max_shift: float) -> None:
        if self.x_range < 6 + max_shift:
            raise GridError(
                f"x_range={self.x_range} cannot hold displacement {max_shift:.3g}; "
                f"need at least {6 + max_shift:.3g}"
            )

    @property
    def momenta(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n_grid, d=self.dx)


@dataclass(frozen=True)
class ClockKick:
    """Instantaneous detector coupling ``g A p_x`` at ``time``."""

    time: float
    coupled_observable: Operator
    g: float

    def __post_init__(self):
        if not isinstance(self.coupled_observable, Operator):
            object.__setattr__(self, "coupled_observable",
                               Operator(self.coupled_observable, hermitian=True))
        if not self.coupled_observable.is_hermitian:
            raise ValueError("coupled observable must be Hermitian")
        if self.g <= 0:
            raise ValueError("kick strength must be positive")


@dataclass(frozen=True)
class XYKick:
    """Rotation-invariant kick ``g (X p_xD + Y p_yD)`` with a two-axis detector.

    ``read`` selects the detector axis that enters correlators; the other axis
    is traced out.
    """

    time: float
    x_observable: Operator
    y_observable: Operator
    g: float
    read: str = "x"

    def __post_init__(self):
        if self.read not in ("x", "y"):
            raise ValueError("read must be 'x' or 'y'")
        if self.g <= 0:
            raise ValueError("kick strength must be positive")


Kick = Union[ClockKick, XYKick]


@dataclass(frozen=True, eq=False)
class KickMap:
    """Effective action of one narrow-clock kick.

    ``shifts[k]`` holds the pointer displacement (one column per detector
    axis) on the system eigenvector ``eigenvectors[:, k]``.
    """

    eigenvectors: np.ndarray
    shifts: np.ndarray
    spec: DetectorSpec

    def branches(self, axis: int = 0) -> np.ndarray:
        return self.spec.pointer(self.shifts[:, axis])

    def unitary(self) -> np.ndarray:
        """Dense ``exp(-i g A (x) p)`` on system (x) grid for one detector axis.

        Built with the grid momentum operator, so it is unitary by construction
        and agrees with the exact Gaussian shift for well-contained pointers.
        """
        if self.shifts.shape[1] != 1:
            raise ValueError("dense unitary only for single-axis kicks")
        n = self.spec.n_grid
        d = self.eigenvectors.shape[0]
        if d * n > 4096:
            raise MemoryBudgetError(f"dense kick unitary of size {d * n} exceeds 4096")
        f = np.fft.fft(np.eye(n), axis=0, norm="ortho")
        p = self.spec.momenta
        out = np.zeros((d * n, d * n), dtype=complex)
        for k in range(d):
            v = self.eigenvectors[:, k]
            shift = f.conj().T @ (np.exp(-1j * self.shifts[k, 0] * p)[:, None] * f)
            out += np.kron(np.outer(v, v.conj()), shift)
        return out


def _joint_eigenbasis(x, y, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Common eigenbasis of two commuting Hermitian matrices."""
    xm, ym = _as_matrix(x), _as_matrix(y)
    if np.max(np.abs(xm @ ym - ym @ xm)) > tol:
        raise ValueError("rotation-invariant kick needs commuting X and Y")
    _, w = np.linalg.eigh(xm + np.sqrt(2) * ym + np.pi / 10 * (xm @ ym))
    dx = w.conj().T @ xm @ w
    dy = w.conj().T @ ym @ w
    off = max(np.max(np.abs(dx - np.diag(np.diag(dx)))), np.max(np.abs(dy - np.diag(np.diag(dy)))))
    if off > tol:
        raise ValueError("failed to find a common eigenbasis of X and Y")
    return np.real(np.diag(dx)), np.real(np.diag(dy)), w


def integrate_clock_kick(spec: DetectorSpec, kick: Kick) -> KickMap:
    """Reduce the clock-scheduled interaction to its instantaneous kick.

    In the narrow-clock limit the time integral of ``g A delta(z - vt) p_x``
    is ``g A(t) p_x`` at the arrival time, so the pointer is displaced by
    ``g a`` on each eigenspace of ``A``.
    """
    if isinstance(kick, XYKick):
        lx, ly, w = _joint_eigenbasis(kick.x_observable, kick.y_observable)
        shifts = kick.g * np.stack([lx, ly], axis=1)
    else:
        sd = spectral_decomposition(kick.coupled_observable)
        w = sd.eigenvectors
        shifts = kick.g * sd.eigenvalues[:, None]
    spec.check_displacement(float(np.max(np.abs(shifts))))
    return KickMap(w, shifts, spec)


def _overlaps(km: KickMap, axis: int, read: bool) -> np.ndarray:
    b = km.branches(axis)
    dx = km.spec.dx
    if read:
        return (b * km.spec.grid) @ b.T * dx
    return b @ b.T * dx


def _kick_weights(km: KickMap, kick: Kick, read: bool) -> np.ndarray:
    """``w[a, a'] = <phi_a'| x or 1 |phi_a>`` for the kick's detector."""
    if isinstance(kick, XYKick):
        ax = 0 if kick.read == "x" else 1
        return _overlaps(km, ax, read) * _overlaps(km, 1 - ax, False)
    return _overlaps(km, 0, read)


@dataclass(eq=False)
class ClockResult:
    """Pointer-position correlators for every subset of detectors.

    ``moments[(i, j, ...)]`` is ``<x_i x_j ...>`` on the final joint state;
    the empty tuple gives the norm.
    """

    kicks: tuple
    moments: dict[tuple[int, ...], float] = field(default_factory=dict)

    def correlator(self, *indices: int) -> float:
        return self.moments[tuple(sorted(indices))]

    def scaled(self, *indices: int) -> float:
        """Correlator divided by the product of the kick strengths."""
        idx = indices or tuple(range(len(self.kicks)))
        return self.correlator(*idx) / np.prod([self.kicks[i].g for i in idx])

    @property
    def means(self) -> np.ndarray:
        return np.array([self.moments[(i,)] for i in range(len(self.kicks))])


def _check_order(kicks: Sequence[Kick]) -> None:
    if not kicks:
        raise ValueError("need at least one kick")
    if len(kicks) > MAX_DETECTORS:
        raise ValueError(f"at most {MAX_DETECTORS} detectors supported, got {len(kicks)}")
    for a, b in zip(kicks, kicks[1:]):
        if b.time < a.time:
            raise ValueError("kicks must be time-ordered")


def sequential_clock_run(state: State, kicks: Sequence[Kick], h,
                         spec: DetectorSpec | None = None) -> ClockResult:
    """Exact pointer correlators of a sequence of clock kicks.

    Kicks are applied in list order; ties in time keep that order. The system
    evolves under ``h`` from t = 0 (the reference time of ``state``) between
    kicks. Divided by ``g^n`` the n-detector correlators tend to the weak
    correlators with relative corrections of order ``g^2``.
    """
    spec = spec or DetectorSpec()
    kicks = list(kicks)
    _check_order(kicks)
    hm = _as_matrix(h)
    sd = spectral_decomposition(hm)
    maps = [integrate_clock_kick(spec, k) for k in kicks]
    weights = [(_kick_weights(m, k, False), _kick_weights(m, k, True)) for m, k in zip(maps, kicks)]
    props = []
    t_prev = 0.0
    for k in kicks:
        props.append(None if k.time == t_prev else propagator(hm, k.time - t_prev, sd))
        t_prev = k.time
    rho0 = np.asarray(state.rho, dtype=complex)
    result = ClockResult(tuple(kicks))
    n = len(kicks)
    for subset in itertools.chain.from_iterable(itertools.combinations(range(n), r) for r in range(n + 1)):
        r = rho0
        for i, (m, u) in enumerate(zip(maps, props)):
            if u is not None:
                r = u @ r @ u.conj().T
            w = weights[i][1 if i in subset else 0]
            v = m.eigenvectors
            r = v @ ((v.conj().T @ r @ v) * w.T) @ v.conj().T
        result.moments[subset] = float(np.real(np.trace(r)))
    return result


def explicit_clock_run(state: State, kicks: Sequence[Kick], h, spec: DetectorSpec,
                       budget_bytes: int = DEFAULT_BUDGET, observables: dict | None = None):
    """Audit route: keep every detector in the joint wavefunction.

    The initial state is unravelled into its eigenvectors and each pure branch
    is propagated on system (x) detector grids. Returns a :class:`ClockResult`
    (with both axes of an :class:`XYKick` available as detector axes) plus the
    list of joint wavefunctions and their weights for further audits.
    """
    kicks = list(kicks)
    _check_order(kicks)
    n_axes = sum(2 if isinstance(k, XYKick) else 1 for k in kicks)
    d = state.dim
    probs, vecs = np.linalg.eigh(np.asarray(state.rho))
    keep = probs > 1e-14
    probs, vecs = probs[keep], vecs[:, keep]
    need = len(probs) * d * spec.n_grid ** n_axes * 16 * 3
    if need > budget_bytes:
        raise MemoryBudgetError(
            f"explicit joint state needs about {need / 2**20:.1f} MiB, budget {budget_bytes / 2**20:.1f} MiB"
        )
    hm = _as_matrix(h)
    sd = spectral_decomposition(hm)
    maps = [integrate_clock_kick(spec, k) for k in kicks]
    psis = []
    for j in range(len(probs)):
        psi = vecs[:, j].astype(complex)
        t_prev = 0.0
        for k, m in zip(kicks, maps):
            if k.time != t_prev:
                u = propagator(hm, k.time - t_prev, sd)
                psi = np.tensordot(u, psi, axes=(1, 0))
                t_prev = k.time
            v = m.eigenvectors
            c = np.tensordot(v.conj().T, psi, axes=(1, 0))
            for axis in range(m.shifts.shape[1]):
                b = m.branches(axis)
                c = c[..., None] * b.reshape((b.shape[0],) + (1,) * (c.ndim - 1) + (b.shape[1],))
            psi = np.tensordot(v, c, axes=(1, 0))
        psis.append(psi)
    dens = sum(p * np.abs(psi) ** 2 for p, psi in zip(probs, psis))
    marg = dens.sum(axis=0) * spec.dx ** n_axes
    # axes of the kicks that enter correlators
    read_axes = []
    pos = 0
    for k in kicks:
        if isinstance(k, XYKick):
            read_axes.append(pos + (0 if k.read == "x" else 1))
            pos += 2
        else:
            read_axes.append(pos)
            pos += 1
    x = spec.grid
    result = ClockResult(tuple(kicks))
    n = len(kicks)
    for subset in itertools.chain.from_iterable(itertools.combinations(range(n), r) for r in range(n + 1)):
        f = marg
        for i in subset:
            shape = [1] * n_axes
            shape[read_axes[i]] = spec.n_grid
            f = f * x.reshape(shape)
        result.moments[subset] = float(f.sum())
    return result, list(zip(probs, psis))


def detector_angular_momentum(psi: np.ndarray, spec: DetectorSpec, axes: tuple[int, int]) -> float:
    """``<x p_y - y p_x>`` of a two-axis detector, derivatives taken spectrally.

    ``axes`` are the positions of the detector's x and y grid axes in ``psi``.
    """
    k = spec.momenta
    ax, ay = axes

    def p(f, axis):
        shape = [1] * f.ndim
        shape[axis] = spec.n_grid
        return np.fft.ifft(np.fft.fft(f, axis=axis) * k.reshape(shape), axis=axis)

    def coord(axis):
        shape = [1] * psi.ndim
        shape[axis] = spec.n_grid
        return spec.grid.reshape(shape)

    lpsi = coord(ax) * p(psi, ay) - coord(ay) * p(psi, ax)
    return float(np.real(np.vdot(psi, lpsi)) * spec.dx ** (psi.ndim - 1))


def rotation_invariant_xy_kick(state: State, times: Sequence[float], g: float, bundle,
                               reads: Sequence[str] | None = None,
                               spec: DetectorSpec | None = None) -> ClockResult:
    """Isotropic two-axis kicks on a planar trap, one detector per time.

    ``reads`` picks the axis of each detector entering the correlators
    (default ``x`` everywhere). The result holds single-axis means and all
    cross-detector correlators of the chosen axes.
    """
    reads = list(reads) if reads is not None else ["x"] * len(times)
    kicks = [XYKick(t, bundle["X"], bundle["Y"], g, r) for t, r in zip(times, reads)]
    return sequential_clock_run(state, kicks, bundle.hamiltonian, spec)
