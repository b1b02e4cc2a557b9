"""Dense operator algebra on finite-dimensional Hilbert spaces.

Units: hbar = 1 throughout. Energies, frequencies and times are dimensionless
ratios (E/hbar*omega, omega*t).

Time convention
---------------
Heisenberg operators are evolved as ``A(t) = exp(-iHt) A exp(iHt)`` and the
matching Schrodinger propagator is ``U(t) = exp(+iHt)``, so that
``Tr[A(t) rho] = Tr[A U rho U^dag]``. Every closed-form correlator used in this
package (two-level, oscillator and planar-trap formulas) is written in this
convention. Switching to the opposite sign is equivalent to ``t -> -t`` and
flips the sign of correlators that are odd in time, e.g. ``<l_z x(t2) y(t3)>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

HERMITIAN_TOL = 1e-12
PROPAGATED_TOL = 1e-10

# Sign s in A(t) = exp(s*iHt) A exp(-s*iHt); see module docstring.
TIME_SIGN = -1


class DimensionError(ValueError):
    """Operands live on Hilbert spaces of different dimension."""


class NotHermitianError(ValueError):
    """An operator required to be Hermitian is not."""


def _as_matrix(a) -> np.ndarray:
    if isinstance(a, Operator):
        return a.matrix
    if isinstance(a, State):
        return a.rho
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    return m


def _frozen(m: np.ndarray) -> np.ndarray:
    m = np.array(m, dtype=complex, copy=True)
    m.setflags(write=False)
    return m


def hermiticity_error(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


@dataclass(frozen=True, eq=False)
class Operator:
    """Immutable dense operator.

    Parameters
    ----------
    matrix : array_like, shape (dim, dim)
        Complex entries.
    hermitian : bool
        If set, Hermiticity is verified on construction to ``HERMITIAN_TOL``
        and the matrix is symmetrized.
    label : str
        Free-form name used in reports.
    """

    matrix: np.ndarray
    hermitian: bool = False
    label: str = ""

    def __post_init__(self):
        m = _as_matrix(self.matrix)
        if self.hermitian:
            err = hermiticity_error(m)
            if err > HERMITIAN_TOL:
                raise NotHermitianError(
                    f"operator {self.label!r} is not Hermitian: max|A - A^dag| = {err:.3e}"
                )
            m = 0.5 * (m + m.conj().T)
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def __repr__(self):
        tag = "hermitian, " if self.hermitian else ""
        return f"Operator({self.label or '?'}, {tag}dim={self.dim})"

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return self.hermitian or hermiticity_error(self.matrix) <= tol

    def dag(self) -> "Operator":
        return Operator(self.matrix.conj().T, hermitian=self.hermitian, label=self.label)

    def power(self, p: int) -> "Operator":
        return Operator(np.linalg.matrix_power(self.matrix, p), hermitian=self.hermitian)

    def _binary(self, other, fn, keep_herm):
        b = _as_matrix(other)
        if b.shape != self.matrix.shape:
            raise DimensionError(f"dimension mismatch: {self.dim} vs {b.shape[0]}")
        herm = keep_herm and self.hermitian and isinstance(other, Operator) and other.hermitian
        return Operator(fn(self.matrix, b), hermitian=herm)

    def __add__(self, other):
        return self._binary(other, np.add, True)

    def __sub__(self, other):
        return self._binary(other, np.subtract, True)

    def __matmul__(self, other):
        return self._binary(other, np.matmul, False)

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return Operator(self.matrix * c, hermitian=self.hermitian and np.isreal(c))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / c)

    def __neg__(self):
        return self * -1.0


@dataclass(frozen=True, eq=False)
class State:
    """Density matrix with trace one, Hermitian and numerically positive."""

    rho: np.ndarray

    def __post_init__(self):
        r = _as_matrix(self.rho)
        tr = np.trace(r)
        if abs(tr - 1.0) > HERMITIAN_TOL:
            raise ValueError(f"density matrix trace is {tr}, expected 1")
        herr = hermiticity_error(r)
        if herr > HERMITIAN_TOL:
            raise NotHermitianError(f"density matrix not Hermitian ({herr:.3e})")
        r = 0.5 * (r + r.conj().T)
        lmin = np.linalg.eigvalsh(r)[0]
        if lmin < -1e-10:
            raise ValueError(f"density matrix has negative eigenvalue {lmin:.3e}")
        object.__setattr__(self, "rho", _frozen(r))

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    @classmethod
    def _trusted(cls, rho: np.ndarray) -> "State":
        """Skip the eigenvalue check for matrices positive by construction."""
        obj = object.__new__(cls)
        r = _as_matrix(rho)
        object.__setattr__(obj, "rho", _frozen(0.5 * (r + r.conj().T)))
        return obj

    @classmethod
    def pure(cls, psi) -> "State":
        psi = np.asarray(psi, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls._trusted(np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "State":
        return cls(np.eye(dim) / dim)

    def populations(self) -> np.ndarray:
        """Diagonal of rho in the computational basis."""
        return np.real(np.diag(self.rho)).copy()

    def purity(self) -> float:
        return float(np.real(np.trace(self.rho @ self.rho)))

    def __repr__(self):
        return f"State(dim={self.dim}, purity={self.purity():.4f})"


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigen-decomposition ``H = V diag(eigenvalues) V^dag`` of a Hermitian matrix."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    _diagonal: bool = field(default=False, repr=False)

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T

    def to_eigenbasis(self, m: np.ndarray) -> np.ndarray:
        if self._diagonal:
            return m[np.ix_(self._perm, self._perm)]
        v = self.eigenvectors
        return v.conj().T @ m @ v

    def from_eigenbasis(self, m: np.ndarray) -> np.ndarray:
        if self._diagonal:
            out = np.empty_like(m)
            out[np.ix_(self._perm, self._perm)] = m
            return out
        v = self.eigenvectors
        return v @ m @ v.conj().T

    @cached_property
    def _perm(self) -> np.ndarray:
        # eigenvectors is a permutation matrix when the input was diagonal
        return np.argmax(np.abs(self.eigenvectors), axis=0)

    @cached_property
    def bohr_phases(self) -> np.ndarray:
        """Matrix of E_m - E_n in the eigenbasis."""
        e = self.eigenvalues
        return e[:, None] - e[None, :]

    def heisenberg_eigenbasis(self, op_e: np.ndarray, t: float) -> np.ndarray:
        """Evolve an operator already expressed in the eigenbasis."""
        if t == 0:
            return op_e
        return op_e * np.exp(TIME_SIGN * 1j * t * self.bohr_phases)


def spectral_decomposition(h) -> SpectralDecomposition:
    """Diagonalize a Hermitian operator.

    Diagonal inputs (the Fock-basis oscillator Hamiltonians) skip LAPACK and
    return a permutation basis, which keeps the degenerate planar-trap shells
    aligned with the number states.
    """
    m = _as_matrix(h)
    if hermiticity_error(m) > HERMITIAN_TOL:
        raise NotHermitianError("spectral decomposition requires a Hermitian operator")
    offdiag = m - np.diag(np.diag(m))
    if not np.any(offdiag):
        d = np.real(np.diag(m))
        order = np.argsort(d, kind="stable")
        v = np.eye(len(d), dtype=complex)[:, order]
        return SpectralDecomposition(d[order], v, _diagonal=True)
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return SpectralDecomposition(w, v)


def commutator(a, b) -> Operator:
    """Return ``ab - ba``."""
    ma, mb = _as_matrix(a), _as_matrix(b)
    if ma.shape != mb.shape:
        raise DimensionError(f"dimension mismatch: {ma.shape[0]} vs {mb.shape[0]}")
    return Operator(ma @ mb - mb @ ma)


def anticommutator(a, b) -> Operator:
    """Return ``ab + ba``."""
    ma, mb = _as_matrix(a), _as_matrix(b)
    if ma.shape != mb.shape:
        raise DimensionError(f"dimension mismatch: {ma.shape[0]} vs {mb.shape[0]}")
    out = ma @ mb + mb @ ma
    herm = isinstance(a, Operator) and isinstance(b, Operator) and a.is_hermitian() and b.is_hermitian()
    if herm:
        out = 0.5 * (out + out.conj().T)
    return Operator(out, hermitian=herm)


def propagator(h, t: float, spectrum: SpectralDecomposition | None = None) -> np.ndarray:
    """Schrodinger propagator ``U(t)`` matching :func:`evolve`."""
    sd = spectrum if spectrum is not None else spectral_decomposition(h)
    v = sd.eigenvectors
    return (v * np.exp(-TIME_SIGN * 1j * t * sd.eigenvalues)) @ v.conj().T


def evolve(op, h, t: float, spectrum: SpectralDecomposition | None = None) -> Operator:
    """Heisenberg-picture operator ``exp(-iHt) op exp(iHt)``.

    Parameters
    ----------
    op, h : Operator or array_like
        Operator to evolve and Hermitian Hamiltonian of equal dimension.
    t : float
        Time in units of 1/omega.
    spectrum : SpectralDecomposition, optional
        Cached decomposition of ``h`` to skip the eigensolve.
    """
    m = _as_matrix(op)
    hm = _as_matrix(h)
    if m.shape != hm.shape:
        raise DimensionError(f"dimension mismatch: {m.shape[0]} vs {hm.shape[0]}")
    sd = spectrum if spectrum is not None else spectral_decomposition(hm)
    out = sd.from_eigenbasis(sd.heisenberg_eigenbasis(sd.to_eigenbasis(m), t))
    herm = isinstance(op, Operator) and op.hermitian
    return Operator(out, hermitian=herm, label=getattr(op, "label", ""))


def thermal_state(h, kT: float) -> State:
    """Gibbs state ``exp(-H/kT)/Z`` computed in the eigenbasis.

    ``kT = 0`` returns the normalized projector onto the ground eigenspace.
    """
    if kT < 0:
        raise ValueError(f"temperature must be non-negative, got kT={kT}")
    sd = spectral_decomposition(h)
    e = sd.eigenvalues
    if kT == 0:
        tol = PROPAGATED_TOL * max(1.0, float(np.max(np.abs(e))))
        p = (e - e[0] <= tol).astype(float)
    else:
        p = np.exp(-(e - e[0]) / kT)
    p /= p.sum()
    v = sd.eigenvectors
    if sd._diagonal:
        rho = np.zeros(v.shape, dtype=complex)
        rho[sd._perm, sd._perm] = p
    else:
        rho = (v * p) @ v.conj().T
    return State._trusted(rho)


def tensor(*ops) -> Operator:
    """Kronecker product; Hermiticity is kept when all factors are Hermitian."""
    out = np.array([[1.0 + 0j]])
    herm = True
    for o in ops:
        out = np.kron(out, _as_matrix(o))
        herm = herm and isinstance(o, Operator) and o.hermitian
    return Operator(out, hermitian=herm)


def identity(dim: int) -> Operator:
    return Operator(np.eye(dim), hermitian=True, label="1")


def partial_trace(op, dims: tuple[int, int], keep: int = 0) -> np.ndarray:
    """Trace out one factor of a bipartite operator on ``dims[0] x dims[1]``."""
    m = _as_matrix(op).reshape(dims[0], dims[1], dims[0], dims[1])
    if keep == 0:
        return np.einsum("ijkj->ik", m)
    return np.einsum("ijil->jl", m)


def expectation(op, state, with_residue: bool = False):
    """``Tr(op rho)``.

    Hermitian operators return a real number; with ``with_residue`` the
    discarded imaginary part is returned as well so callers can audit it.
    """
    m = _as_matrix(op)
    r = _as_matrix(state)
    if m.shape != r.shape:
        raise DimensionError(f"dimension mismatch: {m.shape[0]} vs {r.shape[0]}")
    val = np.einsum("ij,ji->", m, r)
    herm = isinstance(op, Operator) and op.is_hermitian()
    if not herm:
        return complex(val)
    if with_residue:
        return float(val.real), float(abs(val.imag))
    return float(val.real)


def spectral_norm(m) -> float:
    return float(np.linalg.norm(_as_matrix(m), ord=2))


# Pauli matrices in the (|+>, |->) ordering used by the two-level model
SIGMA_X = Operator([[0, 1], [1, 0]], hermitian=True, label="sx")
SIGMA_Y = Operator([[0, -1j], [1j, 0]], hermitian=True, label="sy")
SIGMA_Z = Operator([[1, 0], [0, -1]], hermitian=True, label="sz")


def ladder(n: int) -> Operator:
    """Annihilation operator cropped to ``n`` Fock levels."""
    return Operator(np.diag(np.sqrt(np.arange(1, n)), 1), label="a")
