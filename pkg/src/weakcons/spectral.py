"""Frequency-domain three-point correlator of the planar trap.

The analytic coefficient of ``delta(gamma + alpha + beta)`` in the Fourier
transform of ``<l_z(t1) x(t2) y(t3)>`` is cross-checked by a regularized
numerical transform of the time-domain correlator.

Reduction used by the numerical route. With a conserved ``l_z`` the
correlator depends on ``t1`` only through a step at ``min(t2, t3)``: it equals
``before(t2 - t3)`` for earlier ``t1`` and ``before + D(t2 - t3)`` for later
``t1``, where ``D`` is the jump across the earlier observable. The ``t1``
integral of the step is ``i exp(i gamma min(t2, t3)) / gamma``, the
``before`` part only contributes on ``gamma = 0``, and stationarity turns the
remaining double integral into ``2 pi delta(alpha + beta + gamma)`` times a
single relative-time integral

    I = int_0^inf e^{i alpha u} D(u) du + int_0^inf e^{i beta v} D(-v) dv,

so the coefficient of the delta function is ``2 pi i I / gamma`` with
``gamma = -(alpha + beta)``. ``I`` is evaluated with the regulator
``exp(-eta u)`` on adaptive Gauss-Legendre panels and extrapolated to
``eta -> 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import State, _as_matrix, spectral_decomposition

RESONANCE_TOL = 1e-9
DEFAULT_ETAS = (1e-2, 3e-3, 1e-3)
MAX_QUADRATURE_NODES = 2**22


class ConvergenceError(RuntimeError):
    """Quadrature did not converge; ``trail`` lists the refinement history."""

    def __init__(self, message: str, trail: list):
        super().__init__(f"{message}; refinement trail: {trail}")
        self.trail = trail


@dataclass(frozen=True)
class FreqTriple:
    alpha: float
    beta: float

    @property
    def gamma(self) -> float:
        return -(self.alpha + self.beta)


@dataclass(frozen=True)
class FreqResult:
    """Coefficient of ``delta(gamma + alpha + beta)``.

    ``coefficient`` is the extrapolated value, ``raw`` the values at each
    regulator in ``etas`` and ``slope`` the fitted linear rate ``C`` of the
    approach in ``eta``.
    """

    triple: FreqTriple
    coefficient: complex
    regularization_eta: float
    etas: tuple[float, ...] = ()
    raw: tuple[complex, ...] = ()
    slope: float = 0.0
    trail: tuple = field(default=(), repr=False)


def _check_off_resonance(alpha: float, beta: float, omega: float) -> None:
    for name, v in (("alpha", alpha), ("beta", beta), ("gamma", -(alpha + beta))):
        if abs(v) < RESONANCE_TOL:
            raise ValueError(f"{name} = 0 is on resonance (zero-frequency shell excluded)")
    for name, v in (("alpha", alpha), ("beta", beta)):
        if abs(abs(v) - omega) < RESONANCE_TOL:
            raise ValueError(f"{name} = {v} is on resonance with omega = {omega}")


def lz_freq_analytic(alpha: float, beta: float, omega: float = 1.0) -> complex:
    """``i pi w (beta - alpha) / (2 (alpha^2 - w^2)(beta^2 - w^2))``."""
    _check_off_resonance(alpha, beta, omega)
    return 1j * np.pi * omega * (beta - alpha) / (2 * (alpha**2 - omega**2) * (beta**2 - omega**2))


@dataclass(frozen=True, eq=False)
class _BohrSeries:
    """``D(u) = sum_k c_k exp(-i phi_k u)`` for one branch."""

    coeffs: np.ndarray
    phases: np.ndarray

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return np.exp(-1j * np.outer(u, self.phases)) @ self.coeffs


def _branch_series(xm, q, ym, rho, energies, first_is_x: bool, tol: float = 1e-14) -> _BohrSeries:
    # D is linear in X(u) = exp(-iHu) X exp(iHu): D = Tr(X(u) M) / 4
    if first_is_x:
        m = q @ ym @ rho - ym @ rho @ q - q @ rho @ ym + rho @ ym @ q
    else:
        m = rho @ ym @ q - rho @ q @ ym - ym @ q @ rho + q @ ym @ rho
    terms = xm * m.T / 4
    phi = energies[:, None] - energies[None, :]
    mask = np.abs(terms) > tol
    phases = np.round(phi[mask], 12)
    uniq, inv = np.unique(phases, return_inverse=True)
    coeffs = np.zeros(len(uniq), dtype=complex)
    np.add.at(coeffs, inv, terms[mask])
    keep = np.abs(coeffs) > tol
    return _BohrSeries(coeffs[keep], uniq[keep])


def _gl_integral(f, freq: float, eta: float, rtol: float, nodes: int = 24, max_doublings: int = 12,
                 max_nodes: int = MAX_QUADRATURE_NODES):
    """``int_0^inf f(u) exp(-eta u) du`` on composite Gauss-Legendre panels."""
    upper = np.log(1e13) / eta
    x, w = np.polynomial.legendre.leggauss(nodes)
    n_panels = max(8, int(np.ceil(upper * max(freq, eta) / (4 * np.pi))))
    trail = []
    prev = None
    for _ in range(max_doublings):
        if n_panels * nodes > max_nodes:
            raise ConvergenceError(
                f"quadrature for eta={eta:.3g} needs more than {max_nodes} nodes; use a larger regulator",
                trail)
        edges = np.linspace(0.0, upper, n_panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        u = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        wt = (half[:, None] * w[None, :]).ravel()
        val = np.sum(wt * f(u) * np.exp(-eta * u))
        trail.append((n_panels, complex(val)))
        if prev is not None and abs(val - prev) <= rtol * max(abs(val), 1e-300) + 1e-15:
            return val, trail
        prev = val
        n_panels *= 2
    raise ConvergenceError("relative-time quadrature did not converge", trail)


def _series(model, state: State, x_name: str, y_name: str, q_name: str):
    h = _as_matrix(model.hamiltonian)
    sd = spectral_decomposition(h)
    v = sd.eigenvectors
    to = lambda a: v.conj().T @ _as_matrix(a) @ v
    xm, ym, q = to(model[x_name]), to(model[y_name]), to(model[q_name])
    rho = to(state.rho)
    e = sd.eigenvalues
    neg = _branch_series(xm, q, ym, rho, e, first_is_x=True)
    pos = _branch_series(xm, q, ym, rho, e, first_is_x=False)
    return neg, pos


def step_difference(model, state: State, u, x_name: str = "X", y_name: str = "Y",
                    q_name: str = "Lz") -> np.ndarray:
    """Jump ``D(u)`` of ``<q(t1) x(u) y(0)>`` across ``min(u, 0)`` as a function of ``u``."""
    neg, pos = _series(model, state, x_name, y_name, q_name)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return np.where(u < 0, neg(u).real, pos(u).real)


def lz_freq_numeric(alpha: float, beta: float, model, state: State, eta: float | None = None,
                    etas=DEFAULT_ETAS, rtol: float = 1e-11, omega: float | None = None) -> FreqResult:
    """Regularized numerical transform of the time-domain correlator.

    With ``eta`` given, returns the value at that single regulator. Otherwise
    evaluates at each of ``etas`` and extrapolates to zero with a polynomial
    through all points.
    """
    omega = model.spec.omega if omega is None else omega
    _check_off_resonance(alpha, beta, omega)
    triple = FreqTriple(alpha, beta)
    neg, pos = _series(model, state, "X", "Y", "Lz")
    fmax = float(np.max(np.abs(np.concatenate([neg.phases, pos.phases, [0.0]])))) + abs(alpha) + abs(beta)

    def at(e):
        # u < 0 branch: substitute v = -u so both integrals run over [0, inf)
        i1, t1 = _gl_integral(lambda u: np.exp(1j * alpha * u) * pos(u), fmax, e, rtol)
        i2, t2 = _gl_integral(lambda v: np.exp(1j * beta * v) * neg(-v), fmax, e, rtol)
        return 2j * np.pi * (i1 + i2) / triple.gamma, (t1, t2)

    if eta is not None:
        val, trail = at(eta)
        return FreqResult(triple, complex(val), eta, (eta,), (complex(val),), 0.0, (trail,))
    etas = tuple(sorted(etas, reverse=True))
    vals, trails = zip(*(at(e) for e in etas))
    vals = np.array(vals)
    e = np.array(etas)
    weights = np.array([np.prod([ej / (ej - ei) for j, ej in enumerate(e) if j != i]) for i, ei in enumerate(e)])
    coef = complex(weights @ vals)
    slope = float(abs(vals[-1] - coef) / e[-1])
    return FreqResult(triple, coef, float(e[-1]), etas, tuple(complex(v) for v in vals), slope, trails)
