"""Benchmark systems: two-level system, truncated oscillator and planar trap."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

import numpy as np

from .operators import (
    Operator,
    State,
    ladder,
    spectral_decomposition,
    thermal_state,
    PROPAGATED_TOL,
)

TRUNCATION_FLOOR = 8
DEFAULT_TRUNCATION = 24


class ModelKind(str, enum.Enum):
    TWO_LEVEL = "two-level"
    OSCILLATOR = "oscillator"
    PLANAR = "planar"
    DETUNED_PLANAR = "detuned-planar"


@dataclass(frozen=True)
class ModelSpec:
    """Declarative model description.

    ``truncation`` is the Fock cutoff per mode and is ignored for the two-level
    system. ``detuning_epsilon`` only applies to the detuned trap, where
    ``omega_x = omega (1 + epsilon)`` and ``omega_y = omega``.
    """

    kind: ModelKind
    omega: float = 1.0
    truncation: int = DEFAULT_TRUNCATION
    detuning_epsilon: float = 0.0

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", ModelKind(self.kind))
        except ValueError:
            valid = ", ".join(k.value for k in ModelKind)
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {valid}") from None
        if self.omega <= 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.kind is not ModelKind.TWO_LEVEL and self.truncation < TRUNCATION_FLOOR:
            raise ValueError(
                f"truncation {self.truncation} below floor {TRUNCATION_FLOOR} for {self.kind.value}"
            )
        if abs(self.detuning_epsilon) >= 0.5:
            raise ValueError(f"|detuning_epsilon| must be < 0.5, got {self.detuning_epsilon}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class ModelBundle:
    spec: ModelSpec
    hamiltonian: Operator
    observables: dict[str, Operator] = field(default_factory=dict)
    mode_dims: tuple[int, ...] = ()

    @property
    def dim(self) -> int:
        return self.hamiltonian.dim

    def __getitem__(self, name: str) -> Operator:
        try:
            return self.observables[name]
        except KeyError:
            raise KeyError(f"model {self.spec.kind.value} has no observable {name!r}; "
                           f"available: {sorted(self.observables)}") from None

    def thermal(self, kT: float) -> State:
        return thermal_state(self.hamiltonian, kT)

    def ground(self) -> State:
        return ground_state(self)


def _two_level(spec: ModelSpec) -> ModelBundle:
    # basis order (|+>, |->); |-> is the ground state
    w = spec.omega
    plus = np.array([[1, 0], [0, 0]])
    h = Operator(w * plus, hermitian=True, label="H")
    obs = {
        "H": h,
        "X": Operator([[0, 1], [1, 0]], hermitian=True, label="X"),
        "Y": Operator([[0, -1j], [1j, 0]], hermitian=True, label="Y"),
        "Z": Operator([[1, 0], [0, -1]], hermitian=True, label="Z"),
    }
    return ModelBundle(spec, h, obs, (2,))


def _mode(n: int) -> dict[str, Operator]:
    a = ladder(n).matrix
    ad = a.conj().T
    return {
        "a": Operator(a, label="a"),
        "N": Operator(ad @ a, hermitian=True, label="N"),
        "X": Operator((a + ad) / np.sqrt(2), hermitian=True, label="X"),
        "P": Operator(1j * (ad - a) / np.sqrt(2), hermitian=True, label="P"),
    }


def _oscillator(spec: ModelSpec) -> ModelBundle:
    m = _mode(spec.truncation)
    h = Operator(spec.omega * m["N"].matrix, hermitian=True, label="H")
    obs = {"H": h, "X": m["X"], "P": m["P"], "N": m["N"]}
    return ModelBundle(spec, h, obs, (spec.truncation,))


def _planar(spec: ModelSpec) -> ModelBundle:
    n = spec.truncation
    m = _mode(n)
    one = np.eye(n)
    a = m["a"].matrix
    ad = a.conj().T
    nn = m["N"].matrix
    x1 = m["X"].matrix
    eps = spec.detuning_epsilon if spec.kind is ModelKind.DETUNED_PLANAR else 0.0
    wx = spec.omega * (1.0 + eps)
    nx = np.kron(nn, one)
    ny = np.kron(one, nn)
    h = Operator(wx * nx + spec.omega * ny, hermitian=True, label="H")
    # a_x a_y^dag = a (x) a^dag on the product space
    lz = 1j * (np.kron(a, ad) - np.kron(ad, a))
    x2 = x1 @ x1

    def herm(mat, label):
        return Operator(mat, hermitian=True, label=label)

    obs = {
        "H": h,
        "X": herm(np.kron(x1, one), "X"),
        "Y": herm(np.kron(one, x1), "Y"),
        "Px": herm(np.kron(m["P"].matrix, one), "Px"),
        "Py": herm(np.kron(one, m["P"].matrix), "Py"),
        "Lz": herm(lz, "Lz"),
        "Nx": herm(nx, "Nx"),
        "Ny": herm(ny, "Ny"),
        "N": herm(nx + ny, "N"),
        "R2": herm(np.kron(x2, one) + np.kron(one, x2), "R2"),
    }
    return ModelBundle(spec, h, obs, (n, n))


_BUILDERS = {
    ModelKind.TWO_LEVEL: _two_level,
    ModelKind.OSCILLATOR: _oscillator,
    ModelKind.PLANAR: _planar,
    ModelKind.DETUNED_PLANAR: _planar,
}


def build(spec: ModelSpec | dict | str, **kwargs) -> ModelBundle:
    """Construct the Hamiltonian and named observables of a model.

    Accepts a :class:`ModelSpec`, its dict form, or a kind name plus keyword
    fields, e.g. ``build("planar", truncation=12)``.
    """
    if isinstance(spec, str):
        spec = ModelSpec(ModelKind(spec), **kwargs)
    elif isinstance(spec, dict):
        spec = ModelSpec.from_dict({**spec, **kwargs})
    return _BUILDERS[spec.kind](spec)


def ground_state(bundle: ModelBundle) -> State:
    """Normalized projector onto the lowest eigenspace of the Hamiltonian."""
    return thermal_state(bundle.hamiltonian, 0.0)


def ground_degeneracy(bundle: ModelBundle) -> int:
    e = spectral_decomposition(bundle.hamiltonian).eigenvalues
    return int(np.sum(e - e[0] <= PROPAGATED_TOL * max(1.0, abs(e[-1]))))


def top_level_population(bundle: ModelBundle, state: State, levels: int = 4) -> float:
    """Population on the highest ``levels`` Fock states of any mode.

    Used as the truncation-adequacy diagnostic: cropped ladder operators are
    only trustworthy where this is negligible.
    """
    if bundle.spec.kind is ModelKind.TWO_LEVEL:
        return 0.0
    p = state.populations()
    dims = bundle.mode_dims
    p = p.reshape(dims)
    worst = 0.0
    for axis, n in enumerate(dims):
        marg = p.sum(axis=tuple(i for i in range(len(dims)) if i != axis))
        worst = max(worst, float(marg[n - levels:].sum()))
    return worst


def low_occupation_indices(bundle: ModelBundle, max_quanta: int) -> np.ndarray:
    """Basis indices with at most ``max_quanta`` quanta in total."""
    if bundle.spec.kind is ModelKind.TWO_LEVEL:
        return np.arange(2)
    grids = np.meshgrid(*[np.arange(n) for n in bundle.mode_dims], indexing="ij")
    total = sum(g.ravel() for g in grids)
    return np.flatnonzero(total <= max_quanta)


def coherent_superposition(bundle: ModelBundle, amplitudes: dict[tuple[int, ...], complex]) -> State:
    """Pure state from Fock amplitudes keyed by occupation tuples."""
    psi = np.zeros(bundle.dim, dtype=complex)
    for occ, c in amplitudes.items():
        psi[np.ravel_multi_index(occ, bundle.mode_dims)] = c
    return State.pure(psi)


def random_low_occupation_state(bundle: ModelBundle, max_quanta: int, rng, rank: int = 2) -> State:
    """Random mixed state supported on low-occupation basis states."""
    idx = low_occupation_indices(bundle, max_quanta)
    g = rng.normal(size=(len(idx), rank)) + 1j * rng.normal(size=(len(idx), rank))
    r = g @ g.conj().T
    rho = np.zeros((bundle.dim, bundle.dim), dtype=complex)
    rho[np.ix_(idx, idx)] = r / np.trace(r)
    return State(rho)
