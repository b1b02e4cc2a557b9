"""Cauchy-Schwarz tests of realism on weak fourth-order moments.

For outcomes ``q = q(t1)``, ``x = x(t2)``, ``q' = q(t1')``, ``y = y(t3)`` any
positive joint distribution obeys

    <(q - q')^2> <x^2 y^2>  >= <(q - q')xy>^2
    <(q - q')^2 y^2> <x^2>  >= <(q - q')xy>^2.

For an exactly conserved ``q`` both left-hand sides vanish while the right-hand
side is the squared jump, so the weak quasiprobability violates both.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .correlators import ScheduledObservable, jump, weak_moment
from .measurement import MeasurementConfig, deconvolution_weights, run_sequence
from .models import ModelBundle, ModelKind, ModelSpec, build
from .operators import Operator, State

EXACT_TOL = 1e-10
DEFAULT_TIMES = (-2.0, 0.0, 1.0, np.pi / 2)

# (q, x, q', y) powers for every moment entering the inequalities
_TERMS = {
    "dq2": [(1.0, (2, 0, 0, 0)), (-2.0, (1, 0, 1, 0)), (1.0, (0, 0, 2, 0))],
    "x2y2": [(1.0, (0, 2, 0, 2))],
    "dq2y2": [(1.0, (2, 0, 0, 2)), (-2.0, (1, 0, 1, 2)), (1.0, (0, 0, 2, 2))],
    "x2": [(1.0, (0, 2, 0, 0))],
    "dqxy": [(1.0, (1, 1, 0, 1)), (-1.0, (0, 1, 1, 1))],
    "y2": [(1.0, (0, 0, 0, 2))],
}


@dataclass(frozen=True, eq=False)
class LGScenario:
    """Model, observables, times ``(t1, t2, t1', t3)`` and state.

    ``state`` may be a :class:`State`, a temperature ``kT`` for a thermal
    state of the model, or ``None`` for the ground state. ``q_lambda`` mixes
    ``lambda * X`` into ``q`` to model an imprecisely measured quantity.
    """

    model: ModelSpec
    q_observable: str = "Lz"
    times: tuple[float, float, float, float] = DEFAULT_TIMES
    state: State | float | None = None
    x_observable: str = "X"
    y_observable: str = "Y"
    q_lambda: float = 0.0

    def __post_init__(self):
        if isinstance(self.model, dict):
            object.__setattr__(self, "model", ModelSpec.from_dict(self.model))
        t = tuple(float(v) for v in self.times)
        if len(t) != 4 or not (t[0] < t[1] < t[2] < t[3]):
            raise ValueError(f"times must satisfy t1 < t2 < t1' < t3, got {t}")
        object.__setattr__(self, "times", t)

    def bundle(self) -> ModelBundle:
        return build(self.model)

    def resolve_state(self, bundle: ModelBundle) -> State:
        if self.state is None:
            return bundle.ground()
        if isinstance(self.state, State):
            return self.state
        return bundle.thermal(float(self.state))

    def q_operator(self, bundle: ModelBundle) -> Operator:
        q = bundle[self.q_observable]
        if self.q_lambda:
            q = Operator(q.matrix + self.q_lambda * bundle[self.x_observable].matrix,
                         hermitian=True, label=f"{q.label}+lX")
        return q

    def schedule(self, bundle: ModelBundle, powers=(1, 1, 1, 1)) -> list[ScheduledObservable]:
        q = self.q_operator(bundle)
        obs = (q, bundle[self.x_observable], q, bundle[self.y_observable])
        return [ScheduledObservable(t, o, p) for t, o, p in zip(self.times, obs, powers) if p]

    def with_epsilon(self, epsilon: float) -> "LGScenario":
        kind = ModelKind.DETUNED_PLANAR if epsilon else self.model.kind
        return replace(self, model=replace(self.model, kind=kind, detuning_epsilon=epsilon))


@dataclass(frozen=True)
class LGReport:
    lhs1: float
    lhs2: float
    rhs: float
    violated1: bool
    violated2: bool
    margin1: float
    margin2: float
    moments: dict = field(default_factory=dict)
    tolerance: float = EXACT_TOL
    se: dict | None = None

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in
             ("lhs1", "lhs2", "rhs", "violated1", "violated2", "margin1", "margin2", "tolerance")}
        d["moments"] = dict(self.moments)
        if self.se is not None:
            d["se"] = dict(self.se)
        return d


def _report(m: dict, tol1: float, tol2: float, se: dict | None = None, tol: float = EXACT_TOL) -> LGReport:
    lhs1 = m["dq2"] * m["x2y2"]
    lhs2 = m["dq2y2"] * m["x2"]
    rhs = m["dqxy"] ** 2
    return LGReport(
        lhs1=float(lhs1), lhs2=float(lhs2), rhs=float(rhs),
        violated1=bool(rhs - lhs1 > tol1), violated2=bool(rhs - lhs2 > tol2),
        margin1=float(rhs - lhs1), margin2=float(rhs - lhs2),
        moments={k: float(v) for k, v in m.items()}, tolerance=tol, se=se,
    )


def exact_moments(scenario: LGScenario, bundle: ModelBundle | None = None) -> dict:
    """All moments entering the inequalities, from the weak-moment engine."""
    bundle = bundle or scenario.bundle()
    state = scenario.resolve_state(bundle)
    h = bundle.hamiltonian
    cache: dict = {}

    def mom(powers):
        if powers not in cache:
            cache[powers] = weak_moment(scenario.schedule(bundle, powers), state, h)
        return cache[powers]

    return {name: sum(c * mom(p) for c, p in terms) for name, terms in _TERMS.items()}


def evaluate_lg(scenario: LGScenario, tol: float = EXACT_TOL) -> LGReport:
    """Exact evaluation of both inequalities.

    ``margin_i = rhs - lhs_i``; a violation is reported when the margin
    exceeds ``tol``.
    """
    return _report(exact_moments(scenario), tol, tol, tol=tol)


def conserved_jump(scenario: LGScenario) -> float:
    """Jump of ``q`` across ``x`` for the scenario, from the correlator engine."""
    bundle = scenario.bundle()
    t1, t2, t1p, t3 = scenario.times
    rep = jump(scenario.q_operator(bundle), ScheduledObservable(t2, bundle[scenario.x_observable]),
               ScheduledObservable(t3, bundle[scenario.y_observable]),
               scenario.resolve_state(bundle), bundle.hamiltonian)
    return rep.jump_value


def epsilon_sweep(scenario: LGScenario, epsilons) -> list[LGReport]:
    return [evaluate_lg(scenario.with_epsilon(float(e))) for e in epsilons]


def threshold_epsilon(scenario: LGScenario, upper: float = 0.45, xtol: float = 1e-6,
                      which: str = "both") -> float:
    """Smallest detuning where the chosen violation disappears (bisection).

    ``which`` is ``"1"``, ``"2"`` or ``"both"`` (the first inequality to stop
    being violated). Returns ``inf`` if the violation persists up to ``upper``.
    """

    def margin(eps):
        r = evaluate_lg(scenario.with_epsilon(eps))
        if which == "1":
            return r.margin1
        if which == "2":
            return r.margin2
        return min(r.margin1, r.margin2)

    lo, hi = 0.0, upper
    if margin(lo) <= EXACT_TOL:
        return 0.0
    if margin(hi) > EXACT_TOL:
        return float("inf")
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if margin(mid) > EXACT_TOL:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def lg_monte_carlo(scenario: LGScenario, cfg: MeasurementConfig, target_se: float | None = None) -> LGReport:
    """Trajectory estimate of the inequalities with delta-method errors.

    All four outcomes are recorded with strength ``cfg.g`` in one run; every
    moment is a deconvolved linear combination of the same per-block monomial
    sums, so their covariance is estimated jointly from block means.
    Violations are declared when a margin exceeds three standard errors.
    """
    if not cfg.deconvolve:
        raise ValueError("lg_monte_carlo requires deconvolve=True")
    bundle = scenario.bundle()
    state = scenario.resolve_state(bundle)
    batch = run_sequence(state, scenario.schedule(bundle), bundle.hamiltonian, cfg)
    names = list(_TERMS)
    blocks = np.stack([
        batch._block_means(sum(c * deconvolution_weights(p, cfg.noise_variance, batch.max_power)
                               for c, p in _TERMS[n]))
        for n in names
    ], axis=1)
    wts = batch.block_counts / batch.block_counts.sum()
    mu = wts @ blocks
    dev = blocks - mu
    cov = (dev * wts[:, None]).T @ dev / (len(wts) - 1)
    m = dict(zip(names, mu))
    i = {n: k for k, n in enumerate(names)}

    def se_of(grad: dict) -> float:
        g = np.zeros(len(names))
        for n, v in grad.items():
            g[i[n]] += v
        return float(np.sqrt(max(g @ cov @ g, 0.0)))

    grads = {
        "lhs1": {"dq2": m["x2y2"], "x2y2": m["dq2"]},
        "lhs2": {"dq2y2": m["x2"], "x2": m["dq2y2"]},
        "rhs": {"dqxy": 2 * m["dqxy"]},
        "margin1": {"dqxy": 2 * m["dqxy"], "dq2": -m["x2y2"], "x2y2": -m["dq2"]},
        "margin2": {"dqxy": 2 * m["dqxy"], "dq2y2": -m["x2"], "x2": -m["dq2y2"]},
    }
    se = {k: se_of(v) for k, v in grads.items()}
    se.update({f"moment_{n}": float(np.sqrt(cov[i[n], i[n]])) for n in names})
    if target_se is not None and se["rhs"] > target_se:
        warnings.warn(f"achieved rhs standard error {se['rhs']:.3g} exceeds target {target_se:.3g}; "
                      "increase n_trajectories", RuntimeWarning, stacklevel=2)
    return _report(m, 3 * se["margin1"], 3 * se["margin2"], se=se, tol=float("nan"))
