"""
From finite-strength trajectories to weak moments
==================================================

Sequential Gaussian measurements at strength g are simulated trajectory by
trajectory. Detector noise is removed from the moments, the residual O(g)
back-action bias is extrapolated away, and the superconserving instrument
removes the jump entirely.
"""

from weakcons import models
from weakcons.correlators import at, jump, weak_moment
from weakcons.measurement import (
    KrausFamily,
    MeasurementConfig,
    deconvolve_moments,
    finite_g_moment,
    jump_estimate,
    richardson,
    run_sequence,
)
from weakcons.operators import Operator

qubit = models.build("two-level")
rho = qubit.thermal(1.0)
h = qubit.hamiltonian
schedule = [at(qubit["X"], 0.0), at(qubit["H"], 0.5), at(qubit["Y"], 1.1)]
exact = weak_moment(schedule, rho, h)
print(f"weak limit {exact:+.5f}")

gs = (0.1, 0.6, 1.0)
values, errors = [], []
for g in gs:
    cfg = MeasurementConfig(g=g, n_trajectories=1_000_000, seed=7, condition_last=True, antithetic=True)
    est = deconvolve_moments(run_sequence(rho, schedule, h, cfg), cfg, (1, 1, 1))
    values.append(est.value)
    errors.append(est.se)
    print(f"g = {g:.2f}: MC {est.value:+.5f} +- {est.se:.5f}, exact finite-g {finite_g_moment(rho, schedule, h, g):+.5f}")

value, se = richardson(gs, values, errors)
print(f"extrapolated {value:+.5f} +- {se:.5f}")

# %%
# Plain versus superconserving instruments on the planar trap, with the
# conserved l_z measured around X^2 and followed by XY. At this strength the
# plain instrument still carries an O(g) bias relative to the weak-limit jump.
planar = models.build("planar", truncation=8)
x2 = Operator(planar["X"] @ planar["X"], hermitian=True)
xy = Operator(planar["X"] @ planar["Y"], hermitian=True)
g = 0.05
weak_jump = jump(planar["Lz"], at(x2, 0.0), at(xy, 0.8), planar.ground(), planar.hamiltonian).jump_value
finite = [finite_g_moment(planar.ground(), s, planar.hamiltonian, g)
          for s in ([at(planar["Lz"], -1e-3), at(x2, 0.0), at(xy, 0.8)],
                    [at(x2, 0.0), at(planar["Lz"], 1e-3), at(xy, 0.8)])]
print(f"weak-limit jump {weak_jump:+.4f}, exact plain jump at g = {g}: {finite[1] - finite[0]:+.4f}")
cfg = MeasurementConfig(g=g, n_trajectories=400_000, seed=3, condition_last=True)
for label, family in (("plain", None), ("superconserving", KrausFamily.superconserving(planar["Lz"]))):
    est = jump_estimate(planar.ground(), planar["Lz"], at(x2, 0.0), at(xy, 0.8), planar.hamiltonian, cfg, family)
    print(f"{label:16s} jump {est.value:+.4f} +- {est.se:.4f}")
