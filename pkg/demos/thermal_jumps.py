"""
Jumps of conserved quantities in three benchmark systems
=========================================================

A conserved quantity measured weakly just before or just after a
non-commuting observable gives different third-order correlators. This
script tabulates that jump against temperature and compares it with the
thermal mean energy.
"""

import numpy as np

from weakcons import models, reference
from weakcons.correlators import at, jump, moment

# two-level system, energy measured around x(0), followed by x(tau)
qubit = models.build("two-level")
tau = 0.0
print("kT      jump      tanh form   <E>")
for kT in (0.1, 0.25, 0.5, 1.0, 2.0, 5.0):
    rho = qubit.thermal(kT)
    rep = jump(qubit["H"], at(qubit["X"], 0.0), at(qubit["X"], 2 * np.pi), rho, qubit.hamiltonian)
    print(f"{kT:<6.2f} {rep.jump_value:9.6f} {reference.two_level_jump(kT, tau):11.6f} "
          f"{reference.two_level_mean_energy(kT):8.5f}")

# The jump fades at high temperature while the mean energy saturates.

# %%
# Harmonic oscillator: the double commutator is a c-number, so the jump is the
# same for every state.
osc = models.build("oscillator", truncation=40)
rng = np.random.default_rng(1)
states = {"ground": osc.ground(), "kT=1": osc.thermal(1.0),
          "random": models.random_low_occupation_state(osc, 4, rng)}
for name, rho in states.items():
    vals = [jump(osc["H"], at(osc["X"], 0.0), at(osc["X"], t), rho, osc.hamiltonian).jump_value
            for t in (0.5, 1.5)]
    print(f"oscillator {name:7s} jump(t=0.5) = {vals[0]:+.6f}  jump(t=1.5) = {vals[1]:+.6f}")

# %%
# Planar trap: the step of <l_z(t1) x(t2) y(t3)> as t1 moves past x(t2).
planar = models.build("planar", truncation=10)
t2, t3 = 0.3, 1.2
for t1 in (-0.5, 0.2, 0.5, 1.0, 1.5):
    val = moment(planar.ground(), planar.hamiltonian, at(planar["Lz"], t1), at(planar["X"], t2),
                 at(planar["Y"], t3))
    print(f"t1 = {t1:+.1f}  <l_z x y> = {val:+.6f}")
print(f"expected plateau sin(w(t2-t3))/4 = {reference.planar_jump(t2, t3):+.6f}")
