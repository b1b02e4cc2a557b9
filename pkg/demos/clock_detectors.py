"""
Explicit detectors kicked on a clock schedule
==============================================

Each measurement is a von Neumann pointer shifted by g times the coupled
observable. Pointer correlators divided by g^n approach the weak moments with
an O(g^2) residual, and swapping the order of two simultaneous kicks
reproduces the jump.
"""

from weakcons import models, reference
from weakcons.clock import ClockKick, XYKick, rotation_invariant_xy_kick, sequential_clock_run
from weakcons.correlators import at, jump, weak_moment

qubit = models.build("two-level")
rho = qubit.thermal(1.0)
h = qubit.hamiltonian
tau = 0.9
exact = weak_moment([at(qubit["X"], 0.0), at(qubit["H"], 0.3), at(qubit["X"], tau)], rho, h)
for g in (0.04, 0.02, 0.01):
    res = sequential_clock_run(rho, [ClockKick(0.0, qubit["X"], g), ClockKick(0.3, qubit["H"], g),
                                     ClockKick(tau, qubit["X"], g)], h)
    print(f"g = {g:.2f}: <x1 x2 x3>/g^3 = {res.scaled():+.6f}, residual {res.scaled() - exact:+.2e}")

# %%
# Energy kick just before and just after the first X kick, at the same clock time.
g = 0.01
e, x1, x2 = ClockKick(0.0, qubit["H"], g), ClockKick(0.0, qubit["X"], g), ClockKick(tau, qubit["X"], g)
before = sequential_clock_run(rho, [e, x1, x2], h).scaled()
after = sequential_clock_run(rho, [x1, e, x2], h).scaled()
ref = jump(qubit["H"], at(qubit["X"], 0.0), at(qubit["X"], tau), rho, h).jump_value
print(f"order swap {after - before:+.6f}   engine jump {ref:+.6f}")

# %%
# Isotropic two-axis kicks on the planar trap, with an l_z kick in between.
# Reading the x axis of the first detector and the y axis of the last one
# recovers the angular-momentum jump.
planar = models.build("planar", truncation=10)
g = 0.02
res = rotation_invariant_xy_kick(planar.ground(), (0.0, 1.2), g, planar, reads=("x", "y"))
print("single-axis means in the ground state:", res.means)
kicks = [XYKick(0.0, planar["X"], planar["Y"], g, "x"), ClockKick(0.3, planar["Lz"], g),
         XYKick(1.2, planar["X"], planar["Y"], g, "y")]
res = sequential_clock_run(planar.ground(), kicks, planar.hamiltonian)
print(f"<x_D l_D y_D>/g^3 = {res.scaled():+.5f}, sin(w(t2-t3))/4 = {reference.planar_jump(0.0, 1.2):+.5f}")
