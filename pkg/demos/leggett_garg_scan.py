"""
Cauchy-Schwarz tests with a conserved angular momentum
=======================================================

For an exactly conserved l_z the left-hand sides vanish while the right-hand
side is the squared jump. Detuning the trap breaks conservation; in a thermal
state the violation eventually disappears.
"""

import numpy as np

from weakcons.leggett_garg import LGScenario, epsilon_sweep, evaluate_lg, threshold_epsilon
from weakcons.models import ModelSpec

report = evaluate_lg(LGScenario(ModelSpec("planar", truncation=12)))
print(f"ground state: lhs1 = {report.lhs1:.1e}, lhs2 = {report.lhs2:.1e}, rhs = {report.rhs:.6f}")

scenario = LGScenario(ModelSpec("planar", truncation=16), state=0.5)
print("epsilon  margin1    margin2")
for eps, r in zip(np.linspace(0, 0.3, 7), epsilon_sweep(scenario, np.linspace(0, 0.3, 7))):
    print(f"{eps:6.2f} {r.margin1:+.6f} {r.margin2:+.6f}")
print(f"violation ends at epsilon* = {threshold_epsilon(scenario, xtol=1e-5):.5f}")
