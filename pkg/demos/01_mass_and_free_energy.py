"""Mass conservation and free-energy decay along a subcritical run.

The density obeys a conservative flux-form update, so the total mass is
constant to floating-point roundoff no matter how long the run is.  The
free energy F = entropy - interaction acts as a Lyapunov functional: it
decreases monotonically, and the rate matches the measured dissipation
up to discretization error.
"""

import math

import collapse_lab as cl
from collapse_lab.diagnostics import energy_trend_check, free_energy
from collapse_lab.stepper import StepperConfig, initial_state, step

spec = cl.GridSpec("square", 48, 1.0)
state = initial_state(spec, cl.GaussianProfile((0.5, 0.5), 0.1, 4.0), "dirichlet")
cfg = StepperConfig()

m0 = cl.total_mass(state.field)
records = [free_energy(state)]
print(f"initial mass = {m0:.15f},  F = {records[0].free_energy:+.6f}")
print(f"{'step':>5} {'t':>10} {'mass drift':>12} {'F':>12} {'D':>12}")
for k in range(1, 301):
    state = step(state, cfg)
    records.append(free_energy(state))
    if k % 50 == 0:
        rec = records[-1]
        drift = abs(rec.mass - m0) / m0
        print(f"{k:5d} {state.t:10.6f} {drift:12.2e} {rec.free_energy:12.6f} {rec.dissipation:12.4f}")

verdict = energy_trend_check(records)
print(f"\nmonotonicity violations: {len(verdict.violations)}")
print(f"dissipation identity defect max |dF/dt + D| = {verdict.max_defect:.3f}")
print(f"(compare with |dF/dt| ~ {abs(records[-1].free_energy - records[0].free_energy) / state.t:.1f})")
