"""Two representations of a leaky promoter, checked against each other.

The output rate only depends on the promoter state, so its expected
phi-functional has a closed form through the two-state matrix exponential.
The finite marked-point-process representation with mirrored jump states
reproduces it through the renewal machinery, term for term.
"""

import numpy as np

from mrpchan import build_leakage_model, phi_evolution
from mrpchan.limits import interarrival_density

model = build_leakage_model()
print("states:", model.kernel.states)
print("output rate by state:", model.intensity_levels())

curve = phi_evolution(model.kernel, {"1": 1.0}, T=100.0, h=0.05, states=["J1", "Jr"])
total = curve.values["J1"] + curve.values["Jr"]
oracle = model.ctmc_phi_oracle(curve.t, p_on0=1.0)
print(f"\nmax |renewal route - matrix exponential| on [0, 100]: {np.max(np.abs(total - oracle)):.2e}")

pi_r, pi_1 = model.ctmc_stationary()
print(f"stationary promoter occupation: off {pi_r:.3f}, on {pi_1:.3f}")
p = model.params
lo, hi = p.k_J * p.r, p.k_J
print(f"stationary E[phi(rate)] = {pi_r*lo*np.log(lo) + pi_1*hi*np.log(hi):.6f}")
print(f"curve value at t = 100:  {total[-1]:.6f}")

# the output inter-arrival density exists in closed form here too
f_tau = interarrival_density(model.kernel, "J1")
print(f"\nJ1-to-J1 inter-arrival mean: {f_tau.mean():.3f} s (mass {f_tau.total_mass():.6f})")
