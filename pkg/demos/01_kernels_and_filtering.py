"""Build the regulated-promoter model and project it onto what an observer sees.

The full model is a four-state Markov jump process.  Watching only the
observable transitions (output arrivals, switch-on, switch-off) yields a
three-state Markov renewal process whose kernel we obtain exactly in the
Laplace domain; watching output arrivals alone yields a renewal process whose
inter-arrival density is a three-exponential mixture.
"""

import numpy as np

from mrpchan import build_gene_model

model = build_gene_model()
params = model.params
print("kinetics:", params)

print("\nFull kernel states:", model.full[0].states)
print("embedded chain:")
print(np.array_str(model.full[0].embedded_matrix, precision=4, suppress_small=True))

joint = model.joint_kernel[0]
print("\nFiltered joint marginal on", joint.states)
print("embedded chain of the marginal:")
print(np.array_str(joint.embedded_matrix, precision=4, suppress_small=True))
print("note the identical J and ON rows: an arrival leaves the promoter on")

for level in (0, 1):
    f_tau = model.f_tau[level]
    print(f"\n[R] = {params.concentration(level):g}:")
    print("  inter-arrival terms (coeff, power, rate):")
    for c, m, r in f_tau.terms:
        print(f"    {c.real:+.6f}  t^{m}  exp(-{r.real:.6f} t)")
    print(f"  mass = {f_tau.total_mass():.12f}, mean = {f_tau.mean():.4f} s")

ts = np.array([5.0, 20.0, 60.0, 150.0])
print("\ndensity values at", ts, "s:")
for level in (0, 1):
    print(f"  [R]={params.concentration(level):>4g}:", np.round(model.f_tau[level].eval(ts), 6))
