"""
==================================================
Entangled initial states and non-positive dynamics
==================================================

A Bell state and |00><00| as the two admissible initial states. The reference
state has positive conditional mutual information, no CP assignment map
exists, and random search finds a joint unitary whose reduced dynamics sends
a valid state to an operator with a negative eigenvalue.
"""

# %%
import numpy as np

import aml

bell = aml.maximally_entangled(2, ("S", "E")).matrix
pairs = [(np.eye(2) / 2, bell), (np.diag([1.0, 0]), np.diag([1.0, 0, 0, 0]))]
basis = aml.AssignmentBasis.with_canonical_extension(pairs, seed=0)
lam = aml.build_assignment(basis)

report = aml.markovianity_report(aml.build_reference(basis))
print(f"gap = {report.gap:.6f} bits, markov = {report.markov}")

cls = aml.classify_assignment(lam, samples=2000, seed=0)
print(f"assignment verdict: {cls.verdict}, Choi min eigenvalue {cls.choi_min_eig:.4f}")

# %%
# Search for a joint unitary that breaks positivity on the admissible states
# --------------------------------------------------------------------------

out = aml.counterexample_search(lam, trials=500, seed=2024)
w = out.witness
print(f"best output eigenvalue {w.eigenvalue:.4f} at trial {w.trial}")
print("input state:\n", np.round(w.state, 4))

E = aml.reduced_dynamics(lam, w.unitary)
print("output spectrum:", np.round(np.linalg.eigvalsh(E(w.state)), 4))

# %%
# The same map expands some trace distances
# -----------------------------------------

others = [np.eye(2) / 2, np.diag([1.0, 0]), np.diag([0, 1.0])]
for c in aml.contraction_probe(E, [(w.state, o) for o in others]):
    print(f"before {c.before:.4f}  after {c.after:.4f}  contracted {c.contracted}")
