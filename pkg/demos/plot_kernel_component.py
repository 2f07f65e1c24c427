"""
=====================================================
Admissible sets with a nontrivial partial-trace kernel
=====================================================

When two admissible joint states share a marginal, the span V contains a
direction that Tr_E annihilates. Only unitaries that keep that direction
inside ker Tr_E are compatible with a well-defined reduced map.
"""

# %%
import numpy as np

import aml
from aml.scenario import load_preset, run_pipeline

rho = np.diag([0.8, 0.2])
s1, s2 = np.eye(2) / 2, np.diag([0.2, 0.8])
V = aml.OperatorSubspace.span([np.kron(rho, s1), np.kron(rho, s2)], [("S", 2), ("E", 2)])
V_hat, V0 = aml.kernel_component(V)
print("dim V =", V.dim, " dim V_hat =", V_hat.dim, " dim V0 =", V0.dim)
print("V0 element:\n", np.round(V0.operators()[0].matrix.real, 4))

# %%
# SWAP moves the kernel direction onto the system
# -----------------------------------------------

swap = np.eye(4)[[0, 2, 1, 3]]
print("SWAP:", aml.u_consistency_check(swap, V0))
ue = aml.haar_unitary(2, seed=7).matrix
print("I (x) U_E:", aml.u_consistency_check(np.kron(np.eye(2), ue), V0))

# %%
# The bundled scenario filters search unitaries the same way
# ----------------------------------------------------------

report = run_pipeline(load_preset("generalized_v"))
s = report.search
print(f"ranks {report.ranks}; search accepted {s['accepted']}, rejected {s['rejected']}, "
      f"witness found: {s['witness_found']}")
