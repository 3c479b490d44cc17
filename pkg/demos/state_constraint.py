"""
Optimal control with a pointwise state bound
============================================

Drive the state towards y0 = 4 exp(z - 1) with control cost alpha = 0.1
while keeping y <= 2 at every mesh node.  The bound binds on a cap around
the north pole, where the multiplier lives.
"""

import numpy as np

from lapbel import ControlProblem, build_icosphere, solve_pdas_sequence
from lapbel.analysis import ErrorRecord, eoc, lifted_error
from lapbel.oracle import control_reference, fine_mesh_reference
from lapbel.surface import UnitSphere

sphere = UnitSphere()
prob = ControlProblem(sphere, alpha=0.1, y0="4*exp(z - 1)", u0=0.0, bound=2.0)

levels = [2, 3, 4]
meshes = [build_icosphere(l) for l in levels]
# each level starts from the active set of the one below
sols = solve_pdas_sequence(prob, meshes)

for mesh, sol in zip(meshes, sols):
    active = sol.active_set
    cap = mesh.vertices[active, 2].min()
    print(f"level {mesh.level}: {sol.iterations} PDAS steps, {active.sum()} nodes in contact "
          f"(z >= {cap:.3f}), multiplier mass {sol.multipliers.sum():.4f}")
    print("   residuals", {k: f"{v:.1e}" for k, v in sol.residuals.items()})

# no closed form here; compare with the same problem two levels finer
cached = fine_mesh_reference(prob, max(levels) + 2, finest_level=max(levels))
y_ref, _, u_ref = control_reference(cached, prob)
records = [ErrorRecord(m.level, m.h, err_u=lifted_error(m, sphere, s.u, u_ref, "U"),
                       err_h1=lifted_error(m, sphere, s.y, y_ref, "H1"))
           for m, s in zip(meshes, sols)]
print("control EOC", np.round(eoc(records, "U"), 3))
print("state H1 EOC", np.round(eoc(records, "H1"), 3))
