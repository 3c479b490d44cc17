"""
A point mass at the north pole
==============================

With a Dirac right-hand side the solution has a logarithmic singularity.
The finite element solution still converges in L2, at first order.  The
reference is the Legendre series of the Green's function with the
logarithm summed in closed form.
"""

import numpy as np

from lapbel import LegendreReference, MeasureData, build_icosphere
from lapbel.analysis import ErrorRecord, eoc, lifted_error
from lapbel.solve import GreenProblem
from lapbel.surface import UnitSphere

sphere = UnitSphere()
pole = np.array([0.0, 0.0, 1.0])
ref = LegendreReference(pole, N=2000)

records = []
for level in range(2, 7):
    mesh = build_icosphere(level)
    # node 0 is the north pole on every level, so the atom sits on a node
    u = GreenProblem(sphere, MeasureData(atoms=[(0, 1.0)])).solve(mesh)
    err = lifted_error(mesh, sphere, u, ref, "L2", singular_point=pole)
    records.append(ErrorRecord(level, mesh.h, err_l2=err))
    print(f"level {level}: peak value {u.coefficients[0]:.4f}, L2 error {err:.3e}")

print("EOC", np.round(eoc(records), 3))

# away from the pole the discrete solution follows the series closely
mesh = build_icosphere(6)
u = GreenProblem(sphere, MeasureData(atoms=[(0, 1.0)])).solve(mesh)
far = mesh.vertices[:, 2] < 0.5
print("max deviation below z = 0.5:", np.abs(u.coefficients[far] - ref.value(mesh.vertices[far])).max())
