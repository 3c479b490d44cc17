"""
Convergence of the discrete Green operator on the sphere
=========================================================

Solve -Laplace z + z = f on icospheres of increasing level and compare with
the exact solution obtained from the spherical-harmonic expansion of f.
"""

import numpy as np

from lapbel import HarmonicExpansion, SpectralReference, build_icosphere, spectral_green
from lapbel.analysis import ErrorRecord, eoc, lifted_error
from lapbel.solve import GreenProblem
from lapbel.surface import UnitSphere

sphere = UnitSphere()
f = "z + 0.5 + x*y"

# f has degree two, so the exact solution just divides each harmonic
# coefficient by its eigenvalue l(l+1)+1
exact = spectral_green(HarmonicExpansion.from_field(f, 2))
ref = SpectralReference(exact)

problem = GreenProblem(sphere, f)
records = []
for level in range(2, 7):
    mesh = build_icosphere(level)
    z = problem.solve(mesh)
    records.append(ErrorRecord(level, mesh.h, mesh.gamma,
                               err_l2=lifted_error(mesh, sphere, z, ref, "L2"),
                               err_h1=lifted_error(mesh, sphere, z, ref, "H1"),
                               err_linf=lifted_error(mesh, sphere, z, ref, "Linf")))

print(f"{'level':>5} {'h':>9} {'L2':>10} {'H1':>10} {'Linf':>10}")
for r in records:
    print(f"{r.level:5d} {r.h:9.4f} {r.err_l2:10.3e} {r.err_h1:10.3e} {r.err_linf:10.3e}")

# L2 and max-norm errors drop by roughly four per level, the H1 error by two
for norm in ("L2", "H1", "Linf"):
    print(norm, np.round(eoc(records, norm), 3))
