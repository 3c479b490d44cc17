"""Sparse solvers and the discrete Green operator.

``green_solve`` maps a load vector to the P1 solution of
``a_h(z_h, phi) = load(phi)``.  The iterative path is Jacobi-preconditioned
conjugate gradients; the direct path is a sparse Cholesky factorisation
(CHOLMOD through cvxopt).  Indefinite systems from the control module are
factorised with UMFPACK.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from cvxopt import cholmod, matrix, spmatrix, umfpack

from .errors import NoConvergence, SingularMatrix
from .fem import (FeFunction, MeasureData, assemble_load_l2, assemble_load_measure,
                  assemble_operator)
from .fields import as_field

CG = "cg"
DIRECT = "direct"
RESTARTS = 5


@dataclass(frozen=True)
class SolverConfig:
    rel_tolerance: float = 1e-10
    max_iterations: int | None = None
    method: str = CG

    def __post_init__(self):
        if not 0 < self.rel_tolerance <= 1e-4:
            raise ValueError(f"rel_tolerance must lie in (0, 1e-4], got {self.rel_tolerance}")
        if self.method not in (CG, DIRECT):
            raise ValueError(f"unknown solver method {self.method!r}")

    def iterations_for(self, dim: int) -> int:
        if self.max_iterations is None:
            return max(dim, 1000)
        if self.method == CG and self.max_iterations < dim:
            raise ValueError(f"max_iterations={self.max_iterations} below dimension {dim}")
        return self.max_iterations


def _to_cvxopt(a, lower=False):
    a = sp.coo_matrix(a)
    if lower:
        keep = a.row >= a.col
        data, row, col = a.data[keep], a.row[keep], a.col[keep]
    else:
        data, row, col = a.data, a.row, a.col
    return spmatrix(matrix(np.ascontiguousarray(data, dtype=float)),
                    matrix(np.ascontiguousarray(row, dtype=np.int64)),
                    matrix(np.ascontiguousarray(col, dtype=np.int64)),
                    a.shape, tc="d")


class CholeskyFactor:
    """Sparse Cholesky factor of an SPD matrix."""

    def __init__(self, a):
        self.shape = a.shape
        self._a = _to_cvxopt(a, lower=True)
        try:
            self._f = cholmod.symbolic(self._a)
            cholmod.numeric(self._a, self._f)
        except ArithmeticError as exc:
            raise SingularMatrix(f"Cholesky factorisation failed: {exc}") from exc

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        x = matrix(np.array(b.reshape(self.shape[0], -1), order="F"))
        cholmod.solve(self._f, x)
        out = np.array(x)
        return out.reshape(b.shape)


class LUFactor:
    """Sparse LU factor of a general square matrix (UMFPACK)."""

    def __init__(self, a):
        self.shape = a.shape
        self._a = _to_cvxopt(a)
        try:
            symbolic = umfpack.symbolic(self._a)
            self._f = umfpack.numeric(self._a, symbolic)
        except ArithmeticError as exc:
            raise SingularMatrix(f"LU factorisation failed: {exc}") from exc

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        x = matrix(np.array(b.reshape(self.shape[0], -1), order="F"))
        umfpack.solve(self._a, self._f, x)
        return np.array(x).reshape(b.shape)


def conjugate_gradient(a, b, rel_tolerance=1e-10, max_iterations=None, x0=None):
    """Jacobi-preconditioned CG; returns the solution and the iteration count."""
    n = a.shape[0]
    maxiter = max(n, 1000) if max_iterations is None else max_iterations
    d = a.diagonal()
    if np.any(d <= 0):
        raise SingularMatrix("non-positive diagonal entry; matrix is not SPD")
    precond = sla.LinearOperator(a.shape, matvec=lambda r: r / d, dtype=float)
    count = [0]

    def _count(_):
        count[0] += 1

    x, info = sla.cg(a, b, x0=x0, rtol=rel_tolerance, atol=0.0, maxiter=maxiter,
                     M=precond, callback=_count)
    if info != 0:
        raise NoConvergence(f"CG did not reach rtol={rel_tolerance} in {maxiter} iterations")
    return x, count[0]


def roundoff_floor(a, z) -> float:
    """Residual norm attainable in double precision, ``32 eps || |A| |z| ||``."""
    return 32.0 * np.finfo(float).eps * float(np.linalg.norm(abs(a) @ np.abs(z)))


def green_solve(a, load, cfg: SolverConfig = SolverConfig(), mesh=None, factor=None):
    """Solve ``A z = load``.

    The iterative path guarantees ``|A z - load| <= rel_tolerance |load|``
    unless that lies below the round-off floor, see :func:`roundoff_floor`.
    Returns a :class:`FeFunction` when ``mesh`` is given, the coefficient
    vector otherwise.  A precomputed ``factor`` short-circuits the direct path.
    """
    load = np.asarray(load, dtype=float)
    if load.shape[0] != a.shape[0]:
        raise ValueError(f"load has length {load.shape[0]}, matrix is {a.shape}")
    if not np.any(load):
        z = np.zeros_like(load)
    elif cfg.method == DIRECT or factor is not None:
        z = (factor or CholeskyFactor(a)).solve(load)
    else:
        target = cfg.rel_tolerance * np.linalg.norm(load)
        floor = None
        maxiter = cfg.iterations_for(a.shape[0])
        z, used = conjugate_gradient(a, load, cfg.rel_tolerance, maxiter)
        # the recursive CG residual drifts from the true one; restart on it
        for _ in range(RESTARTS):
            res = np.linalg.norm(a @ z - load)
            if res <= target:
                break
            if floor is None:
                floor = roundoff_floor(a, z)
            if res <= floor:
                break
            dz, more = conjugate_gradient(a, load - a @ z, min(1e-4, 0.5 * target / res),
                                          maxiter)
            z = z + dz
            used += more
        else:
            res = np.linalg.norm(a @ z - load)
        if res > target and res > (floor or 0.0):
            raise NoConvergence(f"CG residual {res:.3e} above tolerance {target:.3e}")
    return FeFunction(mesh, z) if mesh is not None else z


def green_adjoint_check(a, f, g, cfg: SolverConfig = SolverConfig(), mass=None) -> float:
    """``|<G f, g>_M - <f, G g>_M|`` with ``G f = A^{-1} M f``.

    ``f`` and ``g`` are nodal coefficient vectors; ``mass`` defaults to the
    identity.
    """
    mass = sp.identity(a.shape[0], format="csr") if mass is None else mass
    mf, mg = mass @ f, mass @ g
    gf = green_solve(a, mf, cfg)
    gg = gf if g is f else green_solve(a, mg, cfg)
    return abs(float(np.dot(gf, mg)) - float(np.dot(mf, gg)))


class GreenProblem:
    """``-Laplace z + z = data`` on ``desc``.

    ``data`` is a field, or a :class:`MeasureData` for point masses.  A
    ``singular_point`` makes the load integrate triangles touching that node
    with a graded rule.
    """

    def __init__(self, desc, data, singular_point=None):
        self.desc = desc
        self.data = data if isinstance(data, MeasureData) else as_field(data)
        self.singular_point = None if singular_point is None else np.asarray(singular_point, float)

    def key(self):
        if isinstance(self.data, MeasureData):
            density = self.data.density
            if density is not None and as_field(density).key is None:
                return None
            dkey = f"measure({None if density is None else as_field(density).key},{self.data.atoms!r})"
        else:
            if self.data.key is None:
                return None
            dkey = self.data.key
        sp_key = None if self.singular_point is None else self.singular_point.tolist()
        return f"green|{self.desc!r}|{dkey}|singular={sp_key}"

    def load(self, mesh):
        if isinstance(self.data, MeasureData):
            return assemble_load_measure(mesh, self.data, self.desc)
        return assemble_load_l2(mesh, self.desc, self.data, singular_point=self.singular_point)

    def solve(self, mesh, cfg: SolverConfig = SolverConfig()) -> FeFunction:
        return green_solve(assemble_operator(mesh), self.load(mesh), cfg, mesh=mesh)
