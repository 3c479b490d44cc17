"""Piecewise linear finite elements on flat-triangle surfaces.

Stiffness and mass matrices are assembled exactly.  Integrals of lifted data
use a fixed symmetric quadrature rule with the integrand evaluated at
``closest_point`` of each quadrature point.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvalidAtomNode
from .fields import as_field
from .mesh import SurfaceMesh


@dataclass(frozen=True)
class TriangleRule:
    """Quadrature on the reference triangle in barycentric coordinates.

    Weights sum to one, so physical weights are ``area * weights``.
    """

    bary: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def n_points(self) -> int:
        return self.weights.shape[0]


def _strang_fix_6():
    a1, b1, w1 = 0.445948490915965, 0.108103018168070, 0.223381589678011
    a2, b2, w2 = 0.091576213509771, 0.816847572980459, 0.109951743655322
    bary = np.array([
        [b1, a1, a1], [a1, b1, a1], [a1, a1, b1],
        [b2, a2, a2], [a2, b2, a2], [a2, a2, b2],
    ])
    w = np.array([w1] * 3 + [w2] * 3)
    # renormalise the published 15-digit weights
    return TriangleRule(bary / bary.sum(axis=1)[:, None], w / w.sum(), 4)


DEGREE4 = _strang_fix_6()


def collapsed_gauss_rule(degree: int) -> TriangleRule:
    """Conical product Gauss rule exact for polynomials of the given degree.

    The square ``[0, 1]^2`` is collapsed onto the triangle; the Jacobian of
    the collapse is linear, hence ``n = degree // 2 + 1`` points per
    direction.
    """
    n = degree // 2 + 1
    x, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * w
    S, T = np.meshgrid(s, s, indexing="ij")
    WS, WT = np.meshgrid(ws, ws, indexing="ij")
    l1 = S.ravel()
    l2 = ((1.0 - S) * T).ravel()
    weights = (WS * WT).ravel() * (1.0 - S.ravel()) * 2.0
    bary = np.stack([1.0 - l1 - l2, l1, l2], axis=1)
    return TriangleRule(bary, weights / weights.sum(), degree)


def triangle_rule(degree: int) -> TriangleRule:
    if degree <= 4:
        return DEGREE4
    return collapsed_gauss_rule(degree)


def graded_rule(base: TriangleRule = DEGREE4, depth: int = 24) -> TriangleRule:
    """Composite rule geometrically refined towards barycentric vertex 0.

    Each step splits the current corner triangle into four and applies
    ``base`` to the three sub-triangles away from the vertex.  Used for data
    with an integrable point singularity at a mesh node.
    """
    pts, wts = [], []
    scale = 1.0
    for _ in range(depth):
        half = 0.5 * scale
        # corners of the current corner triangle, in barycentric coordinates
        c0 = np.array([1.0, 0.0, 0.0])
        c1 = np.array([1.0 - scale, scale, 0.0])
        c2 = np.array([1.0 - scale, 0.0, scale])
        m01, m02, m12 = 0.5 * (c0 + c1), 0.5 * (c0 + c2), 0.5 * (c1 + c2)
        for tri in ((m01, c1, m12), (m02, m12, c2), (m01, m12, m02)):
            corners = np.stack(tri)
            pts.append(base.bary @ corners)
            wts.append(base.weights * (half ** 2))
        scale = half
    # innermost corner with the base rule; its points avoid the vertex itself
    corners = np.stack([np.array([1.0, 0.0, 0.0]),
                        np.array([1.0 - scale, scale, 0.0]),
                        np.array([1.0 - scale, 0.0, scale])])
    pts.append(base.bary @ corners)
    wts.append(base.weights * scale ** 2)
    bary = np.concatenate(pts)
    w = np.concatenate(wts)
    return TriangleRule(bary, w / w.sum(), base.degree)


@dataclass(eq=False)
class FeFunction:
    """Element of the P1 space on ``mesh`` stored by nodal values."""

    mesh: SurfaceMesh
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.mesh.n_vertices,):
            raise ValueError(f"expected {self.mesh.n_vertices} coefficients, "
                             f"got shape {self.coefficients.shape}")

    @property
    def mesh_id(self) -> int:
        return self.mesh.mesh_id

    def at_bary(self, bary, tri_index=None):
        """Values at barycentric points.

        ``bary`` of shape ``(q, 3)`` is applied to every triangle and gives
        ``(m, q)``; shape ``(k, 3)`` with ``tri_index`` of length ``k`` gives
        one value per point.
        """
        c = self.coefficients[self.mesh.triangles]
        if tri_index is None:
            return c @ np.asarray(bary).T
        return np.einsum("kj,kj->k", c[tri_index], bary)

    def gradients(self):
        """Constant tangential gradient on each flat triangle, ``(m, 3)``."""
        g = p1_gradients(self.mesh)
        return np.einsum("mi,mid->md", self.coefficients[self.mesh.triangles], g)

    def __add__(self, other):
        return FeFunction(self.mesh, self.coefficients + _coeffs(other))

    def __sub__(self, other):
        return FeFunction(self.mesh, self.coefficients - _coeffs(other))

    def __mul__(self, s):
        return FeFunction(self.mesh, self.coefficients * float(s))

    __rmul__ = __mul__


def _coeffs(other):
    return other.coefficients if isinstance(other, FeFunction) else other


@dataclass
class MeasureData:
    """Right-hand side made of an L2 density and node-anchored point masses."""

    density: object = None
    atoms: list = field(default_factory=list)

    def total_variation(self, mesh=None, desc=None) -> float:
        tv = float(sum(abs(w) for _, w in self.atoms))
        if self.density is not None:
            tv += integrate(mesh, desc, lambda p: np.abs(as_field(self.density)(p)))
        return tv


def p1_gradients(mesh: SurfaceMesh):
    """Gradients of the three barycentric basis functions on each triangle.

    Shape ``(m, 3, 3)``: triangle, local basis function, component.
    """
    c = mesh.corners
    e = np.stack([c[:, 2] - c[:, 1], c[:, 0] - c[:, 2], c[:, 1] - c[:, 0]], axis=1)
    n = mesh.unit_normals
    return np.cross(n[:, None, :], e) / (2.0 * mesh.areas[:, None, None])


def _scatter(mesh, local):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    a = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    a.sum_duplicates()
    # average with the transpose so that symmetry holds bit for bit
    return ((a + a.T) * 0.5).tocsr()


def assemble_stiffness(mesh: SurfaceMesh):
    c = mesh.corners
    e = np.stack([c[:, 2] - c[:, 1], c[:, 0] - c[:, 2], c[:, 1] - c[:, 0]], axis=1)
    local = np.einsum("mid,mjd->mij", e, e) / (4.0 * mesh.areas[:, None, None])
    return _scatter(mesh, local)


_LOCAL_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


def assemble_mass(mesh: SurfaceMesh, lumped: bool = False):
    if lumped:
        # row sums of the consistent matrix: area / 3 per incident triangle
        d = np.bincount(mesh.triangles.ravel(), weights=np.repeat(mesh.areas / 3.0, 3),
                        minlength=mesh.n_vertices)
        return sp.diags(d).tocsr()
    local = mesh.areas[:, None, None] * _LOCAL_MASS[None]
    return _scatter(mesh, local)


def assemble_operator(mesh: SurfaceMesh):
    """Matrix of ``a_h(u, v) = int grad u . grad v + u v`` over ``S_h``."""
    return (assemble_stiffness(mesh) + assemble_mass(mesh)).tocsr()


def quadrature_points(mesh: SurfaceMesh, rule: TriangleRule = DEGREE4):
    """Physical quadrature points ``(m, q, 3)`` and weights ``(m, q)``."""
    pts = np.einsum("qj,mjd->mqd", rule.bary, mesh.corners)
    w = mesh.areas[:, None] * rule.weights[None, :]
    return pts, w


def singular_triangles(mesh: SurfaceMesh, point, tol: float = 1e-12):
    """Triangles having ``point`` as a corner, with the local corner index."""
    node = np.flatnonzero(np.linalg.norm(mesh.vertices - np.asarray(point), axis=1) < tol)
    if node.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    tri, local = np.nonzero(mesh.triangles == node[0])
    return tri, local


def _rotate_to_corner(rule: TriangleRule, k: int) -> np.ndarray:
    # graded_rule refines towards barycentric corner 0; move that to corner k
    perm = np.roll(np.arange(3), -k)
    out = np.empty_like(rule.bary)
    out[:, perm] = rule.bary
    return out


def lifted_values(mesh, desc, f, pts):
    flat = pts.reshape(-1, 3)
    vals = as_field(f)(desc.project(flat))
    return vals.reshape(pts.shape[:-1])


def assemble_load_l2(mesh: SurfaceMesh, desc, f, rule: TriangleRule = DEGREE4,
                     singular_point=None):
    """Load vector ``int_{S_h} f_lift * phi_i``.

    With ``singular_point`` set to a node, triangles touching that node are
    integrated with a rule graded towards it.
    """
    pts, w = quadrature_points(mesh, rule)
    vals = lifted_values(mesh, desc, f, pts)
    local = np.einsum("mq,qj->mj", vals * w, rule.bary)
    if singular_point is not None:
        tri, corner = singular_triangles(mesh, singular_point)
        if tri.size:
            g = graded_rule(rule)
            for t, k in zip(tri, corner):
                bary = _rotate_to_corner(g, k)
                p = bary @ mesh.corners[t]
                v = lifted_values(mesh, desc, f, p[None])[0]
                local[t] = (v * g.weights * mesh.areas[t]) @ bary
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(),
                       minlength=mesh.n_vertices)


def assemble_load_measure(mesh: SurfaceMesh, mu: MeasureData, desc=None,
                          rule: TriangleRule = DEGREE4):
    """Load vector ``int_{S_h} phi_i d mu_h`` for density plus nodal atoms."""
    n = mesh.n_vertices
    if mu.density is not None:
        if desc is None:
            desc = mesh.desc
        load = assemble_load_l2(mesh, desc, mu.density, rule)
    else:
        load = np.zeros(n)
    for node, weight in mu.atoms:
        node = int(node)
        if not 0 <= node < n:
            raise InvalidAtomNode(f"atom node {node} outside [0, {n})")
        load[node] += float(weight)
    return load


def atom_at_point(mesh: SurfaceMesh, point, weight: float = 1.0):
    """Transfer a point mass at ``point`` to the nearest mesh node."""
    d = np.linalg.norm(mesh.vertices - np.asarray(point, dtype=float), axis=1)
    return int(np.argmin(d)), float(weight)


def interpolate_nodal(mesh: SurfaceMesh, desc, f) -> FeFunction:
    return FeFunction(mesh, as_field(f)(mesh.vertices))


def integrate(mesh: SurfaceMesh, desc, f, rule: TriangleRule = DEGREE4) -> float:
    """``int_{S_h} f_lift`` by quadrature."""
    pts, w = quadrature_points(mesh, rule)
    return float(np.sum(lifted_values(mesh, desc, f, pts) * w))
