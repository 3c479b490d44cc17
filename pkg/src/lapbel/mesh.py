"""Flat-triangle meshes with nodes on the surface.

Two generators are shipped: projected midpoint subdivision of an icosahedron
(sphere) and a structured angle grid (torus).  Both produce nested node sets:
every node of level ``l`` is also a node of level ``l + 1``.  Icosphere nodes
also keep their index, which is what ``parents`` relies on.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateTriangle, GeometryError, LevelTooLarge
from .surface import SurfaceDescriptor, Torus, UnitSphere

MAX_ICOSPHERE_LEVEL = 8
# 192 * 4**6 vertices is already ~786k
MAX_TORUS_LEVEL = 6
DEGENERATE_AREA = 1e-14

_ids = itertools.count()


@dataclass(eq=False)
class SurfaceMesh:
    """Triangulated surface ``S_h``.

    ``parents[i]`` holds the two nodes of the coarser level whose edge
    midpoint produced node ``i`` (``(i, i)`` for inherited nodes); it is
    ``None`` for meshes not produced by bisection.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    desc: SurfaceDescriptor
    level: int = 0
    parents: np.ndarray | None = None
    mesh_id: int = field(default_factory=lambda: next(_ids))

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self.vertices.flags.writeable = False
        self.triangles.flags.writeable = False

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @functools.cached_property
    def corners(self):
        """``(m, 3, 3)`` array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    @functools.cached_property
    def areas(self):
        c = self.corners
        cr = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        a = 0.5 * np.linalg.norm(cr, axis=1)
        if np.any(a < DEGENERATE_AREA):
            k = int(np.argmin(a))
            raise DegenerateTriangle(f"triangle {k} has area {a[k]:.3e}")
        return a

    @functools.cached_property
    def unit_normals(self):
        c = self.corners
        cr = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return cr / np.linalg.norm(cr, axis=1)[:, None]

    @functools.cached_property
    def quality(self) -> dict:
        return mesh_quality(self)

    @property
    def h(self) -> float:
        return self.quality["h"]

    @property
    def gamma(self) -> float:
        return self.quality["gamma"]

    def edges(self):
        """Unique undirected edges, sorted, shape ``(E, 2)``."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.edges().shape[0] + self.n_triangles

    def is_closed_manifold(self) -> bool:
        """Every edge is shared by exactly two consistently oriented triangles."""
        t = self.triangles
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        und, counts = np.unique(np.sort(directed, axis=1), axis=0, return_counts=True)
        if np.any(counts != 2):
            return False
        # consistent orientation: no directed edge occurs twice
        _, dcounts = np.unique(directed, axis=0, return_counts=True)
        return bool(np.all(dcounts == 1))

    def is_outward(self) -> bool:
        centroids = self.corners.mean(axis=1)
        n = self.desc.normal(self.desc.closest_point(centroids))
        return bool(np.all(np.sum(self.unit_normals * n, axis=1) > 0))


def triangle_geometry(corners):
    """Edge lengths, areas, enclosing and inscribed disc diameters.

    The smallest enclosing disc of an obtuse triangle has the longest edge
    as diameter; otherwise it is the circumcircle.
    """
    c = np.asarray(corners, dtype=float).reshape(-1, 3, 3)
    a = np.linalg.norm(c[:, 1] - c[:, 2], axis=1)
    b = np.linalg.norm(c[:, 2] - c[:, 0], axis=1)
    d = np.linalg.norm(c[:, 0] - c[:, 1], axis=1)
    cr = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    area = 0.5 * np.linalg.norm(cr, axis=1)
    if np.any(area < DEGENERATE_AREA):
        k = int(np.argmin(area))
        raise DegenerateTriangle(f"triangle {k} has area {area[k]:.3e}")
    lengths = np.stack([a, b, d], axis=1)
    sq = lengths ** 2
    longest = lengths.max(axis=1)
    obtuse = 2 * sq.max(axis=1) > sq.sum(axis=1)
    circum = a * b * d / (2.0 * area)
    rho = np.where(obtuse, longest, circum)
    sigma = 4.0 * area / lengths.sum(axis=1)
    # interior angles from the law of cosines
    cos_a = (b ** 2 + d ** 2 - a ** 2) / (2 * b * d)
    cos_b = (a ** 2 + d ** 2 - b ** 2) / (2 * a * d)
    cos_c = (a ** 2 + b ** 2 - d ** 2) / (2 * a * b)
    angles = np.arccos(np.clip(np.stack([cos_a, cos_b, cos_c], axis=1), -1.0, 1.0))
    return {"lengths": lengths, "area": area, "rho": rho, "sigma": sigma, "angles": angles}


def mesh_quality(mesh) -> dict:
    """Mesh size ``h = max rho``, ``gamma = min sigma / h`` and the minimum angle."""
    corners = mesh.corners if isinstance(mesh, SurfaceMesh) else mesh
    g = triangle_geometry(corners)
    h = float(g["rho"].max())
    return {"h": h, "gamma": float(g["sigma"].min() / h),
            "min_angle": float(g["angles"].min())}


def _orient_outward(vertices, triangles, desc):
    c = vertices[triangles]
    cr = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    n = desc.normal(desc.closest_point(c.mean(axis=1)))
    flip = np.sum(cr * n, axis=1) < 0
    triangles = triangles.copy()
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    return triangles


def icosahedron():
    """Regular icosahedron inscribed in the unit sphere with nodes at both poles."""
    z = 1.0 / np.sqrt(5.0)
    s = 2.0 / np.sqrt(5.0)
    verts = [(0.0, 0.0, 1.0), (0.0, 0.0, -1.0)]
    for k in range(5):
        t = 2 * np.pi * k / 5
        verts.append((s * np.cos(t), s * np.sin(t), z))
    for k in range(5):
        t = 2 * np.pi * k / 5 + np.pi / 5
        verts.append((s * np.cos(t), s * np.sin(t), -z))
    up = lambda k: 2 + k % 5
    lo = lambda k: 7 + k % 5
    tris = []
    for k in range(5):
        tris.append((0, up(k), up(k + 1)))
        tris.append((up(k), lo(k), up(k + 1)))
        tris.append((up(k + 1), lo(k), lo(k + 1)))
        tris.append((1, lo(k + 1), lo(k)))
    v = np.array(verts)
    t = _orient_outward(v, np.array(tris, dtype=np.int64), UnitSphere())
    return v, t


def refine(mesh: SurfaceMesh) -> SurfaceMesh:
    """Split every triangle into four at its edge midpoints and project the
    new nodes onto the surface.  Existing nodes keep their indices."""
    t = mesh.triangles
    n = mesh.n_vertices
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    edges, inv = np.unique(np.sort(e, axis=1), axis=0, return_inverse=True)
    inv = inv.reshape(3, -1)
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    new = mesh.desc.closest_point(mid)
    vertices = np.concatenate([mesh.vertices, new])
    ab, bc, ca = inv[0] + n, inv[1] + n, inv[2] + n
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    tris = np.concatenate([
        np.stack([a, ab, ca], axis=1),
        np.stack([ab, b, bc], axis=1),
        np.stack([ca, bc, c], axis=1),
        np.stack([ab, bc, ca], axis=1),
    ])
    parents = np.concatenate([np.stack([np.arange(n), np.arange(n)], axis=1), edges])
    return SurfaceMesh(vertices, tris, mesh.desc, level=mesh.level + 1, parents=parents)


@functools.lru_cache(maxsize=None)
def build_icosphere(level: int) -> SurfaceMesh:
    """Icosphere of the given refinement level (``10 * 4**level + 2`` nodes)."""
    if not 0 <= level <= MAX_ICOSPHERE_LEVEL:
        raise LevelTooLarge(f"icosphere level must be in [0, {MAX_ICOSPHERE_LEVEL}], got {level}")
    if level == 0:
        v, t = icosahedron()
        return SurfaceMesh(v, t, UnitSphere(), level=0)
    return refine(build_icosphere(level - 1))


@functools.lru_cache(maxsize=None)
def build_torus_mesh(level: int, R: float = 2.0, r: float = 0.5) -> SurfaceMesh:
    """Structured ``(8 * 2**level) x (24 * 2**level)`` angle grid on a torus."""
    if not 0 <= level <= MAX_TORUS_LEVEL:
        raise LevelTooLarge(f"torus level must be in [0, {MAX_TORUS_LEVEL}], got {level}")
    desc = Torus(R, r)
    nv, nu = 8 * 2 ** level, 24 * 2 ** level
    # i / n is formed first so that coarse angles reappear bitwise on finer grids
    u = 2 * np.pi * (np.arange(nu) / nu)
    v = 2 * np.pi * (np.arange(nv) / nv)
    U, V = np.meshgrid(u, v, indexing="ij")
    ring = R + r * np.cos(V)
    verts = np.stack([ring * np.cos(U), ring * np.sin(U), r * np.sin(V)], axis=-1).reshape(-1, 3)
    idx = lambda i, j: (i % nu) * nv + (j % nv)
    I, J = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    I, J = I.ravel(), J.ravel()
    p00, p10, p11, p01 = idx(I, J), idx(I + 1, J), idx(I + 1, J + 1), idx(I, J + 1)
    tris = np.concatenate([np.stack([p00, p10, p11], axis=1),
                           np.stack([p00, p11, p01], axis=1)])
    tris = _orient_outward(verts, tris, desc)
    return SurfaceMesh(verts, tris, desc, level=level)


def build_mesh(desc: SurfaceDescriptor, level: int) -> SurfaceMesh:
    if isinstance(desc, UnitSphere):
        return build_icosphere(level)
    if isinstance(desc, Torus):
        return build_torus_mesh(level, desc.R, desc.r)
    raise TypeError(f"no mesh generator for {desc!r}")


def write_off(mesh: SurfaceMesh, path) -> None:
    """Write the mesh in OFF text format."""
    lines = ["OFF", f"{mesh.n_vertices} {mesh.n_triangles} {mesh.edges().shape[0]}"]
    lines += [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"3 {i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


class PointLocator:
    """Find, for points ``x`` on the surface, the point of ``S_h`` that lifts
    to ``x``.

    That point lies on the normal line ``x + t n(x)``; candidate triangles
    come from a k-d tree over triangle centroids.
    """

    def __init__(self, mesh: SurfaceMesh, candidates: int = 8, chunk: int = 65536):
        from scipy.spatial import cKDTree

        self.mesh = mesh
        self.k = candidates
        self.chunk = chunk
        self._tree = cKDTree(mesh.corners.mean(axis=1))

    def _try(self, x, n, k):
        c = self.mesh.corners
        _, cand = self._tree.query(x, k=k)
        cand = np.atleast_2d(cand)
        if cand.shape[0] != x.shape[0]:
            cand = cand.T
        v0 = c[cand, 0]
        e1 = c[cand, 1] - v0
        e2 = c[cand, 2] - v0
        nn = np.broadcast_to(n[:, None, :], e1.shape)
        mat = np.stack([e1, e2, -nn], axis=-1)
        rhs = x[:, None, :] - v0
        sol = np.linalg.solve(mat, rhs[..., None])[..., 0]
        s, r, t = sol[..., 0], sol[..., 1], sol[..., 2]
        margin = np.minimum(np.minimum(s, r), 1.0 - s - r)
        # containing triangle: non-negative barycentrics, nearest along the normal
        score = np.where(margin >= -1e-10, np.abs(t), np.inf)
        best = np.argmin(score, axis=1)
        rows = np.arange(x.shape[0])
        ok = np.isfinite(score[rows, best])
        tri = cand[rows, best]
        bary = np.stack([1.0 - s[rows, best] - r[rows, best], s[rows, best], r[rows, best]], axis=1)
        return tri, np.clip(bary, 0.0, 1.0), ok

    def locate(self, points):
        """Triangle indices and barycentric coordinates for surface points."""
        x = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.mesh.desc.normal(x)
        tri = np.empty(x.shape[0], dtype=np.int64)
        bary = np.empty((x.shape[0], 3))
        for lo in range(0, x.shape[0], self.chunk):
            sl = slice(lo, lo + self.chunk)
            t, b, ok = self._try(x[sl], n[sl], self.k)
            if not np.all(ok):
                bad = np.flatnonzero(~ok)
                k = min(8 * self.k, self.mesh.n_triangles)
                t2, b2, ok2 = self._try(x[sl][bad], n[sl][bad], k)
                if not np.all(ok2):
                    raise GeometryError(f"{int(np.sum(~ok2))} points could not be located on the mesh")
                t[bad], b[bad] = t2, b2
            tri[sl], bary[sl] = t, b
        bary /= bary.sum(axis=1)[:, None]
        return tri, bary
