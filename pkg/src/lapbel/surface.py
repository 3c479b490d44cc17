"""Analytic closed surfaces and the closest-point lift.

A triangulated surface ``S_h`` whose nodes lie on ``S`` is a graph over ``S``
in normal coordinates, so a point ``q`` of ``S_h`` and the point of ``S`` it
corresponds to are related by closest-point projection.  Every lift in the
package goes through :meth:`SurfaceDescriptor.closest_point`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PointOutsideTubularNeighborhood


class SurfaceDescriptor:
    """Base class of the shipped surfaces.

    Subclasses provide ``signed_distance``, ``closest_point``, ``normal`` and
    ``area``; all of them act row-wise on ``(n, 3)`` arrays.
    """

    name = "surface"
    tubular_radius = 0.0

    def signed_distance(self, q):
        raise NotImplementedError

    def closest_point(self, q):
        raise NotImplementedError

    def normal(self, p):
        raise NotImplementedError

    def area(self) -> float:
        raise NotImplementedError

    def euler_characteristic(self) -> int:
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError

    def check_in_tube(self, q):
        q = np.atleast_2d(np.asarray(q, dtype=float))
        d = np.abs(self.signed_distance(q))
        if not np.all(d < self.tubular_radius):
            worst = float(np.max(d))
            raise PointOutsideTubularNeighborhood(
                f"|signed distance| = {worst:.3g} exceeds tubular radius "
                f"{self.tubular_radius:.3g} on {self.describe()}")
        return q

    def project(self, q):
        """Closest point with the tubular-neighbourhood precondition enforced."""
        return self.closest_point(self.check_in_tube(q))

    def tangent_projector(self, p):
        """``(n, 3, 3)`` orthogonal projectors onto the tangent planes at ``p``."""
        n = self.normal(p)
        return np.eye(3)[None, :, :] - n[:, :, None] * n[:, None, :]

    def tangent_basis(self, p):
        """Two orthonormal tangent vectors at each point, shape ``(n, 2, 3)``."""
        n = self.normal(p)
        helper = np.zeros_like(n)
        use_x = np.abs(n[:, 0]) < 0.9
        helper[use_x, 0] = 1.0
        helper[~use_x, 1] = 1.0
        t1 = np.cross(n, helper)
        t1 /= np.linalg.norm(t1, axis=1)[:, None]
        t2 = np.cross(n, t1)
        return np.stack([t1, t2], axis=1)


@dataclass(frozen=True)
class UnitSphere(SurfaceDescriptor):
    name = "sphere"
    tubular_radius = 0.5

    def signed_distance(self, q):
        q = np.atleast_2d(np.asarray(q, dtype=float))
        return np.linalg.norm(q, axis=1) - 1.0

    def closest_point(self, q):
        q = np.atleast_2d(np.asarray(q, dtype=float))
        return q / np.linalg.norm(q, axis=1)[:, None]

    def normal(self, p):
        return self.closest_point(p)

    def area(self) -> float:
        return 4.0 * np.pi

    def euler_characteristic(self) -> int:
        return 2

    def describe(self) -> str:
        return "sphere"


@dataclass(frozen=True)
class Torus(SurfaceDescriptor):
    """Torus of revolution about the z-axis with radii ``R > r > 0``."""

    R: float = 2.0
    r: float = 0.5
    name = "torus"

    def __post_init__(self):
        if not (self.R > self.r > 0):
            raise ValueError(f"torus needs R > r > 0, got R={self.R}, r={self.r}")

    @property
    def tubular_radius(self) -> float:
        return 0.5 * self.r

    def _core(self, q):
        # nearest point on the core circle and the offset from it
        rho = np.hypot(q[:, 0], q[:, 1])
        c = np.zeros_like(q)
        # points on the axis have no nearest core point; they come out as nan
        # and are rejected by the tube check
        with np.errstate(invalid="ignore", divide="ignore"):
            c[:, 0] = self.R * q[:, 0] / rho
            c[:, 1] = self.R * q[:, 1] / rho
        d = q - c
        return c, d, np.linalg.norm(d, axis=1)

    def signed_distance(self, q):
        q = np.atleast_2d(np.asarray(q, dtype=float))
        _, _, dn = self._core(q)
        return dn - self.r

    def closest_point(self, q):
        q = np.atleast_2d(np.asarray(q, dtype=float))
        c, d, dn = self._core(q)
        return c + self.r * d / dn[:, None]

    def normal(self, p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        _, d, dn = self._core(p)
        return d / dn[:, None]

    def area(self) -> float:
        return 4.0 * np.pi ** 2 * self.R * self.r

    def euler_characteristic(self) -> int:
        return 0

    def describe(self) -> str:
        return f"torus(R={self.R!r},r={self.r!r})"


def surface_by_name(name: str, **params) -> SurfaceDescriptor:
    name = name.strip().lower()
    if name in ("sphere", "unitsphere", "unit_sphere"):
        if params:
            raise ValueError(f"sphere takes no parameters, got {sorted(params)}")
        return UnitSphere()
    if name == "torus":
        return Torus(**{k: float(v) for k, v in params.items()})
    raise ValueError(f"unknown surface {name!r}")


def eval_on_surface(desc: SurfaceDescriptor, f, q):
    """Evaluate the lift of ``f`` at points ``q`` near the surface.

    This is ``f(closest_point(q))``.  ``f`` takes an ``(n, 3)`` array of
    surface points and returns ``n`` values.
    """
    p = desc.project(q)
    return np.broadcast_to(np.asarray(f(p), dtype=float), (p.shape[0],)).copy()


def exact_surface_measures(desc: SurfaceDescriptor) -> dict:
    return {"area": desc.area()}
