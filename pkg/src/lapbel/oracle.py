"""Reference solutions for error measurement.

* :class:`HarmonicExpansion` -- finite real spherical-harmonic series on the
  unit sphere, on which ``-Laplace + 1`` acts diagonally with eigenvalue
  ``l (l + 1) + 1``.
* Legendre series for the Green's function of ``-Laplace + 1`` with a unit
  point mass, for measure-data problems.
* :class:`FineMeshReference` -- a discrete solution on a finer mesh, for
  problems without closed forms.  These are cached on disk.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import sph_harm_y

from .errors import EvaluationAtSingularity, IncompatibleReference
from .fem import FeFunction
from .fields import Field, as_field
from .mesh import PointLocator, build_mesh

FOUR_PI = 4.0 * np.pi


def eigenvalue(l):
    """Eigenvalue of ``-Laplace + 1`` on degree-``l`` harmonics."""
    return l * (l + 1) + 1


def _angles(points):
    p = np.atleast_2d(points)
    theta = np.arctan2(np.hypot(p[:, 0], p[:, 1]), p[:, 2])
    phi = np.arctan2(p[:, 1], p[:, 0])
    return theta, phi


def real_sph_harm(l: int, m: int, points):
    """Orthonormal real spherical harmonic ``Y_lm`` at unit vectors."""
    theta, phi = _angles(points)
    y = sph_harm_y(l, abs(m), theta, phi)
    if m == 0:
        return y.real
    sign = (-1) ** m
    if m > 0:
        return np.sqrt(2.0) * sign * y.real
    return np.sqrt(2.0) * sign * y.imag


class HarmonicExpansion(Field):
    """``sum_{l <= L, |m| <= l} c_lm Y_lm``, stored as a dict ``{(l, m): c}``.

    Evaluated at arbitrary points through their direction, i.e. extended
    constantly along rays.
    """

    def __init__(self, coefficients: dict, max_degree: int | None = None):
        coeffs = {}
        for (l, m), c in coefficients.items():
            l, m = int(l), int(m)
            if l < 0 or abs(m) > l:
                raise ValueError(f"invalid harmonic index ({l}, {m})")
            if not np.isfinite(c):
                raise ValueError(f"non-finite coefficient for ({l}, {m})")
            coeffs[(l, m)] = float(c)
        self.coefficients = dict(sorted(coeffs.items()))
        top = max((l for l, _ in coeffs), default=0)
        self.max_degree = top if max_degree is None else int(max_degree)
        if top > self.max_degree:
            raise ValueError(f"degree {top} exceeds max_degree {self.max_degree}")
        self.key = "harmonic:" + ",".join(f"{l}:{m}:{c!r}" for (l, m), c in self.coefficients.items())

    def __repr__(self):
        return f"HarmonicExpansion({self.coefficients!r})"

    @classmethod
    def from_field(cls, f, max_degree: int, tol: float = 1e-10) -> "HarmonicExpansion":
        """Coefficients of a band-limited field on the unit sphere.

        Gauss-Legendre in ``cos(theta)`` times the trapezoidal rule in
        ``phi`` integrates products of degree ``<= 2 max_degree`` exactly.
        Raises ``ValueError`` when ``f`` has content above ``max_degree``
        (detected on an independent point set).
        """
        f = as_field(f)
        n = max_degree + 2
        t, wt = np.polynomial.legendre.leggauss(n)
        phi = 2 * np.pi * np.arange(2 * n + 1) / (2 * n + 1)
        T, P = np.meshgrid(t, phi, indexing="ij")
        W = np.repeat(wt, phi.size) * (2 * np.pi / phi.size)
        st = np.sqrt(1.0 - T.ravel() ** 2)
        pts = np.stack([st * np.cos(P.ravel()), st * np.sin(P.ravel()), T.ravel()], axis=1)
        vals = f(pts)
        coeffs = {}
        for l in range(max_degree + 1):
            for m in range(-l, l + 1):
                c = float(np.sum(W * vals * real_sph_harm(l, m, pts)))
                if abs(c) > 1e-14:
                    coeffs[(l, m)] = c
        out = cls(coeffs, max_degree)
        rng = np.random.default_rng(0)
        probe = rng.normal(size=(64, 3))
        probe /= np.linalg.norm(probe, axis=1)[:, None]
        gap = np.max(np.abs(out(probe) - f(probe)))
        if gap > tol * max(1.0, np.max(np.abs(f(probe)))):
            raise ValueError(f"field is not band-limited to degree {max_degree} "
                             f"(mismatch {gap:.2e})")
        return out

    def __call__(self, points):
        p = np.atleast_2d(points)
        out = np.zeros(p.shape[0])
        for (l, m), c in self.coefficients.items():
            if c != 0.0:
                out += c * real_sph_harm(l, m, p)
        return out

    def scaled(self, factor_of_degree) -> "HarmonicExpansion":
        return HarmonicExpansion({(l, m): c * factor_of_degree(l)
                                  for (l, m), c in self.coefficients.items()},
                                 self.max_degree)

    def __mul__(self, s):
        return self.scaled(lambda l: float(s))

    __rmul__ = __mul__

    def __add__(self, other):
        if not isinstance(other, HarmonicExpansion):
            return super().__add__(other)
        c = dict(self.coefficients)
        for k, v in other.coefficients.items():
            c[k] = c.get(k, 0.0) + v
        return HarmonicExpansion(c, max(self.max_degree, other.max_degree))

    def __sub__(self, other):
        return self + (-1.0) * other


def spectral_green(data: HarmonicExpansion) -> HarmonicExpansion:
    """Exact solution of ``-Laplace z + z = data`` on the unit sphere."""
    return data.scaled(lambda l: 1.0 / eigenvalue(l))


def spectral_apply(z: HarmonicExpansion) -> HarmonicExpansion:
    """``-Laplace z + z`` for an expansion ``z``."""
    return z.scaled(lambda l: float(eigenvalue(l)))


def legendre_table(n: int, t):
    """``P_0 .. P_n`` at ``t`` by the three-term recurrence, shape ``(n + 1, len(t))``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty((n + 1, t.size))
    out[0] = 1.0
    if n >= 1:
        out[1] = t
    for l in range(1, n):
        out[l + 1] = ((2 * l + 1) * t * out[l] - l * out[l - 1]) / (l + 1)
    return out


def _legendre_sum(t, weights):
    # sum_l weights[l] P_l(t) without storing the table
    t = np.asarray(t, dtype=float)
    p_prev = np.ones_like(t)
    total = weights[0] * p_prev
    if len(weights) == 1:
        return total
    p = t.copy()
    total = total + weights[1] * p
    for l in range(1, len(weights) - 1):
        p_prev, p = p, ((2 * l + 1) * t * p - l * p_prev) / (l + 1)
        total += weights[l + 1] * p
    return total


SINGULARITY_GAP = 1e-12


def _cosines(anchor, x):
    """``t = x . anchor`` and ``1 - t`` for directions, the latter computed as
    half the squared chord so that it stays accurate near the anchor."""
    a = np.asarray(anchor, dtype=float)
    a = a / np.linalg.norm(a)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x = x / np.linalg.norm(x, axis=1)[:, None]
    gap = 0.5 * np.sum((x - a) ** 2, axis=1)
    return np.clip(1.0 - gap, -1.0, 1.0), gap


def legendre_green_function(anchor, N: int, x):
    """Truncated expansion ``sum_{l <= N} (2l+1) P_l(x . anchor) / (4 pi (l(l+1)+1))``.

    This is the Green's function of ``-Laplace + 1`` on the unit sphere for
    a unit point mass at ``anchor``, cut after degree ``N``.
    """
    if N < 100:
        raise ValueError(f"truncation N={N} below 100")
    t, gap = _cosines(anchor, x)
    if np.any(gap < SINGULARITY_GAP):
        raise EvaluationAtSingularity("evaluation point coincides with the anchor")
    l = np.arange(N + 1)
    return _legendre_sum(t, (2 * l + 1) / (FOUR_PI * eigenvalue(l)))


def dirac_green_function(anchor, x, N: int = 2000):
    """Green's function with the logarithmic singularity summed in closed form.

    Uses ``sum_{l>=1} (2l+1)/(l(l+1)) P_l(t) = -1 - log((1-t)/2)``; the
    remaining series has terms ``O(l^-3)`` and is truncated after ``N``.
    """
    t, gap = _cosines(anchor, x)
    if np.any(gap < 1e-300):
        raise EvaluationAtSingularity("evaluation point coincides with the anchor")
    l = np.arange(N + 1, dtype=float)
    w = np.zeros(N + 1)
    ll = l[1:] * (l[1:] + 1)
    w[1:] = (2 * l[1:] + 1) / (ll * (ll + 1))
    return (-np.log(0.5 * gap) - _legendre_sum(t, w)) / FOUR_PI


def dirac_green_l2_norm_squared(N: int = 2000) -> float:
    """``||G||_{L2}^2`` by Parseval, truncated after degree ``N``."""
    l = np.arange(N + 1, dtype=float)
    return float(np.sum((2 * l + 1) / (FOUR_PI * eigenvalue(l) ** 2)))


class ReferenceSolution:
    """Something the error norms can be measured against.

    ``kind`` is one of ``"spectral"``, ``"legendre"``, ``"fine_mesh"`` or
    ``"field"``.
    """

    kind = "field"
    supports_gradient = True

    def value(self, points):
        raise NotImplementedError

    def gradient(self, points):
        raise IncompatibleReference(f"{type(self).__name__} has no gradient")


class FieldReference(ReferenceSolution):
    """Closed-form reference given by any field (includes spectral ones)."""

    def __init__(self, field, desc):
        self.field = field
        self.desc = desc
        self.kind = "spectral" if isinstance(field, HarmonicExpansion) else "field"

    def value(self, points):
        return self.field(points)

    def gradient(self, points):
        from .fields import tangential_gradient

        return tangential_gradient(self.desc, self.field, points)


def SpectralReference(expansion: HarmonicExpansion, desc=None):
    from .surface import UnitSphere

    return FieldReference(expansion, desc or UnitSphere())


class LegendreReference(ReferenceSolution):
    kind = "legendre"
    supports_gradient = False

    def __init__(self, anchor, N: int = 2000, weight: float = 1.0):
        self.anchor = np.asarray(anchor, dtype=float)
        self.N = int(N)
        self.weight = float(weight)

    def value(self, points):
        return self.weight * dirac_green_function(self.anchor, points, self.N)


class FineMeshReference(ReferenceSolution):
    """Discrete solution on a finer mesh, lifted to the surface.

    ``extra`` carries any further arrays of a control solve (adjoint state,
    multipliers, active set).
    """

    kind = "fine_mesh"

    def __init__(self, fe: FeFunction, extra: dict | None = None):
        self.fe = fe
        self.mesh = fe.mesh
        self.level = fe.mesh.level
        self.extra = extra or {}
        self._locator = None

    @property
    def locator(self):
        if self._locator is None:
            self._locator = PointLocator(self.mesh)
        return self._locator

    def value(self, points):
        tri, bary = self.locator.locate(points)
        return self.fe.at_bary(bary, tri)

    def gradient(self, points):
        tri, _ = self.locator.locate(points)
        return self.fe.gradients()[tri]

    def with_coefficients(self, coefficients) -> "FineMeshReference":
        ref = FineMeshReference(FeFunction(self.mesh, coefficients), self.extra)
        ref._locator = self._locator
        return ref


def cache_dir() -> Path:
    path = os.environ.get("LAPBEL_CACHE_DIR")
    if path:
        return Path(path)
    return Path.home() / ".cache" / "lapbel"


def cache_path(key: str) -> Path:
    digest = hashlib.sha256(key.encode("utf-8")).hexdigest()[:32]
    return cache_dir() / f"{digest}.npz"


def save_reference(path: Path, key: str, level: int, arrays: dict) -> None:
    """Write a reference to an ``.npz`` archive.

    Stored entries: ``key`` (the full problem description), ``level`` and the
    named coefficient arrays, e.g. ``y``, ``p``, ``multipliers``,
    ``active_set``.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, key=np.array(key), level=np.array(level), **arrays)
    os.replace(tmp, path)


def load_reference(path: Path, key: str):
    if not path.exists():
        return None
    with np.load(path, allow_pickle=False) as data:
        if str(data["key"]) != key:
            return None
        return int(data["level"]), {k: data[k] for k in data.files if k not in ("key", "level")}


@dataclass
class CachedReference:
    reference: FineMeshReference
    from_cache: bool
    path: Path | None


def fine_mesh_reference(problem, L_ref: int, solver=None, pdas=None,
                        use_cache: bool = True, finest_level: int | None = None):
    """Solve ``problem`` on the level-``L_ref`` mesh and wrap it as a reference.

    ``problem`` is a :class:`~lapbel.control.ControlProblem` or a
    :class:`~lapbel.solve.GreenProblem`.  Results are cached under
    :func:`cache_dir` when the problem has a description key.
    """
    from .control import ControlProblem, PdasConfig, solve_pdas_sequence
    from .solve import GreenProblem, SolverConfig

    if finest_level is not None and L_ref < finest_level + 2:
        raise ValueError(f"reference level {L_ref} must exceed the finest level "
                         f"{finest_level} by at least 2")
    solver = solver or SolverConfig()
    mesh = build_mesh(problem.desc, L_ref)
    key = problem.key()
    if key is not None:
        key = f"{key}|level={L_ref}|solver={solver!r}"
        if isinstance(problem, ControlProblem):
            key += f"|pdas={(pdas or PdasConfig())!r}"
    path = cache_path(key) if key is not None else None
    if use_cache and path is not None:
        hit = load_reference(path, key)
        if hit is not None:
            _, arrays = hit
            fe = FeFunction(mesh, arrays.pop("y"))
            return CachedReference(FineMeshReference(fe, arrays), True, path)
    if isinstance(problem, ControlProblem):
        # nested iteration from a coarse level warm-starts the active set
        start = max(0, L_ref - 3)
        sols = solve_pdas_sequence(problem, [build_mesh(problem.desc, l)
                                             for l in range(start, L_ref + 1)],
                                   pdas or PdasConfig())
        sol = sols[-1]
        arrays = {"y": sol.y.coefficients, "p": sol.p.coefficients,
                  "u": sol.u.nodal(), "multipliers": sol.multipliers,
                  "active_set": sol.active_set.astype(np.int64)}
    elif isinstance(problem, GreenProblem):
        arrays = {"y": problem.solve(mesh, solver).coefficients}
    else:
        raise TypeError(f"cannot build a fine-mesh reference for {problem!r}")
    if use_cache and path is not None:
        save_reference(path, key, L_ref, arrays)
    arrays = dict(arrays)
    fe = FeFunction(mesh, arrays.pop("y"))
    return CachedReference(FineMeshReference(fe, arrays), False, path)


def control_reference(cached: CachedReference, problem):
    """References for state, adjoint and control from a cached control solve."""
    ref = cached.reference
    p = ref.with_coefficients(ref.extra["p"])
    u = ControlReference(ref, problem)
    return ref, p, u


class ControlReference(ReferenceSolution):
    """Control of a fine-mesh solve, ``u = P(u0_h - p_h / alpha)``, lifted."""

    kind = "fine_mesh"
    supports_gradient = False

    def __init__(self, state_ref: FineMeshReference, problem):
        self.state_ref = state_ref
        self.problem = problem
        mesh = state_ref.mesh
        self.u0 = FeFunction(mesh, problem.u0(mesh.vertices))
        self.p = FeFunction(mesh, state_ref.extra["p"])

    def value(self, points):
        tri, bary = self.state_ref.locator.locate(points)
        raw = self.u0.at_bary(bary, tri) - self.p.at_bary(bary, tri) / self.problem.alpha
        return self.problem.project_control(raw)
