"""State-constrained optimal control on a surface, solved by primal-dual
active sets.

Minimise ``1/2 ||y - y0||^2 + alpha/2 ||u - u0||^2`` subject to
``-Laplace y + y = u`` and ``y <= b`` at every mesh node.  The control is not
meshed; it is recovered from the discrete adjoint as
``u_h = P(u0_h - p_h / alpha)`` with ``P`` the projection onto the control
bounds (the identity for unbounded controls).

Discrete optimality system, with ``K`` the operator matrix, ``M`` the mass
matrix and ``f0`` the load of ``y0``::

    K y = load(u_h)
    K p = M y - f0 + mu
    y_j <= b_j,  mu_j >= 0,  mu_j (b_j - y_j) = 0

For a given active set the state is pinned to the bound there, and the
remaining unknowns ``(p, y_I)`` solve a sparse saddle-point system,
factorised with UMFPACK.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import PdasNoConvergence, SaddleSolveFailure, SingularMatrix, SlaterViolation
from .fem import (DEGREE4, FeFunction, assemble_load_l2, assemble_mass, assemble_operator,
                  quadrature_points)
from .fields import CallableField, ConstantField, as_field
from .mesh import PointLocator, SurfaceMesh
from .solve import LUFactor, SolverConfig, green_solve


@dataclass(frozen=True)
class FreeL2:
    """Unconstrained controls in ``L2``."""

    def project(self, values):
        return values

    def __repr__(self):
        return "FreeL2()"


@dataclass(frozen=True)
class Box:
    """Controls with ``lower <= u <= upper`` pointwise."""

    lower: float = -np.inf
    upper: float = np.inf

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"empty control box [{self.lower}, {self.upper}]")

    def project(self, values):
        return np.clip(values, self.lower, self.upper)


class ControlProblem:
    def __init__(self, desc, alpha, y0, u0=0.0, bound=1e6, control_space=FreeL2(),
                 slater_control=None):
        if not alpha > 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        self.desc = desc
        self.alpha = float(alpha)
        self.y0 = as_field(y0)
        self.u0 = as_field(u0)
        self.bound = as_field(bound)
        self.control_space = control_space
        self.slater_control = None if slater_control is None else as_field(slater_control)

    def __repr__(self):
        return (f"ControlProblem({self.desc!r}, alpha={self.alpha!r}, y0={self.y0!r}, "
                f"u0={self.u0!r}, bound={self.bound!r}, {self.control_space!r})")

    def key(self):
        keys = [self.y0.key, self.u0.key, self.bound.key]
        if None in keys:
            return None
        return (f"control|{self.desc!r}|alpha={self.alpha!r}|y0={keys[0]}|u0={keys[1]}"
                f"|b={keys[2]}|{self.control_space!r}")

    def project_control(self, values):
        return self.control_space.project(values)

    def scaled(self, t: float) -> "ControlProblem":
        """Same problem with ``y0``, ``u0`` and ``b`` multiplied by ``t``."""
        sc = lambda f: CallableField(lambda p: t * f(p))
        space = self.control_space
        if isinstance(space, Box):
            space = Box(t * space.lower, t * space.upper)
        return ControlProblem(self.desc, self.alpha, sc(self.y0), sc(self.u0), sc(self.bound),
                              space)


@dataclass(frozen=True)
class PdasConfig:
    c: float | None = None
    max_iterations: int = 50
    tol_feas: float = 1e-9
    tol_dual: float = 1e-9
    tol_comp: float = 1e-9
    tol_residual: float = 1e-9
    initial_active_set: object = "empty"
    check_slater: bool = True

    def __repr__(self):
        init = self.initial_active_set
        if not isinstance(init, str):
            init = "custom"
        return (f"PdasConfig(c={self.c!r}, max_iterations={self.max_iterations}, "
                f"tol={self.tol_feas!r}/{self.tol_dual!r}/{self.tol_comp!r}/"
                f"{self.tol_residual!r}, init={init})")


class VariationalControl:
    """The control ``P(u0_h - p_h / alpha)`` induced by an adjoint state.

    Values inside a triangle are the projection of the linear interpolant,
    so with box bounds the control is not piecewise linear.
    """

    def __init__(self, mesh: SurfaceMesh, u0h, p, alpha: float, space=FreeL2()):
        self.mesh = mesh
        self.u0h = np.asarray(u0h, dtype=float)
        self.p = np.asarray(p, dtype=float)
        self.alpha = alpha
        self.space = space
        self.raw = FeFunction(mesh, self.u0h - self.p / alpha)

    def nodal(self):
        return self.space.project(self.raw.coefficients)

    def at_bary(self, bary, tri_index=None):
        return self.space.project(self.raw.at_bary(bary, tri_index))

    def gradients(self):
        if isinstance(self.space, FreeL2):
            return self.raw.gradients()
        raise NotImplementedError("bounded controls are not piecewise linear")

    def l2_norm(self, rule=DEGREE4) -> float:
        _, w = quadrature_points(self.mesh, rule)
        return float(np.sqrt(np.sum(self.at_bary(rule.bary) ** 2 * w)))


@dataclass
class KktSolution:
    y: FeFunction
    p: FeFunction
    u: VariationalControl
    multipliers: np.ndarray
    active_set: np.ndarray
    residuals: dict = field(default_factory=dict)
    iterations: int = 0


class _Discretisation:
    """Matrices and nodal data of a problem on one mesh."""

    def __init__(self, prob: ControlProblem, mesh: SurfaceMesh):
        self.mesh = mesh
        self.K = assemble_operator(mesh)
        self.M = assemble_mass(mesh)
        self.f0 = assemble_load_l2(mesh, prob.desc, prob.y0)
        self.u0h = prob.u0(mesh.vertices)
        self.b = prob.bound(mesh.vertices)
        self.space = prob.control_space
        self.alpha = prob.alpha
        if not isinstance(self.space, FreeL2):
            pts, w = quadrature_points(mesh, DEGREE4)
            self.w = w
            phi = DEGREE4.bary
            # int phi_i phi_j chi over quadrature points, per triangle and point
            self._phiphi = phi[:, :, None] * phi[:, None, :]

    def control_load(self, p):
        """``int u_h phi_i`` for the control induced by ``p``."""
        if isinstance(self.space, FreeL2):
            return self.M @ (self.u0h - p / self.alpha)
        u = VariationalControl(self.mesh, self.u0h, p, self.alpha, self.space)
        vals = u.at_bary(DEGREE4.bary) * self.w
        local = vals @ DEGREE4.bary
        return np.bincount(self.mesh.triangles.ravel(), weights=local.ravel(),
                           minlength=self.mesh.n_vertices)

    def box_split(self, p):
        """Mass matrix over the unclipped control region and the load of the
        clipped part, for the current adjoint ``p``."""
        bary = DEGREE4.bary
        raw = FeFunction(self.mesh, self.u0h - p / self.alpha).at_bary(bary)
        lo, hi = self.space.lower, self.space.upper
        free = (raw > lo) & (raw < hi)
        clipped = np.where(free, 0.0, np.where(raw <= lo, lo, hi))
        wf = self.w * free
        local = np.einsum("mq,qij->mij", wf, self._phiphi)
        t = self.mesh.triangles
        n = self.mesh.n_vertices
        rows = np.repeat(t, 3, axis=1).ravel()
        cols = np.tile(t, (1, 3)).ravel()
        m_free = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
        m_free = ((m_free + m_free.T) * 0.5).tocsr()
        cl = (clipped * self.w) @ bary
        load = np.bincount(t.ravel(), weights=cl.ravel(), minlength=n)
        return m_free, load, free


def _active_mask(spec, n):
    a = np.asarray(spec)
    if a.dtype == bool:
        if a.shape != (n,):
            raise ValueError(f"active-set mask has shape {a.shape}, expected ({n},)")
        return a.copy()
    mask = np.zeros(n, dtype=bool)
    mask[a.astype(np.int64)] = True
    return mask


def _saddle_solve(d: _Discretisation, active, m_ctrl=None, clip_load=None):
    """Solve the KKT system with the state pinned to the bound on ``active``.

    Returns ``(y, p, mu)``; ``mu`` vanishes off the active set.
    """
    K, M = d.K, d.M
    n = K.shape[0]
    A = np.flatnonzero(active)
    I = np.flatnonzero(~active)
    m_ctrl = M if m_ctrl is None else m_ctrl
    ctrl_rhs = m_ctrl @ d.u0h if clip_load is None else m_ctrl @ d.u0h + clip_load
    bA = d.b[A]
    top = ctrl_rhs - K[:, A] @ bA
    bottom = -d.f0[I] + M[I][:, A] @ bA
    # rows (state on I, adjoint on I, state on A) against unknowns (y_I, p_I, p_A):
    # keeps K on the diagonal, which UMFPACK factorises with far less fill
    # than the symmetric indefinite arrangement
    C = m_ctrl / d.alpha
    K_II = K[I][:, I]
    S = sp.bmat([[K_II, C[I][:, I], C[I][:, A]],
                 [-M[I][:, I], K_II, K[I][:, A]],
                 [K[A][:, I], C[A][:, I], C[A][:, A]]], format="csc")
    rhs = np.concatenate([top[I], bottom, top[A]])
    try:
        x = LUFactor(S).solve(rhs)
    except SingularMatrix as exc:
        raise SaddleSolveFailure(str(exc)) from exc
    ni = I.size
    p = np.empty(n)
    p[I] = x[ni:2 * ni]
    p[A] = x[2 * ni:]
    if not np.all(np.isfinite(x)):
        raise SaddleSolveFailure("non-finite saddle-point solution")
    y = np.empty(n)
    y[A] = bA
    y[I] = x[:ni]
    mu = np.zeros(n)
    mu[A] = (K[A] @ p) - (M[A] @ y) + d.f0[A]
    return y, p, mu


def check_slater(prob: ControlProblem, mesh: SurfaceMesh, d: _Discretisation | None = None):
    """Assert that a designated control keeps the state strictly below the
    bound at every node.

    The default control is the constant ``min(b) - 1``, whose state is that
    same constant.
    """
    d = d or _Discretisation(prob, mesh)
    if prob.slater_control is None:
        ctrl = ConstantField(float(np.min(d.b)) - 1.0)
    else:
        ctrl = prob.slater_control
    vals = prob.project_control(ctrl(mesh.vertices))
    y = green_solve(d.K, d.M @ vals, SolverConfig(method="direct"))
    gap = d.b - y
    if not np.all(gap > 0):
        raise SlaterViolation(f"designated control violates the bound by {-gap.min():.3e}")
    return float(gap.min())


def solve_pdas(prob: ControlProblem, mesh: SurfaceMesh, cfg: PdasConfig = PdasConfig(),
               _d: _Discretisation | None = None) -> KktSolution:
    d = _d or _Discretisation(prob, mesh)
    if cfg.check_slater:
        check_slater(prob, mesh, d)
    n = mesh.n_vertices
    c = 1.0 / prob.alpha if cfg.c is None else cfg.c
    box = not isinstance(prob.control_space, FreeL2)

    init = cfg.initial_active_set
    if isinstance(init, str):
        if init == "empty":
            active = np.zeros(n, dtype=bool)
        elif init == "unconstrained":
            y, _, _ = _saddle_solve(d, np.zeros(n, dtype=bool))
            active = y > d.b
        else:
            raise ValueError(f"unknown initial active set {init!r}")
    else:
        active = _active_mask(init, n)

    m_ctrl, clip_load, free = None, None, None
    if box:
        # start from the unclipped control region of p = 0
        m_ctrl, clip_load, free = d.box_split(np.zeros(n))
    for it in range(1, cfg.max_iterations + 1):
        y, p, mu = _saddle_solve(d, active, m_ctrl, clip_load)
        new_active = (mu + c * (y - d.b)) > 0
        changed = not np.array_equal(new_active, active)
        if box:
            m_next, load_next, free_next = d.box_split(p)
            changed = changed or not np.array_equal(free_next, free)
            m_ctrl, clip_load, free = m_next, load_next, free_next
        if not changed:
            sol = KktSolution(FeFunction(mesh, y), FeFunction(mesh, p),
                              VariationalControl(mesh, d.u0h, p, prob.alpha, prob.control_space),
                              mu, active.copy(), iterations=it)
            sol.residuals = kkt_residuals(prob, mesh, sol, _d=d)
            _check_residuals(sol.residuals, cfg)
            return sol
        active = new_active
    raise PdasNoConvergence(f"active set still changing after {cfg.max_iterations} iterations")


def _check_residuals(r, cfg: PdasConfig):
    limits = {"state": cfg.tol_residual, "adjoint": cfg.tol_residual,
              "stationarity": cfg.tol_residual, "complementarity": cfg.tol_comp,
              "feasibility": cfg.tol_feas, "dual_feasibility": cfg.tol_dual}
    bad = {k: r[k] for k, tol in limits.items() if r[k] > tol}
    if bad:
        raise PdasNoConvergence(f"active set settled but residuals too large: {bad}")


def kkt_residuals(prob: ControlProblem, mesh: SurfaceMesh, sol: KktSolution,
                  _d: _Discretisation | None = None) -> dict:
    """Residuals of the discrete optimality system, recomputed from the
    returned ``y``, ``p``, ``u`` and multipliers alone."""
    d = _d or _Discretisation(prob, mesh)
    y, p, mu = sol.y.coefficients, sol.p.coefficients, sol.multipliers
    state = np.linalg.norm(d.K @ y - d.control_load(p))
    adjoint = np.linalg.norm(d.K @ p - d.M @ y + d.f0 - mu)
    # gradient of the reduced objective, p + alpha (u - u0), at the control's
    # evaluation points, tested against admissible directions
    bary = DEGREE4.bary
    pv = sol.p.at_bary(bary)
    uv = sol.u.at_bary(bary)
    u0v = FeFunction(mesh, d.u0h).at_bary(bary)
    g = pv + prob.alpha * (uv - u0v)
    space = prob.control_space
    if isinstance(space, FreeL2):
        nodal = sol.p.coefficients + prob.alpha * (sol.u.nodal() - d.u0h)
        vi = max(float(np.max(np.abs(g))), float(np.max(np.abs(nodal))))
    else:
        at_lo = uv <= space.lower
        at_hi = uv >= space.upper
        free = ~(at_lo | at_hi)
        vi = float(max(np.max(np.abs(g[free]), initial=0.0),
                       np.max(-g[at_lo], initial=0.0), np.max(g[at_hi], initial=0.0)))
    off = ~sol.active_set
    return {
        "state": float(state),
        "adjoint": float(adjoint),
        "stationarity": vi,
        "complementarity": float(abs(np.dot(mu, d.b - y))),
        "feasibility": float(max(0.0, np.max(y - d.b))),
        "dual_feasibility": float(max(0.0, np.max(-mu))),
        "inactive_multipliers": float(np.max(np.abs(mu[off]), initial=0.0)),
    }


def prolong_active_set(coarse: SurfaceMesh, fine: SurfaceMesh, active) -> np.ndarray:
    """Transfer an active set to the next finer mesh.

    A new node is active when both ends of its parent edge are.  Meshes not
    related by bisection fall back to the enclosing coarse triangle: active
    when all its corners are.
    """
    active = np.asarray(active, dtype=bool)
    if fine.parents is not None and fine.parents.shape[0] == fine.n_vertices \
            and fine.level == coarse.level + 1 and fine.parents.max() < coarse.n_vertices:
        return active[fine.parents[:, 0]] & active[fine.parents[:, 1]]
    tri, _ = PointLocator(coarse).locate(fine.desc.closest_point(fine.vertices))
    return np.all(active[coarse.triangles[tri]], axis=1)


def solve_pdas_sequence(prob: ControlProblem, meshes, cfg: PdasConfig = PdasConfig()):
    """Solve on a sequence of meshes, warm-starting each active set from the
    previous level.  The Slater check runs on the first mesh only."""
    out = []
    for k, mesh in enumerate(meshes):
        if k == 0:
            level_cfg = cfg
        else:
            start = prolong_active_set(meshes[k - 1], mesh, out[-1].active_set)
            level_cfg = PdasConfig(cfg.c, cfg.max_iterations, cfg.tol_feas, cfg.tol_dual,
                                   cfg.tol_comp, cfg.tol_residual, start, False)
        out.append(solve_pdas(prob, mesh, level_cfg))
    return out


def reduced_hessian_matvec(K, M, alpha: float, v, cfg: SolverConfig = SolverConfig()):
    """Hessian of the reduced objective on nodal controls, ``M K^-1 M K^-1 M v + alpha M v``."""
    y = green_solve(K, M @ v, cfg)
    z = green_solve(K, M @ y, cfg)
    return M @ z + alpha * (M @ v)


def uniform_bounds_probe(solutions, ratio: float = 1.2) -> dict:
    """Norms of state, control and multiplier mass across levels.

    Each quantity passes when its largest value is at most ``ratio`` times
    its median over the levels.
    """
    if len(solutions) < 3:
        raise ValueError("uniform-bounds probe needs at least three levels")
    y_norm, u_norm, mu_mass, u_max = [], [], [], []
    for s in solutions:
        M = assemble_mass(s.y.mesh)
        y_norm.append(float(np.sqrt(s.y.coefficients @ (M @ s.y.coefficients))))
        u_norm.append(s.u.l2_norm())
        mu_mass.append(float(np.sum(s.multipliers)))
        u_max.append(float(np.max(np.abs(s.u.nodal()))))
    report = {}
    for name, vals in (("y_l2", y_norm), ("u_l2", u_norm), ("mu_mass", mu_mass)):
        vals = np.asarray(vals)
        med = float(np.median(vals))
        top = float(vals.max())
        report[name] = {"values": vals.tolist(), "max": top, "median": med,
                        "pass": bool(top <= ratio * med)}
    # reported, never asserted
    report["u_max"] = {"values": u_max}
    report["pass"] = all(report[k]["pass"] for k in ("y_l2", "u_l2", "mu_mass"))
    return report
