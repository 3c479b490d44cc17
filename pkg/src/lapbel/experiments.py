"""Convergence experiments: one runner per experiment kind.

Every runner takes an :class:`~lapbel.config.ExperimentConfig` and returns an
:class:`Outcome` holding the error table, the orders that decide pass/fail
and anything else worth reporting.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analysis import ErrorRecord, RateSpec, eoc, fit_rate_with_log, lifted_error
from .control import (ControlProblem, kkt_residuals, solve_pdas_sequence,
                      uniform_bounds_probe)
from .errors import ConfigParse
from .fem import MeasureData, atom_at_point
from .fields import parse_field
from .mesh import build_mesh
from .oracle import (ControlReference, HarmonicExpansion, LegendreReference, SpectralReference,
                     fine_mesh_reference, spectral_green)
from .solve import GreenProblem
from .surface import UnitSphere, exact_surface_measures

NORTH_POLE = np.array([0.0, 0.0, 1.0])


@dataclass
class Outcome:
    records: list
    orders: list
    threshold: float
    norm: str
    extra: dict = field(default_factory=dict)
    guides: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    passed: bool | None = None

    @property
    def measured_min_eoc(self) -> float:
        return float(min(self.orders))

    def __post_init__(self):
        if self.passed is None:
            self.passed = bool(self.measured_min_eoc >= self.threshold)


@dataclass(frozen=True)
class Experiment:
    name: str
    validates: str
    norm: str
    threshold: float
    levels: tuple
    runner: object

    def run(self, cfg) -> Outcome:
        return self.runner(cfg)


def _record(mesh, **errors):
    return ErrorRecord(mesh.level, mesh.h, mesh.gamma, **errors)


def _series(records, norms):
    return {n: ([r.h for r in records], [r.error(n) for r in records]) for n in norms}


def _get(cfg, key, default=None, kind=str):
    raw = cfg.data.get(key)
    if raw is None:
        if default is None:
            raise ConfigParse(f"[data] {key} is required for {cfg.experiment}")
        return default
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigParse(f"[data] {key}: {exc}") from exc


def _point(text):
    vals = [float(v) for v in str(text).replace(",", " ").split()]
    if len(vals) != 3:
        raise ValueError(f"expected three coordinates, got {text!r}")
    return np.array(vals)


def run_area_defect(cfg) -> Outcome:
    area = exact_surface_measures(cfg.surface)["area"]
    records = []
    for level in cfg.levels:
        mesh = build_mesh(cfg.surface, level)
        records.append(_record(mesh, err_l2=abs(float(mesh.areas.sum()) - area)))
    return Outcome(records, eoc(records, "L2"), 1.9, "L2", guides={"L2": 2.0},
                   series=_series(records, ["L2"]))


def _smooth_reference(cfg, f, problem, levels):
    """Spectral reference when the data is band-limited on the sphere, a
    closed-form expression when given, a fine-mesh solve otherwise."""
    if "exact" in cfg.data:
        from .oracle import FieldReference

        return FieldReference(parse_field(cfg.data["exact"]), cfg.surface), "field"
    if isinstance(cfg.surface, UnitSphere):
        degree = _get(cfg, "spectral_degree", "2", int)
        data = HarmonicExpansion.from_field(f, degree)
        return SpectralReference(spectral_green(data)), "spectral"
    ref = fine_mesh_reference(problem, max(levels) + cfg.reference_offset, cfg.solver,
                              use_cache=cfg.use_cache, finest_level=max(levels))
    return ref.reference, "fine_mesh"


def _green_smooth_records(cfg):
    f = parse_field(_get(cfg, "f", "z + 0.5"))
    problem = GreenProblem(cfg.surface, f)
    ref, kind = _smooth_reference(cfg, f, problem, cfg.levels)
    records = []
    for level in cfg.levels:
        mesh = build_mesh(cfg.surface, level)
        z = problem.solve(mesh, cfg.solver)
        records.append(_record(
            mesh,
            err_l2=lifted_error(mesh, cfg.surface, z, ref, "L2"),
            err_h1=lifted_error(mesh, cfg.surface, z, ref, "H1"),
            err_linf=lifted_error(mesh, cfg.surface, z, ref, "Linf")))
    return records, kind


def run_green_smooth(cfg) -> Outcome:
    records, kind = _green_smooth_records(cfg)
    return Outcome(records, eoc(records, "L2"), 1.9, "L2",
                   extra={"reference": kind, "eoc_h1": eoc(records, "H1"),
                          "eoc_linf": eoc(records, "Linf")},
                   guides={"L2": 2.0, "H1": 1.0, "Linf": 2.0},
                   series=_series(records, ["L2", "H1", "Linf"]))


def run_green_linfty(cfg) -> Outcome:
    records, kind = _green_smooth_records(cfg)
    extra = {"reference": kind, "eoc_l2": eoc(records, "L2")}
    if len(records) >= 4:
        extra["log_fit"] = fit_rate_with_log(records, RateSpec(2, 2, "Linf"))
        extra["plain_fit"] = fit_rate_with_log(records, RateSpec(2, 0, "Linf"))
    return Outcome(records, eoc(records, "Linf"), 1.7, "Linf", extra=extra,
                   guides={"Linf": 2.0}, series=_series(records, ["L2", "Linf"]))


def run_green_sobolev(cfg) -> Outcome:
    s = _get(cfg, "s", "1.5", float)
    if not 1.0 < s < 2.0:
        raise ConfigParse(f"[data] s must lie in (1, 2), got {s}")
    eps = _get(cfg, "epsilon", "0.01", float)
    beta = 1.0 - 2.0 / s + eps
    anchor = _point(_get(cfg, "anchor", "0 0 1"))
    mesh0 = build_mesh(cfg.surface, cfg.levels[0])
    node, _ = atom_at_point(mesh0, anchor)
    anchor = mesh0.vertices[node]
    # geodesic distance to the anchor on the sphere, raised to beta
    f = parse_field(f"acos(({anchor[0]!r})*x + ({anchor[1]!r})*y + ({anchor[2]!r})*z)"
                    f"**({beta!r})") if not np.allclose(anchor, NORTH_POLE) \
        else parse_field(f"polar_angle**({beta!r})")
    problem = GreenProblem(cfg.surface, f, singular_point=anchor)
    ref = fine_mesh_reference(problem, max(cfg.levels) + cfg.reference_offset, cfg.solver,
                              use_cache=cfg.use_cache, finest_level=max(cfg.levels))
    records = []
    for level in cfg.levels:
        mesh = build_mesh(cfg.surface, level)
        z = problem.solve(mesh, cfg.solver)
        records.append(_record(
            mesh,
            err_l2=lifted_error(mesh, cfg.surface, z, ref.reference, "L2", singular_point=anchor),
            err_linf=lifted_error(mesh, cfg.surface, z, ref.reference, "Linf")))
    predicted = 3.0 - 2.0 / s
    return Outcome(records, eoc(records, "Linf"), 1.3, "Linf",
                   extra={"s": s, "beta": beta, "predicted_order": predicted,
                          "eoc_l2": eoc(records, "L2"),
                          "reference_level": ref.reference.level,
                          "reference_from_cache": ref.from_cache},
                   guides={"Linf": predicted, "L2": 2.0},
                   series=_series(records, ["L2", "Linf"]))


def run_green_dirac(cfg) -> Outcome:
    if not isinstance(cfg.surface, UnitSphere):
        raise ConfigParse("GreenDirac needs the unit sphere (series reference)")
    weight = _get(cfg, "weight", "1.0", float)
    anchor = _point(_get(cfg, "anchor", "0 0 1"))
    truncation = _get(cfg, "truncation", "2000", int)
    records = []
    ref = None
    for level in cfg.levels:
        mesh = build_mesh(cfg.surface, level)
        node, w = atom_at_point(mesh, anchor, weight)
        point = mesh.vertices[node]
        if ref is None:
            ref = LegendreReference(point, truncation, weight)
        elif not np.allclose(point, ref.anchor, atol=1e-12):
            raise ConfigParse("the point mass must sit on a node shared by all levels")
        u = GreenProblem(cfg.surface, MeasureData(atoms=[(node, w)])).solve(mesh, cfg.solver)
        records.append(_record(
            mesh, err_l2=lifted_error(mesh, cfg.surface, u, ref, "L2", singular_point=point)))
    return Outcome(records, eoc(records, "L2"), 0.9, "L2",
                   extra={"anchor": ref.anchor.tolist(), "truncation": truncation},
                   guides={"L2": 1.0}, series=_series(records, ["L2"]))


def control_problem(cfg, defaults) -> ControlProblem:
    d = dict(defaults)
    d.update({k: v for k, v in cfg.data.items() if k in d})
    return ControlProblem(cfg.surface, float(d["alpha"]), parse_field(d["y0"]),
                          parse_field(d["u0"]), parse_field(d["bound"]), cfg.control_space)


INACTIVE_DEFAULTS = {"alpha": "1.0", "y0": "sqrt(5/(4*pi))*(3*z**2 - 1)/2", "u0": "0",
                     "bound": "1e6"}
ACTIVE_DEFAULTS = {"alpha": "0.1", "y0": "4*exp(z - 1)", "u0": "0", "bound": "2.0"}


def inactive_solution(prob: ControlProblem, degree: int):
    """Closed-form control and state when the bound never binds.

    Per degree ``l`` with ``g = 1 / (l(l+1) + 1)``:
    ``u = (alpha u0 + g y0) / (alpha + g^2)`` and ``y = g u``.
    """
    y0 = HarmonicExpansion.from_field(prob.y0, degree)
    u0 = HarmonicExpansion.from_field(prob.u0, degree)
    a = prob.alpha
    g = lambda l: 1.0 / (l * (l + 1) + 1)
    u = u0.scaled(lambda l: a / (a + g(l) ** 2)) + y0.scaled(lambda l: g(l) / (a + g(l) ** 2))
    return u, spectral_green(u)


def run_control_inactive(cfg) -> Outcome:
    if not isinstance(cfg.surface, UnitSphere):
        raise ConfigParse("ControlInactive needs the unit sphere (spectral reference)")
    prob = control_problem(cfg, INACTIVE_DEFAULTS)
    u_exact, y_exact = inactive_solution(prob, _get(cfg, "spectral_degree", "2", int))
    meshes = [build_mesh(cfg.surface, l) for l in cfg.levels]
    sols = solve_pdas_sequence(prob, meshes, cfg.pdas)
    records, residuals = [], []
    u_ref, y_ref = SpectralReference(u_exact), SpectralReference(y_exact)
    for mesh, sol in zip(meshes, sols):
        if sol.active_set.any():
            raise ConfigParse("the bound is active; this is not an inactive instance")
        records.append(_record(
            mesh,
            err_l2=lifted_error(mesh, cfg.surface, sol.y, y_ref, "L2"),
            err_h1=lifted_error(mesh, cfg.surface, sol.y, y_ref, "H1"),
            err_u=lifted_error(mesh, cfg.surface, sol.u, u_ref, "U")))
        residuals.append(sol.residuals)
    worst = max(max(r.values()) for r in residuals)
    orders = eoc(records, "U")
    return Outcome(records, orders, 1.0, "U",
                   extra={"max_kkt_residual": worst, "kkt_residuals": residuals,
                          "iterations": [s.iterations for s in sols]},
                   guides={"U": 2.0, "H1": 1.0},
                   series=_series(records, ["U", "L2", "H1"]),
                   passed=bool(min(orders) >= 1.0 and worst <= 1e-9))


def run_control_active(cfg) -> Outcome:
    prob = control_problem(cfg, ACTIVE_DEFAULTS)
    meshes = [build_mesh(cfg.surface, l) for l in cfg.levels]
    sols = solve_pdas_sequence(prob, meshes, cfg.pdas)
    cached = fine_mesh_reference(prob, max(cfg.levels) + cfg.reference_offset, cfg.solver,
                                 cfg.pdas, use_cache=cfg.use_cache,
                                 finest_level=max(cfg.levels))
    y_ref = cached.reference
    u_ref = ControlReference(y_ref, prob)
    records, residuals = [], []
    for mesh, sol in zip(meshes, sols):
        records.append(_record(
            mesh,
            err_l2=lifted_error(mesh, cfg.surface, sol.y, y_ref, "L2"),
            err_h1=lifted_error(mesh, cfg.surface, sol.y, y_ref, "H1"),
            err_u=lifted_error(mesh, cfg.surface, sol.u, u_ref, "U")))
        residuals.append(kkt_residuals(prob, mesh, sol))
    combined = [ErrorRecord(r.level, r.h, r.gamma, err_l2=r.err_u + r.err_h1) for r in records]
    orders = eoc(combined, "L2")
    bounds = uniform_bounds_probe(sols) if len(sols) >= 3 else None
    worst = max(max(v for k, v in r.items() if k != "inactive_multipliers") for r in residuals)
    series = _series(records, ["U", "H1", "L2"])
    series["U+H1"] = ([r.h for r in records], [r.err_u + r.err_h1 for r in records])
    return Outcome(records, orders, 0.5, "U+H1",
                   extra={"eoc_u": eoc(records, "U"), "eoc_h1": eoc(records, "H1"),
                          "smooth_multiplier_band": bool(min(orders) >= 0.85),
                          "active_nodes": [int(s.active_set.sum()) for s in sols],
                          "multiplier_mass": [float(s.multipliers.sum()) for s in sols],
                          "u_max": [float(np.max(np.abs(s.u.nodal()))) for s in sols],
                          "iterations": [s.iterations for s in sols],
                          "max_kkt_residual": worst, "kkt_residuals": residuals,
                          "uniform_bounds": bounds,
                          "reference_level": y_ref.level,
                          "reference_from_cache": cached.from_cache},
                   guides={"U+H1": 0.5, "U": 1.0},
                   series=series,
                   passed=bool(min(orders) >= 0.5 and worst <= 1e-9))


REGISTRY = {e.name: e for e in [
    Experiment("AreaDefect", "area of the polyhedral surface converges at second order",
               "L2", 1.9, (1, 6), run_area_defect),
    Experiment("GreenSmooth", "Green operator, smooth data: L2 error of order two",
               "L2", 1.9, (2, 6), run_green_smooth),
    Experiment("GreenLinfty", "Green operator, bounded data: max-norm error h^2 |log h|^2",
               "Linf", 1.7, (2, 6), run_green_linfty),
    Experiment("GreenSobolev", "Green operator, W^{1,s} data: max-norm error h^(3-2/s) |log h|",
               "Linf", 1.3, (3, 6), run_green_sobolev),
    Experiment("GreenDirac", "Green operator, point mass: L2 error of order one",
               "L2", 0.9, (2, 6), run_green_dirac),
    Experiment("ControlInactive", "control problem with inactive bound: exact KKT, control rate",
               "U", 1.0, (2, 6), run_control_inactive),
    Experiment("ControlActive", "state-constrained control: ||u-u_h|| + ||y-y_h||_H1 <= c h^(1/2)",
               "U+H1", 0.5, (2, 5), run_control_active),
]}
