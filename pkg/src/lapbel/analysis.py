"""Error norms of lifted discrete functions, convergence orders and tables."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import IncompatibleReference, InsufficientData, ZeroError
from .fem import DEGREE4, graded_rule, quadrature_points, singular_triangles, triangle_rule
from .fem import _rotate_to_corner
from .fields import Field
from .oracle import FieldReference, ReferenceSolution

NORMS = ("L2", "H1", "Linf", "U")
CSV_HEADER = ["experiment", "level", "h", "gamma", "err_l2", "err_h1", "err_linf", "err_u",
              "eoc_l2", "eoc_h1", "eoc_linf", "eoc_u"]
_COLUMN = {"L2": "err_l2", "H1": "err_h1", "Linf": "err_linf", "U": "err_u"}


@dataclass
class ErrorRecord:
    level: int
    h: float
    gamma: float = float("nan")
    err_l2: float | None = None
    err_h1: float | None = None
    err_linf: float | None = None
    err_u: float | None = None

    def __post_init__(self):
        for name in ("err_l2", "err_h1", "err_linf", "err_u"):
            v = getattr(self, name)
            if v is not None and not v >= 0:
                raise ValueError(f"{name} must be non-negative, got {v}")

    def error(self, norm: str):
        return getattr(self, _COLUMN[norm])


@dataclass(frozen=True)
class RateSpec:
    expected_order: float
    log_power: float = 0.0
    norm: str = "L2"

    def __post_init__(self):
        if self.norm not in NORMS:
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.log_power not in (0, 0.5, 1, 2):
            raise ValueError(f"log power must be one of 0, 0.5, 1, 2; got {self.log_power}")
        allowed = self.expected_order in (0.5, 1, 2) or 0.5 < self.expected_order < 1.0 \
            or 1.0 < self.expected_order < 2.0
        if not allowed:
            raise ValueError(f"unsupported expected order {self.expected_order}")


def _as_reference(ref, desc):
    if isinstance(ref, ReferenceSolution):
        return ref
    if isinstance(ref, Field) or callable(ref):
        return FieldReference(ref, desc)
    raise IncompatibleReference(f"cannot measure against {ref!r}")


def _graded_override(mesh, singular_point, rule):
    """Per-triangle barycentric rules for triangles touching a singular node."""
    if singular_point is None:
        return {}
    tri, corner = singular_triangles(mesh, singular_point)
    g = graded_rule(rule)
    return {int(t): (_rotate_to_corner(g, int(k)), g.weights) for t, k in zip(tri, corner)}


def lifted_error(mesh, desc, fh, ref, norm: str = "L2", rule=DEGREE4, cap=None,
                 singular_point=None) -> float:
    """Distance between a reference on ``S`` and the lift of ``fh``.

    Quadrature runs over the flat triangles; the reference is evaluated at
    the closest points of the quadrature points.  ``cap = (center, radius)``
    excludes a geodesic disc from the maximum norm.  ``singular_point``
    switches triangles at that node to a graded rule.
    """
    if norm not in NORMS:
        raise ValueError(f"unknown norm {norm!r}")
    ref = _as_reference(ref, desc)
    if getattr(fh, "mesh", mesh) is not mesh and fh.mesh.mesh_id != mesh.mesh_id:
        raise IncompatibleReference("discrete function lives on a different mesh")
    pts, w = quadrature_points(mesh, rule)
    q = desc.project(pts.reshape(-1, 3))
    diff = ref.value(q).reshape(w.shape) - fh.at_bary(rule.bary)

    if norm == "Linf":
        allv = np.concatenate([np.abs(diff).ravel(), np.abs(_vertex_diff(mesh, fh, ref))])
        allp = np.concatenate([q, mesh.vertices])
        if cap is not None:
            center, radius = cap
            c = np.asarray(center, dtype=float)
            c = c / np.linalg.norm(c)
            ang = np.arccos(np.clip(allp @ c / np.linalg.norm(allp, axis=1), -1.0, 1.0))
            allv = allv[ang >= radius]
        return float(allv.max(initial=0.0))

    sq = diff ** 2 * w
    overrides = _graded_override(mesh, singular_point, rule)
    for t, (bary, gw) in overrides.items():
        p = bary @ mesh.corners[t]
        d = ref.value(desc.project(p)) - fh.at_bary(bary, np.full(len(bary), t))
        sq[t] = 0.0
        sq[t, 0] = np.sum(d ** 2 * gw) * mesh.areas[t]
    total = float(np.sum(sq))
    if norm in ("L2", "U"):
        return math.sqrt(total)

    if not ref.supports_gradient:
        raise IncompatibleReference(f"{type(ref).__name__} cannot supply gradients")
    g_ref = ref.gradient(q).reshape(w.shape + (3,))
    n = mesh.unit_normals
    g_ref = g_ref - np.einsum("mqd,md->mq", g_ref, n)[..., None] * n[:, None, :]
    g_h = fh.gradients()
    gd = np.sum((g_ref - g_h[:, None, :]) ** 2, axis=2)
    return math.sqrt(total + float(np.sum(gd * w)))


def _vertex_diff(mesh, fh, ref):
    # vertices of S_h lie on S, so no projection is needed
    m = mesh.n_vertices
    tri = np.empty(m, dtype=np.int64)
    corner = np.empty(m, dtype=np.int64)
    flat = mesh.triangles.ravel()
    order = np.arange(flat.size)
    tri[flat] = order // 3
    corner[flat] = order % 3
    bary = np.zeros((m, 3))
    bary[np.arange(m), corner] = 1.0
    return ref.value(mesh.vertices) - fh.at_bary(bary, tri)


def quadrature_crosscheck(mesh, desc, fh, ref, norm="L2", degree=7) -> float:
    """Relative change of an error norm when the degree-4 rule is replaced."""
    a = lifted_error(mesh, desc, fh, ref, norm, DEGREE4)
    b = lifted_error(mesh, desc, fh, ref, norm, triangle_rule(degree))
    return abs(a - b) / max(abs(b), np.finfo(float).tiny)


def _check_h(records):
    h = np.array([r.h for r in records])
    if np.any(np.diff(h) >= 0):
        raise ValueError("mesh sizes must decrease strictly across records")
    return h


def eoc(records, norm: str = "L2", saturate: bool = False) -> list:
    """Orders ``log(e_i / e_{i+1}) / log(h_i / h_{i+1})`` between consecutive records.

    >>> recs = [ErrorRecord(0, 0.2, err_l2=1e-2), ErrorRecord(1, 0.1, err_l2=2.5e-3)]
    >>> [round(x, 12) for x in eoc(recs)]
    [2.0]
    """
    if len(records) < 2:
        raise InsufficientData("EOC needs at least two records")
    h = _check_h(records)
    e = [r.error(norm) for r in records]
    if any(v is None for v in e):
        raise ValueError(f"norm {norm} is not recorded for every level")
    out = []
    for i in range(len(e) - 1):
        if e[i] == 0.0 or e[i + 1] == 0.0:
            if not saturate:
                raise ZeroError(f"zero {norm} error between levels "
                                f"{records[i].level} and {records[i + 1].level}")
            out.append(math.inf)
            continue
        out.append(math.log(e[i] / e[i + 1]) / math.log(h[i] / h[i + 1]))
    return out


def fit_rate_with_log(records, spec: RateSpec) -> dict:
    """Least-squares fit of ``log e = c + p log h + k log|log h|`` with ``k`` fixed."""
    if len(records) < 4:
        raise InsufficientData("log-corrected fit needs at least four records")
    h = _check_h(records)
    e = np.array([r.error(spec.norm) for r in records], dtype=float)
    if np.any(e <= 0):
        raise ZeroError("cannot fit a rate through zero errors")
    lh = np.log(h)
    target = np.log(e) - spec.log_power * np.log(np.abs(lh))
    A = np.stack([np.ones_like(lh), lh], axis=1)
    coef, *_ = np.linalg.lstsq(A, target, rcond=None)
    resid = target - A @ coef
    return {"order": float(coef[1]), "log_power_fixed": float(spec.log_power),
            "residual": float(np.sqrt(np.mean(resid ** 2)))}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_rows(experiment: str, records) -> list:
    """Rows of the convergence table, header first."""
    cols = {}
    for norm in NORMS:
        if all(r.error(norm) is not None for r in records) and len(records) >= 2:
            cols[norm] = [None] + eoc(records, norm, saturate=True)
        else:
            cols[norm] = [None] * len(records)
    rows = [CSV_HEADER]
    for i, r in enumerate(records):
        rows.append([experiment, str(r.level), _fmt(float(r.h)), _fmt(float(r.gamma)),
                     _fmt(r.err_l2), _fmt(r.err_h1), _fmt(r.err_linf), _fmt(r.err_u),
                     _fmt(cols["L2"][i]), _fmt(cols["H1"][i]), _fmt(cols["Linf"][i]),
                     _fmt(cols["U"][i])])
    return rows


def write_csv(path, experiment: str, records) -> None:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(csv_rows(experiment, records))
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
