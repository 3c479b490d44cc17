"""Experiment configuration files.

INI syntax, one experiment per file::

    [experiment]
    name = GreenDirac          ; see `lapbel list`
    levels = 2-6               ; a range "a-b" or a list "2, 3, 5"
    output = results/dirac     ; relative to the working directory

    [surface]
    name = sphere              ; or torus, with R and r
    R = 2.0
    r = 0.5

    [data]
    ; experiment-specific data, see the README
    weight = 1.0

    [solver]
    method = cg                ; or direct
    rel_tolerance = 1e-10
    max_iterations = 5000

    [pdas]
    max_iterations = 50
    initial_active_set = empty ; or unconstrained
    control_lower = -inf       ; box bounds, unbounded by default
    control_upper = inf

    [reference]
    offset = 2                 ; fine-mesh reference level above the finest level
    cache = yes
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .control import Box, FreeL2, PdasConfig
from .errors import ConfigParse, UnknownExperiment
from .solve import SolverConfig
from .surface import surface_by_name

_SECTIONS = {
    "experiment": {"name", "levels", "output"},
    "surface": {"name", "r", "R"},
    "data": None,
    "solver": {"method", "rel_tolerance", "max_iterations"},
    "pdas": {"max_iterations", "initial_active_set", "c", "tolerance",
             "control_lower", "control_upper"},
    "reference": {"offset", "cache"},
}


@dataclass
class ExperimentConfig:
    experiment: str
    surface: object
    levels: list
    output: Path
    data: dict = field(default_factory=dict)
    solver: SolverConfig = SolverConfig()
    pdas: PdasConfig = PdasConfig()
    control_space: object = FreeL2()
    reference_offset: int = 2
    use_cache: bool = True


def parse_levels(text: str) -> list:
    text = text.strip()
    try:
        if "-" in text and "," not in text:
            lo, hi = (int(v) for v in text.split("-"))
            levels = list(range(lo, hi + 1))
        else:
            levels = [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigParse(f"cannot read levels {text!r}") from None
    if len(levels) < 3:
        raise ConfigParse(f"levels must span at least three values, got {levels}")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigParse(f"levels must increase strictly, got {levels}")
    return levels


def _float(section, key, text):
    try:
        return float(text)
    except ValueError:
        raise ConfigParse(f"[{section}] {key}: not a number: {text!r}") from None


def _int(section, key, text):
    try:
        return int(text)
    except ValueError:
        raise ConfigParse(f"[{section}] {key}: not an integer: {text!r}") from None


def parse_config(text: str, registry=None) -> ExperimentConfig:
    """Read a configuration from a string; see the module docstring."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigParse(f"malformed configuration: {exc}") from exc
    for sec in cp.sections():
        if sec not in _SECTIONS:
            raise ConfigParse(f"unknown section [{sec}]")
        allowed = _SECTIONS[sec]
        if allowed is not None:
            extra = set(cp[sec]) - allowed
            if extra:
                raise ConfigParse(f"unknown keys in [{sec}]: {sorted(extra)}")
    if "experiment" not in cp or "name" not in cp["experiment"]:
        raise ConfigParse("[experiment] name is required")
    exp = cp["experiment"]
    name = exp["name"].strip()
    if registry is None:
        from .experiments import REGISTRY as registry
    if name not in registry:
        raise UnknownExperiment(f"unknown experiment {name!r}; choose from {sorted(registry)}")
    if "levels" in exp:
        levels = parse_levels(exp["levels"])
    else:
        lo, hi = registry[name].levels
        levels = list(range(lo, hi + 1))
    output = Path(exp.get("output", f"results/{name}"))

    surf = cp["surface"] if "surface" in cp else {}
    params = {k: _float("surface", k, v) for k, v in surf.items() if k != "name"}
    try:
        surface = surface_by_name(surf.get("name", "sphere").strip(), **params)
    except (ValueError, TypeError) as exc:
        raise ConfigParse(f"[surface] {exc}") from exc

    solver = SolverConfig()
    if "solver" in cp:
        s = cp["solver"]
        try:
            solver = SolverConfig(
                rel_tolerance=_float("solver", "rel_tolerance", s.get("rel_tolerance", "1e-10")),
                max_iterations=_int("solver", "max_iterations", s["max_iterations"])
                if "max_iterations" in s else None,
                method=s.get("method", "cg").strip())
        except ValueError as exc:
            raise ConfigParse(f"[solver] {exc}") from exc

    pdas = PdasConfig()
    space = FreeL2()
    if "pdas" in cp:
        p = cp["pdas"]
        tol = _float("pdas", "tolerance", p.get("tolerance", "1e-9"))
        init = p.get("initial_active_set", "empty").strip()
        if init not in ("empty", "unconstrained"):
            raise ConfigParse("[pdas] initial_active_set must be empty or unconstrained")
        pdas = PdasConfig(
            c=_float("pdas", "c", p["c"]) if "c" in p else None,
            max_iterations=_int("pdas", "max_iterations", p.get("max_iterations", "50")),
            tol_feas=tol, tol_dual=tol, tol_comp=tol, tol_residual=tol,
            initial_active_set=init)
        if "control_lower" in p or "control_upper" in p:
            try:
                space = Box(_float("pdas", "control_lower", p.get("control_lower", "-inf")),
                            _float("pdas", "control_upper", p.get("control_upper", "inf")))
            except ValueError as exc:
                raise ConfigParse(f"[pdas] {exc}") from exc

    ref = cp["reference"] if "reference" in cp else {}
    offset = _int("reference", "offset", ref.get("offset", "2"))
    if offset < 2:
        raise ConfigParse("[reference] offset must be at least 2")
    cache = str(ref.get("cache", "yes")).strip().lower()
    if cache not in ("yes", "no", "true", "false", "1", "0"):
        raise ConfigParse(f"[reference] cache must be yes or no, got {cache!r}")

    data = dict(cp["data"]) if "data" in cp else {}
    return ExperimentConfig(name, surface, levels, output, data, solver, pdas, space,
                            offset, cache in ("yes", "true", "1"))


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigParse(f"cannot read {path}: {exc}") from exc
    return parse_config(text)
