import dataclasses

import numpy as np
import pytest

from lapbel.analysis import lifted_error
from lapbel.control import Box, ControlProblem, PdasConfig, check_slater, \
    kkt_residuals, prolong_active_set, reduced_hessian_matvec, solve_pdas, solve_pdas_sequence, \
    uniform_bounds_probe
from lapbel.errors import PdasNoConvergence, SlaterViolation
from lapbel.experiments import ACTIVE_DEFAULTS, INACTIVE_DEFAULTS, inactive_solution
from lapbel.fem import assemble_mass, assemble_operator
from lapbel.mesh import build_icosphere, build_torus_mesh
from lapbel.oracle import SpectralReference, control_reference, fine_mesh_reference
from lapbel.surface import Torus, UnitSphere

KKT_KEYS = ("state", "adjoint", "stationarity", "complementarity", "feasibility",
            "dual_feasibility", "inactive_multipliers")


def _active_problem(**over):
    d = dict(ACTIVE_DEFAULTS, **over)
    return ControlProblem(UnitSphere(), float(d["alpha"]), d["y0"], d["u0"], d["bound"])


def _inactive_problem():
    d = INACTIVE_DEFAULTS
    return ControlProblem(UnitSphere(), float(d["alpha"]), d["y0"], d["u0"], d["bound"])


def _assert_kkt(sol, tol=1e-9):
    for k in KKT_KEYS:
        assert sol.residuals[k] <= tol, (k, sol.residuals[k])
    assert sol.multipliers.min() >= 0.0
    assert np.all(sol.multipliers[~sol.active_set] == 0.0)


def test_alpha_must_be_positive():
    with pytest.raises(ValueError):
        ControlProblem(UnitSphere(), 0.0, "z")


def test_inactive_instance_matches_the_diagonal_solution():
    prob = _inactive_problem()
    u_exact, y_exact = inactive_solution(prob, 2)
    u_ref = SpectralReference(u_exact)
    pole = np.array([[0.0, 0.0, 1.0]])
    y20 = np.sqrt(5 / (4 * np.pi))
    assert u_exact(pole)[0] == pytest.approx(7 / 50 * y20)
    assert y_exact(pole)[0] == pytest.approx(1 / 50 * y20)
    errs, hs = [], []
    for sol, level in zip(solve_pdas_sequence(prob, [build_icosphere(l) for l in (2, 3, 4)]),
                          (2, 3, 4)):
        _assert_kkt(sol)
        assert not sol.active_set.any()
        mesh = build_icosphere(level)
        errs.append(lifted_error(mesh, UnitSphere(), sol.u, u_ref, "U"))
        hs.append(mesh.h)
    assert (np.diff(np.log(errs)) / np.diff(np.log(hs))).min() >= 1.0


def test_zero_problem_has_zero_solution():
    prob = ControlProblem(UnitSphere(), 1.0, 0.0, 0.0, 0.5)
    sol = solve_pdas(prob, build_icosphere(2))
    for v in (sol.y.coefficients, sol.p.coefficients, sol.u.nodal(), sol.multipliers):
        assert np.all(v == 0.0)
    assert all(sol.residuals[k] == 0.0 for k in KKT_KEYS)


@pytest.fixture(scope="module")
def active_level3():
    prob = _active_problem()
    return prob, build_icosphere(3), solve_pdas(prob, build_icosphere(3))


def test_active_instance_satisfies_kkt(active_level3):
    prob, mesh, sol = active_level3
    _assert_kkt(sol)
    assert sol.active_set.any()
    assert sol.iterations <= 50
    assert np.max(sol.y.coefficients) <= 2.0 + 1e-9
    assert kkt_residuals(prob, mesh, sol) == pytest.approx(sol.residuals, abs=1e-15)


def test_multiplier_perturbation_shows_in_the_adjoint_residual(active_level3):
    prob, mesh, sol = active_level3
    j = int(np.flatnonzero(sol.active_set)[0])
    mu = sol.multipliers.copy()
    mu[j] += 1.0
    bumped = dataclasses.replace(sol, multipliers=mu)
    assert kkt_residuals(prob, mesh, bumped)["adjoint"] == pytest.approx(1.0, abs=1e-9)


def test_solution_does_not_depend_on_the_initial_active_set(active_level3):
    prob, mesh, sol = active_level3
    other = solve_pdas(prob, mesh, PdasConfig(initial_active_set="unconstrained"))
    np.testing.assert_array_equal(other.active_set, sol.active_set)
    for a, b in ((other.y.coefficients, sol.y.coefficients),
                 (other.p.coefficients, sol.p.coefficients),
                 (other.multipliers, sol.multipliers)):
        np.testing.assert_allclose(a, b, atol=1e-9)


def test_scaling_the_data_scales_the_solution(active_level3):
    prob, mesh, sol = active_level3
    big = solve_pdas(prob.scaled(2.0), mesh)
    for a, b in ((big.y.coefficients, sol.y.coefficients), (big.p.coefficients, sol.p.coefficients),
                 (big.u.nodal(), sol.u.nodal()), (big.multipliers, sol.multipliers)):
        np.testing.assert_allclose(a, 2.0 * b, rtol=1e-9, atol=1e-9 * np.abs(b).max())


def test_slater_check():
    mesh = build_icosphere(2)
    assert check_slater(_active_problem(), mesh) == pytest.approx(1.0, abs=1e-9)
    bad = ControlProblem(UnitSphere(), 0.1, "z", bound=1.0, slater_control=2.0)
    with pytest.raises(SlaterViolation):
        check_slater(bad, mesh)
    with pytest.raises(SlaterViolation):
        solve_pdas(bad, mesh)


def test_iteration_cap():
    with pytest.raises(PdasNoConvergence):
        solve_pdas(_active_problem(), build_icosphere(3), PdasConfig(max_iterations=1))


def test_cold_start_iteration_count_stays_below_the_cap():
    for level in (2, 3, 4):
        assert solve_pdas(_active_problem(), build_icosphere(level)).iterations <= 50


def test_reduced_hessian_is_symmetric_positive_definite(rng):
    mesh = build_icosphere(3)
    K, M = assemble_operator(mesh), assemble_mass(mesh)
    for _ in range(10):
        v, w = rng.normal(size=(2, mesh.n_vertices))
        hv, hw = reduced_hessian_matvec(K, M, 0.1, v), reduced_hessian_matvec(K, M, 0.1, w)
        assert abs(w @ hv - v @ hw) <= 1e-9 * max(1.0, abs(w @ hv))
        assert v @ hv > 0


def test_box_bounded_controls():
    prob = _active_problem()
    mesh = build_icosphere(3)
    free = solve_pdas(prob, mesh)
    # clip the smallest controls, away from the contact region at the pole
    lower = float(np.quantile(free.u.nodal(), 0.3))
    boxed = ControlProblem(prob.desc, prob.alpha, prob.y0, prob.u0, prob.bound, Box(lower, np.inf))
    sol = solve_pdas(boxed, mesh)
    _assert_kkt(sol)
    assert sol.active_set.any()
    assert sol.u.nodal().min() >= lower
    assert np.any(sol.u.nodal() == lower)
    with pytest.raises(ValueError):
        Box(1.0, 0.0)


def test_prolongation_keeps_the_interior_of_the_active_set():
    coarse, fine = build_icosphere(2), build_icosphere(3)
    active = coarse.vertices[:, 2] > 0.5
    out = prolong_active_set(coarse, fine, active)
    np.testing.assert_array_equal(out[: coarse.n_vertices], active)
    assert out.sum() >= active.sum()
    # torus grids are not bisection-nested by index; the locator fallback applies
    t0, t1 = build_torus_mesh(0), build_torus_mesh(1)
    np.testing.assert_array_equal(prolong_active_set(t0, t1, np.ones(t0.n_vertices, bool)),
                                  np.ones(t1.n_vertices, bool))


def test_torus_control_solve():
    prob = ControlProblem(Torus(), 0.1, "4*exp(x/2 - 1)", 0.0, 1.0)
    sol = solve_pdas(prob, build_torus_mesh(1))
    _assert_kkt(sol)
    assert sol.active_set.any()


def test_uniform_bounds():
    meshes = [build_icosphere(l) for l in (2, 3, 4)]
    report = uniform_bounds_probe(solve_pdas_sequence(_active_problem(), meshes))
    assert all(report[k]["pass"] for k in ("y_l2", "u_l2", "mu_mass"))
    inactive = uniform_bounds_probe(solve_pdas_sequence(_inactive_problem(), meshes))
    assert inactive["mu_mass"]["values"] == [0.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        uniform_bounds_probe(solve_pdas_sequence(_active_problem(), meshes[:2]))


def test_fine_reference_agrees_with_the_spectral_solution():
    prob = _inactive_problem()
    cached = fine_mesh_reference(prob, 5, finest_level=3)
    _, _, u_fine = control_reference(cached, prob)
    u_exact, _ = inactive_solution(prob, 2)
    pts = build_icosphere(3).vertices
    assert np.abs(u_fine.value(pts) - u_exact(pts)).max() <= build_icosphere(5).h


def _active_eocs(ref_level):
    prob = _active_problem()
    levels = (2, 3, 4)
    sols = solve_pdas_sequence(prob, [build_icosphere(l) for l in levels])
    y_ref, _, u_ref = control_reference(fine_mesh_reference(prob, ref_level, finest_level=4), prob)
    errs, hs = [], []
    for l, s in zip(levels, sols):
        mesh = build_icosphere(l)
        errs.append(lifted_error(mesh, UnitSphere(), s.u, u_ref, "U")
                    + lifted_error(mesh, UnitSphere(), s.y, y_ref, "H1"))
        hs.append(mesh.h)
    return np.diff(np.log(errs)) / np.diff(np.log(hs))


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="a +2 reference still carries a quarter of a first-order error")
def test_control_rates_do_not_depend_on_the_reference_level():
    np.testing.assert_allclose(_active_eocs(6), _active_eocs(7), atol=0.05)
