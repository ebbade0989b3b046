from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poroslip import cell, coefficients, fem, geometry, macro
from poroslip.errors import ConfigError, MeshMismatch, MissingK, OutOfRegion
from poroslip.geometry import build_phase_cell
from poroslip.laplace import WeeksContour
from poroslip.verify import modal_problem

from conftest import materials


def _sine2d(lam, x):
    return np.stack([np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]), 0.5 * np.sin(np.pi * x[:, 0])], 1) / lam


@pytest.fixture(scope="module")
def disk_coefficients():
    c = build_phase_cell(2, 8, geometry.disk_indicator(0.3), materials())
    return c, coefficients.homogenize(c, lambdas=[1.5, 2.0, 3.0, 2 + 1j, 2 - 1j])


def _problem(co, elements=(8, 8), lambdas=(2.0,), **kw):
    return macro.MacroProblem([1.0, 1.0], list(elements), co, 2.0, 1.0, kw.pop("forcing", _sine2d), list(lambdas), **kw)


@pytest.mark.parametrize("lam", [2.0, 2 + 0.5j])
def test_modal_oracle_second_order(lam):
    errs = []
    for n in (32, 64, 128):
        prob, exact = modal_problem(n, lam)
        errs.append(macro.l2_error(macro.solve_macro(prob), 0, exact))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9)
    assert errs[-1] < 5e-6


def test_system_is_complex_symmetric(disk_coefficients):
    _, co = disk_coefficients
    sysm = macro.assemble_macro(_problem(co), 2 + 1j)
    A = sysm.matrix
    assert abs(A - A.T).max() < 1e-12 * abs(A).max()
    assert sysm.n_u + sysm.n_p == A.shape[0]


def test_conjugate_parameters(disk_coefficients):
    _, co = disk_coefficients
    sol = macro.solve_macro(_problem(co, lambdas=[2 + 1j, 2 - 1j]))
    assert np.abs(sol.u[0] - sol.u[1].conj()).max() < 1e-12
    assert np.abs(sol.p[0] - sol.p[1].conj()).max() < 1e-12
    assert max(sol.residuals) < 1e-10


def test_closure_pressure_matches_solution(disk_coefficients):
    _, co = disk_coefficients
    sol = macro.solve_macro(_problem(co, elements=(12, 12)))
    p = sol.pressure_from_closure(0)
    assert np.abs(p - sol.p[0]).max() < 1e-10 * np.abs(sol.p[0]).max()


def test_linearity_in_forcing(disk_coefficients):
    _, co = disk_coefficients
    a = macro.solve_macro(_problem(co))
    b = macro.solve_macro(_problem(co, forcing=lambda l, x: 3 * _sine2d(l, x)))
    z = macro.solve_macro(_problem(co, forcing=lambda l, x: 0 * x))
    assert np.allclose(b.u[0], 3 * a.u[0], atol=1e-13)
    assert np.abs(z.u[0]).max() == 0 and np.abs(z.p[0]).max() == 0


def test_homogeneous_dirichlet_on_boundary(disk_coefficients):
    _, co = disk_coefficients
    sol = macro.solve_macro(_problem(co))
    assert np.abs(sol.u[0][sol.mesh.boundary_nodes]).max() == 0
    u, p = sol.evaluate(0, [[0.5, 0.5], [0.0, 0.3]])
    assert np.abs(u[1]).max() == 0
    assert sol.probe([[0.5, 0.5]]).shape == (1, 1, 3)


def test_region_and_permeability_errors(disk_coefficients):
    _, co = disk_coefficients
    with pytest.raises(OutOfRegion):
        macro.solve_macro(_problem(co, lambdas=[0.5 + 3j]))
    with pytest.raises(MissingK):
        macro.solve_macro(_problem(co, lambdas=[2 + 2j]))
    with pytest.raises(MissingK):
        macro.solve_macro(_problem(co, lambdas=[5.0]))
    with pytest.raises(MissingK):
        macro.solve_macro(_problem(co, K=np.eye(3)))


def test_permeability_overrides(disk_coefficients):
    _, co = disk_coefficients
    K = np.diag([0.01, 0.02])
    a = macro.solve_macro(_problem(co, lambdas=[7.0], K=K))
    b = macro.solve_macro(_problem(co, lambdas=[7.0], K=lambda lam: K))
    assert np.array_equal(a.u[0], b.u[0])
    assert np.array_equal(a.K[0], K)


def test_log_interpolation_of_scaled_permeability():
    # lam^2 K linear in log(lam) is reproduced exactly
    A, B = np.diag([1.0, 2.0]), np.array([[0.5, 0.1], [0.1, 0.3]])
    samples = [(l, (A + B * np.log(l)) / l**2) for l in (1.0, 2.0, 8.0)]
    for lam in (1.3, 4.0, 7.9):
        K = macro.interpolate_K(samples, lam, 1.0)
        assert np.allclose(lam**2 * K, A + B * np.log(lam))
    assert macro.interpolate_K(samples, 2.0, 1.0) is samples[1][1]


@pytest.mark.parametrize(
    "extent, elements, err",
    [([1.0, 1.0], [4], ConfigError), ([1.0] * 3, [2] * 3, ConfigError), ([1.0], [4], ConfigError)],
)
def test_problem_validation(disk_coefficients, extent, elements, err):
    _, co = disk_coefficients
    with pytest.raises(err):
        macro.MacroProblem(extent, elements, co, 2.0, 1.0, _sine2d)


def test_box_averages(disk_coefficients):
    _, co = disk_coefficients
    sol = macro.solve_macro(_problem(co))
    fine = sol.box_averages(0, (4, 4))
    coarse = sol.box_averages(0, (1, 1))
    assert np.allclose(fine.mean(axis=0), coarse[0])
    with pytest.raises(MeshMismatch):
        sol.box_averages(0, (3, 3))


def test_driving_force_projection(disk_coefficients):
    _, co = disk_coefficients
    sol = macro.solve_macro(_problem(co))
    F, x = sol.driving_force(0)
    assert F.shape == x.shape
    P = macro.project_driving_force(sol, 0)
    assert P.shape == (sol.mesh.n_nodes, 2)
    ur = sol.mean_relative(0)
    assert np.allclose(ur, np.einsum("ij,eqj->eqi", sol.K[0], F))


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_six_dimensional_form_is_coercive(disk_coefficients, seed):
    c, co = disk_coefficients
    m = c.materials
    lam = 2 + 1j
    mesh = fem.build_periodic_mesh(c, 2)
    grams = macro.cell_grams(cell.solve_theta(mesh, lam, m.mu, m.rho_f, m.alpha))
    prob = _problem(co, elements=(4, 4), lambdas=[lam])
    rng = np.random.default_rng(seed)
    n = prob.mesh.n_nodes
    interior = ~prob.mesh.boundary_nodes[:, None]
    pair = tuple(interior * (rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))) for _ in range(2))
    val = macro.six_dimensional_form(prob, lam, grams, m.mu, m.alpha, pair, pair)
    assert val.real > 0


def test_six_dimensional_load_matches_reduced_rhs(disk_coefficients):
    _, co = disk_coefficients
    prob = _problem(co, elements=(4, 4))
    n = prob.mesh.n_nodes
    zero = np.zeros((n, 2))
    w = np.zeros((n, 2))
    w[~prob.mesh.boundary_nodes, 0] = 1.0
    val = macro.six_dimensional_load(prob, 2.0, np.zeros((2, 2)), (w, zero))
    x = prob.mesh.quadrature_points(np.arange(prob.mesh.n_elements))
    f = _sine2d(2.0, x.reshape(-1, 2)).reshape(x.shape)
    wq = np.einsum("qn,enc->eqc", prob.mesh.ref.N, w[prob.mesh.elem_nodes])
    assert val == pytest.approx(np.einsum("q,eqc,eqc->", prob.mesh.quad_weights, f, wq) / 2.0)


def test_time_traces_converge_in_contour_size():
    prob, _ = modal_problem(32)
    times = [0.0, 0.5, 1.0, 2.0]
    # lam^2 K bounded, as for any cell response
    G = 4.0 * prob.coefficients.K_samples[0][1]
    step = macro.MacroProblem(
        prob.extent, prob.elements, prob.coefficients.with_K([]), prob.rho_s, prob.rho_f,
        lambda l, x: np.sin(np.pi * x) / l, K=lambda l: G / l**2,
    )
    a = macro.time_traces(step, WeeksContour(times, n=48), [[0.5]])
    b = macro.time_traces(step, WeeksContour(times, n=96), [[0.5]])
    assert a.shape == (4, 1, 2)
    assert np.abs(a - b).max() < 1e-6
    assert abs(a[0, 0, 0]) < 1e-6
