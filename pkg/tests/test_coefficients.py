from __future__ import annotations

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poroslip import cell, coefficients, fem, geometry
from poroslip.coefficients import EffectiveCoefficients
from poroslip.errors import InsufficientSamples, MissingSolutions, SolverBreakdown
from poroslip.geometry import build_phase_cell, slab_indicator

from conftest import materials, random_cell
from oracles import isotropic_2d, laminate_stiffness, solid_fluid_laminate

SWAP = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 1]], dtype=float)


def _static(c, order=2):
    return cell.solve_static(fem.build_periodic_mesh(c, order), c.materials.a)


@settings(max_examples=10, deadline=None)
@given(
    st.floats(0.2, 5.0),
    st.floats(0.2, 5.0),
    st.floats(0.2, 5.0),
    st.floats(0.2, 5.0),
    st.integers(1, 7),
)
def test_two_solid_laminate_matches_closed_form(l1, s1, l2, s2, rows):
    res = 8
    A, B = isotropic_2d(l1, s1), isotropic_2d(l2, s2)
    field = np.where((np.arange(res) < rows)[None, :, None, None], A, B) * np.ones((res, res, 1, 1))
    mesh = fem.StructuredMesh(np.zeros((res, res), dtype=np.uint8), 1)
    q = coefficients.compute_q(cell.solve_static(mesh, field))
    ref = laminate_stiffness([A, B], [rows / res, 1 - rows / res])
    assert np.allclose(q, ref, rtol=1e-10, atol=1e-12)


def test_solid_fluid_band_matches_closed_form():
    c = build_phase_cell(2, 16, slab_indicator(1, -0.25, 0.25), materials())
    co = coefficients.homogenize(c, lambdas=[])
    ref = solid_fluid_laminate(c.materials.a, 0.5)
    assert co.beta == pytest.approx(ref["beta"], rel=1e-12)
    assert np.allclose(co.beta_ij, ref["beta_ij"], atol=1e-12)
    assert np.allclose(co.q, ref["q"], atol=1e-12)
    assert co.delta == pytest.approx(1 / (0.5 / c.materials.gamma + ref["beta"]))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_transposed_geometry_permutes_coefficients(seed):
    c = random_cell(seed, 12)
    t = build_phase_cell(2, 12, c.phase.T.copy(), c.materials)
    a, b = coefficients.homogenize(c, lambdas=[]), coefficients.homogenize(t, lambdas=[])
    assert np.allclose(SWAP @ a.q @ SWAP, b.q, atol=1e-12)
    assert np.allclose(a.beta_ij.T[::-1, ::-1], b.beta_ij, atol=1e-12)
    assert a.beta == pytest.approx(b.beta, rel=1e-12)


@pytest.mark.parametrize("scale", [0.5, 3.0])
def test_stiffness_scaling(scale):
    c = random_cell(4, 12)
    s = dataclasses.replace(c, materials=dataclasses.replace(c.materials, a=scale * c.materials.a))
    a, b = coefficients.homogenize(c, lambdas=[]), coefficients.homogenize(s, lambdas=[])
    assert np.allclose(b.q, scale * a.q, rtol=1e-10)
    assert np.allclose(b.beta_ij, a.beta_ij, atol=1e-12)
    assert b.beta == pytest.approx(a.beta / scale, rel=1e-10)


def test_beta_is_nonnegative_and_routes_agree():
    s = _static(random_cell(3, 16))
    beta_ij, beta = coefficients.compute_betas(s)
    assert beta > 0
    for load, energy in coefficients.beta_routes(s).values():
        assert load == pytest.approx(energy, abs=1e-12)
    assert np.allclose(beta_ij, beta_ij.T)


def test_missing_solutions():
    with pytest.raises(MissingSolutions):
        coefficients.compute_q(None)
    c = random_cell(0, 8)
    partial = cell.solve_static(fem.build_periodic_mesh(c, 2), c.materials.a, pairs=[(0, 0)])
    with pytest.raises(MissingSolutions):
        coefficients.compute_q(partial)
    with pytest.raises(MissingSolutions):
        coefficients.compute_permeability([])


def test_route_disagreement_is_reported():
    c = random_cell(0, 8)
    mesh = fem.build_periodic_mesh(c, 2)
    s = cell.solve_theta(mesh, 1.0, 0.1, 1.0, 1.0)
    bad = dataclasses.replace(s, K_energy=1.01 * s.K)
    with pytest.raises(SolverBreakdown):
        coefficients.compute_permeability([bad])
    static = _static(c)
    broken = dataclasses.replace(static, chi=1.5 * static.chi)
    with pytest.raises(SolverBreakdown):
        coefficients.compute_betas(broken)


def test_high_lambda_limit_of_synthetic_samples():
    L = np.array([[0.4, 0.0], [0.0, 0.3]])
    lams = np.logspace(3, 4, 6)
    samples = [(l, (L + 0.2 * l**-0.5 * np.eye(2) - 0.1 / l * np.eye(2)) / l**2) for l in lams]
    limit, err = coefficients.high_lambda_limit(samples, 1.0)
    assert np.allclose(limit, L, atol=1e-10)
    assert err < 1e-8


def test_high_lambda_limit_needs_samples():
    with pytest.raises(InsufficientSamples):
        coefficients.high_lambda_limit([(1 + 1j, np.eye(2))], 1.0)
    with pytest.raises(InsufficientSamples):
        coefficients.high_lambda_limit([(10.0, np.eye(2)), (1000.0, np.eye(2))], 1.0)


def test_high_lambda_limit_on_channel():
    c = build_phase_cell(2, 16, slab_indicator(1, -0.25, 0.25), materials())
    co = coefficients.homogenize(c, lambdas=np.logspace(3, 5, 7))
    limit, err = coefficients.high_lambda_limit(co.K_samples, c.materials.rho_f)
    mesh = fem.build_periodic_mesh(c, 2)
    ref = cell.mass_projection_limit(mesh)
    assert np.abs(limit - ref).max() < max(10 * err, 1e-3)


def test_homogenize_keeps_sample_order():
    c = random_cell(1, 8)
    lams = [3.0, 0.5, 1 + 1j]
    co = coefficients.homogenize(c, lambdas=lams, threads=2)
    assert [l for l, _ in co.K_samples] == [complex(l) for l in lams]
    assert co.K_at(0.5) is co.K_samples[1][1]
    assert co.K_at(0.51) is None
    assert co.K_at(0.51, atol=0.02) is co.K_samples[1][1]
    fs, Pi = geometry.volume_fractions(c)
    assert co.Pi == Pi
    assert co.delta == pytest.approx(coefficients.compute_delta(Pi, c.materials.gamma, co.beta))


def test_coefficient_dict_round_trip():
    co = coefficients.homogenize(random_cell(2, 8), lambdas=[1.0, 2 + 1j])
    back = EffectiveCoefficients.from_dict(co.to_dict())
    assert np.array_equal(back.q, co.q)
    assert np.array_equal(back.beta_ij, co.beta_ij)
    assert [l for l, _ in back.K_samples] == [l for l, _ in co.K_samples]
    for (_, a), (_, b) in zip(back.K_samples, co.K_samples):
        assert np.array_equal(a, b)
    swapped = co.with_K([(5.0, np.eye(2))])
    assert swapped.q is co.q and len(swapped.K_samples) == 1


def test_check_q_flags_asymmetry():
    q = np.diag([2.0, 2.0, 1.0])
    assert coefficients.check_q(q)["symmetry_defect"] == 0.0
    q[0, 1] = 0.1
    assert coefficients.check_q(q)["symmetry_defect"] == pytest.approx(0.05)
