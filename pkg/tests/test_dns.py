from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from poroslip import coefficients, dns, macro
from poroslip.errors import ConfigError, GeometryError, MeshMismatch, NonCoercive
from poroslip.geometry import MaterialParams, build_phase_cell, slab_indicator
from poroslip.tensors import isotropic_voigt


def _sine(lam, x):
    return np.stack([np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]), 0 * x[:, 0]], 1)


@pytest.fixture(scope="module")
def band():
    mat = MaterialParams(isotropic_voigt(2.0, 1.0, 2), 2.0, 1.0, 2.0, 0.1, 0.05, 1.0)
    return build_phase_cell(2, 8, slab_indicator(1, -0.25, 0.25), mat)


@pytest.fixture(scope="module")
def coarse(band):
    return dns.solve_eps_problem(dns.DnsConfig(0.5, band, 1.0, 2.0, _sine))


def _macro(c, co, elements=32, lam=2.0, extent=1.0):
    m = c.materials
    return macro.solve_macro(macro.MacroProblem([extent] * 2, [elements] * 2, co, m.rho_s, m.rho_f, _sine, [lam]))


@pytest.mark.parametrize("lam", [2.0, 1.5 + 1j])
def test_energy_balance_and_coercivity(band, lam):
    r = dns.solve_eps_problem(dns.DnsConfig(0.5, band, 1.0, lam, _sine))
    assert r.residual < 1e-9
    assert r.balance < 1e-9
    assert r.coercivity > 0
    assert all(v >= 0 for v in r.energy.values())
    assert not r.conforming


def test_zero_load_gives_zero_field(band):
    r = dns.solve_eps_problem(dns.DnsConfig(0.5, band, 1.0, 2.0, None))
    assert np.abs(r.solution).max() == 0


def test_tiling_and_refinement(band):
    cfg = dns.DnsConfig(0.25, band, 1.0, 2.0, refine=2)
    ph = dns.tiled_phase(cfg)
    assert ph.shape == (64, 64)
    assert np.array_equal(ph[::2, ::2][:8, :8], band.phase)
    assert cfg.cells_across == 4


@pytest.mark.parametrize(
    "kw, err",
    [
        (dict(epsilon=0.3), ConfigError),
        (dict(epsilon=0.0), ConfigError),
        (dict(refine=0), ConfigError),
        (dict(lam=0.0), NonCoercive),
        (dict(lam=-1 + 2j), NonCoercive),
    ],
)
def test_config_validation(band, kw, err):
    args = dict(epsilon=0.5, cell=band, extent=1.0, lam=2.0) | kw
    with pytest.raises(err):
        dns.DnsConfig(**args)


def test_boundary_must_touch_solid(band):
    # a fluid band covering the whole outer frame leaves the solid floating
    phase = np.zeros((8, 8), dtype=np.uint8)
    phase[[0, -1], :] = 1
    phase[:, [0, -1]] = 1
    c = dataclasses.replace(band, phase=phase)
    with pytest.raises(GeometryError):
        dns.solve_eps_problem(dns.DnsConfig(1.0, c, 1.0, 2.0, _sine))


def test_phase_averages_partition_the_cell(coarse):
    av = coarse.phase_averages()
    assert av["total"].shape == (4, 2)
    # the band occupies half of every cell
    assert np.allclose(av["total"], 0.5 * av["solid"] + 0.5 * av["fluid"], atol=1e-14)


def test_conforming_solution_is_continuous(band):
    r = dns.solve_conforming(dns.DnsConfig(0.5, band, 1.0, 2.0, _sine))
    assert r.conforming
    assert r.energy["interface"] < 1e-20 * max(r.energy["elastic"], 1.0)
    assert r.balance < 1e-9


def test_gap_report_contents(band, coarse):
    co = coefficients.homogenize(band, lambdas=[2.0], viscous="symmetric")
    g = dns.homogenization_gap(coarse, _macro(band, co, 16))
    assert g["epsilon"] == 0.5 and g["lambda"] == [2.0, 0.0]
    assert g["gap"] == pytest.approx(dns.average_gap(g["fine_averages"]["total"], g["homogenized_averages"], 0.5, 2))
    assert set(g["energy_split"]) == {"elastic", "compression", "viscous", "interface"}


def test_gap_rejects_mismatched_macro(band, coarse):
    co = coefficients.homogenize(band, lambdas=[2.0, 3.0], viscous="symmetric")
    with pytest.raises(MeshMismatch):
        dns.homogenization_gap(coarse, _macro(band, co, 8, lam=3.0))
    with pytest.raises(MeshMismatch):
        dns.homogenization_gap(coarse, _macro(band, co, 8, extent=2.0))


def test_gap_decreases_without_compression_pressure(band):
    # With the pressure term suppressed the closure matches what the broken
    # space admits and the gap falls at roughly first order in epsilon.
    co = coefficients.homogenize(band, lambdas=[2.0], viscous="symmetric")
    co = dataclasses.replace(co, delta=1e-10)
    sol = _macro(band, co, 64)
    gaps = [
        dns.homogenization_gap(dns.solve_eps_problem(dns.DnsConfig(eps, band, 1.0, 2.0, _sine)), sol)["gap"]
        for eps in (0.5, 0.25, 0.125)
    ]
    assert np.all(np.diff(gaps) < 0)
    assert gaps[0] / gaps[-1] > 4
