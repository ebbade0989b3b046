"""Self-checks of every module, run by ``poroslip verify``.

Each check returns a value, a tolerance and a verdict. Values are formatted
to seven significant digits so that reports are byte-identical across runs.
"""

from __future__ import annotations

import csv
import io as _io
import json
from dataclasses import dataclass

import numpy as np

from . import cell, coefficients, dns, fem, geometry, io, laplace, macro
from .geometry import MaterialParams, build_phase_cell
from .tensors import isotropic_voigt

SUITES = ("geometry", "fem", "cell", "coefficients", "macro", "laplace", "dns", "io")


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    value: float
    tolerance: float
    passed: bool

    def row(self) -> dict:
        return {
            "suite": self.suite,
            "name": self.name,
            "value": f"{self.value:.6e}",
            "tolerance": f"{self.tolerance:.1e}",
            "passed": bool(self.passed),
        }


def _below(suite, name, value, tol) -> Check:
    value = float(value)
    return Check(suite, name, value, tol, bool(np.isfinite(value) and value <= tol))


def _materials(alpha=1.0) -> MaterialParams:
    return MaterialParams(isotropic_voigt(2.0, 1.0, 2), 2.0, 1.0, 1.0, 0.5, 0.1, alpha)


def _channel(res=16, alpha=1.0):
    return build_phase_cell(2, res, geometry.slab_indicator(1, -0.25, 0.25), _materials(alpha))


def _channel_K(lam, width, mu, rho_f, alpha):
    a = 0.5 * width
    k = np.sqrt(lam * rho_f / (2 * mu))
    C = alpha / (2 * mu * k * np.sinh(k * a) + alpha * np.cosh(k * a))
    return (width - 2 * C * np.sinh(k * a) / k) / (lam**2 * rho_f)


def suite_geometry() -> list[Check]:
    c = build_phase_cell(2, 16, geometry.disk_indicator(0.3), _materials())
    fs, Pi = geometry.volume_fractions(c)
    iface = geometry.extract_interface(c)
    faces = sum(
        int(np.count_nonzero(c.phase != np.roll(c.phase, -1, axis=ax))) for ax in range(2)
    ) / 16.0
    return [
        _below("geometry", "volume fractions sum to one", abs(fs + Pi - 1.0), 1e-14),
        _below("geometry", "interface area equals stair-step count", abs(iface.total_area - faces), 1e-12),
        Check("geometry", "solid matrix is connected", float(geometry.solid_is_connected(c.phase)), 1.0, geometry.solid_is_connected(c.phase)),
    ]


def suite_fem() -> list[Check]:
    c = build_phase_cell(2, 8, geometry.disk_indicator(0.3), _materials())
    mesh = fem.build_periodic_mesh(c, 2)
    _, Pi = geometry.volume_fractions(c)
    M = fem.assemble_fluid_mass(mesh, 1.0).matrix
    ones = np.tile(np.array([1.0, 0.0]), mesh.n_fluid_dofs // 2)
    A = fem.assemble_elastic(mesh, c.materials.a).matrix
    ts = np.tile(np.array([0.0, 1.0]), mesh.n_solid_dofs // 2)
    B = fem.assemble_divergence(mesh, "fluid").matrix
    return [
        _below("fem", "fluid mass of a unit field equals porosity", abs(ones @ M @ ones - Pi), 1e-12),
        _below("fem", "translations lie in the elastic kernel", np.abs(A @ ts).max(), 1e-10),
        _below("fem", "divergence of a constant field vanishes", np.abs(B @ ones).max(), 1e-12),
    ]


def suite_cell() -> list[Check]:
    c = _channel(16)
    m = c.materials
    mesh = fem.build_periodic_mesh(c, 2)
    s = cell.solve_theta(mesh, 1.0, m.mu, m.rho_f, m.alpha)
    ref = _channel_K(1.0, 0.5, m.mu, m.rho_f, m.alpha)
    d = build_phase_cell(2, 8, geometry.disk_indicator(0.3), _materials())
    dm = fem.build_periodic_mesh(d, 2)
    sd = cell.solve_theta(dm, 1 + 2j, d.materials.mu, d.materials.rho_f, d.materials.alpha)
    return [
        _below("cell", "channel K11 matches the Robin closed form", abs(s.K[0, 0] - ref) / ref, 1e-6),
        _below("cell", "K is symmetric at a complex parameter", np.abs(sd.K - sd.K.T).max(), 1e-10),
        _below("cell", "load and energy routes agree", np.abs(s.K - s.K_energy).max() / np.abs(s.K).max(), 1e-9),
    ]


def suite_coefficients() -> list[Check]:
    mat = _materials()
    solid = build_phase_cell(2, 4, np.zeros((4, 4), dtype=np.uint8), mat, allow_single_phase=True)
    co = coefficients.homogenize(solid, lambdas=[])
    d = build_phase_cell(2, 8, geometry.disk_indicator(0.3), mat)
    static = cell.solve_static(fem.build_periodic_mesh(d, 2), mat.a)
    routes = coefficients.beta_routes(static)
    q = coefficients.compute_q(static)
    chk = coefficients.check_q(q)
    return [
        _below("coefficients", "homogeneous cell reproduces a", np.abs(co.q - mat.a).max(), 1e-8),
        _below("coefficients", "homogeneous cell has no pressure coupling", np.abs(co.beta_ij).max() + abs(co.beta), 1e-10),
        _below("coefficients", "beta routes agree", abs(routes["beta"][0] - routes["beta"][1]), 1e-9),
        _below("coefficients", "q symmetry defect", chk["symmetry_defect"], 1e-10),
        Check("coefficients", "q is positive definite", chk["min_eigenvalue"], 0.0, chk["min_eigenvalue"] > 0),
    ]


def modal_problem(n: int, lam: float = 2.0):
    """1D constant-coefficient macro problem and its modal solution."""
    rho_s, rho_f, q, beta, Pi, delta, K = 2.0, 1.0, 3.0, 0.4, 0.3, 1.5, 0.05
    coef = coefficients.EffectiveCoefficients(np.array([[q]]), np.array([[beta]]), 0.2, Pi, 1.0, delta, [(lam, np.array([[K]]))])
    rho = (1 - Pi) * rho_s + Pi * rho_f
    Bm, g = beta - Pi, lam**2 * rho_f
    A = np.array(
        [[lam**2 * rho - g * K * g + q * np.pi**2, g * K * np.pi + Bm * np.pi], [-Bm * np.pi - K * np.pi * g, 1 / delta + K * np.pi**2]]
    )
    U, P = np.linalg.solve(A, [1 - g * K, -K * np.pi])

    def exact(x):
        return U * np.sin(np.pi * x), P * np.cos(np.pi * x[:, 0])

    prob = macro.MacroProblem([1.0], [n], coef, rho_s, rho_f, lambda l, x: np.sin(np.pi * x), [lam])
    return prob, exact


def suite_macro() -> list[Check]:
    errs = []
    for n in (32, 64):
        prob, exact = modal_problem(n)
        errs.append(macro.l2_error(macro.solve_macro(prob), 0, exact))
    order = np.log2(errs[0] / errs[1])
    c = build_phase_cell(2, 8, geometry.disk_indicator(0.3), _materials())
    co = coefficients.homogenize(c, lambdas=[2 + 1j, 2 - 1j])

    def f(l, x):
        return np.stack([np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]), 0 * x[:, 0]], 1) / l

    sol = macro.solve_macro(macro.MacroProblem([1, 1], [8, 8], co, 2.0, 1.0, f, [2 + 1j, 2 - 1j]))
    return [
        _below("macro", "modal 1D error at 64 elements", errs[1], 2e-5),
        Check("macro", "observed convergence order", order, 1.8, order >= 1.8),
        _below("macro", "conjugate parameters give conjugate fields", np.abs(sol.u[0] - sol.u[1].conj()).max(), 1e-12),
        _below("macro", "system residual", max(sol.residuals), 1e-10),
    ]


def suite_laplace() -> list[Check]:
    t = np.linspace(0.0, 5.0, 11)
    step = laplace.invert(lambda s: 1 / (s * (s + 1)), t, method="talbot")
    ramp = laplace.invert(lambda s: 1 / s**2, t, method="talbot")
    wk = laplace.invert(lambda s: 1 / (s * (s + 1)), t, method="weeks")
    return [
        _below("laplace", "Talbot step response", np.abs(step - (1 - np.exp(-t))).max(), 1e-6),
        _below("laplace", "Talbot ramp", np.abs(ramp - t).max(), 1e-6),
        _below("laplace", "Weeks step response", np.abs(wk - (1 - np.exp(-t))).max(), 1e-6),
    ]


def suite_dns() -> list[Check]:
    c = _channel(4)

    def f(l, x):
        return np.stack([np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]), 0 * x[:, 0]], 1)

    r = dns.solve_eps_problem(dns.DnsConfig(0.25, c, 1.0, 2.0, f))
    z = dns.solve_eps_problem(dns.DnsConfig(0.25, c, 1.0, 2.0, None))
    return [
        _below("dns", "energy balance", r.balance, 1e-9),
        Check("dns", "coercivity witness", r.coercivity, 0.0, r.coercivity > 0),
        Check("dns", "interface energy is nonnegative", r.energy["interface"], 0.0, r.energy["interface"] >= 0),
        _below("dns", "zero load gives zero field", np.abs(z.solution).max(), 0.0),
        _below("dns", "residual", r.residual, 1e-9),
    ]


def suite_io() -> list[Check]:
    samples = [(1.5 + 0.25j, np.array([[0.1, 1e-17], [1 / 3, np.pi]]) * (1 - 2j))]
    text = io.k_table_text(samples)
    rows = list(csv.reader(_io.StringIO(text)))
    vals = [float(x) for x in rows[1]]
    K = samples[0][1]
    ref = [1.5, 0.25] + list(K.real.ravel()) + list(K.imag.ravel())
    mismatch = float(sum(a != b for a, b in zip(vals, ref)))
    co = coefficients.EffectiveCoefficients(np.eye(3) / 3, np.eye(2) / 7, 0.1, 0.3, 2.0, 1 / 3.1, samples)
    back = coefficients.EffectiveCoefficients.from_dict(json.loads(io.dumps(co.to_dict())))
    exact = float(np.array_equal(back.q, co.q) and np.array_equal(back.K_samples[0][1], K) and back.delta == co.delta)
    return [
        _below("io", "CSV values read back exactly", mismatch, 0.0),
        Check("io", "JSON report reads back bit-exactly", exact, 1.0, exact == 1.0),
    ]


def run_suites(names) -> list[Check]:
    table = {name: globals()[f"suite_{name}"] for name in SUITES}
    out = []
    for n in names:
        out.extend(table[n]())
    return out


def report(checks: list[Check]) -> dict:
    return {
        "schema_version": io.SCHEMA_VERSION,
        "checks": [c.row() for c in checks],
        "passed": all(c.passed for c in checks),
    }


def format_table(checks: list[Check]) -> str:
    lines = []
    for c in checks:
        verdict = "PASS" if c.passed else "FAIL"
        lines.append(f"{verdict}  {c.suite:<13} {c.name:<48} {c.value:.3e} (tol {c.tolerance:.1e})")
    return "\n".join(lines)
