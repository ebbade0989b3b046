"""Direct numerical solution of the fine-scale problem on a periodic composite.

The box ``(0, L)^2`` is tiled by ``L / eps`` copies per axis of a base cell
scaled by ``eps``. In the Laplace domain the displacement ``u`` (broken
across the interface) solves, for every ``w`` vanishing on the boundary,

    lam^2 (rho u, w) + c(u, w) + lam eps^2 b(u, w) + lam eps alpha ([u], [w])
        = (f, w)

with ``c`` the solid elasticity plus ``gamma div div`` on the fluid and
``b = eta div div + 2 mu e:e`` on the fluid.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem
from .errors import ConfigError, GeometryError, MeshMismatch, NonCoercive
from .fem import StructuredMesh
from .geometry import FLUID, SOLID, PhaseCell
from .linalg import solve

RTOL = 1e-9


@dataclass
class DnsConfig:
    """Fine-scale problem on ``(0, extent)^D``.

    Parameters
    ----------
    epsilon : float
        Cell size; ``extent / epsilon`` must be an integer.
    cell : PhaseCell
        Base cell (its materials are used throughout).
    extent : float
    lam : complex
    forcing : callable
        ``forcing(lam, x) -> (n, D)``.
    refine : int
        Subdivision of every cell voxel per axis.
    order : int
        Element degree.
    viscous : {"symmetric", "full"}
        ``2 mu e:e`` as in the fine-scale model, or ``2 mu grad:grad``.
    """

    epsilon: float
    cell: PhaseCell
    extent: float = 1.0
    lam: complex = 2.0
    forcing: Callable | None = None
    refine: int = 1
    order: int = 2
    viscous: str = "symmetric"

    def __post_init__(self):
        n = self.extent / self.epsilon if self.epsilon > 0 else 0.0
        if self.epsilon <= 0 or abs(n - round(n)) > 1e-9 * n or round(n) < 1:
            raise ConfigError(f"extent {self.extent} is not a whole number of cells of size {self.epsilon}")
        if not complex(self.lam).real > 0:
            raise NonCoercive(f"Re(lambda) must be positive, got {self.lam}")
        if self.refine < 1:
            raise ConfigError("refine must be at least 1")
        if self.cell.dim != 2:
            raise ConfigError("fine-scale solves are implemented in 2D only")

    @property
    def cells_across(self) -> int:
        return int(round(self.extent / self.epsilon))

    @property
    def dim(self) -> int:
        return self.cell.dim


def tiled_phase(config: DnsConfig) -> np.ndarray:
    """Phase labels of the whole domain, refined ``config.refine`` times per voxel."""
    n = config.cells_across
    ph = np.tile(config.cell.phase, (n,) * config.dim)
    for ax in range(config.dim):
        ph = np.repeat(ph, config.refine, axis=ax)
    return ph


def _check_boundary_solid(phase: np.ndarray):
    edges = [np.take(phase, idx, axis=ax) for ax in range(phase.ndim) for idx in (0, -1)]
    if not any(np.any(e == SOLID) for e in edges):
        raise GeometryError("the solid phase must touch the outer boundary")


@dataclass
class DnsForms:
    mass: sp.csr_matrix
    elastic: sp.csr_matrix
    compression: sp.csr_matrix
    viscous: sp.csr_matrix
    interface: sp.csr_matrix
    load: np.ndarray

    def matrix(self, lam: complex) -> sp.csr_matrix:
        lam = complex(lam)
        return (lam**2 * self.mass + self.elastic + self.compression + lam * self.viscous + lam * self.interface).tocsr()


def _block(A_s, A_f, ns, nf):
    Z = sp.csr_matrix((ns, nf))
    return sp.bmat([[A_s, Z], [Z.T, A_f]], format="csr")


def assemble_dns(config: DnsConfig, mesh: StructuredMesh) -> DnsForms:
    """Real parts of the fine-scale form on solid DOFs followed by fluid DOFs."""
    mat = config.cell.materials
    eps = config.epsilon
    ns, nf = mesh.n_solid_dofs, mesh.n_fluid_dofs
    Zs = sp.csr_matrix((ns, ns))
    Zf = sp.csr_matrix((nf, nf))
    mass = _block(fem.assemble_solid_mass(mesh, mat.rho_s).matrix, fem.assemble_fluid_mass(mesh, mat.rho_f).matrix, ns, nf)
    elastic = _block(fem.assemble_elastic(mesh, mat.a).matrix, Zf, ns, nf)
    compression = _block(Zs, fem.assemble_isotropic(mesh, FLUID, mat.gamma, 0.0).matrix, ns, nf)
    visc = fem.assemble_isotropic(mesh, FLUID, mat.eta, 0.0).matrix
    visc = visc + fem.assemble_fluid_viscous(mesh, mat.mu, variant=config.viscous).matrix
    viscous = _block(Zs, eps**2 * visc, ns, nf)
    interface = eps * fem.assemble_interface(mesh, mat.alpha, space="combined").matrix
    lam = complex(config.lam)
    func = config.forcing or (lambda l, x: np.zeros_like(x))
    load = np.concatenate(
        [
            fem.load_function(mesh, SOLID, lambda x: func(lam, x)),
            fem.load_function(mesh, FLUID, lambda x: func(lam, x)),
        ]
    ).astype(complex)
    return DnsForms(mass, elastic, compression, viscous, interface.tocsr(), load)


@dataclass
class DnsResult:
    """Fine-scale solution and diagnostics.

    Attributes
    ----------
    solution : ndarray
        Solid DOFs followed by fluid DOFs.
    energy : dict
        ``elastic``, ``compression``, ``viscous`` and ``interface`` parts of
        ``a(u, conj u)`` (real parts; the last two without the factor ``lam``).
    coercivity : float
        ``Re(a(u, conj u) / lam)``.
    balance : float
        Relative mismatch between ``Re a(u, conj u)`` and ``Re (f, conj u)``.
    """

    config: DnsConfig
    mesh: StructuredMesh
    solution: np.ndarray
    residual: float
    energy: dict
    coercivity: float
    balance: float
    conforming: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def solid(self) -> np.ndarray:
        return self.solution[: self.mesh.n_solid_dofs]

    @property
    def fluid(self) -> np.ndarray:
        return self.solution[self.mesh.n_solid_dofs :]

    def cell_index(self, elems: np.ndarray) -> np.ndarray:
        """Flat index (x-fastest) of the eps-cell owning each element."""
        per = np.array(self.config.cell.resolution) * self.config.refine
        sub = self.mesh.elem_coords[elems] // per
        n = self.config.cells_across
        return np.ravel_multi_index(tuple(sub.T), (n,) * self.config.dim, order="F")

    def phase_averages(self) -> dict:
        """Per eps-cell averages ``(n_cells, D)``: ``total``, ``solid`` and ``fluid``."""
        n_cells = self.config.cells_across**self.config.dim
        D = self.config.dim
        sums, vols = {}, {}
        for name, code, vec in (("solid", SOLID, self.solid), ("fluid", FLUID, self.fluid)):
            elems = self.mesh.phase_elements(code)
            s = np.zeros((n_cells, D), dtype=complex)
            v = np.zeros(n_cells)
            if len(elems):
                ints = fem.element_integrals(self.mesh, code, vec, elems)
                idx = self.cell_index(elems)
                np.add.at(s, idx, ints)
                np.add.at(v, idx, self.mesh.element_volume)
            sums[name], vols[name] = s, v
        cell_vol = self.config.epsilon**D
        out = {"total": (sums["solid"] + sums["fluid"]) / cell_vol}
        for name in ("solid", "fluid"):
            with np.errstate(invalid="ignore", divide="ignore"):
                out[name] = np.where(vols[name][:, None] > 0, sums[name] / np.maximum(vols[name], 1e-300)[:, None], np.nan)
        return out


def _mesh(config: DnsConfig) -> StructuredMesh:
    phase = tiled_phase(config)
    _check_boundary_solid(phase)
    return StructuredMesh(phase, config.order, periodic=False, lengths=(config.extent,) * config.dim)


def _finish(config, mesh, forms, x, res, conforming, extra=None) -> DnsResult:
    lam = complex(config.lam)
    xc = x.conj()
    parts = {
        "elastic": float(np.real(xc @ (forms.elastic @ x))),
        "compression": float(np.real(xc @ (forms.compression @ x))),
        "viscous": float(np.real(xc @ (forms.viscous @ x))),
        "interface": float(np.real(xc @ (forms.interface @ x))),
    }
    kinetic = xc @ (forms.mass @ x)
    total = lam**2 * kinetic + parts["elastic"] + parts["compression"] + lam * (parts["viscous"] + parts["interface"])
    work = xc @ forms.load
    scale = max(abs(total), abs(work), np.finfo(float).tiny)
    balance = float(abs(total.real - work.real) / scale)
    coercivity = float(np.real(total / lam))
    return DnsResult(config, mesh, x, res, parts, coercivity, balance, conforming, extra or {})


def solve_eps_problem(config: DnsConfig) -> DnsResult:
    """Solve the fine-scale problem on the broken space.

    Raises
    ------
    GeometryError
        If the solid does not reach the outer boundary.
    SolverBreakdown
    """
    mesh = _mesh(config)
    forms = assemble_dns(config, mesh)
    A = forms.matrix(config.lam)
    x, r = solve(A, forms.load, rtol=RTOL, what=f"fine-scale problem eps={config.epsilon}")
    return _finish(config, mesh, forms, x, float(np.max(r)), False)


def continuity_prolongation(mesh: StructuredMesh) -> sp.csr_matrix:
    """Map continuous nodal DOFs to the broken (solid then fluid) DOFs."""
    D = mesh.dim
    free = np.flatnonzero(~mesh.boundary_nodes)
    glob = -np.ones(mesh.n_nodes, dtype=int)
    glob[free] = np.arange(len(free))
    rows, cols = [], []
    offset = 0
    for code in (SOLID, FLUID):
        nodes = mesh.phase_nodes[code]
        local = mesh.node_index[code][nodes]
        for c in range(D):
            rows.append(offset + D * local + c)
            cols.append(D * glob[nodes] + c)
        offset += mesh.n_dofs(code)
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    keep = cols >= 0
    return sp.csr_matrix((np.ones(keep.sum()), (rows[keep], cols[keep])), shape=(offset, D * len(free)))


def solve_conforming(config: DnsConfig) -> DnsResult:
    """Same problem restricted to displacements continuous across the interface.

    This is the limit of infinite slip resistance and serves as a reference
    for large ``alpha``.
    """
    mesh = _mesh(config)
    forms = assemble_dns(config, mesh)
    P = continuity_prolongation(mesh)
    A = forms.matrix(config.lam)
    Ac = (P.T @ A @ P).tocsr()
    xc, r = solve(Ac, P.T @ forms.load, rtol=RTOL, what="conforming fine-scale problem")
    return _finish(config, mesh, forms, P @ xc, float(np.max(r)), True)


def homogenization_gap(dns: DnsResult, macro, k: int = 0) -> dict:
    """L2 distance between per-cell averages of the fine and homogenized fields.

    The homogenized field is ``u + K F`` averaged over the same cells.

    Raises
    ------
    MeshMismatch
        If the domains, the parameter or the cell grid are incompatible.
    """
    cfg = dns.config
    lam = complex(macro.lambdas[k])
    if abs(lam - complex(cfg.lam)) > 1e-12 * max(1.0, abs(lam)):
        raise MeshMismatch(f"macro parameter {lam} differs from fine-scale parameter {cfg.lam}")
    ext = np.asarray(macro.problem.extent)
    if ext.shape != (cfg.dim,) or not np.allclose(ext, cfg.extent, rtol=1e-12):
        raise MeshMismatch("macro and fine-scale domains differ")
    n = cfg.cells_across
    fine = dns.phase_averages()
    coarse = macro.box_averages(k, (n,) * cfg.dim)
    diff = fine["total"] - coarse
    gap = float(np.sqrt(cfg.epsilon**cfg.dim * np.sum(np.abs(diff) ** 2)))
    return {
        "epsilon": cfg.epsilon,
        "lambda": [lam.real, lam.imag],
        "gap": gap,
        "fine_averages": fine,
        "homogenized_averages": coarse,
        "energy_split": dict(dns.energy),
    }


def average_gap(a: np.ndarray, b: np.ndarray, epsilon: float, dim: int) -> float:
    """L2 distance of two piecewise-constant per-cell fields."""
    return float(np.sqrt(epsilon**dim * np.sum(np.abs(np.asarray(a) - np.asarray(b)) ** 2)))
