"""Cell problems: static solid correctors and the dynamic slip problem in the fluid.

The static correctors solve, on the periodic solid space modulo translations,

    q(chi, w)    = integral_{Y_s} div w
    q(chi_ij, w) = integral_{Y_s} a_ijkl dw_k/dy_l

with mean-zero Lagrange multipliers. The dynamic problem finds, for each
direction ``p``, a divergence-free fluid field ``theta_p`` vanishing on the
solid with

    lam^2 rho_f (theta, w) + 2 lam mu (grad theta, grad w)
        + lam alpha (theta, w)_Gamma = integral_{Y_f} w . e_p

for every admissible ``w``. The no-slip variant replaces the interface term
by a homogeneous Dirichlet condition on the fluid trace.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import fem
from .errors import Incompatible, NonCoercive
from .fem import StructuredMesh
from .geometry import FLUID, SOLID
from .linalg import solve
from .tensors import voigt_pairs

log = logging.getLogger(__name__)

RTOL = 1e-10


# static correctors -----------------------------------------------------------


@dataclass
class StaticCellSolutions:
    """Mean-zero periodic solid correctors.

    Attributes
    ----------
    chi : ndarray
        Pressure corrector on the solid DOFs.
    chi_ij : dict
        Strain correctors keyed by ``(i, j)`` with ``i <= j``.
    stiffness : fem.AssembledForm
        The elastic form the correctors were solved with.
    """

    mesh: StructuredMesh
    a: np.ndarray
    chi: np.ndarray
    chi_ij: dict[tuple[int, int], np.ndarray]
    stiffness: fem.AssembledForm
    load_div: np.ndarray
    load_ij: dict[tuple[int, int], np.ndarray]
    residuals: dict = field(default_factory=dict)

    def corrector(self, i: int, j: int) -> np.ndarray:
        return self.chi_ij[(min(i, j), max(i, j))]


def _static_system(mesh: StructuredMesh, a):
    K = fem.assemble_elastic(mesh, a)
    C = fem.mean_zero_constraint(mesh, SOLID)
    A = sp.bmat([[K.matrix, C.T], [C, None]], format="csc")
    return K, C, A


def _check_compatible(mesh, C, b, name):
    # a periodic load must annihilate rigid translations
    scale = max(np.abs(b).sum(), 1.0)
    for c in range(mesh.dim):
        t = np.zeros(mesh.n_solid_dofs)
        t[c :: mesh.dim] = 1.0
        if abs(t @ b) > 1e-12 * scale:
            raise Incompatible(f"{name} load does not vanish on constant field e_{c}: {t @ b:.3e}")


def solve_static(mesh: StructuredMesh, a, *, pairs=None) -> StaticCellSolutions:
    """Solve the pressure and strain correctors with one factorization.

    Parameters
    ----------
    a : ndarray
        Voigt stiffness or per-voxel field of them.
    pairs : list of (i, j), optional
        Strain pairs to solve; all symmetric pairs by default.
    """
    pairs = voigt_pairs(mesh.dim) if pairs is None else [tuple(sorted(p)) for p in pairs]
    K, C, A = _static_system(mesh, a)
    n = mesh.n_solid_dofs
    loads = {"div": fem.load_divergence(mesh, SOLID)}
    for i, j in pairs:
        loads[(i, j)] = fem.load_strain(mesh, a, i, j)
    for name, b in loads.items():
        _check_compatible(mesh, C, b, name)
    B = np.zeros((A.shape[0], len(loads)))
    for k, b in enumerate(loads.values()):
        B[:n, k] = b
    X, res = solve(A, B, rtol=RTOL, what="static cell problem")
    sols = {name: X[:n, k] for k, name in enumerate(loads)}
    residuals = {name: float(res[k]) for k, name in enumerate(loads)}
    return StaticCellSolutions(
        mesh=mesh,
        a=np.asarray(a),
        chi=sols.pop("div"),
        chi_ij=sols,
        stiffness=K,
        load_div=loads.pop("div"),
        load_ij=loads,
        residuals=residuals,
    )


def solve_chi(mesh: StructuredMesh, a) -> np.ndarray:
    """Pressure corrector ``chi``."""
    return solve_static(mesh, a, pairs=[]).chi


def solve_chi_ij(mesh: StructuredMesh, a) -> dict[tuple[int, int], np.ndarray]:
    """Strain correctors for every symmetric pair."""
    return solve_static(mesh, a).chi_ij


# dynamic problem ---------------------------------------------------------------


@dataclass
class DynamicCellSolution:
    """Fluid response ``theta_p`` to a unit body force along each axis.

    Attributes
    ----------
    lam : complex
    theta : ndarray, shape (D, n_fluid_dofs)
    pressure : ndarray, shape (D, n_pressure)
        Pressure multipliers.
    K : ndarray
        ``K[p, q] = integral theta_q . e_p``.
    K_energy : ndarray
        The same matrix through the bilinear form evaluated on the solutions.
    """

    lam: complex
    mesh: StructuredMesh
    theta: np.ndarray
    pressure: np.ndarray
    K: np.ndarray
    K_energy: np.ndarray
    divergence_residual: float
    residual: float
    noslip: bool
    params: dict


def fluid_components(mesh: StructuredMesh) -> list[np.ndarray]:
    """Face-connected fluid element groups (periodic if the mesh is)."""
    elems = mesh.phase_elements(FLUID)
    local = np.full(mesh.n_elements, -1)
    local[elems] = np.arange(len(elems))
    idx = np.arange(mesh.n_elements).reshape(mesh.shape, order="F")
    rows, cols = [], []
    for ax in range(mesh.dim):
        if mesh.periodic:
            lo, up = idx, np.roll(idx, -1, axis=ax)
        else:
            s0 = [slice(None)] * mesh.dim
            s1 = [slice(None)] * mesh.dim
            s0[ax], s1[ax] = slice(0, -1), slice(1, None)
            lo, up = idx[tuple(s0)], idx[tuple(s1)]
        lo, up = lo.ravel(order="F"), up.ravel(order="F")
        sel = (local[lo] >= 0) & (local[up] >= 0)
        rows.append(local[lo[sel]])
        cols.append(local[up[sel]])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    n = len(elems)
    g = sp.coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    ncomp, labels = connected_components(g, directed=False)
    return [np.flatnonzero(labels == k) for k in range(ncomp)]


def pressure_kernel_constraints(mesh: StructuredMesh, B: sp.spmatrix, free: np.ndarray | None = None) -> np.ndarray:
    """Mean-value rows for fluid components whose constant pressure is invisible to ``B``.

    Returns a ``(n_constraints, n_pressure)`` array.
    """
    npb = mesh.n_pressure_basis
    Mp = fem.assemble_pressure_mass(mesh, FLUID).matrix
    Bt = B.T.tocsr()
    if free is not None:
        Bt = Bt[free]
    scale = max(abs(B).sum(axis=0).max(), np.finfo(float).tiny)
    rows = []
    for comp in fluid_components(mesh):
        one = np.zeros(B.shape[0])
        one[comp * npb] = 1.0
        if np.abs(Bt @ one).max() <= 1e-12 * scale * np.sqrt(len(comp)):
            rows.append(Mp @ one)
    return np.array(rows).reshape(len(rows), B.shape[0])


def _dynamic_blocks(mesh, mu, alpha, *, noslip, viscous, stabilization):
    blocks = {
        "mass": fem.assemble_fluid_mass(mesh, 1.0).matrix,
        # unit gradient form: the 2 mu factor is applied at solve time
        "visc": fem.assemble_fluid_viscous(mesh, 0.5, variant=viscous).matrix,
        "div": fem.assemble_divergence(mesh, FLUID).matrix,
    }
    if not noslip:
        blocks["iface"] = fem.assemble_interface(mesh, 1.0, space="fluid").matrix
    if stabilization is None:
        stabilization = mesh.pressure_kind == "p0"
    if stabilization:
        blocks["stab"] = fem.assemble_pressure_jump(mesh, 1.0).matrix
    return blocks


def _free_fluid_dofs(mesh: StructuredMesh, noslip: bool) -> np.ndarray:
    n = mesh.n_fluid_dofs
    if not noslip:
        return np.arange(n)
    on_gamma = np.zeros(n, dtype=bool)
    loc = mesh.node_index[FLUID][mesh.interface_nodes]
    for c in range(mesh.dim):
        on_gamma[mesh.dim * loc + c] = True
    return np.flatnonzero(~on_gamma)


def _solve_dynamic(mesh, lam, mu, rho_f, alpha, *, noslip, viscous="full", stabilization=None, blocks=None):
    lam = complex(lam)
    if not lam.real > 0:
        raise NonCoercive(f"Re(lambda) must be positive, got {lam}")
    if blocks is None:
        blocks = _dynamic_blocks(mesh, mu, alpha, noslip=noslip, viscous=viscous, stabilization=stabilization)
    lam_ = lam.real if lam.imag == 0 else lam
    A = lam_**2 * rho_f * blocks["mass"] + 2 * lam_ * mu * blocks["visc"]
    if not noslip:
        A = A + lam_ * alpha * blocks["iface"]
    free = _free_fluid_dofs(mesh, noslip)
    A = A.tocsr()[free][:, free]
    B = blocks["div"].tocsc()[:, free]
    npr = B.shape[0]
    S = blocks.get("stab")
    S_lam = None if S is None else S / (2 * lam_ * mu)
    Z = pressure_kernel_constraints(mesh, blocks["div"], free)
    nz = Z.shape[0]
    Zs = sp.csr_matrix(Z) if nz else None
    system = sp.bmat(
        [
            [A, B.T, None],
            [B, None if S_lam is None else -S_lam, Zs.T if nz else None],
            [None, Zs, None],
        ],
        format="csc",
    )
    nf = len(free)
    n_full = mesh.n_fluid_dofs
    loads = np.stack([fem.load_constant(mesh, FLUID, p) for p in range(mesh.dim)], axis=1)
    rhs = np.zeros((system.shape[0], mesh.dim))
    rhs[:nf] = loads[free]
    X, res = solve(system, rhs, rtol=RTOL, what=f"dynamic cell problem at lambda={lam}")
    theta = np.zeros((mesh.dim, n_full), dtype=X.dtype)
    theta[:, free] = X[:nf].T
    pressure = X[nf : nf + npr].T
    K = loads.T @ theta.T
    Th = theta[:, free]
    K_energy = Th @ (A @ Th.T)
    if S_lam is not None:
        K_energy = K_energy + pressure @ (S_lam @ pressure.T)
    Bth = blocks["div"] @ theta.T
    div_res = float(np.abs(Bth).max() / max(np.abs(theta).max(), np.finfo(float).tiny))
    if not np.iscomplexobj(X):
        theta = theta.astype(complex)
        pressure = pressure.astype(complex)
    return DynamicCellSolution(
        lam=lam,
        mesh=mesh,
        theta=theta,
        pressure=pressure,
        K=np.asarray(K, dtype=complex).T,
        K_energy=np.asarray(K_energy, dtype=complex),
        divergence_residual=div_res,
        residual=float(res.max()),
        noslip=noslip,
        params={"mu": mu, "rho_f": rho_f, "alpha": None if noslip else alpha, "viscous": viscous},
    )


def solve_theta(
    mesh: StructuredMesh,
    lam: complex,
    mu: float,
    rho_f: float,
    alpha: float,
    *,
    viscous: str = "full",
    stabilization: bool | None = None,
) -> DynamicCellSolution:
    """Dynamic slip cell problem at one Laplace parameter.

    Raises
    ------
    NonCoercive
        If ``Re(lam) <= 0``.
    SolverBreakdown
    """
    return _solve_dynamic(mesh, lam, mu, rho_f, alpha, noslip=False, viscous=viscous, stabilization=stabilization)


def solve_theta_noslip(
    mesh: StructuredMesh,
    lam: complex,
    mu: float,
    rho_f: float,
    *,
    viscous: str = "full",
    stabilization: bool | None = None,
) -> DynamicCellSolution:
    """Dynamic cell problem with the fluid trace clamped to zero on the interface."""
    return _solve_dynamic(mesh, lam, mu, rho_f, None, noslip=True, viscous=viscous, stabilization=stabilization)


def solve_theta_sweep(
    mesh: StructuredMesh,
    lambdas,
    mu: float,
    rho_f: float,
    alpha: float | None,
    *,
    noslip: bool = False,
    viscous: str = "full",
    stabilization: bool | None = None,
    threads: int = 1,
) -> list[DynamicCellSolution]:
    """Solve at every parameter in ``lambdas``; output keeps the input order."""
    blocks = _dynamic_blocks(mesh, mu, alpha, noslip=noslip, viscous=viscous, stabilization=stabilization)

    def one(lam):
        return _solve_dynamic(mesh, lam, mu, rho_f, alpha, noslip=noslip, viscous=viscous, blocks=blocks)

    lambdas = list(lambdas)
    if threads > 1 and len(lambdas) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, lambdas))
    return [one(lam) for lam in lambdas]


def mass_projection_limit(mesh: StructuredMesh, *, noslip: bool = False) -> np.ndarray:
    """Limit of ``lam^2 rho_f K(lam)`` from the mass-only divergence-free projection."""
    free = _free_fluid_dofs(mesh, noslip)
    M = fem.assemble_fluid_mass(mesh, 1.0).matrix.tocsr()[free][:, free]
    Bfull = fem.assemble_divergence(mesh, FLUID).matrix
    B = Bfull.tocsc()[:, free]
    Z = pressure_kernel_constraints(mesh, Bfull, free)
    nz = Z.shape[0]
    Zs = sp.csr_matrix(Z) if nz else None
    system = sp.bmat([[M, B.T, None], [B, None, Zs.T if nz else None], [None, Zs, None]], format="csc")
    loads = np.stack([fem.load_constant(mesh, FLUID, p) for p in range(mesh.dim)], axis=1)
    rhs = np.zeros((system.shape[0], mesh.dim))
    rhs[: len(free)] = loads[free]
    X, _ = solve(system, rhs, rtol=RTOL, what="mass projection")
    return loads[free].T @ X[: len(free)]
