"""Homogenized macroscopic problem in the reduced ``(u, p0)`` form.

The relative fluid displacement is eliminated through the dynamic
permeability, ``<u_r> = K(lam) F`` with ``F = f - lam^2 rho_f u - grad p0``.
For test functions ``(w, phi)`` the discrete system reads

    lam^2 <rho> (u, w) + lam^2 rho_f (K F, w) + (q e(u), e(w))
        + (p0, (beta - Pi I) : grad w) = (f, w)

    delta^-1 (p0, phi) - ((beta - Pi I) : grad u, phi) - (K F, grad phi) = 0

with ``u = 0`` on the boundary, no condition on ``p0`` and the natural flux
condition ``K F . n = 0``. Moving the ``f`` parts of ``F`` to the right and
negating the second row gives a complex symmetric matrix.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import fem
from .coefficients import EffectiveCoefficients
from .errors import ConfigError, MeshMismatch, MissingK, OutOfRegion
from .fem import StructuredMesh, scatter, scatter_vector
from .geometry import SOLID
from .laplace import inverse_laplace
from .linalg import solve
from .tensors import voigt_to_tensor

RTOL = 1e-10


@dataclass
class MacroProblem:
    """Macroscopic boundary value problem on a box ``(0, L_1) x ... x (0, L_D)``.

    Parameters
    ----------
    extent : sequence of float
        Box edge lengths; its length sets the dimension (1 or 2).
    elements : sequence of int
        Elements per axis.
    coefficients : EffectiveCoefficients
    rho_s, rho_f : float
    forcing : callable
        ``forcing(lam, x) -> (n, D)`` complex body force.
    lambdas : sequence of complex
    K : callable, ndarray or None
        Override for the permeability: a function of ``lam``, a constant
        matrix, or ``None`` to use the samples in ``coefficients``.
    region_bound : float
        Every ``lam`` must satisfy ``Re(lam) > region_bound``.
    order : int
        Element degree (1 gives continuous piecewise-linear elements).
    """

    extent: Sequence[float]
    elements: Sequence[int]
    coefficients: EffectiveCoefficients
    rho_s: float
    rho_f: float
    forcing: Callable
    lambdas: Sequence[complex] = ()
    K: Callable | np.ndarray | None = None
    region_bound: float = 1.0
    order: int = 1

    def __post_init__(self):
        self.extent = tuple(float(x) for x in self.extent)
        self.elements = tuple(int(n) for n in self.elements)
        if len(self.extent) != len(self.elements):
            raise ConfigError("extent and elements must have the same length")
        if len(self.extent) not in (1, 2):
            raise ConfigError("macroscopic domains are 1D or 2D")
        if self.coefficients.dim != len(self.extent):
            raise ConfigError(f"coefficients are {self.coefficients.dim}D but the domain is {len(self.extent)}D")

    @property
    def dim(self) -> int:
        return len(self.extent)

    @property
    def mean_density(self) -> float:
        Pi = self.coefficients.Pi
        return (1.0 - Pi) * self.rho_s + Pi * self.rho_f

    @cached_property
    def mesh(self) -> StructuredMesh:
        return StructuredMesh(
            np.zeros(self.elements, dtype=np.uint8), self.order, periodic=False, lengths=self.extent
        )


def interpolate_K(samples, lam: complex, rho_f: float) -> np.ndarray:
    """Permeability at ``lam`` from samples.

    An exact sample is used when present. Otherwise, for real ``lam`` inside
    the sampled real range, ``lam^2 rho_f K`` is interpolated linearly in
    ``log(lam)`` between the bracketing samples.

    Raises
    ------
    MissingK
    """
    lam = complex(lam)
    for mu, K in samples:
        if abs(complex(mu) - lam) <= 1e-12 * max(1.0, abs(lam)):
            return np.asarray(K)
    if lam.imag != 0:
        raise MissingK(f"no sample at complex lambda={lam}; complex parameters need a dedicated cell solve")
    real = sorted((complex(m).real, np.asarray(K)) for m, K in samples if complex(m).imag == 0 and complex(m).real > 0)
    x = lam.real
    for (l0, K0), (l1, K1) in zip(real, real[1:]):
        if l0 <= x <= l1:
            t = (np.log(x) - np.log(l0)) / (np.log(l1) - np.log(l0))
            G = (1 - t) * l0**2 * K0 + t * l1**2 * K1
            return G / x**2
    raise MissingK(f"lambda={x} outside the sampled real range")


def resolve_K(problem: MacroProblem, lam: complex) -> np.ndarray:
    D = problem.dim
    if problem.K is None:
        K = interpolate_K(problem.coefficients.K_samples, lam, problem.rho_f)
    elif callable(problem.K):
        K = problem.K(lam)
    else:
        K = problem.K
    K = np.asarray(K, dtype=complex)
    if K.shape != (D, D):
        raise MissingK(f"permeability has shape {K.shape}, expected {(D, D)}")
    return K


@dataclass
class MacroSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    n_u: int
    n_p: int
    K: np.ndarray
    lam: complex


def _element_tables(mesh: StructuredMesh):
    w = mesh.quad_weights
    N = mesh.ref.N
    G = mesh.grad_basis
    H = np.einsum("q,qm,qnj->nmj", w, N, G)
    return N, G, H


def assemble_macro(problem: MacroProblem, lam: complex) -> MacroSystem:
    """Complex symmetric block system in ``(u, p0)`` at one parameter.

    Raises
    ------
    OutOfRegion
    MissingK
    """
    lam = complex(lam)
    if not lam.real > problem.region_bound:
        raise OutOfRegion(f"Re(lambda)={lam.real} must exceed {problem.region_bound}")
    mesh = problem.mesh
    coef = problem.coefficients
    D = mesh.dim
    K = resolve_K(problem, lam)
    rho_f = problem.rho_f
    I = np.eye(D)
    Bm = np.asarray(coef.beta_ij, dtype=float) - coef.Pi * I
    Me = mesh.element_mass
    S = mesh.element_gradient_gram
    N, G, H = _element_tables(mesh)
    nl = mesh.ref.n_local

    Kuu = lam**2 * problem.mean_density * np.kron(Me, I) - lam**4 * rho_f**2 * np.kron(Me, K)
    Kuu = Kuu + fem.tensor_element_matrix(mesh, voigt_to_tensor(np.asarray(coef.q, dtype=float)))
    Kup = np.einsum("ij,nmj->nim", Bm, H) - lam**2 * rho_f * np.einsum("ik,mnk->nim", K, H)
    Kup = Kup.reshape(nl * D, nl)
    Kpp = -Me / coef.delta - np.einsum("jl,nmjl->nm", K, S)

    udofs = mesh.element_dofs(SOLID)
    pdofs = mesh.elem_nodes
    n_u = mesh.n_solid_dofs
    n_p = mesh.n_nodes
    Auu = scatter(udofs, udofs, Kuu, (n_u, n_u))
    Aup = scatter(udofs, pdofs, Kup, (n_u, n_p))
    App = scatter(pdofs, pdofs, Kpp, (n_p, n_p))
    A = sp.bmat([[Auu, Aup], [Aup.T, App]], format="csr")

    elems = np.arange(mesh.n_elements)
    x = mesh.quadrature_points(elems).reshape(-1, D)
    f = np.asarray(problem.forcing(lam, x), dtype=complex).reshape(mesh.n_elements, -1, D)
    Kf = np.einsum("ij,eqj->eqi", K, f)
    w = mesh.quad_weights
    fu = np.einsum("q,qn,eqi->eni", w, N, f - lam**2 * rho_f * Kf).reshape(mesh.n_elements, -1)
    fp = -np.einsum("q,qnj,eqj->en", w, G, Kf)
    b = np.concatenate([scatter_vector(udofs, fu, n_u), scatter_vector(pdofs, fp, n_p)])
    return MacroSystem(A, b, n_u, n_p, K, lam)


@dataclass
class MacroSolution:
    """Nodal macro fields per parameter.

    Attributes
    ----------
    u : list of ndarray, each ``(n_nodes, D)``
    p : list of ndarray, each ``(n_nodes,)``
    """

    problem: MacroProblem
    lambdas: list
    u: list
    p: list
    K: list
    residuals: list = field(default_factory=list)

    @property
    def mesh(self) -> StructuredMesh:
        return self.problem.mesh

    def _locate(self, points):
        mesh = self.mesh
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = (pts - mesh.origin) / mesh.h
        cell = np.clip(np.floor(rel).astype(int), 0, np.array(mesh.shape) - 1)
        xi = rel - cell
        elem = np.ravel_multi_index(tuple(cell.T), mesh.shape, order="F")
        return elem, xi

    def evaluate(self, k: int, points) -> tuple[np.ndarray, np.ndarray]:
        """``u`` and ``p0`` at arbitrary points for parameter index ``k``."""
        mesh = self.mesh
        elem, xi = self._locate(points)
        Nv, _ = mesh.ref.evaluate(xi)
        nodes = mesh.elem_nodes[elem]
        u = np.einsum("pn,pnc->pc", Nv, self.u[k][nodes])
        p = np.einsum("pn,pn->p", Nv, self.p[k][nodes])
        return u, p

    def driving_force(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """``F`` at every quadrature point and the quadrature points, ``(ne, nq, D)`` each."""
        mesh = self.mesh
        lam = self.lambdas[k]
        elems = np.arange(mesh.n_elements)
        x = mesh.quadrature_points(elems)
        f = np.asarray(self.problem.forcing(lam, x.reshape(-1, mesh.dim)), dtype=complex).reshape(x.shape)
        U = self.u[k][mesh.elem_nodes]
        P = self.p[k][mesh.elem_nodes]
        u_q = np.einsum("qn,enc->eqc", mesh.ref.N, U)
        gp = np.einsum("qnj,en->eqj", mesh.grad_basis, P)
        return f - lam**2 * self.problem.rho_f * u_q - gp, x

    def mean_relative(self, k: int) -> np.ndarray:
        """``<u_r> = K F`` at quadrature points."""
        F, _ = self.driving_force(k)
        return np.einsum("ij,eqj->eqi", self.K[k], F)

    def box_averages(self, k: int, boxes: Sequence[int]) -> np.ndarray:
        """Averages of ``u0 = u + <u_r>`` over a uniform grid of boxes.

        Raises
        ------
        MeshMismatch
            If the boxes do not align with element boundaries.
        """
        mesh = self.mesh
        boxes = tuple(int(b) for b in boxes)
        if len(boxes) != mesh.dim or any(n % b for n, b in zip(mesh.shape, boxes)):
            raise MeshMismatch(f"boxes {boxes} do not align with macro elements {mesh.shape}")
        U = self.u[k][mesh.elem_nodes]
        u_q = np.einsum("qn,enc->eqc", mesh.ref.N, U)
        total = u_q + self.mean_relative(k)
        per_elem = np.einsum("q,eqc->ec", mesh.quad_weights, total)
        box_of = tuple(mesh.elem_coords[:, a] // (mesh.shape[a] // boxes[a]) for a in range(mesh.dim))
        flat = np.ravel_multi_index(box_of, boxes, order="F")
        out = np.zeros((int(np.prod(boxes)), mesh.dim), dtype=complex)
        np.add.at(out, flat, per_elem)
        return out / (np.prod(mesh.lengths) / np.prod(boxes))

    def probe(self, points) -> np.ndarray:
        """``(n_lambda, n_points, D + 1)`` array of ``(u, p0)`` at points."""
        out = []
        for k in range(len(self.lambdas)):
            u, p = self.evaluate(k, points)
            out.append(np.concatenate([u, p[:, None]], axis=1))
        return np.array(out)

    def pressure_from_closure(self, k: int) -> np.ndarray:
        """``p0`` recomputed from the constitutive relation by L2 projection.

        Projects ``delta * ((beta - Pi I) : grad u - div <u_r>)`` with the
        divergence moved onto the test function.
        """
        mesh = self.mesh
        coef = self.problem.coefficients
        D = mesh.dim
        Bm = np.asarray(coef.beta_ij) - coef.Pi * np.eye(D)
        U = self.u[k][mesh.elem_nodes]
        grad_u = np.einsum("qnj,enc->eqcj", mesh.grad_basis, U)
        src = np.einsum("cj,eqcj->eq", Bm, grad_u)
        ur = self.mean_relative(k)
        w = mesh.quad_weights
        fe = np.einsum("q,qn,eq->en", w, mesh.ref.N, src) + np.einsum("q,qnj,eqj->en", w, mesh.grad_basis, ur)
        n = mesh.n_nodes
        M = scatter(mesh.elem_nodes, mesh.elem_nodes, mesh.element_mass, (n, n))
        rhs = coef.delta * scatter_vector(mesh.elem_nodes, fe, n)
        x, _ = solve(M, rhs, rtol=RTOL, what="pressure projection")
        return x


def solve_macro(problem: MacroProblem, lambdas=None) -> MacroSolution:
    """One solve per parameter.

    Raises
    ------
    OutOfRegion, MissingK, SolverBreakdown
    """
    lambdas = list(problem.lambdas if lambdas is None else lambdas)
    mesh = problem.mesh
    us, ps, Ks, res = [], [], [], []
    for lam in lambdas:
        sysm = assemble_macro(problem, lam)
        x, r = solve(sysm.matrix, sysm.rhs, rtol=RTOL, what=f"macro problem at lambda={lam}")
        u = mesh.nodal_values(SOLID, x[: sysm.n_u])
        us.append(u)
        ps.append(x[sysm.n_u :])
        Ks.append(sysm.K)
        res.append(float(np.max(r)))
    return MacroSolution(problem, lambdas, us, ps, Ks, res)


def time_traces(problem: MacroProblem, contour, probes) -> np.ndarray:
    """Solve on every contour node and invert the probe values.

    Returns an array ``(n_times, n_probes, D + 1)`` of ``(u, p0)``.
    """
    sol = solve_macro(problem, list(contour.nodes))
    return inverse_laplace(sol.probe(probes), contour, nodes=sol.lambdas)


# six-dimensional form ------------------------------------------------------------


def cell_grams(solution) -> dict:
    """Sesquilinear Gram matrices of the cell fields ``theta_p``.

    ``mass[p, q] = integral theta_p . conj(theta_q)`` and likewise for the
    unit gradient form and the interface form.
    """
    mesh = solution.mesh
    th = solution.theta
    M = fem.assemble_fluid_mass(mesh, 1.0).matrix
    V = fem.assemble_fluid_viscous(mesh, 0.5, variant=solution.params.get("viscous", "full")).matrix
    out = {"K": solution.K, "mass": th @ (M @ th.conj().T), "grad": th @ (V @ th.conj().T)}
    if solution.noslip:
        out["iface"] = np.zeros_like(out["mass"])
    else:
        J = fem.assemble_interface(mesh, 1.0, space="fluid").matrix
        out["iface"] = th @ (J @ th.conj().T)
    return out


def six_dimensional_form(problem: MacroProblem, lam: complex, grams: dict, mu: float, alpha: float, trial, test) -> complex:
    """Evaluate the two-scale form divided by ``lam`` on separable fields.

    A field is a pair ``(u, G)`` of nodal arrays ``(n_nodes, D)`` on the
    macro mesh standing for ``u(x) + sum_p theta_p(y) G_p(x)``. The test pair
    enters conjugated.
    """
    mesh = problem.mesh
    coef = problem.coefficients
    D = mesh.dim
    lam = complex(lam)
    K = np.asarray(grams["K"])
    Bm = np.asarray(coef.beta_ij) - coef.Pi * np.eye(D)
    w = mesh.quad_weights
    N, Gb = mesh.ref.N, mesh.grad_basis

    def fields(pair):
        u, G = (np.asarray(a, dtype=complex)[mesh.elem_nodes] for a in pair)
        return (
            np.einsum("qn,enc->eqc", N, u),
            np.einsum("qnj,enc->eqcj", Gb, u),
            np.einsum("qn,enc->eqc", N, G),
            np.einsum("qnj,enc->eqcj", Gb, G),
        )

    u, gu, G, gG = fields(trial)
    v, gv, H, gH = fields(test)
    Hc, vc = H.conj(), v.conj()
    KG, KHc = np.einsum("ij,eqj->eqi", K, G), np.einsum("ij,eqj->eqi", K.conj(), Hc)
    q4 = voigt_to_tensor(np.asarray(coef.q, dtype=float))
    dens = (
        coef.Pi * np.einsum("eqc,eqc->eq", u, vc)
        + np.einsum("eqc,eqc->eq", u, KHc)
        + np.einsum("eqc,eqc->eq", KG, vc)
        + np.einsum("eqp,pr,eqr->eq", G, grams["mass"], Hc)
    )
    total = lam * problem.rho_f * dens
    total = total + lam * (1 - coef.Pi) * problem.rho_s * np.einsum("eqc,eqc->eq", u, vc)
    total = total + np.einsum("ijkl,eqkl,eqij->eq", q4, gu, gv.conj()) / lam
    total = total + 2 * mu * np.einsum("eqp,pr,eqr->eq", G, grams["grad"], Hc)
    total = total + alpha * np.einsum("eqp,pr,eqr->eq", G, grams["iface"], Hc)
    div_KG = np.einsum("ij,eqji->eq", K, gG)
    div_KH = np.einsum("ij,eqji->eq", K, gH)
    Du = np.einsum("ij,eqij->eq", Bm, gu) - div_KG
    Dw = np.einsum("ij,eqij->eq", Bm, gv) - div_KH
    total = total + coef.delta / lam * Du * Dw.conj()
    return complex(np.einsum("q,eq->", w, total))


def six_dimensional_load(problem: MacroProblem, lam: complex, K: np.ndarray, test) -> complex:
    """Right-hand side ``(1/lam) integral f . conj(w + <w_r>)``."""
    mesh = problem.mesh
    lam = complex(lam)
    v, H = (np.asarray(a, dtype=complex)[mesh.elem_nodes] for a in test)
    N = mesh.ref.N
    vq = np.einsum("qn,enc->eqc", N, v)
    Hq = np.einsum("qn,enc->eqc", N, H)
    x = mesh.quadrature_points(np.arange(mesh.n_elements))
    f = np.asarray(problem.forcing(lam, x.reshape(-1, mesh.dim)), dtype=complex).reshape(x.shape)
    tot = vq + np.einsum("ij,eqj->eqi", K, Hq)
    return complex(np.einsum("q,eqc,eqc->", mesh.quad_weights, f, tot.conj()) / lam)


def project_driving_force(solution: MacroSolution, k: int) -> np.ndarray:
    """L2 projection of ``F`` onto continuous nodal fields, ``(n_nodes, D)``."""
    mesh = solution.mesh
    F, _ = solution.driving_force(k)
    n = mesh.n_nodes
    M = scatter(mesh.elem_nodes, mesh.elem_nodes, mesh.element_mass, (n, n))
    fe = np.einsum("q,qn,eqc->enc", mesh.quad_weights, mesh.ref.N, F)
    out = np.zeros((n, mesh.dim), dtype=complex)
    for c in range(mesh.dim):
        rhs = scatter_vector(mesh.elem_nodes, fe[:, :, c], n)
        out[:, c], _ = solve(M, rhs, rtol=RTOL, what="force projection")
    return out


def l2_error(solution: MacroSolution, k: int, exact, n_gauss: int = 6) -> float:
    """L2 norm over the domain of ``(u, p0) - exact(x)``.

    ``exact(x)`` returns ``(u (n, D), p (n,))``.
    """
    mesh = solution.mesh
    ref = fem.ReferenceElement(mesh.dim, 1, n_gauss)
    lower = mesh.origin + mesh.elem_coords * mesh.h
    pts = (lower[:, None, :] + ref.qpoints[None] * mesh.h).reshape(-1, mesh.dim)
    w = np.tile(ref.qweights * np.prod(mesh.h), mesh.n_elements)
    u, p = solution.evaluate(k, pts)
    ue, pe = exact(pts)
    err = np.sum(np.abs(u - ue) ** 2, axis=1) + np.abs(p - pe) ** 2
    return float(np.sqrt(w @ err))
