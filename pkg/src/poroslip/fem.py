"""Finite elements on structured voxel grids.

One element per voxel, vector Lagrange elements of tensor-product order
``p`` (``p = 1`` is the multilinear Q1 element, ``p = 2`` the biquadratic Q2
element). The same machinery serves the periodic unit cell and the
non-periodic fine-scale domain.

Each phase owns its own copy of every node it touches, so nodes on the
interface carry two independent vector DOF sets and fields may jump across
the interface. Vector DOFs of a phase are interleaved: DOF ``D*k + c`` is
component ``c`` of the ``k``-th node of that phase.

All forms are assembled bilinearly with real coefficients. Complex,
parameter-dependent combinations are formed by the solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import GeometryError, IoError, SingularBeyondTranslations
from .geometry import FLUID, SOLID, PhaseCell
from .tensors import voigt_to_tensor

PHASES = {"solid": SOLID, "fluid": FLUID}


def _phase_code(phase) -> int:
    if isinstance(phase, str):
        try:
            return PHASES[phase]
        except KeyError:
            raise ValueError(f"unknown phase {phase!r}") from None
    return int(phase)


def _phase_name(code: int) -> str:
    return "solid" if code == SOLID else "fluid"


# reference element ----------------------------------------------------------


def lagrange_1d(nodes: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of the 1D Lagrange basis on ``nodes`` at points ``x``.

    Returns arrays of shape ``(len(x), len(nodes))``.
    """
    x = np.asarray(x, dtype=float)
    n = len(nodes)
    val = np.ones((len(x), n))
    der = np.zeros((len(x), n))
    for k in range(n):
        others = [m for m in range(n) if m != k]
        denom = np.prod([nodes[k] - nodes[m] for m in others])
        for m in others:
            val[:, k] *= x - nodes[m]
            term = np.ones_like(x)
            for r in others:
                if r != m:
                    term = term * (x - nodes[r])
            der[:, k] += term
        val[:, k] /= denom
        der[:, k] /= denom
    return val, der


def gauss_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule with ``n`` points on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _tensor_points(x1: np.ndarray, dim: int) -> np.ndarray:
    """All ``dim``-tuples of ``x1`` with the first coordinate fastest."""
    grids = np.meshgrid(*([x1] * dim), indexing="ij")
    return np.stack([g.ravel(order="F") for g in grids], axis=1)


class ReferenceElement:
    """Tensor-product Lagrange element on the unit cube.

    Parameters
    ----------
    dim : int
    order : int
        Polynomial degree per axis.
    n_quad : int, optional
        Gauss points per axis; defaults to ``order + 1`` (exact for mass matrices).
    """

    def __init__(self, dim: int, order: int, n_quad: int | None = None):
        if order < 1:
            raise ValueError("order must be at least 1")
        self.dim = dim
        self.order = order
        self.nodes_1d = np.linspace(0.0, 1.0, order + 1)
        self.offsets = _tensor_points(np.arange(order + 1), dim).astype(int)
        self.n_local = len(self.offsets)
        nq = order + 1 if n_quad is None else n_quad
        xq, wq = gauss_01(nq)
        self.qpoints = _tensor_points(xq, dim)
        self.qweights = np.prod(_tensor_points(wq, dim), axis=1)
        self.N, self.dN = self.evaluate(self.qpoints)

    def evaluate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Basis values ``(npts, nloc)`` and reference gradients ``(npts, nloc, dim)``."""
        points = np.atleast_2d(points)
        v1, d1 = zip(*(lagrange_1d(self.nodes_1d, points[:, a]) for a in range(self.dim)))
        N = np.ones((len(points), self.n_local))
        dN = np.ones((len(points), self.n_local, self.dim))
        for a in range(self.dim):
            o = self.offsets[:, a]
            N *= v1[a][:, o]
            for b in range(self.dim):
                dN[:, :, b] *= (d1[a] if a == b else v1[a])[:, o]
        return N, dN

    def face_nodes(self, axis: int, side: int) -> np.ndarray:
        """Local nodes on the face ``xi[axis] == side`` (0 or 1), remaining axes first-fastest."""
        o = self.offsets[:, axis]
        return np.flatnonzero(o == (self.order if side else 0))

    @cached_property
    def face_mass(self) -> np.ndarray:
        """Mass matrix of a unit face, ordered like :meth:`face_nodes`."""
        xq, wq = gauss_01(self.order + 1)
        v, _ = lagrange_1d(self.nodes_1d, xq)
        m1 = (v * wq[:, None]).T @ v
        M = np.ones((1, 1))
        for _ in range(self.dim - 1):
            M = np.kron(m1, M)
        return M


def pressure_basis(kind: str, points: np.ndarray) -> np.ndarray:
    """Discontinuous pressure shape functions at reference points.

    ``"p0"`` is the constant; ``"p1disc"`` adds the centered linear monomials.
    """
    points = np.atleast_2d(points)
    ones = np.ones((len(points), 1))
    if kind == "p0":
        return ones
    if kind == "p1disc":
        return np.hstack([ones, points - 0.5])
    raise ValueError(f"unknown pressure space {kind!r}")


# mesh -----------------------------------------------------------------------


class StructuredMesh:
    """Lagrange mesh of a voxel grid with per-phase node copies.

    Parameters
    ----------
    phase : ndarray
        Per-voxel labels, shape ``(n_1, ..., n_D)``.
    order : int, optional
        Element degree per axis (default 2).
    periodic : bool, optional
        Identify opposite faces (unit cell) or keep a box with Dirichlet
        boundary (all boundary nodes removed from both phases).
    lengths : sequence of float, optional
        Box edge lengths; defaults to 1.
    origin : sequence of float, optional
        Lower corner; defaults to ``-1/2`` when periodic and 0 otherwise.
    pressure : {"auto", "p0", "p1disc"}
        Discontinuous pressure space; ``"auto"`` picks ``p0`` for order 1 and
        ``p1disc`` otherwise.
    """

    def __init__(
        self,
        phase: np.ndarray,
        order: int = 2,
        *,
        periodic: bool = True,
        lengths=None,
        origin=None,
        pressure: str = "auto",
    ):
        phase = np.asarray(phase, dtype=np.uint8)
        self.phase = phase
        self.dim = phase.ndim
        self.shape = tuple(phase.shape)
        self.order = order
        self.periodic = periodic
        self.lengths = np.ones(self.dim) if lengths is None else np.asarray(lengths, dtype=float)
        if origin is None:
            origin = -0.5 * self.lengths if periodic else np.zeros(self.dim)
        self.origin = np.asarray(origin, dtype=float)
        self.h = self.lengths / np.array(self.shape)
        self.ref = ReferenceElement(self.dim, order)
        self.pressure_kind = ("p0" if order == 1 else "p1disc") if pressure == "auto" else pressure

        p = order
        self.node_shape = tuple(p * n if periodic else p * n + 1 for n in self.shape)
        self.n_nodes = int(np.prod(self.node_shape))
        self.n_elements = int(np.prod(self.shape))
        self.elem_phase = phase.ravel(order="F")

        ev = np.array(np.unravel_index(np.arange(self.n_elements), self.shape, order="F")).T
        self.elem_coords = ev
        grid = ev[:, None, :] * p + self.ref.offsets[None, :, :]
        if periodic:
            grid = grid % np.array(self.node_shape)
        self.elem_nodes = np.ravel_multi_index(
            tuple(grid[..., a] for a in range(self.dim)), self.node_shape, order="F"
        )

        node_multi = np.array(np.unravel_index(np.arange(self.n_nodes), self.node_shape, order="F")).T
        self.node_coords = self.origin + node_multi * (self.h / p)
        if periodic:
            self.boundary_nodes = np.zeros(self.n_nodes, dtype=bool)
        else:
            self.boundary_nodes = np.any(
                (node_multi == 0) | (node_multi == np.array(self.node_shape) - 1), axis=1
            )

        self.node_index = {}
        self.phase_nodes = {}
        for code in (SOLID, FLUID):
            touched = np.zeros(self.n_nodes, dtype=bool)
            touched[self.elem_nodes[self.elem_phase == code].ravel()] = True
            touched &= ~self.boundary_nodes
            nodes = np.flatnonzero(touched)
            idx = np.full(self.n_nodes, -1, dtype=np.int64)
            idx[nodes] = np.arange(len(nodes))
            self.node_index[code] = idx
            self.phase_nodes[code] = nodes

        self._build_facets()

    # sizes -------------------------------------------------------------------

    @property
    def n_solid_dofs(self) -> int:
        return self.dim * len(self.phase_nodes[SOLID])

    @property
    def n_fluid_dofs(self) -> int:
        return self.dim * len(self.phase_nodes[FLUID])

    def n_dofs(self, phase) -> int:
        return self.dim * len(self.phase_nodes[_phase_code(phase)])

    @property
    def n_pressure_basis(self) -> int:
        return 1 if self.pressure_kind == "p0" else self.dim + 1

    def phase_elements(self, phase) -> np.ndarray:
        return np.flatnonzero(self.elem_phase == _phase_code(phase))

    def n_pressure_dofs(self, phase="fluid") -> int:
        return len(self.phase_elements(phase)) * self.n_pressure_basis

    @property
    def element_volume(self) -> float:
        return float(np.prod(self.h))

    def phase_volume(self, phase) -> float:
        return len(self.phase_elements(phase)) * self.element_volume

    @cached_property
    def interface_nodes(self) -> np.ndarray:
        """Global ids of nodes carrying both a solid and a fluid copy."""
        return np.flatnonzero((self.node_index[SOLID] >= 0) & (self.node_index[FLUID] >= 0))

    # dof maps ----------------------------------------------------------------

    def element_dofs(self, phase, elems: np.ndarray | None = None) -> np.ndarray:
        """Vector DOFs of the given elements, ``(ne, nloc*D)`` node-major; -1 marks removed DOFs."""
        code = _phase_code(phase)
        if elems is None:
            elems = self.phase_elements(code)
        local = self.node_index[code][self.elem_nodes[elems]]
        dofs = self.dim * local[:, :, None] + np.arange(self.dim)
        dofs = np.where(local[:, :, None] >= 0, dofs, -1)
        return dofs.reshape(len(elems), -1)

    def pressure_dofs(self, phase="fluid") -> np.ndarray:
        n = len(self.phase_elements(phase))
        return np.arange(n * self.n_pressure_basis).reshape(n, self.n_pressure_basis)

    def nodal_values(self, phase, vec: np.ndarray) -> np.ndarray:
        """Expand a phase DOF vector to ``(n_nodes, D)`` with zeros at absent nodes."""
        code = _phase_code(phase)
        out = np.zeros((self.n_nodes, self.dim), dtype=np.result_type(vec, float))
        nodes = self.phase_nodes[code]
        out[nodes] = np.asarray(vec).reshape(-1, self.dim)
        return out

    def interpolate(self, phase, func) -> np.ndarray:
        """Nodal interpolant of ``func(x) -> (n, D)`` on the phase DOFs."""
        code = _phase_code(phase)
        x = self.node_coords[self.phase_nodes[code]]
        vals = np.asarray(func(x))
        return vals.reshape(-1)

    # quadrature ----------------------------------------------------------------

    def quadrature_points(self, elems: np.ndarray) -> np.ndarray:
        """Physical quadrature points ``(ne, nq, D)``."""
        lower = self.origin + self.elem_coords[elems] * self.h
        return lower[:, None, :] + self.ref.qpoints[None, :, :] * self.h

    @cached_property
    def quad_weights(self) -> np.ndarray:
        return self.ref.qweights * self.element_volume

    @cached_property
    def grad_basis(self) -> np.ndarray:
        """Physical basis gradients at quadrature points ``(nq, nloc, D)``."""
        return self.ref.dN / self.h

    @cached_property
    def element_mass(self) -> np.ndarray:
        N = self.ref.N
        return (N * self.quad_weights[:, None]).T @ N

    @cached_property
    def element_gradient_gram(self) -> np.ndarray:
        """``S[n, m, j, l] = integral of dN_n/dx_j * dN_m/dx_l`` over one element."""
        G = self.grad_basis
        return np.einsum("q,qnj,qml->nmjl", self.quad_weights, G, G)

    @cached_property
    def element_gradient_integral(self) -> np.ndarray:
        """``g[n, j] = integral of dN_n/dx_j`` over one element."""
        return np.einsum("q,qnj->nj", self.quad_weights, self.grad_basis)

    @cached_property
    def element_basis_integral(self) -> np.ndarray:
        return self.quad_weights @ self.ref.N

    @cached_property
    def element_divergence(self) -> np.ndarray:
        """``B[b, n*D + k] = integral of psi_b dN_n/dx_k`` over one element."""
        P = pressure_basis(self.pressure_kind, self.ref.qpoints)
        B = np.einsum("q,qb,qnk->bnk", self.quad_weights, P, self.grad_basis)
        return B.reshape(P.shape[1], -1)

    @cached_property
    def element_pressure_mass(self) -> np.ndarray:
        P = pressure_basis(self.pressure_kind, self.ref.qpoints)
        return (P * self.quad_weights[:, None]).T @ P

    # interface -------------------------------------------------------------------

    def _build_facets(self):
        flat = self.elem_phase
        idx = np.arange(self.n_elements).reshape(self.shape, order="F")
        axis, lower, upper = [], [], []
        for ax in range(self.dim):
            if self.periodic:
                lo = idx
                up = np.roll(idx, -1, axis=ax)
            else:
                sl_lo = [slice(None)] * self.dim
                sl_up = [slice(None)] * self.dim
                sl_lo[ax] = slice(0, -1)
                sl_up[ax] = slice(1, None)
                lo = idx[tuple(sl_lo)]
                up = idx[tuple(sl_up)]
            lo = lo.ravel(order="F")
            up = up.ravel(order="F")
            sel = flat[lo] != flat[up]
            axis.append(np.full(int(sel.sum()), ax))
            lower.append(lo[sel])
            upper.append(up[sel])
        self.facet_axis = np.concatenate(axis)
        self.facet_lower = np.concatenate(lower)
        self.facet_upper = np.concatenate(upper)
        lower_fluid = flat[self.facet_lower] == FLUID
        self.facet_solid = np.where(lower_fluid, self.facet_upper, self.facet_lower)
        self.facet_fluid = np.where(lower_fluid, self.facet_lower, self.facet_upper)
        self.facet_normal = np.zeros((len(self.facet_axis), self.dim))
        self.facet_normal[np.arange(len(self.facet_axis)), self.facet_axis] = np.where(lower_fluid, 1.0, -1.0)

    @property
    def n_facets(self) -> int:
        return len(self.facet_axis)

    def facet_area(self, axis: int) -> float:
        return float(np.prod(np.delete(self.h, axis)))

    def facet_node_ids(self) -> np.ndarray:
        """Global node ids on each facet, ``(n_facets, nloc_face)``."""
        out = np.empty((self.n_facets, (self.order + 1) ** (self.dim - 1)), dtype=np.int64)
        for ax in range(self.dim):
            sel = self.facet_axis == ax
            out[sel] = self.elem_nodes[self.facet_lower[sel]][:, self.ref.face_nodes(ax, 1)]
        return out

    # helpers -----------------------------------------------------------------------

    def element_tensor(self, a, elems: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Resolve a stiffness spec into unique full tensors and a per-element index.

        ``a`` is either one Voigt matrix or a per-voxel field of shape
        ``shape + (n_v, n_v)``.
        """
        a = np.asarray(a, dtype=float)
        if a.ndim == 2:
            return voigt_to_tensor(a)[None], np.zeros(len(elems), dtype=int)
        nv = a.shape[-1]
        if a.shape[:-2] != self.shape:
            raise GeometryError(f"stiffness field shape {a.shape[:-2]} does not match grid {self.shape}")
        grid = a.reshape(self.shape + (nv * nv,))
        flat = np.transpose(grid, tuple(range(self.dim - 1, -1, -1)) + (self.dim,)).reshape(-1, nv * nv)
        uniq, inv = np.unique(flat[elems], axis=0, return_inverse=True)
        return voigt_to_tensor(uniq.reshape(-1, nv, nv)), inv.ravel()


def build_periodic_mesh(cell: PhaseCell, order: int = 2, *, pressure: str = "auto") -> StructuredMesh:
    """Periodic mesh of a unit cell."""
    return StructuredMesh(cell.phase, order, periodic=True, pressure=pressure)


# assembly ------------------------------------------------------------------------


@dataclass(frozen=True)
class AssembledForm:
    """Sparse operator with the DOF spaces of its rows and columns.

    Attributes
    ----------
    matrix : scipy.sparse.csr_matrix
    row_space, col_space : str
        ``"solid"``, ``"fluid"``, ``"combined"`` (solid then fluid) or ``"pressure"``.
    constants : dict
        Scalars the form was built with.
    """

    matrix: sp.csr_matrix
    row_space: str
    col_space: str
    constants: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.matrix.shape

    def energy(self, v, w=None) -> complex:
        """Bilinear value ``w^T A v`` (``w`` defaults to ``v``)."""
        w = v if w is None else w
        return w @ (self.matrix @ v)


def scatter(rows: np.ndarray, cols: np.ndarray, Ke: np.ndarray, shape, which=None) -> sp.csr_matrix:
    """Sum element matrices into a sparse matrix, dropping negative indices.

    Parameters
    ----------
    rows : ndarray, (ne, nr)
    cols : ndarray, (ne, nc)
    Ke : ndarray, (nr, nc) or (nk, nr, nc)
    which : ndarray of int, optional
        Per-element index into ``Ke`` when several element matrices exist.
    """
    ne, nr = rows.shape
    nc = cols.shape[1]
    if Ke.ndim == 2:
        vals = np.broadcast_to(Ke, (ne, nr, nc))
    else:
        vals = Ke[which]
    R = np.broadcast_to(rows[:, :, None], (ne, nr, nc))
    C = np.broadcast_to(cols[:, None, :], (ne, nr, nc))
    mask = (R >= 0) & (C >= 0)
    A = sp.coo_matrix((vals[mask], (R[mask], C[mask])), shape=shape)
    A.sum_duplicates()
    return A.tocsr()


def scatter_vector(rows: np.ndarray, fe: np.ndarray, n: int) -> np.ndarray:
    """Sum element vectors ``fe`` (``(nr,)`` or ``(ne, nr)``) into a length-``n`` vector."""
    vals = np.broadcast_to(fe, rows.shape)
    mask = rows >= 0
    return np.bincount(rows[mask], weights=vals[mask].real, minlength=n) + (
        1j * np.bincount(rows[mask], weights=vals[mask].imag, minlength=n) if np.iscomplexobj(vals) else 0
    )


def tensor_element_matrix(mesh: StructuredMesh, C4: np.ndarray) -> np.ndarray:
    """Element matrix of ``integral C_ijkl du_k/dx_l dw_i/dx_j``, rows (n, i), cols (m, k)."""
    S = mesh.element_gradient_gram
    Ke = np.einsum("...ijkl,nmjl->...nimk", C4, S)
    n = mesh.ref.n_local * mesh.dim
    return Ke.reshape(Ke.shape[:-4] + (n, n))


def _vector_form(mesh: StructuredMesh, phase, C4, which=None, elems=None) -> sp.csr_matrix:
    code = _phase_code(phase)
    if elems is None:
        elems = mesh.phase_elements(code)
    dofs = mesh.element_dofs(code, elems)
    Ke = tensor_element_matrix(mesh, C4)
    n = mesh.n_dofs(code)
    return scatter(dofs, dofs, Ke, (n, n), which)


def identity_tensor(dim: int) -> dict[str, np.ndarray]:
    d = np.eye(dim)
    return {
        "grad": np.einsum("ik,jl->ijkl", d, d),
        "div": np.einsum("ij,kl->ijkl", d, d),
        "sym": 0.5 * (np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d)),
    }


def assemble_elastic(mesh: StructuredMesh, a, *, phase="solid", check_kernel: bool = False) -> AssembledForm:
    """Elastic form ``integral a_ijkl dv_k/dy_l dw_i/dy_j`` on one phase.

    Parameters
    ----------
    a : ndarray
        Voigt stiffness, or a per-voxel field of them.
    check_kernel : bool
        Verify on a dense copy that only constant translations are in the
        kernel. Intended for small meshes.

    Raises
    ------
    SingularBeyondTranslations
    """
    code = _phase_code(phase)
    elems = mesh.phase_elements(code)
    C4, which = mesh.element_tensor(a, elems)
    A = _vector_form(mesh, code, C4, which, elems)
    if check_kernel:
        dense = A.toarray()
        ev = np.linalg.eigvalsh(0.5 * (dense + dense.T))
        tol = 1e-10 * max(abs(ev).max(), 1.0)
        n_zero = int(np.count_nonzero(ev < tol))
        expected = mesh.dim if mesh.periodic else 0
        if n_zero > expected:
            raise SingularBeyondTranslations(f"elastic operator has {n_zero} null vectors, expected {expected}")
    return AssembledForm(A, _phase_name(code), _phase_name(code), {"a": np.asarray(a)})


def assemble_fluid_viscous(mesh: StructuredMesh, mu: float, *, variant: str = "full") -> AssembledForm:
    """Viscous form ``2 mu integral grad u : grad w`` (or ``e(u):e(w)`` for ``variant="symmetric"``)."""
    I = identity_tensor(mesh.dim)
    if variant == "full":
        C4 = 2.0 * mu * I["grad"]
    elif variant == "symmetric":
        C4 = 2.0 * mu * I["sym"]
    else:
        raise ValueError(f"unknown viscous variant {variant!r}")
    A = _vector_form(mesh, FLUID, C4[None], np.zeros(len(mesh.phase_elements(FLUID)), dtype=int))
    return AssembledForm(A, "fluid", "fluid", {"mu": mu, "variant": variant})


def assemble_isotropic(mesh: StructuredMesh, phase, bulk: float, shear: float) -> AssembledForm:
    """``bulk * div u div w + 2 shear e(u):e(w)`` on one phase."""
    I = identity_tensor(mesh.dim)
    C4 = bulk * I["div"] + 2.0 * shear * I["sym"]
    code = _phase_code(phase)
    A = _vector_form(mesh, code, C4[None], np.zeros(len(mesh.phase_elements(code)), dtype=int))
    return AssembledForm(A, _phase_name(code), _phase_name(code), {"bulk": bulk, "shear": shear})


def assemble_mass(mesh: StructuredMesh, phase, weight: float) -> AssembledForm:
    """Vector mass form ``weight * integral u . w`` on one phase."""
    code = _phase_code(phase)
    dofs = mesh.element_dofs(code)
    Ke = weight * np.kron(mesh.element_mass, np.eye(mesh.dim))
    n = mesh.n_dofs(code)
    return AssembledForm(scatter(dofs, dofs, Ke, (n, n)), _phase_name(code), _phase_name(code), {"weight": weight})


def assemble_fluid_mass(mesh: StructuredMesh, weight: float) -> AssembledForm:
    return assemble_mass(mesh, FLUID, weight)


def assemble_solid_mass(mesh: StructuredMesh, weight: float) -> AssembledForm:
    return assemble_mass(mesh, SOLID, weight)


def assemble_interface(mesh: StructuredMesh, alpha: float, *, space: str = "combined") -> AssembledForm:
    """Slip form ``alpha * integral_Gamma [w] . [v]`` with ``[w] = w_fluid - w_solid``.

    Parameters
    ----------
    space : {"combined", "fluid"}
        ``"combined"`` acts on solid DOFs followed by fluid DOFs; ``"fluid"``
        assumes a vanishing solid trace and acts on fluid DOFs only.
    """
    D = mesh.dim
    ids = mesh.facet_node_ids()
    ns = mesh.n_solid_dofs
    n_loc = ids.shape[1]
    Kf = np.empty((mesh.n_facets, n_loc * D, n_loc * D))
    for ax in range(D):
        sel = mesh.facet_axis == ax
        Kf[sel] = alpha * mesh.facet_area(ax) * np.kron(mesh.ref.face_mass, np.eye(D))
    comp = np.arange(D)
    sloc = mesh.node_index[SOLID][ids]
    floc = mesh.node_index[FLUID][ids]
    sd = np.where(sloc[:, :, None] >= 0, D * sloc[:, :, None] + comp, -1).reshape(mesh.n_facets, -1)
    fd = np.where(floc[:, :, None] >= 0, D * floc[:, :, None] + comp, -1).reshape(mesh.n_facets, -1)
    if space == "fluid":
        n = mesh.n_fluid_dofs
        A = scatter(fd, fd, Kf, (n, n), np.arange(mesh.n_facets))
    elif space == "combined":
        fd = np.where(fd >= 0, fd + ns, -1)
        dofs = np.hstack([sd, fd])
        J = np.array([[1.0, -1.0], [-1.0, 1.0]])
        Kj = np.einsum("ab,fij->faibj", J, Kf).reshape(mesh.n_facets, 2 * n_loc * D, 2 * n_loc * D)
        n = ns + mesh.n_fluid_dofs
        A = scatter(dofs, dofs, Kj, (n, n), np.arange(mesh.n_facets))
    else:
        raise ValueError(f"unknown space {space!r}")
    return AssembledForm(A, space, space, {"alpha": alpha})


def assemble_divergence(mesh: StructuredMesh, phase="fluid") -> AssembledForm:
    """Broken divergence ``B[q, v] = integral_phase q div v`` against the discontinuous pressure space."""
    code = _phase_code(phase)
    elems = mesh.phase_elements(code)
    dofs = mesh.element_dofs(code, elems)
    pdofs = mesh.pressure_dofs(code)
    B = scatter(pdofs, dofs, mesh.element_divergence, (mesh.n_pressure_dofs(code), mesh.n_dofs(code)))
    return AssembledForm(B, "pressure", _phase_name(code), {})


def assemble_pressure_mass(mesh: StructuredMesh, phase="fluid") -> AssembledForm:
    code = _phase_code(phase)
    p = mesh.pressure_dofs(code)
    n = mesh.n_pressure_dofs(code)
    return AssembledForm(scatter(p, p, mesh.element_pressure_mass, (n, n)), "pressure", "pressure", {})


def assemble_pressure_jump(mesh: StructuredMesh, tau: float = 1.0, phase="fluid") -> AssembledForm:
    """Pressure-jump stabilization ``tau * sum_F h |F| [p][q]`` over interior faces of the phase (p0 only)."""
    if mesh.pressure_kind != "p0":
        raise ValueError("pressure-jump stabilization is defined for the p0 pressure space")
    code = _phase_code(phase)
    elems = mesh.phase_elements(code)
    local = np.full(mesh.n_elements, -1)
    local[elems] = np.arange(len(elems))
    idx = np.arange(mesh.n_elements).reshape(mesh.shape, order="F")
    rows = []
    weights = []
    for ax in range(mesh.dim):
        if mesh.periodic:
            lo, up = idx, np.roll(idx, -1, axis=ax)
        else:
            s0 = [slice(None)] * mesh.dim
            s1 = [slice(None)] * mesh.dim
            s0[ax], s1[ax] = slice(0, -1), slice(1, None)
            lo, up = idx[tuple(s0)], idx[tuple(s1)]
        lo, up = lo.ravel(order="F"), up.ravel(order="F")
        sel = (mesh.elem_phase[lo] == code) & (mesh.elem_phase[up] == code)
        rows.append(np.stack([local[lo[sel]], local[up[sel]]], axis=1))
        weights.append(np.full(int(sel.sum()), tau * mesh.h[ax] * mesh.facet_area(ax)))
    rows = np.vstack(rows)
    w = np.concatenate(weights)
    J = np.array([[1.0, -1.0], [-1.0, 1.0]])
    n = len(elems)
    return AssembledForm(scatter(rows, rows, w[:, None, None] * J, (n, n), np.arange(len(w))), "pressure", "pressure", {"tau": tau})


def mean_zero_constraint(mesh: StructuredMesh, phase) -> sp.csr_matrix:
    """Functionals ``w -> integral_phase w_c`` for every component ``c``, as a ``(D, n)`` matrix."""
    code = _phase_code(phase)
    rows = [load_constant(mesh, code, c) for c in range(mesh.dim)]
    return sp.csr_matrix(np.vstack(rows))


# load vectors -------------------------------------------------------------------


def load_constant(mesh: StructuredMesh, phase, p: int) -> np.ndarray:
    """``w -> integral_phase w . e_p``."""
    code = _phase_code(phase)
    dofs = mesh.element_dofs(code)
    fe = np.zeros((mesh.ref.n_local, mesh.dim))
    fe[:, p] = mesh.element_basis_integral
    return scatter_vector(dofs, fe.ravel(), mesh.n_dofs(code))


def load_divergence(mesh: StructuredMesh, phase="solid") -> np.ndarray:
    """``w -> integral_phase div w``."""
    code = _phase_code(phase)
    dofs = mesh.element_dofs(code)
    return scatter_vector(dofs, mesh.element_gradient_integral.ravel(), mesh.n_dofs(code))


def load_strain(mesh: StructuredMesh, a, i: int, j: int, phase="solid") -> np.ndarray:
    """``w -> integral_phase a_ijkl dw_k/dy_l``, the action of the affine field ``y_j e_i``."""
    code = _phase_code(phase)
    elems = mesh.phase_elements(code)
    C4, which = mesh.element_tensor(a, elems)
    g = mesh.element_gradient_integral
    fe = np.einsum("ekl,nl->enk", C4[:, i, j], g).reshape(len(C4), -1)
    dofs = mesh.element_dofs(code, elems)
    return scatter_vector(dofs, fe[which], mesh.n_dofs(code))


def load_function(mesh: StructuredMesh, phase, func) -> np.ndarray:
    """``w -> integral_phase f . w`` for ``f(x) -> (..., D)`` evaluated at quadrature points."""
    code = _phase_code(phase)
    elems = mesh.phase_elements(code)
    x = mesh.quadrature_points(elems)
    f = np.asarray(func(x.reshape(-1, mesh.dim))).reshape(len(elems), -1, mesh.dim)
    fe = np.einsum("q,qn,eqc->enc", mesh.quad_weights, mesh.ref.N, f).reshape(len(elems), -1)
    return scatter_vector(mesh.element_dofs(code, elems), fe, mesh.n_dofs(code))


# field evaluation --------------------------------------------------------------------


def element_values(mesh: StructuredMesh, phase, vec: np.ndarray, elems=None) -> np.ndarray:
    """Field values at quadrature points, ``(ne, nq, D)``."""
    code = _phase_code(phase)
    elems = mesh.phase_elements(code) if elems is None else elems
    U = _gather(mesh, code, vec, elems)
    return np.einsum("qn,enc->eqc", mesh.ref.N, U)


def element_gradients(mesh: StructuredMesh, phase, vec: np.ndarray, elems=None) -> np.ndarray:
    """Field gradients ``grad[e, q, c, j] = du_c/dx_j`` at quadrature points."""
    code = _phase_code(phase)
    elems = mesh.phase_elements(code) if elems is None else elems
    U = _gather(mesh, code, vec, elems)
    return np.einsum("qnj,enc->eqcj", mesh.grad_basis, U)


def element_integrals(mesh: StructuredMesh, phase, vec: np.ndarray, elems=None) -> np.ndarray:
    """Integral of the field over each element, ``(ne, D)``."""
    code = _phase_code(phase)
    elems = mesh.phase_elements(code) if elems is None else elems
    U = _gather(mesh, code, vec, elems)
    return np.einsum("n,enc->ec", mesh.element_basis_integral, U)


def _gather(mesh, code, vec, elems):
    vec = np.asarray(vec)
    local = mesh.node_index[code][mesh.elem_nodes[elems]]
    V = vec.reshape(-1, mesh.dim)
    U = np.where(local[:, :, None] >= 0, V[np.maximum(local, 0)], 0)
    return U


# debug output -----------------------------------------------------------------------


def dump_coo(form: AssembledForm | sp.spmatrix, path) -> None:
    """Write ``row col value`` lines (complex values as ``re im``)."""
    A = form.matrix if isinstance(form, AssembledForm) else form
    A = sp.coo_matrix(A)
    order = np.lexsort((A.col, A.row))
    try:
        with open(Path(path), "w") as fh:
            for k in order:
                v = A.data[k]
                if np.iscomplexobj(A.data):
                    fh.write(f"{A.row[k]} {A.col[k]} {float(v.real)!r} {float(v.imag)!r}\n")
                else:
                    fh.write(f"{A.row[k]} {A.col[k]} {float(v)!r}\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None
