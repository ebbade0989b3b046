"""Periodic voxel cells, phase bookkeeping and the solid/fluid interface.

The unit cell is ``Y = (-1/2, 1/2)^D`` cut into ``resolution[a]`` voxels along
axis ``a``. Phase arrays are indexed ``phase[i_1, ..., i_D]`` in coordinate
order; flattening uses Fortran order so the first axis runs fastest.
"""

from __future__ import annotations

import base64
import json
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import BadMaterial, DisconnectedSolid, EmptyPhase, GeometryError, IoError
from .tensors import dim_from_voigt, min_strain_eigenvalue, symmetry_defect

SOLID = 0
FLUID = 1


@dataclass(frozen=True)
class MaterialParams:
    """Material constants of the two phases.

    Parameters
    ----------
    a : ndarray
        Solid stiffness in Voigt form (Pa).
    rho_s, rho_f : float
        Solid and fluid densities.
    c0 : float
        Reference sound speed of the fluid.
    mu, eta : float
        Fluid viscosities.
    alpha : float
        Slip constant of the interface.
    """

    a: np.ndarray
    rho_s: float
    rho_f: float
    c0: float
    mu: float
    eta: float
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "a", np.array(self.a, dtype=float))

    @property
    def dim(self) -> int:
        return dim_from_voigt(self.a.shape[0])

    @property
    def gamma(self) -> float:
        """Fluid bulk stiffness ``c0**2 * rho_f``."""
        return self.c0**2 * self.rho_f

    def validate(self) -> "MaterialParams":
        """Check every parameter constraint; raise :class:`BadMaterial` naming the first violation."""
        a = self.a
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise BadMaterial("a_shape", f"Voigt matrix must be square, got {a.shape}")
        try:
            dim_from_voigt(a.shape[0])
        except ValueError as exc:
            raise BadMaterial("a_shape", str(exc)) from None
        if not np.all(np.isfinite(a)):
            raise BadMaterial("a_finite", "stiffness has non-finite entries")
        if symmetry_defect(a) > 1e-12:
            raise BadMaterial("a_symmetry", "stiffness lacks major symmetry")
        if min_strain_eigenvalue(a) <= 0:
            raise BadMaterial("a_positive_definite", "stiffness is not positive definite on symmetric strains")
        for name in ("rho_s", "rho_f"):
            if not getattr(self, name) > 0:
                raise BadMaterial(f"{name}_positive", f"{name} must be positive")
        if not self.mu > 0:
            raise BadMaterial("mu_positive", "mu must be positive")
        if not self.eta / self.mu > -2.0 / 3.0:
            raise BadMaterial("eta_over_mu", "eta/mu must exceed -2/3")
        if not self.alpha > 0:
            raise BadMaterial("alpha_positive", "alpha must be positive")
        if not self.gamma > 0:
            raise BadMaterial("gamma_positive", "c0**2 * rho_f must be positive")
        return self

    def to_dict(self) -> dict:
        return {
            "a_voigt": self.a.tolist(),
            "rho_s": float(self.rho_s),
            "rho_f": float(self.rho_f),
            "c0": float(self.c0),
            "mu": float(self.mu),
            "eta": float(self.eta),
            "alpha": float(self.alpha),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MaterialParams":
        return cls(
            a=np.asarray(d["a_voigt"], dtype=float),
            rho_s=float(d["rho_s"]),
            rho_f=float(d["rho_f"]),
            c0=float(d["c0"]),
            mu=float(d["mu"]),
            eta=float(d["eta"]),
            alpha=float(d["alpha"]),
        )


@dataclass(frozen=True)
class PhaseCell:
    """Voxelized periodic unit cell.

    Attributes
    ----------
    phase : ndarray of uint8
        ``SOLID`` (0) or ``FLUID`` (1) per voxel, shape ``resolution``.
    materials : MaterialParams
    """

    phase: np.ndarray
    materials: MaterialParams
    single_phase: bool = field(default=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "phase", np.ascontiguousarray(self.phase, dtype=np.uint8))
        self.phase.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.phase.ndim

    @property
    def resolution(self) -> tuple[int, ...]:
        return tuple(self.phase.shape)

    @property
    def voxel_volume(self) -> float:
        return 1.0 / self.phase.size

    def flat_phase(self) -> np.ndarray:
        """Phase labels with the first axis running fastest."""
        return self.phase.ravel(order="F")


@dataclass(frozen=True)
class InterfaceMesh:
    """Stair-step interface made of voxel faces.

    Facet ``k`` is the face orthogonal to ``axis[k]`` between the flat voxels
    ``lower[k]`` and ``upper[k] = lower[k] + e_axis`` (periodically).

    Attributes
    ----------
    axis : ndarray of int
    lower, upper : ndarray of int
        Flat voxel indices on either side.
    solid, fluid : ndarray of int
        The same voxels sorted by phase.
    normal : ndarray, shape (n, dim)
        Unit normal pointing from the fluid voxel into the solid voxel.
    area : ndarray
    center : ndarray, shape (n, dim)
    """

    axis: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    solid: np.ndarray
    fluid: np.ndarray
    normal: np.ndarray
    area: np.ndarray
    center: np.ndarray

    @property
    def n_facets(self) -> int:
        return len(self.axis)

    @property
    def total_area(self) -> float:
        return float(self.area.sum())


def voxel_centers(resolution) -> list[np.ndarray]:
    """Voxel center coordinates ``(i + 1/2)/res - 1/2`` on an ``ij`` grid."""
    axes = [(np.arange(n) + 0.5) / n - 0.5 for n in resolution]
    return np.meshgrid(*axes, indexing="ij")


def _validate_labels(phase: np.ndarray, dim: int, *, allow_single_phase: bool = False):
    if phase.ndim != dim:
        raise GeometryError(f"phase array has {phase.ndim} axes, expected {dim}")
    if any(n < 2 for n in phase.shape):
        raise GeometryError(f"resolution must be at least 2 per axis, got {phase.shape}")
    if not np.isin(phase, (SOLID, FLUID)).all():
        raise GeometryError("phase labels must be 0 (solid) or 1 (fluid)")
    n_fluid = int(np.count_nonzero(phase == FLUID))
    if not allow_single_phase:
        if n_fluid == 0:
            raise EmptyPhase("cell has no fluid voxel")
        if n_fluid == phase.size:
            raise EmptyPhase("cell has no solid voxel")
    elif n_fluid == phase.size:
        raise EmptyPhase("cell has no solid voxel")


def _torus_neighbors(shape) -> list[tuple[np.ndarray, np.ndarray]]:
    """Flat index pairs ``(v, v + e_a)`` for every axis with wraparound."""
    idx = np.arange(int(np.prod(shape))).reshape(shape, order="F")
    out = []
    for ax in range(len(shape)):
        nb = np.roll(idx, -1, axis=ax)
        out.append((idx.ravel(order="F"), nb.ravel(order="F")))
    return out


def solid_is_connected(phase: np.ndarray) -> bool:
    """Face connectivity of the solid voxels on the periodic torus."""
    flat = phase.ravel(order="F") == SOLID
    n = flat.size
    rows, cols = [], []
    for v, w in _torus_neighbors(phase.shape):
        keep = flat[v] & flat[w]
        rows.append(v[keep])
        cols.append(w[keep])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    graph = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    return np.unique(labels[flat]).size == 1


def solid_winding_rank(phase: np.ndarray) -> int:
    """Number of independent lattice directions along which the solid percolates.

    A connected solid whose periodic extension spans every direction has rank
    ``dim``; a stripe has rank 1. The effective elastic tensor is positive
    definite only at full rank.
    """
    shape = phase.shape
    dim = len(shape)
    flat = phase.ravel(order="F") == SOLID
    n = flat.size
    adj: list[list[tuple[int, np.ndarray]]] = [[] for _ in range(n)]
    for ax, (v, w) in enumerate(_torus_neighbors(shape)):
        keep = flat[v] & flat[w]
        coords = np.array(np.unravel_index(v[keep], shape, order="F"))
        wraps = coords[ax] == shape[ax] - 1
        for a, b, wr in zip(v[keep], w[keep], wraps):
            # image offset gained by crossing the periodic seam
            step = np.zeros(dim, dtype=int)
            step[ax] = 1 if wr else 0
            adj[a].append((b, step))
            adj[b].append((a, -step))
    lift = np.full((n, dim), np.iinfo(np.int64).min, dtype=np.int64)
    cycles = []
    for start in np.flatnonzero(flat):
        if lift[start, 0] != np.iinfo(np.int64).min:
            continue
        lift[start] = 0
        stack = [start]
        while stack:
            a = stack.pop()
            for b, step in adj[a]:
                target = lift[a] + step
                if lift[b, 0] == np.iinfo(np.int64).min:
                    lift[b] = target
                    stack.append(b)
                elif not np.array_equal(lift[b], target):
                    cycles.append(target - lift[b])
    if not cycles:
        return 0
    return int(np.linalg.matrix_rank(np.array(cycles, dtype=float)))


def build_phase_cell(
    dim: int,
    resolution,
    indicator: Callable[..., np.ndarray] | np.ndarray,
    materials: MaterialParams,
    *,
    allow_single_phase: bool = False,
) -> PhaseCell:
    """Voxelize an indicator into a validated periodic cell.

    Parameters
    ----------
    dim : int
        2 or 3.
    resolution : int or sequence of int
        Voxels per axis.
    indicator : callable or ndarray
        Either ``indicator(*centers) -> bool array`` marking FLUID voxels, or
        a label array of shape ``resolution``.
    materials : MaterialParams
    allow_single_phase : bool, optional
        Accept a cell with no fluid voxel. Used for purely elastic checks.

    Raises
    ------
    EmptyPhase, DisconnectedSolid, BadMaterial
    """
    if dim not in (2, 3):
        raise GeometryError(f"dim must be 2 or 3, got {dim}")
    res = (int(resolution),) * dim if np.isscalar(resolution) else tuple(int(r) for r in resolution)
    if len(res) != dim:
        raise GeometryError(f"resolution {res} does not match dim {dim}")
    materials.validate()
    if materials.dim != dim:
        raise BadMaterial("a_shape", f"stiffness is {materials.dim}D but cell is {dim}D")
    if callable(indicator):
        if any(n < 2 for n in res):
            raise GeometryError(f"resolution must be at least 2 per axis, got {res}")
        phase = np.where(np.asarray(indicator(*voxel_centers(res)), dtype=bool), FLUID, SOLID)
    else:
        phase = np.asarray(indicator)
        if phase.shape != res:
            raise GeometryError(f"label array shape {phase.shape} does not match resolution {res}")
    phase = phase.astype(np.uint8)
    _validate_labels(phase, dim, allow_single_phase=allow_single_phase)
    if not solid_is_connected(phase):
        raise DisconnectedSolid("solid voxels are not face-connected on the torus")
    return PhaseCell(phase, materials, single_phase=bool((phase == SOLID).all()))


def volume_fractions(cell: PhaseCell) -> tuple[float, float]:
    """Return ``(fraction_solid, Pi)`` by voxel counting."""
    n = cell.phase.size
    n_fluid = int(np.count_nonzero(cell.phase == FLUID))
    return (n - n_fluid) / n, n_fluid / n


def extract_interface(cell: PhaseCell) -> InterfaceMesh:
    """Collect every solid/fluid voxel face on the torus."""
    shape = cell.resolution
    dim = cell.dim
    flat = cell.flat_phase()
    h = 1.0 / np.array(shape, dtype=float)
    parts = {k: [] for k in ("axis", "lower", "upper", "solid", "fluid", "normal", "area", "center")}
    for ax, (v, w) in enumerate(_torus_neighbors(shape)):
        sel = flat[v] != flat[w]
        lo, up = v[sel], w[sel]
        m = len(lo)
        lower_is_fluid = flat[lo] == FLUID
        normal = np.zeros((m, dim))
        normal[:, ax] = np.where(lower_is_fluid, 1.0, -1.0)
        coords = np.array(np.unravel_index(lo, shape, order="F"), dtype=float).T
        center = (coords + 0.5) * h - 0.5
        center[:, ax] += 0.5 * h[ax]
        parts["axis"].append(np.full(m, ax))
        parts["lower"].append(lo)
        parts["upper"].append(up)
        parts["solid"].append(np.where(lower_is_fluid, up, lo))
        parts["fluid"].append(np.where(lower_is_fluid, lo, up))
        parts["normal"].append(normal)
        parts["area"].append(np.full(m, np.prod(np.delete(h, ax))))
        parts["center"].append(center)
    cat = {k: np.concatenate(v) if v else np.zeros(0) for k, v in parts.items()}
    return InterfaceMesh(**cat)


# file format ----------------------------------------------------------------


def geometry_to_dict(cell: PhaseCell) -> dict:
    """JSON-ready representation; phase bytes are base64 with the first axis fastest."""
    return {
        "dim": cell.dim,
        "resolution": list(cell.resolution),
        "materials": cell.materials.to_dict(),
        "phase": base64.b64encode(cell.flat_phase().tobytes()).decode("ascii"),
    }


def geometry_from_dict(d: dict, *, allow_single_phase: bool = False) -> PhaseCell:
    try:
        dim = int(d["dim"])
        res = d["resolution"]
        res = (int(res),) * dim if np.isscalar(res) else tuple(int(r) for r in res)
        raw = np.frombuffer(base64.b64decode(d["phase"], validate=True), dtype=np.uint8)
        materials = MaterialParams.from_dict(d["materials"])
    except (KeyError, TypeError, ValueError) as exc:
        raise IoError(f"malformed geometry document: {exc}") from None
    if raw.size != int(np.prod(res)):
        raise IoError(f"phase payload has {raw.size} bytes, expected {int(np.prod(res))}")
    labels = raw.reshape(res, order="F")
    return build_phase_cell(dim, res, labels, materials, allow_single_phase=allow_single_phase)


def read_geometry(path, **kwargs) -> PhaseCell:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read geometry {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IoError(f"geometry {path} is not valid JSON: {exc}") from None
    return geometry_from_dict(doc, **kwargs)


# common shapes --------------------------------------------------------------


def disk_indicator(radius: float) -> Callable[..., np.ndarray]:
    """Fluid inside a centered disk or ball."""

    def ind(*y):
        return sum(c * c for c in y) < radius * radius

    return ind


def slab_indicator(axis: int, lo: float, hi: float) -> Callable[..., np.ndarray]:
    """Fluid where ``lo < y[axis] < hi``."""

    def ind(*y):
        return (y[axis] > lo) & (y[axis] < hi)

    return ind
