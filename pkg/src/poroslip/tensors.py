"""Voigt bookkeeping for fourth-order tensors.

Voigt ordering is ``(11, 22, 12)`` in 2D and ``(11, 22, 33, 23, 13, 12)`` in
3D. A stiffness matrix ``C`` in Voigt form carries no extra factors, so that
``C[I, J] = a[i, j, k, l]`` for ``I = (i, j)`` and ``J = (k, l)``. The factor 2
lives in the engineering strain: ``xi : a : xi = g^T C g`` with
``g = (xi_11, xi_22, 2 xi_12)``.
"""

from __future__ import annotations

import numpy as np

_PAIRS = {
    1: [(0, 0)],
    2: [(0, 0), (1, 1), (0, 1)],
    3: [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)],
}


def voigt_pairs(dim: int) -> list[tuple[int, int]]:
    """Index pairs in Voigt order."""
    try:
        return list(_PAIRS[dim])
    except KeyError:
        raise ValueError(f"unsupported dimension {dim}") from None


def voigt_size(dim: int) -> int:
    return dim * (dim + 1) // 2


def dim_from_voigt(n: int) -> int:
    """Spatial dimension implied by a Voigt matrix of size ``n``."""
    for d in (1, 2, 3):
        if voigt_size(d) == n:
            return d
    raise ValueError(f"no dimension has Voigt size {n}")


def voigt_index(dim: int) -> np.ndarray:
    """Map ``(i, j)`` to the Voigt index, as a ``dim x dim`` integer array."""
    idx = np.empty((dim, dim), dtype=int)
    for v, (i, j) in enumerate(voigt_pairs(dim)):
        idx[i, j] = idx[j, i] = v
    return idx


def voigt_to_tensor(C: np.ndarray) -> np.ndarray:
    """Expand a Voigt stiffness matrix into the full fourth-order tensor."""
    C = np.asarray(C)
    dim = dim_from_voigt(C.shape[-1])
    vi = voigt_index(dim)
    return C[..., vi[:, :, None, None], vi[None, None, :, :]]


def tensor_to_voigt(a: np.ndarray) -> np.ndarray:
    """Collapse a fourth-order tensor to Voigt form (reads ``a[i,j,k,l]`` with i<=j, k<=l)."""
    a = np.asarray(a)
    dim = a.shape[-1]
    pairs = voigt_pairs(dim)
    n = len(pairs)
    C = np.empty(a.shape[:-4] + (n, n), dtype=a.dtype)
    for I, (i, j) in enumerate(pairs):
        for J, (k, l) in enumerate(pairs):
            C[..., I, J] = a[..., i, j, k, l]
    return C


def isotropic_voigt(lame: float, shear: float, dim: int) -> np.ndarray:
    """Isotropic stiffness ``lame * d_ij d_kl + shear (d_ik d_jl + d_il d_jk)``."""
    n = voigt_size(dim)
    C = np.zeros((n, n))
    C[:dim, :dim] = lame
    C[np.arange(dim), np.arange(dim)] += 2 * shear
    C[np.arange(dim, n), np.arange(dim, n)] = shear
    return C


def mandel_matrix(C: np.ndarray) -> np.ndarray:
    """Rescale a Voigt stiffness so its eigenvalues are those of the tensor on symmetric matrices."""
    dim = dim_from_voigt(C.shape[-1])
    w = np.ones(C.shape[-1])
    w[dim:] = np.sqrt(2.0)
    return C * w[:, None] * w[None, :]


def min_strain_eigenvalue(C: np.ndarray) -> float:
    """Smallest eigenvalue of ``xi -> a : xi`` on symmetric matrices."""
    M = mandel_matrix(np.asarray(C, dtype=float))
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


def symmetry_defect(C: np.ndarray) -> float:
    """Relative major-symmetry defect of a Voigt matrix (minor symmetry is implied by the storage)."""
    C = np.asarray(C, dtype=float)
    scale = max(np.abs(C).max(), np.finfo(float).tiny)
    return float(np.abs(C - C.T).max() / scale)
