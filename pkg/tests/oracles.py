"""Independent reference solutions used by the tests.

Nothing here touches the finite element code.
"""

from __future__ import annotations

import numpy as np


def isotropic_2d(lame: float, shear: float) -> np.ndarray:
    return np.array([[lame + 2 * shear, lame, 0.0], [lame, lame + 2 * shear, 0.0], [0.0, 0.0, shear]])


def laminate_stiffness(layers, fractions) -> np.ndarray:
    """Effective Voigt stiffness of a 2D laminate whose layers are stacked along y2.

    Tangential strain (11) is uniform; normal and shear tractions (22, 12) are
    uniform. ``layers`` are 3x3 Voigt matrices with engineering shear strain.
    """
    t, n = [0], [1, 2]
    f = np.asarray(fractions, dtype=float) / np.sum(fractions)
    inv_nn = sum(fk * np.linalg.inv(C[np.ix_(n, n)]) for fk, C in zip(f, layers))
    Cnn = np.linalg.inv(inv_nn)
    nt = sum(fk * np.linalg.inv(C[np.ix_(n, n)]) @ C[np.ix_(n, t)] for fk, C in zip(f, layers))
    tn = sum(fk * C[np.ix_(t, n)] @ np.linalg.inv(C[np.ix_(n, n)]) for fk, C in zip(f, layers))
    tt = sum(
        fk * (C[np.ix_(t, t)] - C[np.ix_(t, n)] @ np.linalg.inv(C[np.ix_(n, n)]) @ C[np.ix_(n, t)])
        for fk, C in zip(f, layers)
    )
    out = np.zeros((3, 3))
    out[np.ix_(n, n)] = Cnn
    out[np.ix_(n, t)] = Cnn @ nt
    out[np.ix_(t, n)] = tn @ Cnn
    out[np.ix_(t, t)] = tt + tn @ Cnn @ nt
    return out


def solid_fluid_laminate(C: np.ndarray, solid_fraction: float) -> dict:
    """Corrector data of a solid band (normal along y2) bordered by fluid.

    The band has traction-free faces, so every corrector is a uniform strain
    in the normal direction fixed by the natural boundary condition.
    """
    fs = solid_fraction
    C22, C33 = C[1, 1], C[2, 2]
    beta = fs / C22
    # normal stretch and shear of chi_ij per Voigt pair
    d2 = np.array([C[0, 1], C[1, 1], C[2, 1]]) / C22
    beta_ij = np.array([[-fs * d2[0], 0.0], [0.0, -fs * d2[1]]])
    q = np.zeros((3, 3))
    q[0, 0] = fs * (C[0, 0] - C[0, 1] ** 2 / C22)
    del C33
    return {"beta": beta, "beta_ij": beta_ij, "q": q}


def channel_K(lam, width, mu, rho_f, alpha=None):
    """Mean of the 1D channel profile solving -2 lam mu u'' + lam^2 rho_f u = 1.

    Robin walls ``2 mu u' = -+ alpha u`` or, with ``alpha=None``, clamped walls.
    The channel has unit length along its axis.
    """
    a = 0.5 * width
    k = np.sqrt(lam * rho_f / (2 * mu))
    if alpha is None:
        C = 1.0 / np.cosh(k * a)
    else:
        C = alpha / (2 * mu * k * np.sinh(k * a) + alpha * np.cosh(k * a))
    return (width - 2 * C * np.sinh(k * a) / k) / (lam**2 * rho_f)


def channel_profile(y, lam, width, mu, rho_f, alpha=None):
    a = 0.5 * width
    k = np.sqrt(lam * rho_f / (2 * mu))
    if alpha is None:
        C = 1.0 / np.cosh(k * a)
    else:
        C = alpha / (2 * mu * k * np.sinh(k * a) + alpha * np.cosh(k * a))
    return (1 - C * np.cosh(k * y)) / (lam**2 * rho_f)


def union_find_connected(solid: np.ndarray) -> bool:
    """Face connectivity of ``True`` voxels on the periodic torus by union-find."""
    shape = solid.shape
    parent = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    cells = [tuple(c) for c in np.argwhere(solid)]
    for c in cells:
        parent[c] = c
    for c in cells:
        for ax in range(len(shape)):
            nb = list(c)
            nb[ax] = (nb[ax] + 1) % shape[ax]
            nb = tuple(nb)
            if nb in parent:
                ra, rb = find(c), find(nb)
                if ra != rb:
                    parent[ra] = rb
    return len({find(c) for c in cells}) == 1


def laminate_corrector_fd(C_layers, labels, pair, n=None):
    """1D finite-difference solution of the laminate corrector ODE.

    Solves ``(C_nn(y) w')' = (C_nI(y))'`` for the periodic profile
    ``w = (chi_2, chi_1)`` along y2 with zero mean, where ``C_nI`` is the
    column of the stiffness picked by the Voigt pair. Layers are given per
    voxel row by ``labels`` into ``C_layers``. Returns node values at
    ``y_k = -1/2 + k/N`` for ``k = 0..N-1``.
    """
    labels = np.asarray(labels)
    N = len(labels)
    h = 1.0 / N
    nn = [1, 2]
    col = {(0, 0): 0, (1, 1): 1, (0, 1): 2}[pair]
    A = np.zeros((2 * N + 2, 2 * N + 2))
    b = np.zeros(2 * N + 2)
    for e in range(N):
        Cm = C_layers[labels[e]]
        Cnn = Cm[np.ix_(nn, nn)]
        cI = Cm[nn, col]
        i0, i1 = e, (e + 1) % N
        for r, sr in ((i0, -1.0), (i1, 1.0)):
            for c, sc in ((i0, -1.0), (i1, 1.0)):
                A[2 * r : 2 * r + 2, 2 * c : 2 * c + 2] += sr * sc * Cnn / h
            b[2 * r : 2 * r + 2] += sr * cI
    # mean-zero multipliers
    for comp in range(2):
        A[2 * N + comp, comp : 2 * N : 2] = h
        A[comp : 2 * N : 2, 2 * N + comp] = h
    x = np.linalg.solve(A, b)
    return x[: 2 * N].reshape(N, 2)
