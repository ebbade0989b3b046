"""Effective coefficients assembled from cell solutions.

With ``p_ij = y_j e_i`` the homogenized stiffness is

    q_ijkl = q(chi_ij - p_ij, chi_kl - p_kl)

and the pressure couplings are ``beta_ij = -integral_{Y_s} div chi_ij`` and
``beta = integral_{Y_s} div chi``. The affine fields ``p_ij`` never enter as
DOF vectors: their action on a DOF vector is the strain load of the cell
problem and their self-energy is the integral of ``a`` over the solid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cell import (
    DynamicCellSolution,
    StaticCellSolutions,
    solve_static,
    solve_theta_sweep,
)
from .errors import InsufficientSamples, MissingSolutions, SolverBreakdown
from .fem import StructuredMesh, build_periodic_mesh
from .geometry import SOLID, PhaseCell, volume_fractions
from .tensors import min_strain_eigenvalue, symmetry_defect, voigt_pairs

BETA_CLIP = 1e-12
TWO_ROUTE_TOL = 1e-9
DEFAULT_LAMBDAS = np.logspace(-2, 4, 24)


@dataclass
class EffectiveCoefficients:
    """Homogenized constants of the composite.

    Attributes
    ----------
    q : ndarray
        Effective stiffness, Voigt form.
    beta_ij : ndarray
    beta, Pi, gamma, delta : float
    K_samples : list of (complex, ndarray)
        Dynamic permeability ``K(lam)`` at sampled parameters.
    """

    q: np.ndarray
    beta_ij: np.ndarray
    beta: float
    Pi: float
    gamma: float
    delta: float
    K_samples: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.beta_ij.shape[0]

    def K_at(self, lam: complex, *, atol: float = 0.0) -> np.ndarray | None:
        """Sampled ``K`` at exactly ``lam`` (or within ``atol``), else ``None``."""
        for mu, K in self.K_samples:
            if abs(complex(mu) - complex(lam)) <= atol:
                return K
        return None

    def with_K(self, K_samples) -> "EffectiveCoefficients":
        return EffectiveCoefficients(self.q, self.beta_ij, self.beta, self.Pi, self.gamma, self.delta, list(K_samples))

    def to_dict(self) -> dict:
        return {
            "q_voigt": np.asarray(self.q, dtype=float).tolist(),
            "beta_ij": np.asarray(self.beta_ij, dtype=float).tolist(),
            "beta": float(self.beta),
            "Pi": float(self.Pi),
            "gamma": float(self.gamma),
            "delta": float(self.delta),
            "K": [
                {
                    "lambda_re": float(complex(lam).real),
                    "lambda_im": float(complex(lam).imag),
                    "K_re": np.real(K).astype(float).tolist(),
                    "K_im": np.imag(K).astype(float).tolist(),
                }
                for lam, K in self.K_samples
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EffectiveCoefficients":
        samples = [
            (
                complex(s["lambda_re"], s["lambda_im"]),
                np.asarray(s["K_re"], dtype=float) + 1j * np.asarray(s["K_im"], dtype=float),
            )
            for s in d.get("K", [])
        ]
        return cls(
            q=np.asarray(d["q_voigt"], dtype=float),
            beta_ij=np.asarray(d["beta_ij"], dtype=float),
            beta=float(d["beta"]),
            Pi=float(d["Pi"]),
            gamma=float(d["gamma"]),
            delta=float(d["delta"]),
            K_samples=samples,
        )


def _require(static):
    if static is None or static.chi is None or not static.chi_ij:
        raise MissingSolutions("static cell solutions are required")


def affine_energy(mesh: StructuredMesh, a) -> np.ndarray:
    """``q(p_ij, p_kl)`` in Voigt form: the integral of ``a`` over the solid."""
    elems = mesh.phase_elements(SOLID)
    a = np.asarray(a, dtype=float)
    if a.ndim == 2:
        return a * len(elems) * mesh.element_volume
    nv = a.shape[-1]
    per = np.stack([a[..., I, J].ravel(order="F") for I in range(nv) for J in range(nv)], axis=1)
    return per[elems].sum(axis=0).reshape(nv, nv) * mesh.element_volume


def compute_q(static: StaticCellSolutions) -> np.ndarray:
    """Effective stiffness in Voigt form.

    Raises
    ------
    MissingSolutions
    """
    _require(static)
    pairs = voigt_pairs(static.mesh.dim)
    missing = [p for p in pairs if p not in static.chi_ij]
    if missing:
        raise MissingSolutions(f"strain correctors missing for pairs {missing}")
    K = static.stiffness.matrix
    X = np.stack([static.chi_ij[p] for p in pairs], axis=1)
    L = np.stack([static.load_ij[p] for p in pairs], axis=1)
    P = affine_energy(static.mesh, static.a)
    return X.T @ (K @ X) - L.T @ X - X.T @ L + P


def compute_betas(static: StaticCellSolutions) -> tuple[np.ndarray, float]:
    """Pressure couplings ``(beta_ij, beta)``, cross-checked against the energy route.

    Raises
    ------
    MissingSolutions
    SolverBreakdown
        If the two routes disagree or ``beta`` is negative beyond roundoff.
    """
    _require(static)
    dim = static.mesh.dim
    b = static.load_div
    K = static.stiffness.matrix
    chi = static.chi
    beta = float(b @ chi)
    beta_energy = float(chi @ (K @ chi))
    if abs(beta - beta_energy) > TWO_ROUTE_TOL * max(1.0, abs(beta)):
        raise SolverBreakdown(f"beta routes disagree: {beta!r} vs {beta_energy!r}")
    if beta < -BETA_CLIP:
        raise SolverBreakdown(f"beta is negative: {beta!r}")
    beta = max(beta, 0.0)
    beta_ij = np.zeros((dim, dim))
    for (i, j), x in static.chi_ij.items():
        v = -float(b @ x)
        cross = -float(chi @ (K @ x))
        if abs(v - cross) > TWO_ROUTE_TOL * max(1.0, abs(v)):
            raise SolverBreakdown(f"beta_{i}{j} routes disagree: {v!r} vs {cross!r}")
        beta_ij[i, j] = beta_ij[j, i] = v
    return beta_ij, beta


def beta_routes(static: StaticCellSolutions) -> dict:
    """Both evaluations of every pressure coupling, for diagnostics."""
    K = static.stiffness.matrix
    chi = static.chi
    out = {"beta": (float(static.load_div @ chi), float(chi @ (K @ chi)))}
    for p, x in static.chi_ij.items():
        out[p] = (-float(static.load_div @ x), -float(chi @ (K @ x)))
    return out


def compute_delta(Pi: float, gamma: float, beta: float) -> float:
    """``(Pi / gamma + beta) ** -1``."""
    return 1.0 / (Pi / gamma + beta)


def compute_permeability(solutions: list[DynamicCellSolution], *, rtol: float = 1e-8) -> list:
    """``K(lam)`` samples from dynamic cell solutions.

    The load-functional value is returned; the energy-route value must agree
    within ``rtol`` relative.

    Raises
    ------
    MissingSolutions
    SolverBreakdown
    """
    if not solutions:
        raise MissingSolutions("no dynamic cell solutions given")
    out = []
    for s in solutions:
        scale = max(np.abs(s.K).max(), np.finfo(float).tiny)
        gap = np.abs(s.K - s.K_energy).max() / scale
        if gap > rtol:
            raise SolverBreakdown(f"K routes disagree at lambda={s.lam}: relative gap {gap:.3e}")
        out.append((s.lam, s.K.copy()))
    return out


def high_lambda_limit(K_samples, rho_f: float, *, max_degree: int = 3) -> tuple[np.ndarray, float]:
    """Extrapolate ``lam^2 rho_f K(lam)`` to ``lam -> infinity`` along the real axis.

    Samples in the top decade are fitted by polynomials in ``lam ** -1/2``;
    the intercept of the highest-degree fit is the limit and its distance to
    the next lower degree is the error estimate.

    Raises
    ------
    InsufficientSamples
        If fewer than 3 real samples lie in the top decade.
    """
    real = [(complex(l).real, K) for l, K in K_samples if complex(l).imag == 0 and complex(l).real > 0]
    if not real:
        raise InsufficientSamples("no real positive samples")
    top = max(l for l, _ in real)
    sel = sorted((l, K) for l, K in real if l >= top / 10.0)
    if len(sel) < 3:
        raise InsufficientSamples(f"{len(sel)} samples in the top decade, need 3")
    lam = np.array([l for l, _ in sel])
    G = np.stack([l**2 * rho_f * np.real(K) for l, K in sel])
    s = lam**-0.5
    deg = min(max_degree, len(sel) - 1)
    fits = []
    for d in (deg - 1, deg):
        V = np.vander(s, d + 1, increasing=True)
        coef, *_ = np.linalg.lstsq(V, G.reshape(len(sel), -1), rcond=None)
        fits.append(coef[0].reshape(G.shape[1:]))
    err = float(np.abs(fits[1] - fits[0]).max())
    return fits[1], err


def homogenize(
    cell: PhaseCell,
    *,
    lambdas=None,
    order: int = 2,
    a_field=None,
    noslip: bool = False,
    viscous: str = "full",
    threads: int = 1,
) -> EffectiveCoefficients:
    """Full pipeline from a cell to its effective coefficients.

    Parameters
    ----------
    lambdas : sequence of complex, optional
        Sample points for ``K``; the default is 24 log-spaced real points in
        ``[1e-2, 1e4]``. Pass an empty sequence to skip the dynamic problem.
    a_field : ndarray, optional
        Per-voxel stiffness overriding ``cell.materials.a``.
    """
    mat = cell.materials
    mesh = build_periodic_mesh(cell, order)
    a = mat.a if a_field is None else a_field
    static = solve_static(mesh, a)
    q = compute_q(static)
    beta_ij, beta = compute_betas(static)
    _, Pi = volume_fractions(cell)
    lambdas = DEFAULT_LAMBDAS if lambdas is None else lambdas
    samples = []
    if len(lambdas) and Pi > 0:
        sols = solve_theta_sweep(
            mesh, lambdas, mat.mu, mat.rho_f, mat.alpha, noslip=noslip, viscous=viscous, threads=threads
        )
        samples = compute_permeability(sols)
    delta = compute_delta(Pi, mat.gamma, beta)
    return EffectiveCoefficients(q, beta_ij, beta, Pi, mat.gamma, delta, samples)


def check_q(q: np.ndarray) -> dict:
    """Symmetry defect and smallest strain eigenvalue of an effective stiffness."""
    return {"symmetry_defect": symmetry_defect(q), "min_eigenvalue": min_strain_eigenvalue(q)}
