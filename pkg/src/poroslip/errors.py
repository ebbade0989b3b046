"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`PoroslipError`.
The CLI maps the four families below onto distinct exit codes.
"""

from __future__ import annotations


class PoroslipError(Exception):
    """Base class for all package errors."""

    exit_code = 1


# configuration ----------------------------------------------------------


class ConfigError(PoroslipError):
    """Malformed or inconsistent run configuration."""

    exit_code = 2


# geometry -----------------------------------------------------------------


class GeometryError(PoroslipError):
    """Invalid cell geometry or material data."""

    exit_code = 3


class EmptyPhase(GeometryError):
    """One of the two phases has no voxel."""


class DisconnectedSolid(GeometryError):
    """The solid phase is not connected on the periodic torus."""


class BadMaterial(GeometryError):
    """A material parameter violates a required constraint.

    Parameters
    ----------
    constraint : str
        Short name of the violated constraint.
    message : str
        Human readable detail.
    """

    def __init__(self, constraint: str, message: str):
        super().__init__(f"{constraint}: {message}")
        self.constraint = constraint


class MeshMismatch(GeometryError):
    """Meshes or grids that must agree do not."""


# solvers ------------------------------------------------------------------


class SolverError(PoroslipError):
    """A linear solve or coefficient evaluation failed."""

    exit_code = 4


class SingularBeyondTranslations(SolverError):
    """The elastic operator has a kernel larger than the rigid translations."""


class SolverBreakdown(SolverError):
    """Direct and iterative solvers both failed to reach the residual target."""


class Incompatible(SolverError):
    """The right-hand side is not orthogonal to the operator kernel."""


class NonCoercive(SolverError):
    """The requested parameter lies outside the coercivity region."""


class MissingSolutions(SolverError):
    """Required cell solutions are absent."""


class InsufficientSamples(SolverError):
    """Too few samples to fit an asymptotic limit."""


class OutOfRegion(SolverError):
    """A Laplace parameter lies outside the admissible half plane."""


class MissingK(SolverError):
    """No permeability value is available at the requested parameter."""


class ContourMismatch(SolverError):
    """Transform values do not match the inversion contour nodes."""


# io -----------------------------------------------------------------------


class IoError(PoroslipError):
    """Reading or writing a file failed."""

    exit_code = 5
