"""Numerical inversion of Laplace transforms sampled on a fixed contour.

Two contours are provided:

* :class:`TalbotContour`: the fixed Talbot rule. Nodes
  depend on the time, so every time owns ``n`` nodes. ``t = 0`` is handled by
  the initial value theorem with a single large real node.
* :class:`WeeksContour`: a Laguerre expansion whose nodes lie on the
  vertical line ``Re(s) = sigma`` and are shared by all times.

Workflow: build a contour, evaluate the transform at ``contour.nodes``,
then call :func:`inverse_laplace`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContourMismatch, ConfigError

INITIAL_VALUE_NODE = 1e8


@dataclass(frozen=True)
class TalbotContour:
    """Fixed Talbot contour.

    Parameters
    ----------
    times : array_like
        Nonnegative times.
    n : int
        Nodes per positive time (default 32).
    """

    times: tuple
    n: int = 32

    def __init__(self, times, n: int = 32):
        t = tuple(float(x) for x in np.atleast_1d(times))
        if any(x < 0 for x in t):
            raise ConfigError("times must be nonnegative")
        if n < 2:
            raise ConfigError("Talbot rule needs at least 2 nodes")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "n", int(n))

    def _time_nodes(self, t: float):
        if t == 0.0:
            return np.array([INITIAL_VALUE_NODE + 0j]), np.array([INITIAL_VALUE_NODE + 0j])
        M = self.n
        r = 2.0 * M / (5.0 * t)
        th = np.arange(1, M) * np.pi / M
        cot = 1.0 / np.tan(th)
        s = np.concatenate([[r + 0j], r * th * (cot + 1j)])
        sigma = th + (th * cot - 1.0) * cot
        # weights already include exp(s t)
        w = np.concatenate([[0.5 * np.exp(r * t) + 0j], np.exp(t * s[1:]) * (1 + 1j * sigma)]) * (r / M)
        return s, w

    @property
    def nodes(self) -> np.ndarray:
        return np.concatenate([self._time_nodes(t)[0] for t in self.times])

    def counts(self) -> list[int]:
        return [len(self._time_nodes(t)[0]) for t in self.times]


@dataclass(frozen=True)
class WeeksContour:
    """Weeks method on the line ``Re(s) = sigma``.

    Parameters
    ----------
    times : array_like
    n : int
        Number of Laguerre terms; ``2 n`` nodes are used.
    sigma : float
        Abscissa of the inversion line, right of every singularity.
    b : float
        Laguerre time scale.
    """

    times: tuple
    n: int = 64
    sigma: float = 1.5
    b: float = 8.0

    def __init__(self, times, n: int = 64, sigma: float = 1.5, b: float = 8.0):
        t = tuple(float(x) for x in np.atleast_1d(times))
        if any(x < 0 for x in t):
            raise ConfigError("times must be nonnegative")
        if b <= 0:
            raise ConfigError("b must be positive")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "sigma", float(sigma))
        object.__setattr__(self, "b", float(b))

    @property
    def angles(self) -> np.ndarray:
        N2 = 2 * self.n
        return 2.0 * np.pi * (np.arange(N2) + 0.5) / N2

    @property
    def nodes(self) -> np.ndarray:
        th = self.angles
        return self.sigma + 0.5j * self.b / np.tan(0.5 * th)

    def counts(self) -> list[int]:
        return [2 * self.n]


def _laguerre(n: int, x: np.ndarray) -> np.ndarray:
    """``L_0..L_{n-1}`` at ``x`` by the three-term recurrence, shape ``(n, len(x))``."""
    L = np.empty((n, len(x)))
    L[0] = 1.0
    if n > 1:
        L[1] = 1.0 - x
    for k in range(1, n - 1):
        L[k + 1] = ((2 * k + 1 - x) * L[k] - k * L[k - 1]) / (k + 1)
    return L


def inverse_laplace(values, contour, *, nodes=None) -> np.ndarray:
    """Invert transform samples taken at ``contour.nodes``.

    Parameters
    ----------
    values : array_like, shape (n_nodes, ...)
        Transform values, one row per node in contour order.
    contour : TalbotContour or WeeksContour
    nodes : array_like, optional
        The nodes the values were taken at; checked against the contour.

    Returns
    -------
    ndarray, shape (n_times, ...)
        Real time traces.

    Raises
    ------
    ContourMismatch
    """
    expected = contour.nodes
    values = np.asarray(values)
    if values.shape[0] != len(expected):
        raise ContourMismatch(f"{values.shape[0]} values for {len(expected)} contour nodes")
    if nodes is not None:
        nodes = np.asarray(nodes, dtype=complex)
        if nodes.shape != expected.shape or not np.allclose(nodes, expected, rtol=1e-12, atol=0):
            raise ContourMismatch("values were not sampled on the configured contour")
    if isinstance(contour, TalbotContour):
        out = []
        start = 0
        for t in contour.times:
            s, w = contour._time_nodes(t)
            block = values[start : start + len(s)]
            start += len(s)
            if t == 0.0:
                out.append(np.real(s[0] * block[0]))
            else:
                out.append(np.real(np.tensordot(w, block, axes=(0, 0))))
        return np.array(out)
    if isinstance(contour, WeeksContour):
        th = contour.angles
        z = np.exp(1j * th)
        G = contour.b * values / (1.0 - z).reshape((-1,) + (1,) * (values.ndim - 1))
        n = contour.n
        E = np.exp(-1j * np.outer(np.arange(n), th)) / len(th)
        a = np.tensordot(E, G, axes=(1, 0))
        t = np.asarray(contour.times)
        L = _laguerre(n, contour.b * t)
        scale = np.exp((contour.sigma - 0.5 * contour.b) * t)
        f = np.tensordot(L.T, a, axes=(1, 0))
        return np.real(f * scale.reshape((-1,) + (1,) * (values.ndim - 1)))
    raise ContourMismatch(f"unknown contour type {type(contour).__name__}")


def invert(transform, times, *, method: str = "talbot", **kw) -> np.ndarray:
    """Convenience wrapper: evaluate ``transform(s)`` on the contour and invert."""
    if method == "talbot":
        contour = TalbotContour(times, **kw)
    elif method == "weeks":
        contour = WeeksContour(times, **kw)
    else:
        raise ConfigError(f"unknown inversion method {method!r}")
    s = contour.nodes
    return inverse_laplace(np.array([transform(x) for x in s]), contour)
