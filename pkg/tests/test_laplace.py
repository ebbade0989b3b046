from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poroslip import laplace
from poroslip.errors import ConfigError, ContourMismatch
from poroslip.laplace import TalbotContour, WeeksContour

T = np.linspace(0.0, 5.0, 26)

PAIRS = [
    ("step", lambda s: 1 / s, lambda t: np.ones_like(t)),
    ("decay", lambda s: 1 / (s + 1), lambda t: np.exp(-t)),
    ("step response", lambda s: 1 / (s * (s + 1)), lambda t: 1 - np.exp(-t)),
    ("ramp", lambda s: 1 / s**2, lambda t: t),
    ("sine", lambda s: 1 / (s**2 + 1), np.sin),
]


@pytest.mark.parametrize("method", ["talbot", "weeks"])
@pytest.mark.parametrize("name, F, f", PAIRS, ids=[p[0] for p in PAIRS])
def test_analytic_pairs(method, name, F, f):
    got = laplace.invert(F, T, method=method)
    assert np.abs(got - f(T)).max() < 1e-6


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.2, 4.5))
def test_exponential_decay_rates(a, t):
    got = laplace.invert(lambda s: 1 / (s + a), [t], method="talbot")
    assert got[0] == pytest.approx(np.exp(-a * t), abs=1e-8)


@settings(max_examples=10, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_inversion_is_linear(c1, c2):
    F = lambda s: c1 / (s + 1) + c2 / s**2
    got = laplace.invert(F, T, method="weeks")
    assert np.abs(got - (c1 * np.exp(-T) + c2 * T)).max() < 1e-6 * (1 + abs(c1) + abs(c2))


def test_talbot_nodes_per_time_and_initial_value():
    c = TalbotContour([0.0, 1.0, 2.0], n=16)
    assert c.counts() == [1, 16, 16]
    assert len(c.nodes) == 33
    # initial value theorem: f(0) = lim s F(s)
    assert laplace.invert(lambda s: 3 / (s + 2), [0.0])[0] == pytest.approx(3.0, rel=1e-7)


def test_weeks_nodes_on_vertical_line():
    c = WeeksContour([1.0], n=8, sigma=2.0, b=4.0)
    assert len(c.nodes) == 16
    assert np.allclose(c.nodes.real, 2.0)
    assert np.allclose(np.sort(c.nodes.imag), -np.sort(c.nodes.imag)[::-1])


def test_vector_valued_samples():
    c = WeeksContour(T)
    s = c.nodes
    vals = np.stack([1 / (s + 1), 1 / s**2], axis=1)[:, None, :]
    got = laplace.inverse_laplace(vals, c, nodes=s)
    assert got.shape == (len(T), 1, 2)
    assert np.abs(got[:, 0, 1] - T).max() < 1e-6


def test_contour_mismatch():
    c = WeeksContour([1.0], n=8)
    with pytest.raises(ContourMismatch):
        laplace.inverse_laplace(np.ones(10), c)
    with pytest.raises(ContourMismatch):
        laplace.inverse_laplace(np.ones(16), c, nodes=c.nodes + 0.1)
    with pytest.raises(ContourMismatch):
        laplace.inverse_laplace(np.ones(3), object.__new__(type("Other", (), {"nodes": np.zeros(3)})))


@pytest.mark.parametrize(
    "build",
    [
        lambda: TalbotContour([-1.0]),
        lambda: TalbotContour([1.0], n=1),
        lambda: WeeksContour([-0.5]),
        lambda: WeeksContour([1.0], b=0.0),
        lambda: laplace.invert(lambda s: 1 / s, [1.0], method="stehfest"),
    ],
)
def test_invalid_configuration(build):
    with pytest.raises(ConfigError):
        build()
