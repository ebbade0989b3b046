from __future__ import annotations

import numpy as np
import pytest

from poroslip.errors import DisconnectedSolid
from poroslip.geometry import FLUID, SOLID, MaterialParams, build_phase_cell, voxel_centers

from oracles import isotropic_2d

ACCEPTANCE_LINES: list[str] = []


def materials(alpha: float = 1.0, mu: float = 0.1, a=None) -> MaterialParams:
    return MaterialParams(isotropic_2d(2.0, 1.0) if a is None else a, 2.0, 1.0, 1.0, mu, 0.05, alpha)


def random_cell(seed: int, res: int = 32, alpha: float = 1.0):
    """Connected 2D cell with a few random periodic disk-shaped pores."""
    rng = np.random.default_rng(seed)
    y1, y2 = voxel_centers((res, res))
    while True:
        fluid = np.zeros((res, res), dtype=bool)
        for _ in range(rng.integers(1, 4)):
            c = rng.uniform(-0.5, 0.5, 2)
            r = rng.uniform(0.08, 0.22)
            d1 = (y1 - c[0] + 0.5) % 1.0 - 0.5
            d2 = (y2 - c[1] + 0.5) % 1.0 - 0.5
            fluid |= d1**2 + d2**2 < r**2
        labels = np.where(fluid, FLUID, SOLID)
        if fluid.any() and not fluid.all():
            try:
                return build_phase_cell(2, res, labels, materials(alpha))
            except DisconnectedSolid:
                continue


@pytest.fixture
def acceptance_line():
    def record(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
