"""Shared pipeline fixtures: the expensive solves run once per session."""

import numpy as np
import pytest

from qdlab import field, obstacle


RADIAL_SPEC = field.WeightSpec((field.ball((0.0, 0.0), 1.0, 4.0),))
ONED_SPEC = field.WeightSpec((field.interval(1.0, 2.0, 3.0), field.interval(4.0, 5.0, 3.0)))


def run_radial(nh: int):
    h = 1.0 / nh
    grid = obstacle.weight_grid(RADIAL_SPEC, 2, h)
    w = field.rasterize_weight(RADIAL_SPEC, grid)
    sol = obstacle.solve_obstacle(w, obstacle.SolveParams(relaxation=None, tolerance=1e-12))
    Q = obstacle.extract_domain(sol, w)
    return {"h": h, "grid": grid, "w": w, "sol": sol, "Q": Q}


@pytest.fixture(scope="session")
def radial32():
    return run_radial(32)


@pytest.fixture(scope="session")
def radial64():
    return run_radial(64)


@pytest.fixture(scope="session")
def radial128():
    return run_radial(128)


@pytest.fixture(scope="session")
def oned200():
    h = 1.0 / 200.0
    grid = obstacle.weight_grid(ONED_SPEC, 1, h)
    w = field.rasterize_weight(ONED_SPEC, grid)
    sol = obstacle.solve_obstacle(w, obstacle.SolveParams(relaxation=None, tolerance=1e-13))
    Q = obstacle.extract_domain(sol, w)
    return {"h": h, "grid": grid, "w": w, "sol": sol, "Q": Q}
