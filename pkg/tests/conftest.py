import numpy as np
import pytest

import mfspin as M


@pytest.fixture(scope="session")
def ising_af():
    return M.build(M.builtin("ising-af"))


@pytest.fixture(scope="session")
def ising_f():
    return M.build(M.builtin("ising-f"))


@pytest.fixture(scope="session")
def hardcore():
    spec = M.ModelSpec(
        name="hardcore",
        space={"type": "ising", "h": 0.0},
        phi={"type": "kernel", "id": "neg-sq", "scale": 1.0, "diag_shift": 100.0},
        shape_hint="convex",
    )
    return M.build(spec)


@pytest.fixture(scope="session")
def zero_model():
    space = M.StateSpace.uniform(2, points=[[1.0], [-1.0]])
    return space, M.Interaction(space, np.zeros((2, 2)))


def random_measure(space, rng):
    return M.DiscreteMeasure(space, rng.dirichlet(np.ones(space.m)))


def random_interior_measure(space, rng, floor=0.05):
    w = rng.dirichlet(np.ones(space.m)) * (1.0 - floor * space.m) + floor
    return M.DiscreteMeasure.normalized(space, w)
