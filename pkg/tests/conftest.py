import numpy as np
import pytest

from abc_eqf.lie import exp_so3
from abc_eqf.symmetry import AlgebraElement, GroupElement, SystemState


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rotation(rng, scale=1.0):
    return exp_so3(rng.normal(0.0, scale, size=3))


def random_group_element(rng, n, scale=0.8):
    return GroupElement(
        random_rotation(rng, scale),
        rng.normal(0.0, scale, size=3),
        [random_rotation(rng, scale) for _ in range(n)],
    )


def random_state(rng, n, scale=0.8):
    return SystemState(
        random_rotation(rng, scale),
        rng.normal(0.0, scale, size=3),
        [random_rotation(rng, scale) for _ in range(n)],
    )


def random_algebra(rng, n, scale=1.0):
    return AlgebraElement(
        rng.normal(0.0, scale, size=3),
        rng.normal(0.0, scale, size=3),
        [rng.normal(0.0, scale, size=3) for _ in range(n)],
    )


def states_close(a, b, tol):
    gaps = [np.max(np.abs(a.R - b.R)), np.max(np.abs(a.b - b.b))]
    gaps += [np.max(np.abs(ca - cb)) for ca, cb in zip(a.C, b.C)]
    return max(gaps) <= tol


def max_state_gap(a, b):
    gaps = [np.max(np.abs(a.R - b.R)), np.max(np.abs(a.b - b.b))]
    gaps += [np.max(np.abs(ca - cb)) for ca, cb in zip(a.C, b.C)]
    return max(gaps)
