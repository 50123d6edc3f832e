"""Shared fixtures: the worked two-type example, model instances, oracles."""

import numpy as np
import pytest

from critgrowth import CellDivisionModel, GwiModel, OffspringLaw, perron

# two-type example matrix with p = 0.3, p' = 0.6 (row-stochastic, critical)
EXAMPLE_MATRIX = np.array([[0.3, 0.7], [0.6, 0.4]])

# 0/1 offspring with marginals (m1, m2) and joint-success b, as cell tables
CELL_ATOMS = [[1, 1], [1, 0], [0, 1], [0, 0]]


def cell_law(m1, m2, b):
    return OffspringLaw(CELL_ATOMS, [b, m1 - b, m2 - b, 1.0 - m1 - m2 + b])


@pytest.fixture(scope="session")
def example_pd():
    return perron(EXAMPLE_MATRIX)


@pytest.fixture(scope="session")
def gwi_recurrent():
    # mean matrix EXAMPLE_MATRIX; 2 a.u = 0.141 < u^T V(v) u = 0.218
    return GwiModel(
        offspring=(cell_law(0.3, 0.7, 0.1), cell_law(0.6, 0.4, 0.2)),
        immigration=OffspringLaw([[0, 0], [1, 0], [0, 1]], [0.9, 0.05, 0.05]))


@pytest.fixture(scope="session")
def gwi_transient():
    # same offspring (same V), heavier immigration: 2 a.u = 0.707
    return GwiModel(
        offspring=(cell_law(0.3, 0.7, 0.1), cell_law(0.6, 0.4, 0.2)),
        immigration=OffspringLaw([[0, 0], [1, 0], [0, 1]], [0.5, 0.25, 0.25]))


@pytest.fixture(scope="session")
def one_type_gwi():
    # offspring on {0,1,2} with mean 1 and variance 0.6; immigration mean 0.2
    return GwiModel(
        offspring=(OffspringLaw([[0], [1], [2]], [0.3, 0.4, 0.3]),),
        immigration=OffspringLaw([[0], [1]], [0.8, 0.2]))


@pytest.fixture(scope="session")
def cd_extinct():
    # c1 + c2 = 0.1 below the threshold b = 0.3
    return CellDivisionModel(p=0.5, p_prime=0.5, c1=0.05, c2=0.05,
                             b1=0.3, b2=0.3)


@pytest.fixture(scope="session")
def cd_survive():
    # c1 + c2 = 0.8 above the threshold b = 0.3
    return CellDivisionModel(p=0.5, p_prime=0.5, c1=0.4, c2=0.4,
                             b1=0.3, b2=0.3)


@pytest.fixture(scope="session")
def cd_pd(cd_extinct):
    return perron(cd_extinct.mean_matrix())


def convolve_pmfs(pmf_a: dict, pmf_b: dict) -> dict:
    """Exact convolution of integer-supported scalar PMFs (dicts)."""
    out = {}
    for va, pa in pmf_a.items():
        for vb, pb in pmf_b.items():
            out[va + vb] = out.get(va + vb, 0.0) + pa * pb
    return out


def pmf_power(pmf: dict, n: int) -> dict:
    """n-fold convolution by binary exponentiation."""
    result = {0: 1.0}
    base = dict(pmf)
    while n:
        if n & 1:
            result = convolve_pmfs(result, base)
        base = convolve_pmfs(base, base)
        n >>= 1
    return result


def one_type_one_step_pmf(model: GwiModel, x: int) -> dict:
    """Exact one-step PMF of a 1-type immigration model from state x."""
    off = {int(v[0]): float(p)
           for v, p in zip(model.offspring[0].support, model.offspring[0].probs)}
    imm = {int(v[0]): float(p)
           for v, p in zip(model.immigration.support, model.immigration.probs)}
    return convolve_pmfs(pmf_power(off, x), imm)
