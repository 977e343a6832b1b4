from __future__ import annotations

import numpy as np
import pytest

from acrestore import StateVector, load_bundled_case, parse_case

TWO_BUS_CASE = """
function mpc = case2
mpc.version = '2';
mpc.baseMVA = 100.0;
mpc.bus = [
	1	3	0.0	0.0	0.0	0.0	1	1.0	0.0	230.0	1	1.1	0.9;
	2	1	40.0	10.0	0.0	0.0	1	1.0	0.0	230.0	1	1.1	0.9;
];
mpc.gen = [
	1	0.0	0.0	60.0	-60.0	1.0	100.0	1	120.0	0.0;
];
mpc.gencost = [
	2	0.0	0.0	3	0.0	20.0	0.0;
];
mpc.branch = [
	1	2	0.01	0.1	0.0	0.0	0.0	0.0	0.0	0.0	1	-30.0	30.0;
];
"""

FIXTURE_NAMES = ("case5", "case14", "case57", "case118")


@pytest.fixture(scope="session")
def two_bus():
    return parse_case(TWO_BUS_CASE, name="case2")


@pytest.fixture(scope="session")
def case5():
    return load_bundled_case("case5")


@pytest.fixture(scope="session")
def case14():
    return load_bundled_case("case14")


@pytest.fixture(scope="session")
def case57():
    return load_bundled_case("case57")


@pytest.fixture(scope="session")
def case118():
    return load_bundled_case("case118")


@pytest.fixture(scope="session")
def all_fixtures(two_bus, case5, case14, case57, case118):
    return {
        "case2": two_bus,
        "case5": case5,
        "case14": case14,
        "case57": case57,
        "case118": case118,
    }


def perturbed_state(network, rng, vm_spread=0.04, va_spread=0.12) -> StateVector:
    """A random voltage state near flat, for Jacobian and consistency tests."""
    vm = 1.0 + rng.uniform(-vm_spread, vm_spread, network.n_bus)
    va = rng.uniform(-va_spread, va_spread, network.n_bus)
    va[network.slack] = 0.0
    return StateVector(vm, va, network.slack)


def fd_jacobian(network, state, kinds, step=1e-6) -> np.ndarray:
    """Central-difference Jacobian of the measurement functions."""
    from acrestore import eval_h

    x0 = state.as_vector()
    out = np.empty((len(kinds), x0.size))
    for j in range(x0.size):
        xp, xm = x0.copy(), x0.copy()
        xp[j] += step
        xm[j] -= step
        hp = eval_h(network, StateVector.from_vector(xp, network.slack), kinds)
        hm = eval_h(network, StateVector.from_vector(xm, network.slack), kinds)
        out[:, j] = (hp - hm) / (2.0 * step)
    return out
