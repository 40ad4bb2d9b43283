"""Frozen facts about the bundled scenarios.

Initial energies are pinned to hand-computed values so that an
accidental change to a potential, a constraint, or an initial condition
shows up here rather than as a silent shift in the long runs.
"""

import numpy as np
import pytest

from varimpact.diagnostics import record, scalar_angular_momentum
from varimpact.errors import ConfigurationError
from varimpact.scenarios import (SCENARIO_NAMES, ScenarioSpec, build_scenario,
                                 canonical_name, override_keys)
from varimpact.sysmodel import PhaseState, hamiltonian

# name -> (dim, n_eq, n_ineq, H0, method, rule, h)
FROZEN = {
    "particle1d": (1, 0, 1, 9.8, "gvi", "verlet", 1e-2),
    "pogo": (2, 0, 1, 68.6, "extended-reflection", "verlet", 0.1),
    "spring-sphere": (4, 0, 2, 4.0, "gvi", "midpoint", 0.5),
    "spring-sphere-mixed": (4, 0, 2, 3.526316325294959, "gvi", "midpoint", 0.5),
    "oscillator": (4, 0, 1, 4.612672, "gvi", "midpoint", 0.1),
    "cradle": (10, 5, 4, -45.25673308974898, "gvi", "midpoint", 1e-2),
    "lj-chain": (18, 5, 21, -17.05798402628436, "gvi", "verlet", 1e-2),
}


def test_catalog_is_complete():
    assert set(SCENARIO_NAMES) == set(FROZEN)


@pytest.mark.parametrize("name", sorted(FROZEN))
def test_frozen_structure_and_energy(name):
    dim, n_eq, n_ineq, H0, method, rule, h = FROZEN[name]
    sys, s0, cfg = build_scenario(name)
    assert sys.dim == dim
    assert len(sys.equalities) == n_eq
    assert len(sys.inequalities) == n_ineq
    assert hamiltonian(sys, s0) == pytest.approx(H0, rel=1e-12)
    assert cfg.method == method
    assert cfg.quadrature.rule == rule
    assert cfg.quadrature.h == pytest.approx(h)


def test_angular_momentum_pins():
    for name, J0 in (("spring-sphere", 10.0), ("spring-sphere-mixed", 8.8),
                     ("oscillator", 2.8)):
        sys, s0, _ = build_scenario(name)
        J = scalar_angular_momentum(record(sys, s0))
        assert J == pytest.approx(J0, rel=1e-12), name


def test_initial_states_admissible():
    for name in SCENARIO_NAMES:
        sys, s0, _ = build_scenario(name)
        if sys.inequalities:
            assert sys.inequality_values(s0.q).min() >= -1e-9
        if sys.equalities:
            assert np.abs(sys.equality_values(s0.q)).max() <= 1e-9


def test_angular_momentum_is_rotation_equivariant():
    # planar rotation of a two-particle state leaves the scalar J fixed
    sys, s0, _ = build_scenario("spring-sphere")
    th = 0.7
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    B = np.kron(np.eye(2), R)
    s_rot = PhaseState(B @ s0.q, B @ s0.p, s0.t)
    J0 = scalar_angular_momentum(record(sys, s0))
    J1 = scalar_angular_momentum(record(sys, s_rot))
    assert J1 == pytest.approx(J0, rel=1e-12)


def test_override_applies():
    sys, s0, _ = build_scenario(ScenarioSpec("particle1d", {"q0": 2.5}))
    assert s0.q[0] == 2.5
    assert hamiltonian(sys, s0) == pytest.approx(9.8 * 2.5)


def test_unknown_override_key_rejected():
    with pytest.raises(ConfigurationError):
        build_scenario(ScenarioSpec("particle1d", {"mass": 2.0}))


def test_inadmissible_initial_state_rejected():
    with pytest.raises(ConfigurationError):
        build_scenario(ScenarioSpec("particle1d", {"q0": -0.5}))


def test_chain_fold_guard():
    # the packed starting fold is only valid for the documented geometry
    with pytest.raises(ConfigurationError):
        build_scenario(ScenarioSpec("lj-chain", {"rod_length": 1.2}))


def test_unknown_scenario_rejected():
    with pytest.raises(ConfigurationError):
        build_scenario("galaxy")


def test_canonical_name_and_override_keys():
    assert canonical_name("particle1d") == "particle1d"
    assert "kick" in override_keys("lj-chain")
    assert "q0" in override_keys("particle1d")


def test_chain_seed_changes_momenta_only():
    _, a, _ = build_scenario(ScenarioSpec("lj-chain", {"seed": 1}))
    _, b, _ = build_scenario(ScenarioSpec("lj-chain", {"seed": 2}))
    assert np.allclose(a.q, b.q)
    assert not np.allclose(a.p, b.p)


def test_cradle_size_override():
    sys, _, _ = build_scenario(ScenarioSpec("cradle", {"n": 3}))
    assert sys.dim == 6
    assert len(sys.equalities) == 3
    assert len(sys.inequalities) == 2
