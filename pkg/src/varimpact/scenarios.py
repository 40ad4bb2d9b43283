"""Ready-made experiment systems.

Each builder returns (MechanicalSystem, initial PhaseState, recommended
IntegratorConfig).  All gradients and Hessians are analytic.  Parameter
overrides are validated against the documented keys of each scenario.
"""

import numpy as np

from .errors import ConfigurationError
from .cones import DEFAULT_TOL
from .integrators import IntegratorConfig
from .quadrature import MIDPOINT, VERLET, Quadrature
from .sysmodel import Constraint, MechanicalSystem, PhaseState

GRAVITY = 9.8

_ALIASES = {
    "particle1d": "particle1d",
    "pogostick": "pogo", "pogo": "pogo",
    "springsphere": "spring-sphere",
    "springspheremixed": "spring-sphere-mixed",
    "nonlinearoscillator": "oscillator", "oscillator": "oscillator",
    "newtonscradle": "cradle", "cradle": "cradle",
    "lennardjoneschain": "lj-chain", "ljchain": "lj-chain", "lj": "lj-chain",
}

SCENARIO_NAMES = ("particle1d", "pogo", "spring-sphere", "spring-sphere-mixed",
                  "oscillator", "cradle", "lj-chain")


def canonical_name(name):
    key = name.lower().replace("-", "").replace("_", "")
    if key not in _ALIASES:
        raise ConfigurationError(f"unknown scenario {name!r}")
    return _ALIASES[key]


class ScenarioSpec:
    """Scenario name plus a parameter override map."""

    __slots__ = ("name", "overrides")

    def __init__(self, name, overrides=None):
        self.name = canonical_name(name)
        self.overrides = dict(overrides or {})

    def __repr__(self):
        return f"ScenarioSpec({self.name!r}, {self.overrides!r})"


_DEFAULTS = {
    "particle1d": {"gravity": GRAVITY, "q0": 1.0, "p0": 0.0},
    "pogo": {"gravity": GRAVITY, "stiffness": 10.0, "rest_length": 5.0,
             "height": 1.0},
    "spring-sphere": {"radius": 5.0, "rest_length": 2.0 * np.sqrt(2.0),
                      "repulsion": 25.0},
    "spring-sphere-mixed": {"radius": 5.0, "rest_length": 2.0 * np.sqrt(2.0),
                            "repulsion": 25.0},
    "oscillator": {"sphere_radius": 1.0},
    "cradle": {"gravity": GRAVITY, "n": 5, "sphere_radius": 0.25,
               "rod_length": 1.0, "lift_angle": np.pi / 5.0, "lift_count": 2},
    "lj-chain": {"epsilon": 1.0, "sphere_radius": 0.3, "container_radius": 5.0,
                 "rod_length": 1.0, "seed": 42, "kick": 0.25, "drift": 0.7},
}


def override_keys(name):
    return frozenset(_DEFAULTS[canonical_name(name)])


def _params(spec):
    defaults = _DEFAULTS[spec.name]
    for key in spec.overrides:
        if key not in defaults:
            raise ConfigurationError(
                f"scenario {spec.name!r} has no parameter {key!r} "
                f"(known: {', '.join(sorted(defaults))})")
    out = dict(defaults)
    for key, val in spec.overrides.items():
        out[key] = type(defaults[key])(val)
    return out


def _distance_constraint(i, j, pd, offset, name):
    # ||q_i - q_j|| - offset as a function of the stacked configuration.
    si, sj = slice(i * pd, (i + 1) * pd), slice(j * pd, (j + 1) * pd)

    def value(q):
        return float(np.linalg.norm(q[si] - q[sj]) - offset)

    def gradient(q):
        d = q[si] - q[sj]
        u = d / np.linalg.norm(d)
        out = np.zeros(q.shape[0])
        out[si] = u
        out[sj] = -u
        return out

    return Constraint(value, gradient, name)


def _anchor_constraint(i, pd, anchor, offset, name):
    si = slice(i * pd, (i + 1) * pd)

    def value(q):
        return float(np.linalg.norm(q[si] - anchor) - offset)

    def gradient(q):
        d = q[si] - anchor
        out = np.zeros(q.shape[0])
        out[si] = d / np.linalg.norm(d)
        return out

    return Constraint(value, gradient, name)


def _ball_constraint(i, pd, radius, name):
    # radius - ||q_i|| >= 0: particle center stays inside the ball.
    si = slice(i * pd, (i + 1) * pd)

    def value(q):
        return float(radius - np.linalg.norm(q[si]))

    def gradient(q):
        d = q[si]
        out = np.zeros(q.shape[0])
        out[si] = -d / np.linalg.norm(d)
        return out

    return Constraint(value, gradient, name)


def _build_particle1d(spec):
    prm = _params(spec)
    grav = prm["gravity"]
    sys = MechanicalSystem(
        dim=1, mass=np.eye(1),
        potential=lambda q: grav * float(q[0]),
        potential_gradient=lambda q: np.array([grav]),
        potential_hessian=lambda q: np.zeros((1, 1)),
        inequalities=(Constraint(lambda q: float(q[0]),
                                 lambda q: np.array([1.0]), "floor"),),
        potential_is_linear=True)
    state = PhaseState(np.array([prm["q0"]]), np.array([prm["p0"]]))
    cfg = IntegratorConfig("gvi", Quadrature(VERLET, 1e-2))
    return sys, state, cfg


def _build_pogo(spec):
    prm = _params(spec)
    grav, k, l = prm["gravity"], prm["stiffness"], prm["rest_length"]

    def potential(q):
        return 0.5 * k * (q[1] - q[0] - l) ** 2 + grav * (q[0] + q[1])

    def gradient(q):
        s = k * (q[1] - q[0] - l)
        return np.array([grav - s, grav + s])

    hess = np.array([[k, -k], [-k, k]])
    sys = MechanicalSystem(
        dim=2, mass=np.eye(2), potential=potential,
        potential_gradient=gradient,
        potential_hessian=lambda q: hess,
        inequalities=(Constraint(lambda q: float(q[0]),
                                 lambda q: np.array([1.0, 0.0]), "ground"),))
    q0 = np.array([prm["height"], prm["height"] + l])
    state = PhaseState(q0, np.zeros(2))
    cfg = IntegratorConfig("extended-reflection", Quadrature(VERLET, 0.1))
    return sys, state, cfg


def _spring_sphere_system(prm):
    r = prm["radius"]
    l = prm["rest_length"]
    c = prm["repulsion"]

    def potential(q):
        q1, q2 = q[:2], q[2:]
        d = q1 - q2
        nd = np.linalg.norm(d)
        return c / (q1 @ q1) + c / (q2 @ q2) + 0.5 * (nd - l) ** 2

    def gradient(q):
        q1, q2 = q[:2], q[2:]
        d = q1 - q2
        nd = np.linalg.norm(d)
        spring = (nd - l) * d / nd
        g1 = -2.0 * c * q1 / (q1 @ q1) ** 2 + spring
        g2 = -2.0 * c * q2 / (q2 @ q2) ** 2 - spring
        return np.concatenate([g1, g2])

    def hessian(q):
        q1, q2 = q[:2], q[2:]
        d = q1 - q2
        nd = np.linalg.norm(d)
        u = d / nd
        I2 = np.eye(2)
        K = np.outer(u, u) + (1.0 - l / nd) * (I2 - np.outer(u, u))

        def rep_block(qi):
            s = qi @ qi
            return -2.0 * c / s ** 2 * I2 + 8.0 * c / s ** 3 * np.outer(qi, qi)

        H = np.zeros((4, 4))
        H[:2, :2] = rep_block(q1) + K
        H[2:, 2:] = rep_block(q2) + K
        H[:2, 2:] = -K
        H[2:, :2] = -K
        return H

    return MechanicalSystem(
        dim=4, mass=np.eye(4), potential=potential,
        potential_gradient=gradient, potential_hessian=hessian,
        inequalities=tuple(_ball_constraint(i, 2, r, f"ball_{i}")
                           for i in range(2)),
        particle_dim=2)


def _build_spring_sphere(spec, mixed):
    prm = _params(spec)
    sys = _spring_sphere_system(prm)
    q1 = np.array([4.0, -1.0]) if mixed else np.array([4.0, -3.0])
    q0 = np.concatenate([q1, np.array([3.0, -4.0])])
    p0 = np.array([0.6, 0.8, 0.8, 0.6])
    cfg = IntegratorConfig("gvi", Quadrature(MIDPOINT, 0.5))
    return sys, PhaseState(q0, p0), cfg


def _build_oscillator(spec):
    prm = _params(spec)
    sep = 2.0 * prm["sphere_radius"]

    def phi_grad_coeff(u):
        # V per particle is u (u - 1)^2 with u = |q|^2; gradient 2 f(u) q.
        return (u - 1.0) * (3.0 * u - 1.0)

    def potential(q):
        u1, u2 = q[:2] @ q[:2], q[2:] @ q[2:]
        return u1 * (u1 - 1.0) ** 2 + u2 * (u2 - 1.0) ** 2

    def gradient(q):
        u1, u2 = q[:2] @ q[:2], q[2:] @ q[2:]
        return np.concatenate([2.0 * phi_grad_coeff(u1) * q[:2],
                               2.0 * phi_grad_coeff(u2) * q[2:]])

    def hessian(q):
        H = np.zeros((4, 4))
        for blk in (slice(0, 2), slice(2, 4)):
            qi = q[blk]
            u = qi @ qi
            H[blk, blk] = (2.0 * phi_grad_coeff(u) * np.eye(2)
                           + 4.0 * (6.0 * u - 4.0) * np.outer(qi, qi))
        return H

    sys = MechanicalSystem(
        dim=4, mass=np.eye(4), potential=potential,
        potential_gradient=gradient, potential_hessian=hessian,
        inequalities=(_distance_constraint(0, 1, 2, sep, "separation"),),
        particle_dim=2)
    q0 = np.array([0.0, -1.4, 0.0, 1.4])
    p0 = np.array([1.0, 0.0, -1.0, 0.0])
    cfg = IntegratorConfig("gvi", Quadrature(MIDPOINT, 0.1))
    return sys, PhaseState(q0, p0), cfg


def _build_cradle(spec):
    prm = _params(spec)
    n = prm["n"]
    if n < 2:
        raise ConfigurationError("cradle needs at least two spheres")
    r, l, grav = prm["sphere_radius"], prm["rod_length"], prm["gravity"]
    anchors = [np.array([2.0 * r * i, 0.0]) for i in range(n)]
    grad_const = np.tile([0.0, grav], n)

    sys = MechanicalSystem(
        dim=2 * n, mass=np.eye(2 * n),
        potential=lambda q: grav * float(q[1::2].sum()),
        potential_gradient=lambda q: grad_const,
        potential_hessian=lambda q: np.zeros((2 * n, 2 * n)),
        inequalities=tuple(
            _distance_constraint(i, i + 1, 2, 2.0 * r, f"contact_{i}{i+1}")
            for i in range(n - 1)),
        equalities=tuple(
            _anchor_constraint(i, 2, anchors[i], l, f"rod_{i}")
            for i in range(n)),
        particle_dim=2, potential_is_linear=True)

    th = prm["lift_angle"]
    lift = np.array([-np.sin(th), -np.cos(th)]) * l
    hang = np.array([0.0, -l])
    q0 = np.concatenate([anchors[i] + (lift if i < prm["lift_count"] else hang)
                         for i in range(n)])
    cfg = IntegratorConfig("gvi", Quadrature(MIDPOINT, 1e-2))
    return sys, PhaseState(q0, np.zeros(2 * n)), cfg


def _build_lj_chain(spec):
    prm = _params(spec)
    eps = prm["epsilon"]
    sigma = 2.0 * prm["sphere_radius"]
    n = 6
    iu, ju = np.triu_indices(n, 1)
    sig2 = sigma * sigma

    def potential(q):
        X = q.reshape(n, 3)
        d = X[iu] - X[ju]
        r2 = np.einsum("ij,ij->i", d, d)
        a6 = (sig2 / r2) ** 3
        # the pair sum runs over ordered pairs, counting each pair twice
        return float(8.0 * eps * np.sum(a6 * a6 - a6))

    def gradient(q):
        X = q.reshape(n, 3)
        d = X[iu] - X[ju]
        r2 = np.einsum("ij,ij->i", d, d)
        a6 = (sig2 / r2) ** 3
        coeff = 8.0 * eps * (-12.0 * a6 * a6 + 6.0 * a6) / r2
        F = coeff[:, None] * d
        out = np.zeros((n, 3))
        np.add.at(out, iu, F)
        np.add.at(out, ju, -F)
        return out.ravel()

    rods = tuple(_distance_constraint(i, i + 1, 3, prm["rod_length"],
                                      f"rod_{i}")
                 for i in range(n - 1))
    contacts = tuple(_distance_constraint(int(i), int(j), 3, sigma,
                                          f"overlap_{i}{j}")
                     for i, j in zip(iu, ju))
    walls = tuple(_ball_constraint(i, 3, prm["container_radius"] - sigma / 2.0,
                                   f"wall_{i}")
                  for i in range(n))

    sys = MechanicalSystem(
        dim=3 * n, mass=np.eye(3 * n), potential=potential,
        potential_gradient=gradient,
        inequalities=contacts + walls, equalities=rods,
        particle_dim=3)

    # Start from the relaxed fold of the chain (stationary point of the
    # pair sum on the rod manifold, every pair clear of the contact
    # bound), so the cluster is a deeply bound crystal.  Traversals of
    # the steep core are under-resolved at the recommended step size, so
    # the thermal kick is kept small; contact activity instead comes
    # from the drifting cluster bouncing off the container wall, which
    # carries no potential energy and reflects exactly.
    X0 = np.array([
        [0.39712333196800048, 0.1680339394685858, -0.33059722808056718],
        [-0.58041123876739809, -2.1100645885512406e-05, -0.20338218765969748],
        [0.30327351107176559, -0.40609599070194885, 0.029436296502644895],
        [-0.14599006111075397, 0.48536138859726446, -0.02943630835547693],
        [-0.34531547615018648, -0.46651302241954329, 0.20338225742217572],
        [0.37131993298857235, 0.21923478570152743, 0.33059717017092094],
    ])
    if prm["rod_length"] != 1.0 or sigma != 0.6:
        raise ConfigurationError(
            "the frozen chain fold assumes rod_length 1 and diameter 0.6")
    rng = np.random.default_rng(prm["seed"])
    P0 = prm["kick"] * rng.standard_normal((n, 3))
    P0 += np.array([0.55, 0.35, 0.2]) * prm["drift"]
    p0 = P0.ravel()
    q0 = X0.ravel()
    # project the seed momenta onto the rod cotangent space
    F = np.column_stack([c.gradient(q0) for c in sys.equalities])
    p0 = p0 - F @ np.linalg.solve(F.T @ F, F.T @ p0)
    cfg = IntegratorConfig("gvi", Quadrature(VERLET, 1e-2))
    return sys, PhaseState(q0, p0), cfg


_BUILDERS = {
    "particle1d": _build_particle1d,
    "pogo": _build_pogo,
    "spring-sphere": lambda s: _build_spring_sphere(s, mixed=False),
    "spring-sphere-mixed": lambda s: _build_spring_sphere(s, mixed=True),
    "oscillator": _build_oscillator,
    "cradle": _build_cradle,
    "lj-chain": _build_lj_chain,
}


def build_scenario(spec):
    """Construct (system, initial state, recommended config) for a spec.

    The initial state is checked for admissibility: g >= -eps_active and
    |f| <= eps_active.
    """
    if isinstance(spec, str):
        spec = ScenarioSpec(spec)
    sys, state, cfg = _BUILDERS[spec.name](spec)
    g = sys.inequality_values(state.q)
    f = sys.equality_values(state.q)
    eps = DEFAULT_TOL.eps_active
    if (g.size and g.min() < -eps) or (f.size and np.abs(f).max() > eps):
        raise ConfigurationError(
            f"scenario {spec.name!r}: initial state is not admissible")
    return sys, state, cfg
