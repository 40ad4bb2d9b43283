"""Shared builders for small hand-checkable systems."""

import numpy as np

from varimpact.sysmodel import Constraint, MechanicalSystem

GRAV = 9.8


def particle1d(mass=1.0):
    # unit particle falling under gravity onto the floor q >= 0
    return MechanicalSystem(
        dim=1, mass=np.array([[mass]]),
        potential=lambda q: GRAV * mass * q[0],
        potential_gradient=lambda q: np.array([GRAV * mass]),
        potential_hessian=lambda q: np.zeros((1, 1)),
        inequalities=(Constraint(lambda q: q[0], lambda q: np.array([1.0]),
                                 "floor"),),
        potential_is_linear=True)


def quadratic_system(n, rng, k_ineq=0, k_eq=0):
    """Random SPD mass + quadratic potential + random linear constraints."""
    A = rng.normal(size=(n, n))
    M = A.T @ A + n * np.eye(n)
    S = rng.normal(size=(n, n))
    K = 0.5 * (S + S.T)
    K *= 2.0 / max(1.0, np.linalg.norm(K, 2))

    def make_linear(v, c=0.0):
        v = np.asarray(v, dtype=float)
        return Constraint(lambda q, v=v, c=c: float(v @ q) - c,
                          lambda q, v=v: v)

    ineqs = tuple(make_linear(rng.normal(size=n)) for _ in range(k_ineq))
    eqs = tuple(make_linear(rng.normal(size=n)) for _ in range(k_eq))
    return MechanicalSystem(
        n, M,
        potential=lambda q: 0.5 * float(q @ K @ q),
        potential_gradient=lambda q: K @ q,
        potential_hessian=lambda q: K,
        inequalities=ineqs, equalities=eqs)
