"""Constrained mechanical systems.

A system couples a positive-definite mass matrix with a potential V(q), a
list of inequality constraints g_i(q) >= 0 and a list of equality
constraints f_j(q) = 0.  All constraint records supply analytic gradients;
the integrators never differentiate numerically.
"""

import numpy as np

from .errors import ConfigurationError

_MASS_SYM_TOL = 1e-12


class Constraint:
    """Scalar constraint record: a value function and its gradient."""

    __slots__ = ("value", "gradient", "name")

    def __init__(self, value, gradient, name=""):
        self.value = value
        self.gradient = gradient
        self.name = name


class MechanicalSystem:
    """Immutable mechanical system with separable Hamiltonian.

    H(q, p) = 1/2 p^T M^{-1} p + V(q).

    Parameters
    ----------
    dim : int
        Configuration dimension n.
    mass : (n, n) array_like
        Symmetric positive-definite mass matrix.
    potential, potential_gradient : callables
        q -> scalar and q -> (n,) vector.
    potential_hessian : callable, optional
        q -> (n, n) matrix.  Needed only for the modified-Hamiltonian
        diagnostic and for implicit-midpoint Newton solves on nonlinear
        potentials.
    inequalities, equalities : sequence of Constraint
    particle_dim : int, optional
        Spatial dimension per particle when q stacks identical particles;
        used by momentum diagnostics.  None means no block structure.
    potential_is_linear : bool
        Declares grad V constant in q, enabling closed-form position
        updates for the midpoint rule.
    """

    def __init__(self, dim, mass, potential, potential_gradient,
                 potential_hessian=None, inequalities=(), equalities=(),
                 particle_dim=None, potential_is_linear=False):
        mass = np.asarray(mass, dtype=float)
        if mass.shape != (dim, dim):
            raise ConfigurationError(f"mass matrix shape {mass.shape} != ({dim}, {dim})")
        if not np.allclose(mass, mass.T, rtol=_MASS_SYM_TOL, atol=0.0):
            raise ConfigurationError("mass matrix is not symmetric")
        eigvals = np.linalg.eigvalsh(mass)
        if eigvals.min() <= 0.0:
            raise ConfigurationError("mass matrix is not positive definite")
        if particle_dim is not None and dim % particle_dim != 0:
            raise ConfigurationError("dim is not a multiple of particle_dim")

        self.dim = dim
        self.mass = mass
        self.mass_inv = np.linalg.inv(mass)
        self.potential = potential
        self.potential_gradient = potential_gradient
        self.potential_hessian = potential_hessian
        self.inequalities = tuple(inequalities)
        self.equalities = tuple(equalities)
        self.particle_dim = particle_dim
        self.potential_is_linear = potential_is_linear

    @property
    def n_inequalities(self):
        return len(self.inequalities)

    @property
    def n_equalities(self):
        return len(self.equalities)

    def inequality_values(self, q):
        return np.array([c.value(q) for c in self.inequalities], dtype=float)

    def equality_values(self, q):
        return np.array([c.value(q) for c in self.equalities], dtype=float)


class PhaseState:
    """Configuration q, momentum p and time t."""

    __slots__ = ("q", "p", "t")

    def __init__(self, q, p, t=0.0):
        self.q = np.asarray(q, dtype=float)
        self.p = np.asarray(p, dtype=float)
        self.t = float(t)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p)))

    def copy(self):
        return PhaseState(self.q.copy(), self.p.copy(), self.t)

    def __repr__(self):
        return f"PhaseState(q={self.q!r}, p={self.p!r}, t={self.t!r})"


def hamiltonian(sys, s):
    """H = 1/2 p^T M^{-1} p + V(q)."""
    p = s.p
    return 0.5 * float(p @ (sys.mass_inv @ p)) + float(sys.potential(s.q))


def constraint_values(sys, q):
    """Evaluate every inequality and equality constraint at q.

    Returns (g, f) as float arrays of lengths (m+1,) and (n_eq,).
    """
    return sys.inequality_values(q), sys.equality_values(q)


def constraint_gradient_matrix(sys, q, subset, kind="inequality"):
    """Stack gradients of the indexed constraints as columns, subset order.

    kind selects the constraint family; an empty subset yields an (n, 0)
    matrix.
    """
    if kind == "inequality":
        records = sys.inequalities
    elif kind == "equality":
        records = sys.equalities
    else:
        raise ConfigurationError(f"unknown constraint kind {kind!r}")
    cols = [records[i].gradient(q) for i in subset]
    if not cols:
        return np.zeros((sys.dim, 0))
    return np.column_stack(cols).astype(float)
