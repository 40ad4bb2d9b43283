"""Discrete generalized reflection operators.

A reflection resolves a nonsmooth momentum jump p^+ = p^- + G_K(q) lambda
subject to the three discrete jump conditions:

    kinematic feasibility   G_K(q)^T M^{-1} p^+ >= 0,
    inclusion               p^+ - p^- = G_K(q) lambda,  lambda >= 0,
    energy conservation     E(q, p^+) = E(q, p^-),

for an energy function E quadratic in p.  Two operators are provided: the
iterated projection sequence (violated subset at a time) and the Moreau
single-solve variant.  Each elementary projection is the non-negative
least-squares solution of the normal equation

    G^T W G lambda = -2 G^T W p,   lambda >= 0,

where W is the quadratic form of E (W = M^{-1} for the continuous
Hamiltonian).  Complementarity of the NNLS solution makes the energy
change 1/2 lambda^T (G^T W G lambda + 2 G^T W p) vanish identically.
"""

import numpy as np

from .errors import ReflectionError
from .cones import DEFAULT_TOL, projected_active_gradient
from .quadrature import verlet_energy_quadratic_form
from .sysmodel import hamiltonian

_STAGNATION_RTOL = 1e-14


class ContinuousH:
    """The separable continuous Hamiltonian as reflection energy."""

    name = "continuous"

    def quadratic_form(self, sys, q):
        return sys.mass_inv

    def value(self, sys, s):
        return hamiltonian(sys, s)


class VerletNumericalH:
    """Stormer-Verlet's second-order numerical Hamiltonian as reflection
    energy.  Requires the system's potential Hessian."""

    name = "verlet-numerical"

    def __init__(self, h):
        self.h = float(h)

    def quadratic_form(self, sys, q):
        return verlet_energy_quadratic_form(sys, q, self.h)

    def value(self, sys, s):
        from .quadrature import modified_hamiltonian_verlet
        return modified_hamiltonian_verlet(sys, s, self.h)


class ReflectionResult:
    """Post-jump momentum with per-constraint impulse magnitudes."""

    __slots__ = ("p_plus", "lam", "iterations")

    def __init__(self, p_plus, lam, iterations):
        self.p_plus = p_plus
        self.lam = lam
        self.iterations = iterations


def nonneg_lstsq(A, b, max_iter=None):
    """Lawson-Hanson active-set solve of min ||A x - b||, x >= 0.

    Termination is on the exact KKT conditions: the gradient vanishes on
    the passive set (to rounding) and is non-positive elsewhere, so
    complementarity x^T A^T(b - A x) = 0 holds at machine precision.
    The energy balance of each projection pass rests on exactly that
    product, which is why this solve is done here rather than delegated.
    """
    m, n = A.shape
    if max_iter is None:
        max_iter = 3 * n + 30
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    barred = np.zeros(n, dtype=bool)
    scale = max(np.abs(A).max(initial=0.0) * max(1.0, np.abs(b).max(initial=0.0)), 1.0)
    wtol = 100.0 * np.finfo(float).eps * scale
    for _ in range(max_iter):
        w = A.T @ (b - A @ x)
        w[passive | barred] = -np.inf
        j = int(np.argmax(w))
        if not np.isfinite(w[j]) or w[j] <= wtol:
            return x
        passive[j] = True
        while True:
            s = np.zeros(n)
            s[passive], *_ = np.linalg.lstsq(A[:, passive], b, rcond=None)
            neg = passive & (s <= 0.0)
            if not np.any(neg):
                x = s
                break
            # Step to the first blocking coordinate and retire it.
            idx = np.flatnonzero(neg)
            d = x[idx] - s[idx]
            ratios = np.where(d > 0.0, x[idx] / np.where(d > 0.0, d, 1.0), 0.0)
            k = idx[int(np.argmin(ratios))]
            alpha = ratios.min()
            if alpha == 0.0 and k == j:
                # Rounding-degenerate entry: the gradient marked j usable
                # but the passive solve rejects it at zero step.  Bar it
                # for this call rather than cycle.
                passive[j] = False
                barred[j] = True
                break
            x = x + alpha * (s - x)
            passive[k] = False
            passive &= x > 0.0
            x[~passive] = 0.0
    raise ReflectionError("non-negative least squares failed to converge")


def energy_projection_nnls(Gv, W, p):
    """Solve G^T W G lambda = -2 G^T W p, lambda >= 0 via least squares.

    W is the (SPD) quadratic form of the conserved energy.  Factoring
    W = L L^T turns the normal equation into the plain NNLS problem
    min || L^T G lambda + 2 L^T p ||.
    """
    if Gv.shape[1] == 0:
        return np.zeros(0)
    L = np.linalg.cholesky(W)
    A = L.T @ Gv
    b = -2.0 * (L.T @ p)
    return nonneg_lstsq(A, b)


def _jump_columns(sys, q, K):
    # Equality-projected gradient columns: a reflection must not inject
    # momentum normal to the equality manifold.
    return projected_active_gradient(sys, q, K)


def generalized_reflection(sys, q, p, K, E=None, tol=DEFAULT_TOL):
    """Iterated energy-preserving projection (violated subset at a time).

    Each pass collects V = {k in K : grad g_k^T M^{-1} p < 0}, projects p
    over V so that E is conserved and the V-components become feasible,
    and repeats until V is empty.  Termination yields all three jump
    conditions; a pass that makes no progress, or exceeding the iteration
    cap 100 |K|, raises ReflectionError.
    """
    K = tuple(K)
    if not K:
        return ReflectionResult(np.asarray(p, dtype=float).copy(), np.zeros(0), 0)
    if E is None:
        E = ContinuousH()
    G = _jump_columns(sys, q, K)
    W = E.quadratic_form(sys, q)
    p = np.asarray(p, dtype=float).copy()
    lam_total = np.zeros(len(K))
    cap = 100 * len(K)
    iterations = 0
    while True:
        # Approach measured in the energy's own quadratic form: for the
        # continuous Hamiltonian this is the mass metric; for a modified
        # energy the two disagree in a thin layer where no nonnegative
        # impulse could both conserve E and repair mass-metric feasibility.
        approach = G.T @ (W @ p)
        viol = np.flatnonzero(approach < -tol.eps_tangent)
        if viol.size == 0:
            return ReflectionResult(p, lam_total, iterations)
        if iterations >= cap:
            raise ReflectionError(
                f"reflection did not terminate within {cap} projections")
        Gv = G[:, viol]
        lam = energy_projection_nnls(Gv, W, p)
        dp = Gv @ lam
        if np.linalg.norm(dp) <= _STAGNATION_RTOL * (1.0 + np.linalg.norm(p)):
            raise ReflectionError(
                "reflection projection stagnated with violated constraints remaining")
        p = p + dp
        lam_total[viol] += lam
        iterations += 1


def moreau_reflection(sys, q, p, K, E=None, tol=DEFAULT_TOL):
    """Single energy-preserving solve over the full constraint set K.

    The result must satisfy kinematic feasibility; if the single solve
    leaves an approaching component, the projection subproblem was
    infeasible and a ReflectionError is raised.
    """
    K = tuple(K)
    if not K:
        return ReflectionResult(np.asarray(p, dtype=float).copy(), np.zeros(0), 0)
    if E is None:
        E = ContinuousH()
    G = _jump_columns(sys, q, K)
    W = E.quadratic_form(sys, q)
    lam = energy_projection_nnls(G, W, np.asarray(p, dtype=float))
    p_plus = p + G @ lam
    approach = G.T @ (W @ p_plus)
    if np.any(approach < -tol.eps_tangent):
        raise ReflectionError(
            "Moreau projection infeasible: post-jump momentum still approaching")
    return ReflectionResult(p_plus, lam, 1)
