"""Active-set machinery and equality-projected constraint gradients.

Index sets are plain sorted tuples of constraint indices.  Thresholded
activity and tangency tests replace the exact equalities of the continuous
theory; all scenarios are O(1)-scaled, so the tolerances are absolute.
"""

import numpy as np

from .sysmodel import constraint_gradient_matrix

_PINV_RCOND = 1e-12


class Tolerances:
    """Activity, tangency and solver thresholds."""

    __slots__ = ("eps_active", "eps_tangent", "eps_solver")

    def __init__(self, eps_active=1e-9, eps_tangent=1e-9, eps_solver=1e-10):
        if not (eps_active > 0 and eps_tangent > 0 and eps_solver > 0):
            raise ValueError("tolerances must be strictly positive")
        self.eps_active = float(eps_active)
        self.eps_tangent = float(eps_tangent)
        self.eps_solver = float(eps_solver)

    def replace(self, **kw):
        vals = {k: getattr(self, k) for k in self.__slots__}
        vals.update(kw)
        return Tolerances(**vals)

    def __repr__(self):
        return (f"Tolerances(eps_active={self.eps_active}, "
                f"eps_tangent={self.eps_tangent}, eps_solver={self.eps_solver})")


DEFAULT_TOL = Tolerances()


def active_set(sys, q, tol=DEFAULT_TOL):
    """Indices with g_i(q) = 0 to within eps_active.

    Indices violated beyond the threshold (g_i < -eps_active) are included
    as well; a predictor-based step can overshoot slightly and a violated
    constraint must stay in play.
    """
    g = sys.inequality_values(q)
    return tuple(int(i) for i in np.flatnonzero(g <= tol.eps_active))


def extended_active_set(sys, q, q_pred, tol=DEFAULT_TOL):
    """Union of predictor-violating and currently active constraints.

    {i : g_i(q_pred) <= 0} with an exact sign test on the predictor values,
    union {j : g_j(q) = 0} with the eps_active threshold.
    """
    g_pred = sys.inequality_values(q_pred)
    g_now = sys.inequality_values(q)
    mask = (g_pred <= 0.0) | (g_now <= tol.eps_active)
    return tuple(int(i) for i in np.flatnonzero(mask))


def smooth_set(sys, q, p, tol=DEFAULT_TOL):
    """Active constraints whose gradients are M^{-1}-orthogonal to p.

    p is the post-reflection momentum; membership requires both
    |g_i(q)| <= eps_active and |grad g_i(q)^T M^{-1} p| <= eps_tangent.
    """
    out = []
    v = sys.mass_inv @ p
    g = sys.inequality_values(q)
    for i in range(sys.n_inequalities):
        if abs(g[i]) <= tol.eps_active:
            if abs(float(sys.inequalities[i].gradient(q) @ v)) <= tol.eps_tangent:
                out.append(i)
    return tuple(out)


def in_tangent_cone(sys, q, v, tol=DEFAULT_TOL):
    """True iff grad g_i(q)^T v >= -eps_tangent for every active i."""
    for i in active_set(sys, q, tol):
        if float(sys.inequalities[i].gradient(q) @ v) < -tol.eps_tangent:
            return False
    return True


def equality_projector(sys, q):
    """P = I - F (F^T M^{-1} F)^+ F^T M^{-1}, annihilating M^{-1}-components
    along equality constraint normals: F^T M^{-1} P = 0.  Identity when the
    system has no equality constraints."""
    n = sys.dim
    if sys.n_equalities == 0:
        return np.eye(n)
    F = constraint_gradient_matrix(sys, q, range(sys.n_equalities), "equality")
    FtMinv = F.T @ sys.mass_inv
    core = np.linalg.pinv(FtMinv @ F, rcond=_PINV_RCOND)
    return np.eye(n) - F @ (core @ FtMinv)


def projected_active_gradient(sys, q, subset):
    """Inequality gradient columns projected onto the equality cotangent space.

    With no equalities this is the plain gradient matrix.  Each projected
    column c satisfies F^T M^{-1} c = 0 up to the pseudoinverse cutoff.
    """
    G = constraint_gradient_matrix(sys, q, subset, "inequality")
    if sys.n_equalities == 0 or G.shape[1] == 0:
        return G
    return equality_projector(sys, q) @ G
