"""Constrained nonlinear solves shared by the integrators.

The position update solves the asymmetric complementarity system

    D1 L_d(q, x) + p + N_S(q) lambda + F(q) nu = 0,
    0 <= lambda  perp  g_S(x) >= 0,
    f(x) = 0,

where constraint gradients are frozen at q while constraint values are
taken at the unknown x.  This is not the KKT system of any standard
program, so it is solved by an outer active-set search with an inner
Newton iteration.  Freezing the gradient columns makes the inner Jacobian
exact without any constraint Hessians.

For the Verlet rule (and for linear potentials under either rule) D1 is
affine in x, so x can be eliminated and Newton runs in the low-dimensional
multiplier space.
"""

import numpy as np

from .errors import InfeasibleStepError, PredictorError, SolverError
from .cones import DEFAULT_TOL, projected_active_gradient
from .quadrature import VERLET, d1, d2
from .sysmodel import constraint_gradient_matrix

_MAX_NEWTON = 100
_MAX_HALVINGS = 30
_LAMBDA_TOL = 1e-11


class ComplementaritySolution:
    __slots__ = ("q_next", "lam", "nu", "residual", "candidates")

    def __init__(self, q_next, lam, nu, residual, candidates=()):
        self.q_next = q_next
        self.lam = lam
        self.nu = nu
        self.residual = residual
        # inequality indices the solve carried; lam aligns with this tuple
        self.candidates = tuple(candidates)


def _equality_matrix(sys, q):
    return constraint_gradient_matrix(sys, q, range(sys.n_equalities), "equality")


def _is_affine(sys, quad):
    return quad.rule == VERLET or sys.potential_is_linear


def _free_position(sys, quad, q, p):
    # Solution of D1 L_d(q, x) + p = 0 when D1 is affine in x.
    h = quad.h
    return q + h * (sys.mass_inv @ (p - 0.5 * h * sys.potential_gradient(q)))


def _solve_linear(J, r):
    try:
        return np.linalg.solve(J, -r)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(J, -r, rcond=None)[0]


def _newton_affine(sys, quad, q, p, cols, g_funcs, g_grads, n_eq, tol):
    """Multiplier-space Newton: x(m) = x_free + h M^{-1} cols m, solve
    g_W(x) = 0 and f(x) = 0 for the multipliers m."""
    h = quad.h
    x_free = _free_position(sys, quad, q, p)
    hMinv_cols = h * (sys.mass_inv @ cols)
    k = cols.shape[1]

    def constraint_residual(x):
        rows = [fn(x) for fn in g_funcs]
        if n_eq:
            rows.extend(sys.equality_values(x))
        return np.asarray(rows, dtype=float)

    m = np.zeros(k)
    x = x_free
    r = constraint_residual(x)
    rnorm = np.linalg.norm(r, np.inf) if k else 0.0
    if k == 0:
        return x_free, m, rnorm
    for _ in range(_MAX_NEWTON):
        if rnorm <= tol.eps_solver:
            return x, m, rnorm
        grads = [gr(x) for gr in g_grads]
        if n_eq:
            grads.extend(sys.equalities[j].gradient(x) for j in range(n_eq))
        J = np.asarray(grads) @ hMinv_cols
        dm = _solve_linear(J, r)
        step = 1.0
        for _ in range(_MAX_HALVINGS):
            m_new = m + step * dm
            x_new = x_free + hMinv_cols @ m_new
            r_new = constraint_residual(x_new)
            rnorm_new = np.linalg.norm(r_new, np.inf)
            if rnorm_new < rnorm or rnorm_new <= tol.eps_solver:
                break
            step *= 0.5
        else:
            raise SolverError("position solve: damping failed to reduce residual")
        m, x, r, rnorm = m_new, x_new, r_new, rnorm_new
    raise SolverError(f"position solve: Newton stalled at residual {rnorm:.3e}")


def _newton_full(sys, quad, q, p, cols, g_funcs, g_indices, n_eq, tol):
    """Full-space Newton on z = (x, multipliers) for the midpoint rule with
    a nonlinear potential.  Requires the potential Hessian."""
    if sys.potential_hessian is None:
        raise SolverError("midpoint position solve requires the potential Hessian")
    h = quad.h
    n = sys.dim
    k = cols.shape[1]
    M = sys.mass

    def residual(x, m):
        r1 = d1(quad, sys, q, x) + p + cols @ m
        rows = [fn(x) for fn in g_funcs]
        if n_eq:
            rows.extend(sys.equality_values(x))
        return np.concatenate([r1, np.asarray(rows, dtype=float)])

    x = _free_position(sys, quad, q, p)
    m = np.zeros(k)
    r = residual(x, m)
    rnorm = np.linalg.norm(r, np.inf)
    for _ in range(_MAX_NEWTON):
        if rnorm <= tol.eps_solver:
            return x, m, rnorm
        mid = 0.5 * (q + x)
        A11 = -M / h - 0.25 * h * sys.potential_hessian(mid)
        grads = [sys.inequalities[i].gradient(x) for i in g_indices]
        if n_eq:
            grads.extend(sys.equalities[j].gradient(x) for j in range(n_eq))
        J = np.zeros((n + k, n + k))
        J[:n, :n] = A11
        if k:
            J[:n, n:] = cols
            J[n:, :n] = np.asarray(grads)
        dz = _solve_linear(J, r)
        step = 1.0
        for _ in range(_MAX_HALVINGS):
            x_new = x + step * dz[:n]
            m_new = m + step * dz[n:]
            r_new = residual(x_new, m_new)
            rnorm_new = np.linalg.norm(r_new, np.inf)
            if rnorm_new < rnorm or rnorm_new <= tol.eps_solver:
                break
            step *= 0.5
        else:
            raise SolverError("position solve: damping failed to reduce residual")
        x, m, r, rnorm = x_new, m_new, r_new, rnorm_new
    raise SolverError(f"position solve: Newton stalled at residual {rnorm:.3e}")


def _solve_for_active_subset(sys, quad, q, p_plus, S, N0, F0, W, tol):
    if not W and sys.n_equalities == 0:
        # No multipliers: the position equation is exactly the predictor's.
        x = forward_predictor(sys, quad, q, p_plus, tol)
        return x, np.zeros(0), np.zeros(0), 0.0
    idx = [S[w] for w in W]
    g_funcs = [sys.inequalities[i].value for i in idx]
    g_grads = [sys.inequalities[i].gradient for i in idx]
    n_eq = sys.n_equalities
    colsW = np.hstack([N0[:, list(W)], F0]) if (W or n_eq) else np.zeros((sys.dim, 0))
    if _is_affine(sys, quad):
        x, m, res = _newton_affine(sys, quad, q, p_plus, colsW, g_funcs, g_grads, n_eq, tol)
    else:
        x, m, res = _newton_full(sys, quad, q, p_plus, colsW, g_funcs, idx, n_eq, tol)
    lamW = m[:len(W)]
    nu = m[len(W):]
    return x, lamW, nu, res


def position_update_solve(sys, quad, q, p_plus, S, tol=DEFAULT_TOL,
                          enforce_feasible=True):
    """Solve the position update over the candidate set S.

    Any inequality outside S found violated at the solution joins the
    candidate set and the solve repeats, so the accepted position is
    feasible for the full constraint vector; the reflection pass cannot
    anticipate constraints crossed mid-step once the step is coarse
    relative to the contact timescale.  enforce_feasible=False skips the
    widening (reflection-only stepping takes full steps regardless).
    """
    cand = tuple(S)
    for _ in range(sys.n_inequalities + 1):
        sol = _complementarity_solve(sys, quad, q, p_plus, cand, tol)
        if not enforce_feasible:
            return sol
        g_all = sys.inequality_values(sol.q_next)
        viol = tuple(j for j in range(sys.n_inequalities)
                     if j not in cand and g_all[j] < -tol.eps_active)
        if not viol:
            return sol
        cand = tuple(sorted(set(cand) | set(viol)))
    raise InfeasibleStepError(
        "position solve: feasibility widening did not terminate")


def _complementarity_solve(sys, quad, q, p_plus, S, tol):
    """Asymmetric complementarity over a fixed candidate set S.

    Outer loop over force-carrying subsets W of S: impose g_W(x) = 0, then
    check lambda_W >= 0 and g_{S \\ W}(x) >= 0, pivoting the most violated
    index (lowest index on ties).  Revisiting a subset falls back to full
    lexicographic enumeration; S never exceeds a handful of indices in
    practice.
    """
    S = tuple(S)
    nS = len(S)
    N0 = projected_active_gradient(sys, q, S)
    F0 = _equality_matrix(sys, q)

    def attempt(W):
        x, lamW, nu, res = _solve_for_active_subset(
            sys, quad, q, p_plus, S, N0, F0, W, tol)
        lam = np.zeros(nS)
        for pos, w in enumerate(W):
            lam[w] = lamW[pos]
        ok_lam = bool(np.all(lam >= -_LAMBDA_TOL))
        outside = [w for w in range(nS) if w not in W]
        g_out = np.array([sys.inequalities[S[w]].value(x) for w in outside])
        ok_g = bool(np.all(g_out >= -tol.eps_active)) if outside else True
        return x, np.maximum(lam, 0.0), nu, res, ok_lam, ok_g, lam, outside, g_out

    W = tuple(range(nS))
    tried = set()
    while True:
        tried.add(W)
        try:
            x, lam, nu, res, ok_lam, ok_g, lam_raw, outside, g_out = attempt(W)
        except SolverError:
            ok_lam = ok_g = False
            x = None
        if x is not None and ok_lam and ok_g:
            return ComplementaritySolution(x, lam, nu, res, S)
        if x is None:
            break
        if not ok_lam:
            drop = min((w for w in W if lam_raw[w] < -_LAMBDA_TOL),
                       key=lambda w: (lam_raw[w], w))
            W = tuple(w for w in W if w != drop)
        else:
            viol = [(g_out[i], outside[i]) for i in range(len(outside))
                    if g_out[i] < -tol.eps_active]
            add = min(viol, key=lambda t: (t[0], t[1]))[1]
            W = tuple(sorted(W + (add,)))
        if W in tried:
            break

    # Exhaustive fallback, deterministic lexicographic order by subset size.
    from itertools import combinations
    for size in range(nS + 1):
        for W in combinations(range(nS), size):
            if W in tried:
                continue
            try:
                x, lam, nu, res, ok_lam, ok_g, _, _, _ = attempt(W)
            except SolverError:
                continue
            if ok_lam and ok_g:
                return ComplementaritySolution(x, lam, nu, res, S)
    raise InfeasibleStepError("position solve: no feasible active set found")


def momentum_update_solve(sys, quad, q_old, q_new, S, tol=DEFAULT_TOL):
    """Momentum map with cotangency projection.

    p_next = D2 L_d(q_old, q_new) + N_S(q_new) mu + F(q_new) xi subject to
    N_S(q_new)^T M^{-1} p_next = 0 and F(q_new)^T M^{-1} p_next = 0, via
    the Gram system of the combined column set (pseudoinverse on rank
    deficiency).
    """
    S = tuple(S)
    D2 = d2(quad, sys, q_old, q_new)
    N1 = projected_active_gradient(sys, q_new, S)
    F1 = _equality_matrix(sys, q_new)
    A = np.hstack([N1, F1])
    if A.shape[1] == 0:
        return D2, np.zeros(0), np.zeros(0)
    Minv = sys.mass_inv
    MinvA = Minv @ A
    B = A.T @ MinvA
    rhs = -(A.T @ (Minv @ D2))
    try:
        sol = np.linalg.solve(B, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.pinv(B, rcond=1e-12) @ rhs
    p_next = D2 + A @ sol
    if np.linalg.norm(A.T @ (Minv @ p_next), np.inf) > 1e3 * tol.eps_solver:
        sol = np.linalg.pinv(B, rcond=1e-12) @ rhs
        p_next = D2 + A @ sol
    return p_next, sol[:len(S)], sol[len(S):]


def forward_predictor(sys, quad, q, p, tol=DEFAULT_TOL):
    """Unconstrained slot-1 stationarity: solve D1 L_d(q, x) + p = 0.

    Closed form whenever D1 is affine in x; Newton otherwise (midpoint
    with a nonlinear potential).
    """
    x = _free_position(sys, quad, q, p)
    if _is_affine(sys, quad):
        return x
    h = quad.h
    M = sys.mass
    for _ in range(_MAX_NEWTON):
        mid = 0.5 * (q + x)
        r = p - (M @ (x - q)) / h - 0.5 * h * sys.potential_gradient(mid)
        if np.linalg.norm(r, np.inf) <= tol.eps_solver:
            return x
        if sys.potential_hessian is not None:
            J = -M / h - 0.25 * h * sys.potential_hessian(mid)
            x = x + _solve_linear(J, r)
        else:
            x = x + h * (sys.mass_inv @ r)
        if not np.all(np.isfinite(x)):
            raise PredictorError("predictor diverged")
    raise PredictorError("predictor failed to converge")


def time_of_impact(sys, q0, q1, constraint_index, tol=DEFAULT_TOL, max_iter=200):
    """Bisection for g_i = 0 along the chord q(tau) = (1-tau) q0 + tau q1."""
    gfun = sys.inequalities[constraint_index].value
    g0 = float(gfun(q0))
    g1 = float(gfun(q1))
    if not (g0 > 0.0 and g1 < 0.0):
        raise SolverError(
            f"time_of_impact: no sign change for constraint {constraint_index} "
            f"(g0={g0:.3e}, g1={g1:.3e})")
    lo, hi = 0.0, 1.0
    tau = 0.5
    for _ in range(max_iter):
        tau = 0.5 * (lo + hi)
        g = float(gfun((1.0 - tau) * q0 + tau * q1))
        if abs(g) <= tol.eps_active:
            return tau
        if g > 0.0:
            lo = tau
        else:
            hi = tau
    return tau
