"""Stepping schemes.

Structure-preserving methods:

  * gvi_step: predictor -> extended active set -> generalized reflection ->
    smooth set -> position solve -> momentum solve.
  * dsi_step: the discrete-smooth system; requires left tangency of every
    active constraint and errors toward GVI otherwise.
  * extended_reflection_step: the GVI pipeline with the smooth set forced
    empty (reflection-only constraint handling).
  * gvi_linearized_step: GVI against per-step frozen linearizations of the
    inequality constraints (a deliberately momentum-breaking variant kept
    for comparison runs).

Baselines:

  * direct_midpoint_step: implicit midpoint with the constraint force
    substituted at the alpha-point (alpha = 1/2 or 1), solved through its
    optimization form.
  * newmark_step: the Newmark family, optionally in the IMEX variant with
    a fully implicit constraint force.
  * collision_step: unconstrained stepping interrupted at impact times
    with energy-conserving reflections (event-driven baseline).
"""

import numpy as np

from .errors import ConfigurationError, StepFailure
from .cones import DEFAULT_TOL, active_set, extended_active_set, smooth_set
from .quadrature import Quadrature, d2
from .reflection import (ContinuousH, VerletNumericalH, generalized_reflection,
                         moreau_reflection)
from .solvers import (forward_predictor, momentum_update_solve,
                      position_update_solve, time_of_impact, _solve_linear)
from .sysmodel import Constraint, PhaseState, constraint_gradient_matrix

EVENT_NONE = 0
EVENT_REFLECTION = 1
EVENT_SMOOTH_CONTACT = 2
EVENT_STEP_FAILURE = 3

METHOD_FAMILIES = (
    "gvi", "dsi", "extended-reflection", "gvi-linearized",
    "direct-midpoint", "direct-endpoint", "newmark", "imex-newmark",
    "collision",
)

_MAX_COLLISION_EVENTS = 64
_IMPULSE_EVENT_TOL = 1e-12


class IntegratorConfig:
    """Method selection plus the shared numerical knobs.

    method: one of METHOD_FAMILIES.
    quadrature: Quadrature (rule + h) for the variational methods; also
        carries h for the baselines.
    reflection: "generalized" (iterated projections) or "moreau".
    energy: "continuous" or "verlet-numerical" reflection energy.
    alpha: constraint evaluation point for direct midpoint (1/2 or 1;
        implied by the direct-midpoint / direct-endpoint method names).
    beta, gamma, imex: Newmark parameters.
    """

    def __init__(self, method, quadrature, reflection="generalized",
                 energy="continuous", tolerances=None, alpha=None,
                 beta=0.25, gamma=0.5, imex=None):
        if method not in METHOD_FAMILIES:
            raise ConfigurationError(f"unknown method {method!r}")
        if reflection not in ("generalized", "moreau"):
            raise ConfigurationError(f"unknown reflection operator {reflection!r}")
        if energy not in ("continuous", "verlet-numerical"):
            raise ConfigurationError(f"unknown reflection energy {energy!r}")
        if not (0.0 <= beta <= 0.5):
            raise ConfigurationError("Newmark beta must lie in [0, 1/2]")
        if not (0.0 <= gamma <= 1.0):
            raise ConfigurationError("Newmark gamma must lie in [0, 1]")
        if method == "direct-midpoint" and alpha is None:
            alpha = 0.5
        if method == "direct-endpoint":
            if alpha not in (None, 1.0):
                raise ConfigurationError("direct-endpoint fixes alpha = 1")
            alpha = 1.0
        if method == "imex-newmark":
            imex = True
        elif method == "newmark" and imex is None:
            imex = False
        self.method = method
        self.quadrature = quadrature
        self.reflection = reflection
        self.energy = energy
        self.tolerances = tolerances if tolerances is not None else DEFAULT_TOL
        self.alpha = alpha
        self.beta = float(beta)
        self.gamma = float(gamma)
        self.imex = bool(imex) if imex is not None else False

    def make_energy(self):
        if self.energy == "continuous":
            return ContinuousH()
        return VerletNumericalH(self.quadrature.h)

    def reflect(self, sys, q, p, K, E):
        if self.reflection == "moreau":
            return moreau_reflection(sys, q, p, K, E, self.tolerances)
        return generalized_reflection(sys, q, p, K, E, self.tolerances)


def _set_event(info, event, **extra):
    if info is not None:
        info["event"] = max(info.get("event", EVENT_NONE), event)
        info.update(extra)


def _gvi_pipeline(sys, cfg, s, force_empty_smooth_set, info):
    tol = cfg.tolerances
    quad = cfg.quadrature
    q, p = s.q, s.p
    q_pred = forward_predictor(sys, quad, q, p, tol)
    A = extended_active_set(sys, q, q_pred, tol)
    E = None
    if A:
        E = cfg.make_energy()
        rr = cfg.reflect(sys, q, p, A, E)
        p_plus = rr.p_plus
        if np.any(rr.lam > _IMPULSE_EVENT_TOL):
            _set_event(info, EVENT_REFLECTION, lam_reflection=rr.lam)
    else:
        p_plus = p
    if force_empty_smooth_set:
        # Full steps with reflections only; the position equation carries no
        # contact forces and feasibility is not enforced.
        pos = position_update_solve(sys, quad, q, p_plus, (), tol,
                                    enforce_feasible=False)
        p_next, _, _ = momentum_update_solve(sys, quad, q, pos.q_next, (), tol)
        return PhaseState(pos.q_next, p_next, s.t + quad.h)
    S = smooth_set(sys, q, p_plus, tol)
    if not A and not S and sys.n_equalities == 0 and p_plus is p:
        # Quiet step: the position equation coincides with the predictor's.
        p_next, _, _ = momentum_update_solve(sys, quad, q, q_pred, (), tol)
        return PhaseState(q_pred, p_next, s.t + quad.h)
    # One step can hold several impacts: an impulse transferred by the
    # reflection may close a small gap later in the same step, a crossing
    # the prediction pass cannot see.  Re-reflect against each newly
    # crossed constraint while the reflection still produces an impulse;
    # a crossing it cannot resolve (grazing, curvature pulling back onto
    # a surface already reflected from) is instead captured by widening
    # the complementarity solve, which guarantees a feasible position.
    K = set(A)
    capture = False
    rounds = 0
    while True:
        pos = position_update_solve(sys, quad, q, p_plus, S, tol,
                                    enforce_feasible=capture)
        g_next = sys.inequality_values(pos.q_next)
        crossed = tuple(j for j in range(sys.n_inequalities)
                        if j not in pos.candidates
                        and g_next[j] < -tol.eps_active)
        if not crossed or capture:
            break
        rounds += 1
        if rounds > sys.n_inequalities + 1:
            capture = True
            continue
        K.update(crossed)
        if E is None:
            E = cfg.make_energy()
        rr = cfg.reflect(sys, q, p_plus, tuple(sorted(K)), E)
        if np.any(rr.lam > _IMPULSE_EVENT_TOL):
            p_plus = rr.p_plus
            _set_event(info, EVENT_REFLECTION, lam_reflection=rr.lam)
            S = smooth_set(sys, q, p_plus, tol)
        else:
            capture = True
    q_next = pos.q_next
    if pos.candidates and np.any(pos.lam > _IMPULSE_EVENT_TOL):
        _set_event(info, EVENT_SMOOTH_CONTACT, lam_contact=pos.lam)
    # Cotangency applies to engaged contacts still on their surface: a
    # contact captured by the feasibility widening settles there, while
    # a candidate that separated must not be pulled back onto it.
    g_next = sys.inequality_values(q_next)
    S_mom = tuple(j for j in pos.candidates
                  if g_next[j] <= tol.eps_active)
    p_next, _, _ = momentum_update_solve(sys, quad, q, q_next, S_mom, tol)
    return PhaseState(q_next, p_next, s.t + quad.h)


def gvi_step(sys, cfg, s, info=None):
    """One step of the generalized variational integrator."""
    return _gvi_pipeline(sys, cfg, s, False, info)


def extended_reflection_step(sys, cfg, s, info=None):
    """GVI with the smooth set forced empty: full steps, reflections only."""
    return _gvi_pipeline(sys, cfg, s, True, info)


def dsi_step(sys, cfg, s, info=None):
    """One step of the discrete-smooth integrator.

    Precondition: every active constraint at q has tangential momentum
    (discrete left-limit smoothness).  The position solve carries forces
    for the active set at q; feasibility is then required of all
    constraints at the new configuration, and the momentum is projected
    onto the cotangent spaces of the constraints active there.
    """
    tol = cfg.tolerances
    quad = cfg.quadrature
    q, p = s.q, s.p
    act = active_set(sys, q, tol)
    v = sys.mass_inv @ p
    for i in act:
        if abs(float(sys.inequalities[i].gradient(q) @ v)) > tol.eps_tangent:
            raise StepFailure(
                f"DSI precondition violated: constraint {i} is active with "
                "non-tangential momentum; use the GVI method", t=s.t, state=s)
    pos = position_update_solve(sys, quad, q, p, act, tol)
    g_all = sys.inequality_values(pos.q_next)
    if g_all.size and float(g_all.min()) < -tol.eps_active:
        raise StepFailure(
            "DSI step left the admissible set (a nonsmooth event occurred); "
            "use the GVI method", t=s.t, state=s)
    if act and np.any(pos.lam > _IMPULSE_EVENT_TOL):
        _set_event(info, EVENT_SMOOTH_CONTACT, lam_contact=pos.lam)
    S_end = active_set(sys, pos.q_next, tol)
    p_next, _, _ = momentum_update_solve(sys, quad, q, pos.q_next, S_end, tol)
    return PhaseState(pos.q_next, p_next, s.t + quad.h)


class _FrozenGradientView:
    """Read-only system view whose inequality constraints are replaced by
    their first-order expansions about a reference configuration."""

    def __init__(self, base, q0):
        self.dim = base.dim
        self.mass = base.mass
        self.mass_inv = base.mass_inv
        self.potential = base.potential
        self.potential_gradient = base.potential_gradient
        self.potential_hessian = base.potential_hessian
        self.equalities = base.equalities
        self.particle_dim = base.particle_dim
        self.potential_is_linear = base.potential_is_linear
        g0 = base.inequality_values(q0)
        G0 = constraint_gradient_matrix(sys=base, q=q0,
                                        subset=range(base.n_inequalities))
        q0 = q0.copy()

        def make(i):
            gi = float(g0[i])
            ni = G0[:, i].copy()
            return Constraint(lambda x: gi + float(ni @ (x - q0)),
                              lambda x: ni)

        self.inequalities = tuple(make(i) for i in range(base.n_inequalities))

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


def gvi_linearized_step(sys, cfg, s, info=None, view=None):
    """GVI against a fixed linearization of the inequality constraints.

    The linear expansions are taken about a reference configuration and
    then kept fixed: the constraint surfaces no longer turn with the
    system, which is the classic symmetry-breaking cost of linearized
    contact handling.  A trajectory driver builds the view once at the
    starting configuration and passes it to every step; a bare call
    expands about the current state instead.
    """
    if view is None:
        view = _FrozenGradientView(sys, s.q)
    return _gvi_pipeline(view, cfg, s, False, info)


def _require_no_equalities(sys, label):
    if sys.n_equalities:
        raise ConfigurationError(f"{label} does not support equality constraints")


def direct_midpoint_step(sys, cfg, s, alpha=None, info=None):
    """Direct-substitution implicit midpoint via its optimization form.

    minimize 1/2 x^T M x - x^T (M q + h p) + h^2 V((q + x)/2)
    subject to g((1 - alpha) q + alpha x) >= 0,

    followed by p_next = (2/h) M (x - q) - p.  KKT stationarity carries
    the constraint force alpha * G(c) lambda with c the alpha-point.
    """
    _require_no_equalities(sys, "direct midpoint")
    if alpha is None:
        alpha = cfg.alpha if cfg.alpha is not None else 0.5
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ConfigurationError("direct midpoint alpha must lie in (0, 1]")
    tol = cfg.tolerances
    h = cfg.quadrature.h
    q, p = s.q, s.p
    M = sys.mass
    rhs_lin = M @ q + h * p
    m_ineq = sys.n_inequalities

    def solve_stationarity(W, x0):
        # Newton on grad e(x) - alpha G(c)^T lam = 0, g_W(c) = 0 with
        # c = (1 - alpha) q + alpha x; constraint curvature is dropped
        # from the Jacobian (Gauss-Newton), which is exact for alpha-linear
        # constraints and a mild approximation otherwise.
        k = len(W)
        x = x0.copy()
        lam = np.zeros(k)
        n = sys.dim

        def residual(x, lam):
            c = (1.0 - alpha) * q + alpha * x
            r1 = M @ x - rhs_lin + 0.5 * h * h * sys.potential_gradient(0.5 * (q + x))
            for pos_, i in enumerate(W):
                r1 = r1 - alpha * lam[pos_] * sys.inequalities[i].gradient(c)
            r2 = np.array([sys.inequalities[i].value(c) for i in W])
            return np.concatenate([r1, r2])

        r = residual(x, lam)
        rnorm = np.linalg.norm(r, np.inf)
        for _ in range(100):
            if rnorm <= tol.eps_solver:
                return x, lam, rnorm
            c = (1.0 - alpha) * q + alpha * x
            if sys.potential_hessian is not None:
                Vxx = sys.potential_hessian(0.5 * (q + x))
            else:
                Vxx = np.zeros((n, n))
            Gc = np.column_stack([sys.inequalities[i].gradient(c) for i in W]) \
                if k else np.zeros((n, 0))
            J = np.zeros((n + k, n + k))
            J[:n, :n] = M + 0.25 * h * h * Vxx
            if k:
                J[:n, n:] = -alpha * Gc
                J[n:, :n] = alpha * Gc.T
            dz = _solve_linear(J, r)
            step_len = 1.0
            for _ in range(40):
                x_new = x + step_len * dz[:n]
                lam_new = lam + step_len * dz[n:]
                r_new = residual(x_new, lam_new)
                rnorm_new = np.linalg.norm(r_new, np.inf)
                if rnorm_new < rnorm or rnorm_new <= tol.eps_solver:
                    break
                step_len *= 0.5
            else:
                raise StepFailure("direct midpoint: Newton damping failed",
                                  t=s.t, state=s)
            x, lam, r, rnorm = x_new, lam_new, r_new, rnorm_new
        raise StepFailure(f"direct midpoint: Newton stalled at {rnorm:.3e}",
                          t=s.t, state=s)

    # Unconstrained solve first; then active-set iteration on the alpha-point.
    x_free, _, _ = solve_stationarity((), q + h * (sys.mass_inv @ p))
    c_free = (1.0 - alpha) * q + alpha * x_free
    W = tuple(i for i in range(m_ineq)
              if sys.inequalities[i].value(c_free) < tol.eps_active)
    tried = set()
    x = x_free
    from itertools import combinations
    while True:
        if W in tried:
            found = False
            for size in range(m_ineq + 1):
                for Wc in combinations(range(m_ineq), size):
                    if Wc in tried:
                        continue
                    try:
                        x, lam, _ = solve_stationarity(Wc, x)
                    except StepFailure:
                        tried.add(Wc)
                        continue
                    tried.add(Wc)
                    c = (1.0 - alpha) * q + alpha * x
                    ok_lam = np.all(lam >= -1e-11)
                    others = [i for i in range(m_ineq) if i not in Wc]
                    ok_g = all(sys.inequalities[i].value(c) >= -tol.eps_active
                               for i in others)
                    if ok_lam and ok_g:
                        W = Wc
                        found = True
                        break
                if found:
                    break
            if not found:
                raise StepFailure("direct midpoint: no feasible active set",
                                  t=s.t, state=s)
            break
        tried.add(W)
        x, lam, _ = solve_stationarity(W, x)
        c = (1.0 - alpha) * q + alpha * x
        neg = [w for w in W if lam[W.index(w)] < -1e-11]
        others = [i for i in range(m_ineq) if i not in W]
        viol = [(sys.inequalities[i].value(c), i) for i in others]
        viol = [t_ for t_ in viol if t_[0] < -tol.eps_active]
        if not neg and not viol:
            break
        if neg:
            lam_of = {w: lam[W.index(w)] for w in W}
            drop = min(neg, key=lambda w: (lam_of[w], w))
            W = tuple(w for w in W if w != drop)
        else:
            add = min(viol, key=lambda t_: (t_[0], t_[1]))[1]
            W = tuple(sorted(W + (add,)))

    if W:
        _set_event(info, EVENT_SMOOTH_CONTACT)
    p_next = (2.0 / h) * (M @ (x - q)) - p
    return PhaseState(x, p_next, s.t + h)


def newmark_step(sys, cfg, s, beta=None, gamma=None, imex=None, info=None,
                 scratch=None):
    """One Newmark step in velocity form; stored momentum is p = M qdot.

    The IMEX variant evaluates the constraint force fully implicitly at
    q^{t+1} in both stages with a single multiplier determined by the
    position-stage complementarity.  The plain variant weights an explicit
    constraint force at q^t (the previous step's multiplier, by force
    continuity) against the implicit one by (beta, gamma); with beta = 0
    the position stage carries no constraint force, so steps whose free
    position violates a constraint fail.
    """
    _require_no_equalities(sys, "Newmark")
    if beta is None:
        beta = cfg.beta
    if gamma is None:
        gamma = cfg.gamma
    if imex is None:
        imex = cfg.imex
    tol = cfg.tolerances
    h = cfg.quadrature.h
    q, p = s.q, s.p
    Minv = sys.mass_inv
    qdot = Minv @ p
    gV_t = sys.potential_gradient(q)
    m_ineq = sys.n_inequalities
    lam_prev = None
    if scratch is not None:
        lam_prev = scratch.get("lam_prev")
    if lam_prev is None:
        lam_prev = np.zeros(m_ineq)

    if imex:
        pos_coeff, vel_coeff = 0.5 * h * h, h
        expl_pos = np.zeros(sys.dim)
        expl_vel = np.zeros(sys.dim)
    else:
        pos_coeff, vel_coeff = h * h * beta, h * gamma
        Gq = constraint_gradient_matrix(sys, q, range(m_ineq))
        expl_pos = 0.5 * h * h * (1.0 - 2.0 * beta) * (Minv @ (Gq @ lam_prev))
        expl_vel = h * (1.0 - gamma) * (Minv @ (Gq @ lam_prev))

    base = q + h * qdot - 0.5 * h * h * (1.0 - 2.0 * beta) * (Minv @ gV_t) + expl_pos

    def position_residual(x, lam, W):
        r = x - base + beta * h * h * (Minv @ sys.potential_gradient(x))
        if W:
            Gx = np.column_stack([sys.inequalities[i].gradient(x) for i in W])
            r = r - pos_coeff * (Minv @ (Gx @ lam))
        r2 = np.array([sys.inequalities[i].value(x) for i in W])
        return np.concatenate([r, r2])

    def solve_for(W, x0):
        n = sys.dim
        k = len(W)
        if k and pos_coeff == 0.0:
            raise StepFailure(
                "explicit Newmark (beta = 0) cannot enforce inequality "
                "constraints through the position stage", t=s.t, state=s)
        x = x0.copy()
        lam = np.zeros(k)
        r = position_residual(x, lam, W)
        rnorm = np.linalg.norm(r, np.inf)
        for _ in range(100):
            if rnorm <= tol.eps_solver:
                return x, lam
            Vxx = sys.potential_hessian(x) if sys.potential_hessian is not None \
                else np.zeros((n, n))
            Gx = np.column_stack([sys.inequalities[i].gradient(x) for i in W]) \
                if k else np.zeros((n, 0))
            J = np.zeros((n + k, n + k))
            J[:n, :n] = np.eye(n) + beta * h * h * (Minv @ Vxx)
            if k:
                J[:n, n:] = -pos_coeff * (Minv @ Gx)
                J[n:, :n] = Gx.T
            dz = _solve_linear(J, r)
            x = x + dz[:n]
            lam = lam + dz[n:]
            r = position_residual(x, lam, W)
            rnorm = np.linalg.norm(r, np.inf)
        raise StepFailure(f"Newmark position solve stalled at {rnorm:.3e}",
                          t=s.t, state=s)

    def consistent(W, x, lam_W):
        g_now = sys.inequality_values(x) if m_ineq else np.zeros(0)
        neg = [w for w in W if lam_W[W.index(w)] < -1e-11]
        viol = [(g_now[i], i) for i in range(m_ineq)
                if i not in W and g_now[i] < -tol.eps_active]
        return neg, viol

    x_free, _ = solve_for((), base)
    g_free = sys.inequality_values(x_free) if m_ineq else np.zeros(0)
    W = tuple(int(i) for i in np.flatnonzero(g_free < -tol.eps_active))
    x, lam_W = x_free, np.zeros(0)
    tried = set()
    done = False
    while W not in tried:
        tried.add(W)
        x, lam_W = solve_for(W, x_free)
        neg, viol = consistent(W, x, lam_W)
        if not neg and not viol:
            done = True
            break
        if neg:
            lam_of = {w: lam_W[W.index(w)] for w in W}
            drop = min(neg, key=lambda w: (lam_of[w], w))
            W = tuple(w for w in W if w != drop)
        else:
            add = min(viol, key=lambda t_: (t_[0], t_[1]))[1]
            W = tuple(sorted(W + (add,)))
    if not done:
        # Pivot cycle: enumerate subsets in lexicographic order by size.
        from itertools import combinations
        for size in range(m_ineq + 1):
            for Wc in combinations(range(m_ineq), size):
                try:
                    xc, lamc = solve_for(Wc, x_free)
                except StepFailure:
                    continue
                neg, viol = consistent(Wc, xc, lamc)
                if not neg and not viol:
                    W, x, lam_W = Wc, xc, lamc
                    done = True
                    break
            if done:
                break
        if not done:
            raise StepFailure("Newmark: no consistent contact set", t=s.t, state=s)
    lam_full = np.zeros(m_ineq)
    for pos_, w in enumerate(W):
        lam_full[w] = max(lam_W[pos_], 0.0)

    gV_x = sys.potential_gradient(x)
    qdot_next = qdot - h * ((1.0 - gamma) * (Minv @ gV_t) + gamma * (Minv @ gV_x)) \
        + expl_vel
    if m_ineq and np.any(lam_full):
        Gx = constraint_gradient_matrix(sys, x, range(m_ineq))
        qdot_next = qdot_next + vel_coeff * (Minv @ (Gx @ lam_full))
    if scratch is not None:
        scratch["lam_prev"] = lam_full
    if np.any(lam_full > _IMPULSE_EVENT_TOL):
        _set_event(info, EVENT_SMOOTH_CONTACT)
    return PhaseState(x, sys.mass @ qdot_next, s.t + h)


def collision_step(sys, cfg, s, info=None):
    """Event-driven baseline: substep to each impact, reflect, continue.

    Impact times are located by bisection along the chord of the
    unconstrained substep; the substep is then re-integrated to the impact
    fraction, the crossing constraints (plus any already-active ones) are
    reflected jointly with the configured operator, and the remainder of
    the step proceeds.  More than 64 events in one step raises a Zeno
    failure.
    """
    tol = cfg.tolerances
    quad = cfg.quadrature
    h = quad.h
    E = cfg.make_energy()
    q = s.q.copy()
    p = s.p.copy()
    remaining = 1.0
    events = 0
    while remaining > 1e-14:
        h_sub = h * remaining
        sub = Quadrature(quad.rule, h_sub)
        x = forward_predictor(sys, sub, q, p, tol)
        g_end = sys.inequality_values(x)
        crossing = np.flatnonzero(g_end < -tol.eps_active)
        if crossing.size == 0:
            p = d2(sub, sys, q, x)
            q = x
            break
        g_start = sys.inequality_values(q)
        taus = {}
        for i in crossing:
            i = int(i)
            if g_start[i] <= tol.eps_active:
                taus[i] = 0.0
            else:
                taus[i] = time_of_impact(sys, q, x, i, tol)
        tau_min = min(taus.values())
        if tau_min > 0.0:
            sub2 = Quadrature(quad.rule, tau_min * h_sub)
            x2 = forward_predictor(sys, sub2, q, p, tol)
            p = d2(sub2, sys, q, x2)
            q = x2
        g_here = sys.inequality_values(q)
        K = sorted(set(i for i, ti in taus.items() if ti <= tau_min + 1e-12)
                   | set(int(j) for j in np.flatnonzero(g_here <= tol.eps_active)))
        rr = cfg.reflect(sys, q, p, tuple(K), E)
        moved = np.any(rr.lam > _IMPULSE_EVENT_TOL)
        p = rr.p_plus
        remaining *= (1.0 - tau_min)
        events += 1
        if moved:
            _set_event(info, EVENT_REFLECTION)
        elif tau_min == 0.0:
            # No impulse and no progress: resting or grazing contact, which
            # this baseline cannot resolve.
            raise StepFailure("collision integrator stalled on a resting "
                              "contact", t=s.t, state=s)
        if events > _MAX_COLLISION_EVENTS:
            raise StepFailure(
                f"collision integrator exceeded {_MAX_COLLISION_EVENTS} events "
                "in one step (Zeno guard)", t=s.t, state=s)
    return PhaseState(q, p, s.t + h)


def make_stepper(sys, cfg):
    """Bind (sys, cfg) into a stepping callable: (state, info) -> state."""
    method = cfg.method
    if method == "gvi":
        return lambda s, info=None: gvi_step(sys, cfg, s, info)
    if method == "dsi":
        return lambda s, info=None: dsi_step(sys, cfg, s, info)
    if method == "extended-reflection":
        return lambda s, info=None: extended_reflection_step(sys, cfg, s, info)
    if method == "gvi-linearized":
        cell = {}

        def linearized(s, info=None):
            if "view" not in cell:
                cell["view"] = _FrozenGradientView(sys, s.q)
            return gvi_linearized_step(sys, cfg, s, info, view=cell["view"])
        return linearized
    if method in ("direct-midpoint", "direct-endpoint"):
        return lambda s, info=None: direct_midpoint_step(sys, cfg, s, info=info)
    if method in ("newmark", "imex-newmark"):
        scratch = {}
        return lambda s, info=None: newmark_step(sys, cfg, s, info=info,
                                                 scratch=scratch)
    if method == "collision":
        return lambda s, info=None: collision_step(sys, cfg, s, info)
    raise ConfigurationError(f"unknown method {method!r}")


def simulate(sys, cfg, state, n_steps, record=None, energy_guard=None):
    """Advance n_steps from state, optionally recording each step.

    record(i, state, info) is called for i = 1..n_steps after each step.
    energy_guard, when given, is a callable state -> bool; returning False
    aborts the run with StepFailure (used for blow-up detection).  Returns
    the final state.
    """
    stepper = make_stepper(sys, cfg)
    for i in range(1, n_steps + 1):
        info = {"event": EVENT_NONE}
        state = stepper(state, info)
        if not state.is_finite():
            raise StepFailure("non-finite state", t=state.t, state=state)
        if energy_guard is not None and not energy_guard(state):
            raise StepFailure("energy guard tripped", t=state.t, state=state)
        if record is not None:
            record(i, state, info)
    return state
