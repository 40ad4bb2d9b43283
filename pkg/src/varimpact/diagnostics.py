"""Per-step measurements and trace bookkeeping.

A DiagnosticRecord captures the conserved quantities and feasibility
residuals of one accepted state; a Trace is the ordered collection for a
run plus metadata.  envelope_stats turns a traced quantity into the
drift/envelope numbers used by the summary tables.
"""

import numpy as np

from .errors import StepFailure
from .integrators import EVENT_NONE, EVENT_STEP_FAILURE, simulate
from .quadrature import VERLET, modified_hamiltonian_verlet
from .sysmodel import hamiltonian


class DiagnosticRecord:
    __slots__ = ("t", "H", "H_modified", "linear_momentum",
                 "angular_momentum", "g_min", "f_max_abs", "lambda_active",
                 "event")

    def __init__(self, t, H, H_modified, linear_momentum, angular_momentum,
                 g_min, f_max_abs, lambda_active, event):
        self.t = t
        self.H = H
        self.H_modified = H_modified
        self.linear_momentum = linear_momentum
        self.angular_momentum = angular_momentum
        self.g_min = g_min
        self.f_max_abs = f_max_abs
        self.lambda_active = lambda_active
        self.event = event


def _momenta(sys, s):
    p = s.p
    pd = sys.particle_dim
    if pd is None:
        return np.array([p.sum()]), 0.0
    X = s.q.reshape(-1, pd)
    P = p.reshape(-1, pd)
    lin = P.sum(axis=0)
    if pd == 2:
        ang = float(np.sum(X[:, 0] * P[:, 1] - X[:, 1] * P[:, 0]))
    elif pd == 3:
        ang = np.sum(np.cross(X, P), axis=0)
    else:
        ang = 0.0
    return lin, ang


def record(sys, s, event=EVENT_NONE, quad=None, lam_active=None):
    """Measure one state: energies, momenta, feasibility residuals.

    The modified Hamiltonian is filled in only when quad is a Verlet
    quadrature and the system carries a potential Hessian.
    """
    H = hamiltonian(sys, s)
    H_mod = None
    if quad is not None and quad.rule == VERLET \
            and sys.potential_hessian is not None:
        H_mod = modified_hamiltonian_verlet(sys, s, quad.h)
    g = sys.inequality_values(s.q)
    f = sys.equality_values(s.q)
    lin, ang = _momenta(sys, s)
    return DiagnosticRecord(
        t=s.t, H=H, H_modified=H_mod,
        linear_momentum=lin, angular_momentum=ang,
        g_min=float(g.min()) if g.size else np.nan,
        f_max_abs=float(np.abs(f).max()) if f.size else np.nan,
        lambda_active=np.asarray(lam_active if lam_active is not None else []),
        event=event)


def scalar_angular_momentum(rec):
    a = rec.angular_momentum
    if np.ndim(a) == 0:
        return float(a)
    return float(np.linalg.norm(a))


class Trace:
    """Ordered (state, record) pairs with run metadata."""

    def __init__(self, metadata=None):
        self.states = []
        self.records = []
        self.metadata = dict(metadata or {})
        self.failure = None  # (t, message) when the run ended in a failure

    def append(self, state, rec):
        self.states.append(state)
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(zip(self.states, self.records))

    def series(self, quantity):
        recs = self.records
        if quantity == "t":
            vals = [r.t for r in recs]
        elif quantity == "H":
            vals = [r.H for r in recs]
        elif quantity == "H_mod":
            vals = [np.nan if r.H_modified is None else r.H_modified
                    for r in recs]
        elif quantity == "J":
            vals = [scalar_angular_momentum(r) for r in recs]
        elif quantity == "g_min":
            vals = [r.g_min for r in recs]
        elif quantity == "f_max":
            vals = [r.f_max_abs for r in recs]
        else:
            raise KeyError(quantity)
        return np.array(vals, dtype=float)


def envelope_stats(trace_or_series, quantity=None):
    """(max_drift, mean, envelope) of a traced quantity.

    max_drift = max |x(t) - x(0)|; envelope = (max - min)/|mean| when the
    mean is nonzero, else the absolute envelope max - min (a zero mean is
    the caller's flag that the envelope is absolute).
    """
    if quantity is not None:
        x = trace_or_series.series(quantity)
    else:
        x = np.asarray(trace_or_series, dtype=float)
    if x.size == 0:
        raise ValueError("empty series")
    max_drift = float(np.abs(x - x[0]).max())
    mean = float(x.mean())
    env = float(x.max() - x.min())
    if mean != 0.0:
        env = env / abs(mean)
    return max_drift, mean, env


class RunningEnvelope:
    """Streaming first/min/max of a scalar, for undecimated envelopes."""

    __slots__ = ("first", "lo", "hi", "n")

    def __init__(self):
        self.first = None
        self.lo = np.inf
        self.hi = -np.inf
        self.n = 0

    def add(self, x):
        x = float(x)
        if self.first is None:
            self.first = x
        self.lo = min(self.lo, x)
        self.hi = max(self.hi, x)
        self.n += 1

    @property
    def max_drift(self):
        return max(self.hi - self.first, self.first - self.lo)

    @property
    def spread(self):
        return self.hi - self.lo


def run_trace(sys, cfg, state0, n_steps, decimate=1, metadata=None):
    """Run n_steps of cfg's method, recording every decimate-th step.

    A StepFailure ends the run early: the partial trace is returned with
    trace.failure = (t, message) and a final event-3 record appended.
    """
    if decimate < 1:
        raise ValueError("decimate must be >= 1")
    quad = cfg.quadrature
    trace = Trace(metadata)
    trace.append(state0, record(sys, state0, EVENT_NONE, quad=quad))

    def cb(i, s, info):
        if i % decimate == 0 or i == n_steps:
            lam = info.get("lam_reflection", None)
            if lam is None:
                lam = info.get("lam_contact", None)
            trace.append(s, record(sys, s, info.get("event", EVENT_NONE),
                                   quad=quad, lam_active=lam))

    try:
        simulate(sys, cfg, state0, n_steps, record=cb)
    except StepFailure as e:
        t_fail = e.t if e.t is not None else trace.records[-1].t
        trace.failure = (t_fail, str(e))
        s_last = e.state if (e.state is not None and e.state.is_finite()) \
            else trace.states[-1]
        trace.append(s_last, record(sys, s_last, EVENT_STEP_FAILURE, quad=quad))
    return trace
