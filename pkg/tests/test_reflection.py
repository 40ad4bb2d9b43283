"""Reflection operators: jump conditions, NNLS exactness, invariances."""

import itertools

import numpy as np
import pytest

from varimpact.errors import ReflectionError
from varimpact.reflection import (ContinuousH, VerletNumericalH,
                                  energy_projection_nnls,
                                  generalized_reflection, moreau_reflection,
                                  nonneg_lstsq)
from varimpact.sysmodel import Constraint, MechanicalSystem, PhaseState

from conftest import quadratic_system


def _brute_nnls(A, b):
    """Enumerate active patterns; the reference optimum for small n."""
    m, n = A.shape
    best_res, best_x = np.inf, np.zeros(n)
    for r in range(n + 1):
        for S in itertools.combinations(range(n), r):
            x = np.zeros(n)
            if S:
                sol, *_ = np.linalg.lstsq(A[:, list(S)], b, rcond=None)
                if np.any(sol < -1e-12):
                    continue
                x[list(S)] = np.clip(sol, 0.0, None)
            res = np.linalg.norm(A @ x - b)
            if res < best_res - 1e-13:
                best_res, best_x = res, x
    return best_x, best_res


def _random_reflection_instance(rng, approach_margin=0.05, kmax=3):
    """System + approaching momentum: G^T M^{-1} p < 0 by construction."""
    k = int(rng.integers(1, kmax + 1))
    n = int(rng.integers(max(2, k), 7))
    sys = quadratic_system(n, rng, k_ineq=k)
    q = rng.normal(size=n)
    G = np.column_stack([c.gradient(q) for c in sys.inequalities])
    y = -(approach_margin + rng.uniform(0.1, 2.0, size=k))
    core = G @ np.linalg.solve(G.T @ G, y)
    noise = rng.normal(size=n)
    noise -= G @ np.linalg.solve(G.T @ G, G.T @ noise)
    p = sys.mass @ (core + noise) * rng.choice([0.3, 1.0, 3.0])
    assert np.all(G.T @ (sys.mass_inv @ p) < 0.0)
    return sys, q, p, tuple(range(k))


def test_nnls_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(200):
        m = int(rng.integers(1, 5))
        n = int(rng.integers(1, 5))
        A = rng.normal(size=(m, n))
        b = rng.normal(size=m) * rng.choice([0.1, 1.0, 10.0])
        x = nonneg_lstsq(A, b)
        _, best_res = _brute_nnls(A, b)
        assert np.all(x >= 0.0)
        assert np.linalg.norm(A @ x - b) <= best_res + 1e-9 * (1.0 + best_res)


def test_nnls_kkt_at_termination():
    rng = np.random.default_rng(12)
    for _ in range(200):
        m = int(rng.integers(1, 6))
        n = int(rng.integers(1, 6))
        A = rng.normal(size=(m, n))
        if n >= 2 and rng.random() < 0.4:
            # near-parallel columns, the hard case
            A[:, 1] = A[:, 0] * (1.0 + 1e-7 * rng.normal()) \
                + 1e-7 * rng.normal(size=m)
        b = rng.normal(size=m)
        x = nonneg_lstsq(A, b)
        w = A.T @ (b - A @ x)
        scale = max(1.0, np.abs(A).max() ** 2, np.abs(b).max())
        assert abs(x @ w) <= 1e-10 * scale
        assert np.all(w <= 1e-8 * scale)


def test_energy_projection_near_parallel_regression():
    # Near-parallel jump columns once produced a complementarity-violating
    # multiplier (claimed zero residual, true residual 0.887) and a 0.02
    # energy loss through a reflection pass.  Pinned here for good.
    M = np.array([[3.380899722503952, -0.4584265280013171],
                  [-0.4584265280013171, 2.433517378608058]])
    Gv = np.array([[0.7315929097038576, 2.568840348853762],
                   [0.42571167956217204, 1.5619313213697665]])
    p = np.array([-3.4281078237996816, -1.1256194800372452])
    W = np.linalg.inv(M)
    lam = energy_projection_nnls(Gv, W, p)
    dp = Gv @ lam
    dE = 0.5 * float(dp @ W @ dp) + float(dp @ W @ p)
    assert abs(dE) < 1e-12
    grad = Gv.T @ W @ (2.0 * p + dp)
    assert np.all(lam >= 0.0)
    assert abs(lam @ grad) < 1e-10


def test_mirror_law_single_constraint():
    # k=1 must reduce to the specular reflection in the mass metric.
    rng = np.random.default_rng(13)
    for _ in range(100):
        sys, q, p, K = _random_reflection_instance(rng, kmax=1)
        res = generalized_reflection(sys, q, p, K)
        g = sys.inequalities[0].gradient(q)
        Minv = sys.mass_inv
        mirror = p - 2.0 * (g @ Minv @ p) / (g @ Minv @ g) * g
        assert np.allclose(res.p_plus, mirror, atol=1e-12)


@pytest.mark.parametrize("op", [generalized_reflection, moreau_reflection])
def test_jump_conditions_continuous(op):
    rng = np.random.default_rng(14)
    for _ in range(120):
        sys, q, p, K = _random_reflection_instance(rng)
        res = op(sys, q, p, K)
        W = sys.mass_inv
        dE = 0.5 * (res.p_plus @ W @ res.p_plus - p @ W @ p)
        G = np.column_stack([sys.inequalities[j].gradient(q) for j in K])
        assert abs(dE) <= 1e-10
        assert np.all(res.lam >= -1e-12)
        assert np.min(G.T @ W @ res.p_plus) >= -1e-9
        assert np.allclose(res.p_plus - p, G @ res.lam, atol=1e-9)


@pytest.mark.parametrize("op", [generalized_reflection, moreau_reflection])
def test_jump_conditions_modified_energy(op):
    rng = np.random.default_rng(15)
    h = 0.05
    E = VerletNumericalH(h)
    count = 0
    while count < 60:
        sys, q, p, K = _random_reflection_instance(rng)
        W = E.quadratic_form(sys, q)
        if np.linalg.eigvalsh(W).min() <= 1e-8:
            continue
        if np.min(np.column_stack(
                [sys.inequalities[j].gradient(q) for j in K]).T @ W @ p) > -1e-3:
            continue  # approach in the modified metric too
        count += 1
        res = op(sys, q, p, K, E)
        dE = 0.5 * (res.p_plus @ W @ res.p_plus - p @ W @ p)
        assert abs(dE) <= 1e-10
        assert np.all(res.lam >= -1e-12)


def test_reflection_leaves_separating_momentum_alone():
    rng = np.random.default_rng(16)
    sys, q, p, K = _random_reflection_instance(rng, kmax=2)
    res = generalized_reflection(sys, q, -p, K)  # -p separates
    assert np.array_equal(res.p_plus, -p)
    assert not np.any(res.lam)


def test_moreau_error_on_blocked_subproblem():
    # Gram matrix [[1,-.9],[-.9,1]] with approach (-1, .5): the single
    # energy-conserving solve cannot reach feasibility, which is reported
    # as an error rather than silently accepted.
    A = np.array([[1.0, -0.9], [-0.9, 1.0]])
    c = np.array([-1.0, 0.5])
    R = np.linalg.cholesky(A).T          # G^T G = A with M = I
    G = np.vstack([R, np.zeros((1, 2))])
    p = np.linalg.lstsq(G.T, c, rcond=None)[0]
    assert np.allclose(G.T @ p, c, atol=1e-12)
    cons = tuple(Constraint(lambda q, j=j: 1.0, lambda q, G=G, j=j: G[:, j])
                 for j in range(2))
    sys = MechanicalSystem(3, np.eye(3), potential=lambda q: 0.0,
                           potential_gradient=lambda q: np.zeros(3),
                           inequalities=cons)
    with pytest.raises(ReflectionError):
        moreau_reflection(sys, np.zeros(3), p, (0, 1))
    # the iterated operator resolves the same instance
    res = generalized_reflection(sys, np.zeros(3), p, (0, 1))
    assert np.min(G.T @ res.p_plus) >= -1e-9
    assert abs(res.p_plus @ res.p_plus - p @ p) <= 1e-10


def test_reflection_orthogonal_equivariance():
    # Rotating the whole instance must rotate the reflected momentum.
    rng = np.random.default_rng(17)
    for _ in range(25):
        sys, q, p, K = _random_reflection_instance(rng, kmax=2)
        n = sys.dim
        Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        M2 = Q @ sys.mass @ Q.T
        cons = tuple(Constraint(
            lambda x, c=c, Q=Q: c.value(Q.T @ x),
            lambda x, c=c, Q=Q: Q @ c.gradient(Q.T @ x))
            for c in sys.inequalities)
        sys2 = MechanicalSystem(n, M2, potential=lambda x: 0.0,
                                potential_gradient=lambda x: np.zeros(n),
                                inequalities=cons)
        r1 = generalized_reflection(sys, q, p, K)
        r2 = generalized_reflection(sys2, Q @ q, Q @ p, K)
        assert np.allclose(r2.p_plus, Q @ r1.p_plus, atol=1e-9)


def test_reflection_with_equalities_keeps_tangency():
    # Impulses must not push the velocity off the equality manifold.
    rng = np.random.default_rng(18)
    hits = 0
    while hits < 20:
        n = int(rng.integers(3, 6))
        sys = quadratic_system(n, rng, k_ineq=1, k_eq=1)
        q = rng.normal(size=n)
        F = sys.equalities[0].gradient(q)
        p = rng.normal(size=n)
        # start tangent to the equality manifold
        Mv = sys.mass_inv
        p = p - F * (F @ Mv @ p) / (F @ Mv @ F)
        g = sys.inequalities[0].gradient(q)
        if g @ Mv @ p > -0.05:
            continue
        hits += 1
        res = generalized_reflection(sys, q, p, (0,))
        assert abs(F @ Mv @ res.p_plus) <= 1e-9
        dE = 0.5 * (res.p_plus @ Mv @ res.p_plus - p @ Mv @ p)
        assert abs(dE) <= 1e-10
