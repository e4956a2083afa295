"""Dual SVM solver: analytic two-point cases, KKT conditions, and the
objective-comparison oracle cross-check.

Hand-derived oracle for the two-point problem with K = I, y = (+1, -1):
the equality constraint forces alpha_1 = alpha_2 = a and the objective is
2a - a^2, maximized at a = 1 (clipped at the box when C < 1), with b = 0,
decision values (+a, -a), and ||w|| = a*sqrt(2).
"""

import numpy as np
import pytest

from shotsvm.errors import ConvergenceError, DegenerateProblemError
from shotsvm.kernels import KernelMatrix
from shotsvm.solver import (
    SvmModel,
    brute_force_dual,
    decision_values,
    dual_objective,
    margin_norm,
    train,
)

EYE2 = KernelMatrix(np.eye(2))
Y2 = np.array([1.0, -1.0])


def random_pd_instance(rng, n):
    """Gaussian kernel of distinct random points: entries in (0,1], PD, unit diagonal."""
    pts = rng.normal(size=(n, 2))
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    k = np.exp(-d2 / (2.0 * d2.mean() + 1e-12))
    np.fill_diagonal(k, 1.0)
    k = (k + k.T) / 2.0
    y = rng.choice([-1.0, 1.0], size=n)
    if np.all(y == y[0]):
        y[rng.integers(n)] *= -1.0
    return KernelMatrix(k), y


# ---------------------------------------------------------------- analytic cases


def test_two_point_interior_optimum():
    model = train(EYE2, Y2, c=10.0, kkt_tol=1e-10)
    np.testing.assert_allclose(model.alpha, [1.0, 1.0], atol=1e-8)
    assert model.b == pytest.approx(0.0, abs=1e-8)
    np.testing.assert_allclose(model.decision, [1.0, -1.0], atol=1e-8)
    assert margin_norm(model, EYE2) == pytest.approx(np.sqrt(2.0), abs=1e-8)
    assert set(model.free_set) == {0, 1}
    assert set(model.support_set) == {0, 1}


def test_two_point_box_clipped():
    model = train(EYE2, Y2, c=0.5, kkt_tol=1e-10)
    np.testing.assert_allclose(model.alpha, [0.5, 0.5], atol=1e-10)
    assert model.b == pytest.approx(0.0, abs=1e-10)  # midpoint rule, no free vectors
    assert model.free_set.size == 0
    assert set(model.bound_set) == {0, 1}


def test_equality_constraint_holds():
    rng = np.random.default_rng(1)
    for _ in range(10):
        k, y = random_pd_instance(rng, 12)
        model = train(k, y, c=1.0)
        assert abs(np.dot(model.alpha, y)) <= 1e-8


def test_kkt_conditions_on_random_instances():
    rng = np.random.default_rng(2)
    for c in (0.5, 1.0, 10.0):
        k, y = random_pd_instance(rng, 15)
        model = train(k, y, c=c, kkt_tol=1e-8)
        f = decision_values(model, k)
        viol = y * f - 1.0
        tol = 10 * model.kkt_tol
        at_zero = model.alpha <= model.sv_tol
        at_c = model.alpha >= c - model.sv_tol
        free = ~at_zero & ~at_c
        assert np.all(viol[at_zero] >= -tol)
        assert np.all(viol[at_c] <= tol)
        assert np.all(np.abs(viol[free]) <= tol)


def test_train_is_deterministic():
    rng = np.random.default_rng(3)
    k, y = random_pd_instance(rng, 10)
    m1 = train(k, y, c=2.0)
    m2 = train(k, y, c=2.0)
    np.testing.assert_array_equal(m1.alpha, m2.alpha)
    assert m1.b == m2.b
    assert m1.n_iter == m2.n_iter


def test_permutation_equivariance():
    rng = np.random.default_rng(4)
    k, y = random_pd_instance(rng, 9)
    perm = rng.permutation(9)
    kp = KernelMatrix(k.entries[np.ix_(perm, perm)])
    m = train(k, y, c=1.0, kkt_tol=1e-9)
    mp = train(kp, y[perm], c=1.0, kkt_tol=1e-9)
    np.testing.assert_allclose(mp.alpha, m.alpha[perm], atol=1e-6)
    assert mp.b == pytest.approx(m.b, abs=1e-6)


def test_single_class_raises():
    with pytest.raises(DegenerateProblemError):
        train(EYE2, np.array([1.0, 1.0]), c=1.0)


def test_bad_labels_raise():
    with pytest.raises(ValueError):
        train(EYE2, np.array([1.0, 0.0]), c=1.0)


def test_iteration_cap_raises_with_violation():
    rng = np.random.default_rng(5)
    k, y = random_pd_instance(rng, 20)
    with pytest.raises(ConvergenceError) as ei:
        train(k, y, c=1.0, max_iter=1)
    assert ei.value.violation > 0


# ---------------------------------------------------------------- margin / decisions


def test_margin_norm_nonnegative_on_indefinite_kernel():
    # eigenvalues 1 + 0.9*sqrt(2), 1, 1 - 0.9*sqrt(2) < 0 — an estimate can look like this
    k = KernelMatrix(np.array([[1.0, 0.9, 0.0], [0.9, 1.0, 0.9], [0.0, 0.9, 1.0]]))
    model = SvmModel(alpha=np.array([1.0, 1.0, 1.0]), labels=np.array([1.0, -1.0, 1.0]),
                     b=0.0, c=1.0, kkt_tol=1e-6, n_iter=0,
                     decision=np.zeros(3), kkt_violation=0.0)
    w = margin_norm(model, k)
    assert np.isfinite(w) and w >= 0.0


def test_decision_values_formula():
    model = train(EYE2, Y2, c=10.0)
    k_other = KernelMatrix(np.array([[1.0, 0.25], [0.25, 1.0]]))
    f = decision_values(model, k_other)
    # f_i = sum_j alpha_j y_j K_ij + b with alpha = (1,1), b = 0
    np.testing.assert_allclose(f, [1.0 - 0.25, 0.25 - 1.0], atol=1e-8)


def test_dual_objective_value():
    alpha = np.array([1.0, 1.0])
    assert dual_objective(alpha, EYE2, Y2) == pytest.approx(2.0 - 1.0)


# ---------------------------------------------------------------- oracle cross-check


def test_brute_force_two_point():
    alpha, obj = brute_force_dual(EYE2, Y2, c=10.0)
    np.testing.assert_allclose(alpha, [1.0, 1.0], atol=1e-4)
    assert obj == pytest.approx(1.0, abs=1e-7)


def test_solver_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(6)
    for trial in range(40):
        n = int(rng.integers(2, 7))
        c = [0.5, 1.0, 10.0][trial % 3]
        k, y = random_pd_instance(rng, n)
        model = train(k, y, c=c, kkt_tol=1e-9)
        obj_smo = dual_objective(model.alpha, k, y)
        alpha_bf, obj_bf = brute_force_dual(k, y, c=c)
        assert obj_bf >= obj_smo - 1e-6
        assert abs(obj_smo - obj_bf) <= 1e-5 * max(1.0, abs(obj_bf))
        # PD kernel => strictly concave on the constraint slice => unique optimum
        assert np.max(np.abs(model.alpha - alpha_bf)) <= 1e-3
