import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from riskwild.losses import (CallableLoss, QuadraticFormLoss, RegularizedExpFamilyLoss, SquaredLoss,
                             check_assumption1, grad_fd_check, loss_grad1, loss_value, make_loss,
                             without_closed_form)

finite = st.floats(-50, 50, allow_nan=False)


def vec(d):
    return arrays(float, d, elements=finite)


def test_squared_values():
    s = SquaredLoss()
    assert loss_value(s, [1.0, 0.0], [0.0, 0.0]) == 1.0
    assert loss_value(s, [3.0, -2.0], [3.0, -2.0]) == 0.0
    np.testing.assert_array_equal(loss_grad1(s, [1.0, 0.0], [0.0, 0.0]), [2.0, 0.0])
    np.testing.assert_array_equal(loss_grad1(s, [0.5, 7.0], [0.5, 7.0]), [0.0, 0.0])
    assert s.beta == s.mu == s.alpha == 2.0


def test_quadform_value():
    q = QuadraticFormLoss(np.eye(2), np.zeros(2))
    assert loss_value(q, [1.0, 1.0], [0.0, 0.0]) == pytest.approx(2.0)


def test_expfam_gradient_hand_case():
    e = RegularizedExpFamilyLoss("gaussian", mu_reg=1.0)
    np.testing.assert_allclose(loss_grad1(e, [1.0, 0.0], [0.0, 0.0]), [2.0, 0.0])


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        loss_value(SquaredLoss(), [1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        loss_grad1(SquaredLoss(), [1.0], [1.0, 2.0])


def test_invalid_constants():
    with pytest.raises(ValueError):
        CallableLoss(lambda z, y: 0.0, lambda z, y: 0 * z, beta=1.0, mu=2.0)
    with pytest.raises(ValueError):
        QuadraticFormLoss(np.diag([1.0, -1.0]))


@given(vec(3), vec(3))
def test_closed_form_gradients(z, y):
    np.testing.assert_allclose(SquaredLoss().grad1(z, y), 2 * (z - y), atol=1e-12, rtol=0)
    e = RegularizedExpFamilyLoss("softplus-sum", mu_reg=0.7)
    expit = 1.0 / (1.0 + np.exp(-z))
    np.testing.assert_allclose(e.grad1(z, y), expit - y + 0.7 * z, atol=1e-12, rtol=0)
    A = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.1], [0.0, 0.1, 3.0]])
    b = np.array([0.3, -1.0, 0.2])
    q = QuadraticFormLoss(A, b)
    np.testing.assert_allclose(q.grad1(z, y), 2 * A @ (z - y) + b, atol=1e-10, rtol=0)


@given(vec(2), vec(2))
def test_loss_nonnegative_for_squared_and_quadform(z, y):
    assert SquaredLoss().value(z, y) >= 0
    assert QuadraticFormLoss(np.diag([1.0, 2.0])).value(z, y) >= 0


@given(vec(2), vec(2))
def test_inverse_in_y_round_trip(z, g):
    for spec in (SquaredLoss(), RegularizedExpFamilyLoss("softplus-sum", 1.5),
                 QuadraticFormLoss(np.array([[1.0, 0.2], [0.2, 0.5]]), np.array([1.0, -2.0]))):
        y = spec.inverse_in_y(z, g)
        np.testing.assert_allclose(spec.grad1(z, y), g, atol=1e-9 * (1 + np.abs(g).max()))


def test_expfam_inverse_example():
    e = RegularizedExpFamilyLoss("gaussian", mu_reg=1.0)
    np.testing.assert_allclose(e.inverse_in_y(np.array([1.0, 0.0]), np.zeros(2)), [2.0, 0.0])


def test_fd_check_examples(rng):
    s = SquaredLoss()
    z, y = rng.standard_normal(3), rng.standard_normal(3)
    assert grad_fd_check(s, z, y, 1e-5) <= 1e-7
    assert grad_fd_check(s, z, z, 1e-5) <= 1e-9
    M = rng.standard_normal((3, 3))
    q = QuadraticFormLoss(M @ M.T + np.eye(3), rng.standard_normal(3))
    assert grad_fd_check(q, z, y, 1e-5) <= 1e-6
    with pytest.raises(ValueError):
        grad_fd_check(s, z, y, 1e-2)


@pytest.mark.parametrize("spec", [SquaredLoss(), RegularizedExpFamilyLoss("gaussian", 1.0),
                                  RegularizedExpFamilyLoss("softplus-sum", 0.5),
                                  QuadraticFormLoss(np.diag([1.0, 3.0]), np.array([0.5, 0.0]))],
                         ids=lambda s: s.name)
def test_builtins_pass_check(spec):
    rep = check_assumption1(spec, trials=1000, d=2)
    assert rep.passed, rep.to_dict()
    assert rep.clauses["monotonicity"].worst <= 1e-9


def test_squared_two_point_equalities(rng):
    s = SquaredLoss()
    z1, z2, y = (rng.standard_normal((50, 2)) for _ in range(3))
    breg = s.value(z2, y) - s.value(z1, y) - np.sum(s.grad1(z1, y) * (z2 - z1), axis=1)
    np.testing.assert_allclose(breg, np.sum((z2 - z1) ** 2, axis=1), rtol=1e-10, atol=1e-10)


def test_understated_beta_is_caught():
    s = SquaredLoss()
    broken = CallableLoss(s.value, s.grad1, beta=0.2, mu=0.2)
    rep = check_assumption1(broken, trials=200, d=2)
    assert rep.clauses["smoothness"].violated
    assert rep.clauses["smoothness"].worst > 0


def test_non_pd_quadform_fails_strong_convexity():
    q = QuadraticFormLoss(np.diag([1.0, -1.0]), validate=False)
    rep = check_assumption1(q, trials=200, d=2)
    assert not rep.passed
    assert "strong_convexity" in rep.violations


def test_without_closed_form_keeps_values(rng):
    s = SquaredLoss()
    n = without_closed_form(s)
    assert not n.has_inverse
    z, y = rng.standard_normal((4, 2)), rng.standard_normal((4, 2))
    np.testing.assert_array_equal(n.value(z, y), s.value(z, y))


def test_make_loss_registry():
    assert make_loss({"name": "squared"}, 2).name == "squared"
    assert make_loss({"name": "expfam", "log_partition": "softplus-sum"}, 2).beta == pytest.approx(1.25)
    assert make_loss({"name": "quadform"}, 3).mu == pytest.approx(2.0)
    with pytest.raises(KeyError):
        make_loss({"name": "hinge"}, 2)
