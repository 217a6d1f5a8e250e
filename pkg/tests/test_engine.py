import numpy as np
import pytest

from riskwild.engine import StageError, doubly_wild_refit, rademacher
from riskwild.losses import RegularizedExpFamilyLoss, SquaredLoss
from riskwild.models import (ConvexERMTrainer, FixedDesignDataset, InterpolatingTrainer, LinearFeatureClass,
                             RidgeTrainer, Trainer, TrainerError, empirical_norm)


class CountingTrainer(Trainer):
    """Records every dataset it is asked to fit."""

    def __init__(self, inner):
        self.name, self.tol = "counting", inner.tol
        self.inner = inner
        self.calls = []

    @property
    def function_class(self):
        return self.inner.function_class

    def fit(self, ds):
        self.calls.append(ds)
        return self.inner.fit(ds)


class FailingTrainer(Trainer):
    name = "failing"

    def fit(self, ds):
        raise TrainerError("no", None, np.inf)


def _data(rng, n=30, d=2):
    x = rng.uniform(-1, 1, (n, 2))
    return FixedDesignDataset(x, x @ rng.standard_normal((2, d)) + 0.5 * rng.standard_normal((n, d)))


def test_rademacher_examples():
    a, b = rademacher(4, 11), rademacher(4, 11)
    np.testing.assert_array_equal(a, b)
    big = rademacher(100_000, 5)
    assert set(np.unique(big)) == {-1.0, 1.0}
    assert abs(big.mean()) <= 3 / np.sqrt(big.size)
    one = rademacher(1, 0)
    assert one.shape == (1,) and abs(one[0]) == 1.0
    with pytest.raises(ValueError):
        rademacher(0, 1)


def test_three_fits_through_black_box(rng):
    ds = _data(rng)
    tr = CountingTrainer(RidgeTrainer(0.1, LinearFeatureClass("affine", 2)))
    out = doubly_wild_refit(tr, ds, SquaredLoss(), 0.7, 0.9, seed=3)
    assert len(tr.calls) == 3
    assert tr.calls[0] is ds
    assert tr.calls[1] is out.D_diamond and tr.calls[2] is out.D_sharp
    for D in (out.D_diamond, out.D_sharp):
        np.testing.assert_array_equal(D.x, ds.x)


def test_determinism(rng):
    ds = _data(rng)
    spec = RegularizedExpFamilyLoss("softplus-sum", 1.0)
    tr = ConvexERMTrainer(spec, LinearFeatureClass("affine", 2), tol=1e-9)
    a = doubly_wild_refit(tr, ds, spec, 1.0, 2.0, seed=9)
    b = doubly_wild_refit(tr, ds, spec, 1.0, 2.0, seed=9)
    assert a.summary() == b.summary()
    for w in ("hat", "diamond", "sharp"):
        np.testing.assert_array_equal(a.fitted(w), b.fitted(w))
    np.testing.assert_array_equal(a.D_sharp.y, b.D_sharp.y)


def test_bookkeeping(rng):
    ds = _data(rng)
    spec = SquaredLoss()
    out = doubly_wild_refit(RidgeTrainer(0.0, LinearFeatureClass("affine", 2)), ds, spec, 0.6, 1.4, seed=1)
    np.testing.assert_array_equal(spec.grad1(out.f_hat(ds.x), ds.y), out.g_tilde)
    assert abs(empirical_norm(out.f_diamond, out.f_hat, ds) - out.r_diamond) <= 1e-12
    assert abs(empirical_norm(out.f_sharp, out.f_hat, ds) - out.r_sharp) <= 1e-12
    assert out.r_diamond >= 0 and out.r_sharp >= 0
    assert set(np.unique(out.eps)) <= {-1.0, 1.0}


def test_half_rho_all_plus_refits_on_own_predictions(rng):
    ds = _data(rng)
    tr = RidgeTrainer(0.0, LinearFeatureClass("affine", 2))
    out = doubly_wild_refit(tr, ds, SquaredLoss(), 0.5, 0.5, eps=np.ones(ds.n))
    np.testing.assert_array_equal(out.D_diamond.y, out.fitted("hat"))
    assert out.r_diamond <= 1e-10


def test_unconstrained_closed_form_radius(rng):
    ds = _data(rng)
    spec = SquaredLoss()
    out = doubly_wild_refit(InterpolatingTrainer(spec), ds, spec, 0.8, 0.8, seed=2)
    w = (1 - 2 * 0.8 * out.eps)[:, None] * out.g_tilde / 2
    assert out.r_diamond == pytest.approx(np.sqrt(np.mean(np.sum(w ** 2, axis=1))), rel=1e-12)
    np.testing.assert_array_equal(out.fitted("diamond"), out.D_diamond.y)


def test_errors(rng):
    ds = _data(rng)
    tr = RidgeTrainer(0.0, LinearFeatureClass("affine", 2))
    with pytest.raises(ValueError):
        doubly_wild_refit(tr, ds, SquaredLoss(), 0.0, 1.0, seed=1)
    with pytest.raises(ValueError):
        doubly_wild_refit(tr, ds, SquaredLoss(), 1.0, 1.0)
    with pytest.raises(ValueError):
        doubly_wild_refit(tr, ds, SquaredLoss(), 1.0, 1.0, eps=np.zeros(ds.n))
    with pytest.raises(StageError) as info:
        doubly_wild_refit(FailingTrainer(), ds, SquaredLoss(), 1.0, 1.0, seed=1)
    assert info.value.stage == "fit-original"
