import math

import numpy as np
import pytest

from riskwild import kernels
from riskwild.engine import doubly_wild_refit
from riskwild.losses import RegularizedExpFamilyLoss, SquaredLoss
from riskwild.models import (FixedDesignDataset, InterpolatingTrainer, LinearFeatureClass, RidgeTrainer,
                             TablePredictor, UnconstrainedClass, empirical_norm)
from riskwild.risk import (SupSolver, T_n, TuneError, W_n, excess_risk_bound, fixed_point_radius,
                           pilot_errors, radius_bound_corollary, radius_bound_theorem2, run_audit,
                           sup_process, sup_solve, tune_rho_for_radius, wild_optimism_diamond,
                           wild_optimism_sharp)

from oracles import linear_class_sup, rms, thm1_by_hand, thm2_by_hand

UNC = SupSolver("unconstrained")


def _data(rng, n=40, d=2, noise=0.5):
    x = rng.uniform(-1, 1, (n, 2))
    return FixedDesignDataset(x, x @ rng.standard_normal((2, d)) + noise * rng.standard_normal((n, d)))


def _ridge_run(rng, seed=4, rho=(0.8, 1.1), n=40):
    ds = _data(rng, n=n)
    fc = LinearFeatureClass("affine", 2)
    out = doubly_wild_refit(RidgeTrainer(0.0, fc), ds, SquaredLoss(), *rho, seed=seed)
    return ds, fc, out


# ---------------------------------------------------------------- suprema

def test_sup_examples():
    ds = FixedDesignDataset(np.zeros((2, 1)), np.zeros((2, 1)))
    c = TablePredictor(ds.x, np.zeros((2, 1)))
    assert sup_process(UNC, c, [[2.0], [-2.0]], 0.0, ds) == 0.0
    assert sup_process(UNC, c, [[2.0], [-2.0]], 1.0, ds) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        sup_process(UNC, c, [[2.0], [-2.0]], -1.0, ds)


def test_unconstrained_sup_vs_brute_force(rng):
    for _ in range(10):
        n, d = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        V = rng.standard_normal((n, d))
        r = float(rng.uniform(0.1, 3))
        ds = FixedDesignDataset(np.zeros((n, 1)), np.zeros((n, d)))
        closed = sup_process(UNC, None, V, r, ds)
        # u = sqrt(n) r w with ||w|| <= 1 turns the process into <vec V, w> r / sqrt(n)
        c = V.ravel()
        grid, _ = kernels.sphere_grid_max(c)
        pg = max(float(c @ kernels.ball_ascent(c / n, x0, math.sqrt(n) * r)[0]) / n
                 for x0 in rng.standard_normal((10, c.size)))
        assert grid * r / math.sqrt(n) == pytest.approx(closed, rel=1e-4)
        assert pg == pytest.approx(closed, rel=1e-4)


def test_linear_sup_matches_kkt_oracle(rng):
    ds = _data(rng)
    fc = LinearFeatureClass("affine", 2)
    center = fc.random_member(rng, 3)
    sup = SupSolver("linear-feature")
    for r in (0.1, 1.0, 4.0):
        V = rng.standard_normal((ds.n, 2))
        res = sup_solve(sup, center, V, r, ds, fc)
        ref = linear_class_sup(fc.features(ds.x), V, r)
        assert res.value == pytest.approx(ref, rel=1e-10)
        assert res.slack >= -1e-12


def test_linear_class_spanning_v_equals_unconstrained(rng):
    x = rng.uniform(-1, 1, (15, 1))
    ds = FixedDesignDataset(x, np.zeros((15, 1)))
    fc = LinearFeatureClass("affine", 1)
    V = 0.7 - 1.3 * x
    center = fc.random_member(rng, 2)
    lin = sup_process(SupSolver("linear-feature"), center, V, 1.5, ds, fc)
    assert lin == pytest.approx(sup_process(UNC, center, V, 1.5, ds), rel=1e-4)


def test_linear_sup_off_class_center(rng):
    ds = _data(rng)
    fc = LinearFeatureClass("affine", 2)
    V = rng.standard_normal((ds.n, 2))
    center = TablePredictor(ds.x, rng.standard_normal((ds.n, 2)))
    gap = empirical_norm(center, fc.member(np.zeros((2, 3))), ds)
    with pytest.raises(ValueError):
        sup_process(SupSolver("linear-feature"), center, V, 1e-3, ds, fc)
    res = sup_solve(SupSolver("linear-feature"), center, V, 2 * gap, ds, fc)
    assert res.value <= res.upper + 1e-12


def test_bounded_class_sup(rng):
    ds = _data(rng)
    V = rng.standard_normal((ds.n, 2))
    loose = LinearFeatureClass("affine", 2, coefficient_bound=1e6)
    free = LinearFeatureClass("affine", 2)
    center = free.member(np.zeros((2, 3)))
    a = sup_process(SupSolver("linear-feature"), center, V, 0.5, ds, loose)
    b = sup_process(SupSolver("linear-feature"), center, V, 0.5, ds, free)
    assert a == pytest.approx(b, rel=1e-6)
    tight = LinearFeatureClass("affine", 2, coefficient_bound=0.05)
    res = sup_solve(SupSolver("linear-feature"), center, V, 0.5, ds, tight)
    assert 0 <= res.value <= res.upper + 1e-12
    assert res.value <= b


def test_processes_unconstrained_closed_form(rng):
    ds, _, out = _ridge_run(rng)
    g = rms(out.g_tilde)
    for r in (0.0, 0.3, 2.0):
        assert W_n(out, r) == pytest.approx(r * g, rel=1e-12)
        assert T_n(out, r) == pytest.approx(r * g, rel=1e-12)


def test_processes_vanish_at_interpolation(rng):
    ds = _data(rng)
    spec = SquaredLoss()
    out = doubly_wild_refit(InterpolatingTrainer(spec), ds, spec, 1.0, 1.0, seed=0)
    assert W_n(out, 3.0) == 0.0


def test_processes_concave_nondecreasing(rng):
    ds, fc, out = _ridge_run(rng)
    grid = np.linspace(0.0, 3.0, 10)
    for proc in (W_n, T_n):
        vals = np.array([proc(out, r, fc) for r in grid])
        assert vals[0] == 0.0 and np.all(vals >= 0)
        assert np.all(np.diff(vals) >= -1e-12)
        assert np.all(np.diff(vals, 2) <= 1e-10)
        slopes = vals[1:] / grid[1:]
        assert np.all(np.diff(slopes) <= 1e-10)


# ---------------------------------------------------------------- optimisms and pilots

def test_optimism_single_point_hand_case():
    ds = FixedDesignDataset(np.zeros((1, 1)), np.ones((1, 1)))
    spec = SquaredLoss()
    f0 = TablePredictor(ds.x, np.zeros((1, 1)))
    out = doubly_wild_refit(InterpolatingTrainer(spec), ds, spec, 0.5, 0.5, eps=[1.0], f_hat=f0)
    np.testing.assert_array_equal(out.g_tilde, [[-2.0]])
    np.testing.assert_array_equal(out.D_diamond.y, [[0.0]])
    assert out.r_diamond == 0.0
    assert wild_optimism_diamond(out, spec) == 0.0
    assert W_n(out, out.r_diamond) == 0.0


def test_optimism_literal_variant_differs_by_n(rng):
    ds, fc, out = _ridge_run(rng)
    spec = SquaredLoss()
    p, lit = wild_optimism_sharp(out, spec), wild_optimism_sharp(out, spec, "literal")
    quad = spec.beta / (4 * out.rho2) * out.r_sharp ** 2
    assert p - lit == pytest.approx(quad * (1 - 1 / ds.n), rel=1e-10)
    with pytest.raises(ValueError):
        wild_optimism_sharp(out, spec, "other")


@pytest.mark.parametrize("seed", range(5))
def test_optimism_dominates_process_ridge(rng, seed):
    ds, fc, out = _ridge_run(rng, seed=seed, rho=tuple(rng.uniform(0.2, 3, 2)))
    spec = SquaredLoss()
    slack = 1e-8
    assert W_n(out, out.r_diamond, fc) <= wild_optimism_diamond(out, spec) + slack
    assert T_n(out, out.r_sharp, fc) <= wild_optimism_sharp(out, spec) + slack


def test_pilot_examples(rng):
    ds, fc, out = _ridge_run(rng)
    spec = SquaredLoss()
    assert pilot_errors(out, out.f_hat, spec, 0.7, fc) == (0.0, 0.0)
    f_star = TablePredictor(ds.x, out.fitted() + rng.standard_normal((ds.n, 2)))
    bd, bs = pilot_errors(out, f_star, spec, 0.7)
    w = spec.grad1(f_star(ds.x), ds.y)
    assert bd == pytest.approx(2 * 0.7 * rms(w - out.g_tilde), rel=1e-12)
    assert bs == pytest.approx(bd, rel=1e-12)
    assert bd == pytest.approx(4 * 0.7 * empirical_norm(f_star, out.f_hat, ds), rel=1e-12)


# ---------------------------------------------------------------- excess-risk bound

BASE = dict(beta=2.0, alpha=2.0, sigma=1.0, t=2.0, n=100, d=2)


def test_bound_zero_and_confidence():
    rep = excess_risk_bound(opt_diamond=0.0, opt_sharp=0.0, r=0.0, empirical_excess=0.0, pilot_diamond=0.0,
                            pilot_sharp=0.0, bias_norm=0.0, **BASE)
    assert rep.total_bound == 0.0
    assert rep.confidence == pytest.approx(1 - 6 * math.exp(-4))
    assert rep.confidence == pytest.approx(0.8901, abs=1e-4)


def test_bound_hand_case(rng):
    ds, fc, out = _ridge_run(rng, n=100)
    spec = SquaredLoss()
    od, osh = wild_optimism_diamond(out, spec), wild_optimism_sharp(out, spec)
    f_star = fc.random_member(rng, 3, scale=0.3)
    bd, bs = pilot_errors(out, f_star, spec, 0.5, fc)
    E = float(np.mean(spec.value(out.fitted(), ds.y) - spec.value(f_star(ds.x), ds.y)))
    rep = excess_risk_bound(opt_diamond=od, opt_sharp=osh, r=0.5, empirical_excess=E, pilot_diamond=bd,
                            pilot_sharp=bs, bias_norm=0.0, **BASE)
    ref = thm1_by_hand(E, od, osh, bd, bs, 0.5, 0.0, 2.0, 2.0, 1.0, 2.0, 100, 2)
    assert rep.total_bound == pytest.approx(ref, rel=1e-12, abs=1e-12)
    assert rep.recompute() == rep.total_bound


def test_bound_observable_mode():
    rep = excess_risk_bound(opt_diamond=0.1, opt_sharp=0.2, r=0.3, training_error=0.9, observable=True, **BASE)
    d = rep.to_dict()
    for k in ("pilot_diamond", "pilot_sharp", "bias_norm", "empirical_excess"):
        assert k not in d
    assert d["caveats"] and d["alpha_is_mu"]
    assert rep.recompute() == rep.total_bound
    assert rep.total_bound == pytest.approx(thm1_by_hand(0.9, 0.1, 0.2, 0, 0, 0.3, 0, 2, 2, 1, 2, 100, 2))


def test_bound_errors():
    with pytest.raises(ValueError):
        excess_risk_bound(opt_diamond=0.0, opt_sharp=0.0, r=0.1, **BASE)
    with pytest.raises(ValueError):
        excess_risk_bound(opt_diamond=0.0, opt_sharp=0.0, r=0.1, observable=True, **BASE)
    with pytest.raises(ValueError):
        excess_risk_bound(opt_diamond=0.0, opt_sharp=0.0, r=0.1, training_error=0.0, observable=True,
                          **{**BASE, "t": 0.0})


# ---------------------------------------------------------------- radii

@pytest.mark.parametrize("alpha", [0.5, 2.0, 3.0])
def test_fixed_point_unconstrained(rng, alpha):
    g = float(rng.uniform(0.1, 5))
    lin = lambda s: s * g  # noqa: E731
    tol = 1e-8
    fp = fixed_point_radius(lin, lin, alpha, 16 * g / alpha, tol)
    assert not fp.saturated
    assert abs(fp.r - 8 * g / alpha) <= tol
    h = lambda r: math.sqrt(8 * r * g / alpha) - r  # noqa: E731
    assert -tol <= h(fp.r) <= tol
    assert h(fp.r + 10 * tol) < 0
    fp2 = fixed_point_radius(lin, lin, 2 * alpha, 16 * g / alpha, tol)
    assert fp2.r == pytest.approx(fp.r / 2, abs=2 * tol)


def test_fixed_point_edge_cases():
    zero = lambda s: 0.0  # noqa: E731
    assert fixed_point_radius(zero, zero, 2.0, 1.0).r == 0.0
    lin = lambda s: s  # noqa: E731
    fp = fixed_point_radius(lin, lin, 2.0, 1.0)
    assert fp.saturated and fp.r == 1.0
    with pytest.raises(ValueError):
        fixed_point_radius(lin, lin, 0.0, 1.0)


def test_radius_bound_examples():
    dev = radius_bound_theorem2(0, 0, 0, 0, 2.0, 1.0, 2.0, 100, 2)
    assert dev == pytest.approx(thm2_by_hand(0, 0, 0, 0, 2.0, 1.0, 2.0, 100, 2), rel=1e-14)
    assert radius_bound_theorem2(0.3, 0.2, 0.1, 0.05, 2.0, 1.0, 2.0, 100, 2) == pytest.approx(
        thm2_by_hand(0.3, 0.2, 0.1, 0.05, 2.0, 1.0, 2.0, 100, 2), rel=1e-14)
    # the 1/sqrt(n) factor: at fixed constant (n-dependent log term divided out) quadrupling n halves it
    k = lambda n: (10 * math.sqrt(2) + 6 * math.sqrt(math.log(n)) + 4) / 2.0 + 1  # noqa: E731
    a = radius_bound_theorem2(0, 0, 0, 0, 2.0, 1.0, 2.0, 100, 2) / k(100)
    b = radius_bound_theorem2(0, 0, 0, 0, 2.0, 1.0, 2.0, 400, 2) / k(400)
    assert abs(b - a / 2) <= 1e-12
    with pytest.raises(ValueError):
        radius_bound_theorem2(-1.0, 0, 0, 0, 2.0, 1.0, 2.0, 100, 2)


def test_corollary_examples(rng):
    g = 1.7
    for rd in (0.2, 1.0, 5.0):
        c = radius_bound_corollary(rd, 2 * rd, 2 * rd * g, 4 * rd * g, 0, 0, 2.0, 0.0, 2.0, 100, 2)
        assert c["slope_terms"] == pytest.approx(2 * 8 * g / 2.0, rel=1e-12)
        assert c["solved"] == pytest.approx(c["slope_terms"], rel=1e-12)
        assert c["simplified"] == max(rd, 2 * rd, c["slope_terms"])
    with pytest.raises(ValueError):
        radius_bound_corollary(0.0, 1.0, 0, 0, 0, 0, 2.0, 1.0, 2.0, 100, 2)


def test_radius_ordering_on_audit(rng):
    ds = _data(rng, n=60)
    fc = LinearFeatureClass("affine", 2)
    f_star = fc.random_member(rng, 3, scale=0.5)
    res = run_audit(RidgeTrainer(0.0, fc), ds, SquaredLoss(), seed=1, fclass=fc, sigma=1.0, t=2.0,
                    f_star=f_star)
    assert res.radius.r_theorem2 >= res.fixed_point.r
    assert res.lemma1["ok"]
    for v in (res.radius.r_fixed_point, res.radius.r_theorem2, res.radius.r_corollary):
        assert v >= 0 and math.isfinite(v)
    assert res.bound.recompute() == res.bound.total_bound


# ---------------------------------------------------------------- noise-scale tuning

def _tune_setup(rng):
    ds = _data(rng, n=20, d=2)
    spec = SquaredLoss()
    u = rng.standard_normal((ds.n, 2))
    f_hat = TablePredictor(ds.x, ds.y + u / rms(u))  # ||g||_n = 2
    return ds, spec, f_hat


def test_tune_examples(rng):
    ds, spec, f_hat = _tune_setup(rng)
    tr = InterpolatingTrainer(spec)
    eps = np.ones(ds.n)
    res = tune_rho_for_radius(tr, ds, spec, eps, 1.0, f_hat=f_hat, tol=1e-9)
    assert res.rho == pytest.approx(1.0, abs=1e-8) and not res.gap
    assert res.achieved_radius == pytest.approx(empirical_norm(res.f_side, f_hat, ds), abs=1e-12)
    res0 = tune_rho_for_radius(tr, ds, spec, eps, 0.0, f_hat=f_hat, tol=1e-6)
    assert res0.rho == pytest.approx(0.5, abs=1e-6)
    assert res0.achieved_radius == pytest.approx(empirical_norm(res0.f_side, f_hat, ds), abs=1e-12)


def test_tune_unreachable(rng):
    ds, spec, f_hat = _tune_setup(rng)
    with pytest.raises(TuneError) as info:
        tune_rho_for_radius(InterpolatingTrainer(spec), ds, spec, np.ones(ds.n), 1e6, f_hat=f_hat,
                            bracket=(0.01, 10.0), max_evals=60)
    assert len(info.value.table) > 0
    with pytest.raises(ValueError):
        tune_rho_for_radius(InterpolatingTrainer(spec), ds, spec, np.ones(ds.n), 1.0, bracket=(1.0, 0.5))


def test_tune_on_expfam_hits_target(rng):
    ds = _data(rng, n=30)
    spec = RegularizedExpFamilyLoss("softplus-sum", 1.0)
    fc = LinearFeatureClass("affine", 2)
    from riskwild.models import ConvexERMTrainer
    tr = ConvexERMTrainer(spec, fc, tol=1e-10)
    eps = np.where(rng.random(ds.n) < 0.5, -1.0, 1.0)
    f_hat = tr.fit(ds)
    res = tune_rho_for_radius(tr, ds, spec, eps, 0.3, f_hat=f_hat, tol=1e-6)
    assert abs(res.achieved_radius - 0.3) <= 1e-6


def test_unconstrained_class_audit_fixed_point(rng):
    ds = _data(rng, n=25)
    spec = SquaredLoss()
    f_hat = TablePredictor(ds.x, ds.y + 0.3)
    tr = InterpolatingTrainer(spec)
    out = doubly_wild_refit(tr, ds, spec, 1.0, 1.0, seed=0, f_hat=f_hat)
    g = rms(out.g_tilde)
    fp = fixed_point_radius(lambda s: W_n(out, s), lambda s: T_n(out, s), spec.alpha, 16 * g / spec.alpha)
    assert abs(fp.r - 8 * g / spec.alpha) <= 1e-8
    assert isinstance(UnconstrainedClass(2).d, int)
