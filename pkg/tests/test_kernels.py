import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from riskwild import kernels as K

PAIRS = {
    "ball": (K.ball_ascent_numba, K.ball_ascent_numpy),
    "grid": (K.sphere_grid_max_numba, K.sphere_grid_max_numpy),
    "mult": (K.ellipsoid_multiplier_numba, K.ellipsoid_multiplier_numpy),
    "bounded": (K.bounded_linear_ascent_numba, K.bounded_linear_ascent_numpy),
}


@given(arrays(float, 4, elements=st.floats(-3, 3)).filter(lambda c: np.linalg.norm(c) > 1e-3),
       st.floats(0.1, 5.0))
def test_ball_ascent_hits_scaled_direction(c, r):
    for fn in PAIRS["ball"]:
        x, _ = fn(c, np.zeros(4), r)
        np.testing.assert_allclose(x, r * c / np.linalg.norm(c), atol=1e-10 * r)


@pytest.mark.parametrize("k", [1, 2, 3, 5])
def test_sphere_grid_matches_norm(rng, k):
    for _ in range(3):
        c = rng.standard_normal(k)
        for fn in PAIRS["grid"]:
            val, u = fn(c)
            assert val == pytest.approx(np.linalg.norm(c), rel=1e-12)
            assert np.linalg.norm(u) == pytest.approx(1.0, abs=1e-14)


def test_multiplier_active_and_inactive(rng):
    s = rng.uniform(0.5, 3.0, 5)
    w2 = rng.uniform(0.0, 2.0, 5)
    for fn in PAIRS["mult"]:
        assert fn(w2, s, 1e3) == 0.0
        lam = fn(w2, s, 0.3)
        lhs = np.sum(s * w2 / (1 + lam * s) ** 2)
        assert lhs <= 0.09 * (1 + 1e-12)
        assert lhs >= 0.09 * (1 - 1e-9)


def _bounded_problem(rng, k=3, d=2):
    A = rng.standard_normal((k, k))
    s, U = np.linalg.eigh(A @ A.T + 0.5 * np.eye(k))
    # coefficients are stored as (d, k) rows acting on k features
    return rng.standard_normal((d, k)), 0.1 * rng.standard_normal((d, k)), U, s


def test_bounded_reduces_to_ellipsoid_when_ball_is_loose(rng):
    C, tc, U, s = _bounded_problem(rng)
    r = 0.4
    G = U @ np.diag(s) @ U.T
    # KKT for max <C, theta - tc> over ||(theta - tc) G^{1/2}||_F <= r
    Gi = np.linalg.inv(G)
    scale = r / np.sqrt(np.trace(C @ Gi @ C.T))
    expected = tc + scale * C @ Gi
    for fn in PAIRS["bounded"]:
        theta, _ = fn(C, tc, U, s, r, 1e6, step=0.1, max_iter=20000)
        np.testing.assert_allclose(theta, expected, atol=1e-7)


def test_bounded_reduces_to_ball_when_ellipsoid_is_loose(rng):
    C, tc, U, s = _bounded_problem(rng)
    R = 0.2
    for fn in PAIRS["bounded"]:
        theta, _ = fn(C, tc, U, s, 50.0, R, step=0.5, max_iter=5000)
        np.testing.assert_allclose(theta, R * C / np.linalg.norm(C), atol=1e-9)


def test_backends_agree(rng):
    for _ in range(10):
        c = rng.standard_normal(3)
        a, b = (fn(c, rng.standard_normal(3) * 0, 1.7) for fn in PAIRS["ball"])
        np.testing.assert_allclose(a[0], b[0], atol=1e-14)
        ga, gb = (fn(c, points=5, levels=12) for fn in PAIRS["grid"])
        assert ga[0] == pytest.approx(gb[0], rel=1e-13)
        w2, s = rng.uniform(0, 2, 4), rng.uniform(0.5, 2, 4)
        ma, mb = (fn(w2, s, 0.5) for fn in PAIRS["mult"])
        assert ma == pytest.approx(mb, rel=1e-12)
    C, tc, U, s = _bounded_problem(rng)
    ta, tb = (fn(C, tc, U, s, 0.3, 0.5, step=0.2, max_iter=3000)[0] for fn in PAIRS["bounded"])
    np.testing.assert_allclose(ta, tb, atol=1e-9)


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("", "numba")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, RISKWILD_DISABLE_NUMBA=flag)
    proc = subprocess.run([sys.executable, "-c", "from riskwild import kernels; print(kernels.BACKEND)"],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip() == expected
