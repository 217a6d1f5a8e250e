"""Inner loops of the supremum solvers.

Each kernel exists twice: a loop form compiled with numba and a vectorised
numpy form. Both compute the same thing; the module-level names pick one
according to :mod:`riskwild._accel`. Tests and ``benchmarks/`` import the
``*_numba`` / ``*_numpy`` variants directly.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = [
    "ball_ascent",
    "sphere_grid_max",
    "ellipsoid_multiplier",
    "bounded_linear_ascent",
    "BACKEND",
]


# --------------------------------------------------------------------------
# projected gradient ascent of a linear objective over a Euclidean ball
# --------------------------------------------------------------------------

def _ball_ascent_loop(c, x0, r, step, max_iter, tol):
    k = c.shape[0]
    x = x0.copy()
    y = np.empty(k)
    it = 0
    for it in range(1, max_iter + 1):
        nrm = 0.0
        for j in range(k):
            y[j] = x[j] + step * c[j]
            nrm += y[j] * y[j]
        nrm = np.sqrt(nrm)
        scale = 1.0
        if nrm > r:
            scale = r / nrm
        move = 0.0
        for j in range(k):
            yj = y[j] * scale
            move += (yj - x[j]) * (yj - x[j])
            x[j] = yj
        if np.sqrt(move) <= tol * max(r, 1e-300):
            break
    return x, it


_ball_ascent_numba = njit(_ball_ascent_loop)


def _ball_ascent_numpy(c, x0, r, step, max_iter, tol):
    x = np.array(x0, dtype=float)
    it = 0
    for it in range(1, max_iter + 1):
        y = x + step * c
        nrm = np.linalg.norm(y)
        if nrm > r:
            y *= r / nrm
        move = np.linalg.norm(y - x)
        x = y
        if move <= tol * max(r, 1e-300):
            break
    return x, it


def ball_ascent_numba(c, x0, r, step=1.0, max_iter=200, tol=1e-14):
    """Maximise ``<c, x>`` over ``||x|| <= r`` from ``x0`` (compiled loop)."""
    return _ball_ascent_numba(np.ascontiguousarray(c, dtype=np.float64),
                              np.ascontiguousarray(x0, dtype=np.float64),
                              float(r), float(step), int(max_iter), float(tol))


def ball_ascent_numpy(c, x0, r, step=1.0, max_iter=200, tol=1e-14):
    """Maximise ``<c, x>`` over ``||x|| <= r`` from ``x0`` (numpy)."""
    return _ball_ascent_numpy(np.asarray(c, dtype=float), np.asarray(x0, dtype=float),
                              float(r), float(step), int(max_iter), float(tol))


# --------------------------------------------------------------------------
# exhaustive grid search of <c, u> over the unit sphere (k <= 6)
# --------------------------------------------------------------------------

def _grid_face_loop(c, axis, sign, lo, hi, points):
    # lo/hi: per-coordinate window; coordinate `axis` pinned at `sign`.
    k = c.shape[0]
    free = k - 1
    total = 1
    for _ in range(free):
        total *= points
    best = -np.inf
    best_p = np.zeros(k)
    p = np.zeros(k)
    idx = np.zeros(max(free, 1), dtype=np.int64)
    for flat in range(total):
        rem = flat
        for f in range(free):
            idx[f] = rem % points
            rem //= points
        f = 0
        for j in range(k):
            if j == axis:
                p[j] = sign
            else:
                if points == 1:
                    p[j] = 0.5 * (lo[j] + hi[j])
                else:
                    p[j] = lo[j] + (hi[j] - lo[j]) * idx[f] / (points - 1)
                f += 1
        nrm = 0.0
        dot = 0.0
        for j in range(k):
            nrm += p[j] * p[j]
            dot += c[j] * p[j]
        val = dot / np.sqrt(nrm)
        if val > best:
            best = val
            for j in range(k):
                best_p[j] = p[j]
    return best, best_p


_grid_face_numba = njit(_grid_face_loop)


def _grid_face_numpy(c, axis, sign, lo, hi, points):
    k = c.shape[0]
    axes = []
    for j in range(k):
        if j == axis:
            axes.append(np.array([float(sign)]))
        elif points == 1:
            axes.append(np.array([0.5 * (lo[j] + hi[j])]))
        else:
            axes.append(np.linspace(lo[j], hi[j], points))
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
    vals = mesh @ c / np.linalg.norm(mesh, axis=1)
    i = int(np.argmax(vals))
    return float(vals[i]), mesh[i].copy()


def _sphere_grid_max(face_fn, c, points, levels, shrink):
    c = np.asarray(c, dtype=np.float64)
    k = c.shape[0]
    if k == 1:
        return abs(float(c[0])), np.array([1.0 if c[0] >= 0 else -1.0])
    ones = np.ones(k)
    best, best_p = -np.inf, None
    # every face is refined on its own: the coarse winner may sit on the wrong face
    for axis in range(k):
        for sign in (-1.0, 1.0):
            val, p = face_fn(c, axis, sign, -ones, ones, points)
            half = 1.0
            for _ in range(levels):
                half *= shrink
                lo = np.clip(p - half, -1.0, 1.0)
                hi = np.clip(p + half, -1.0, 1.0)
                v2, p2 = face_fn(c, axis, sign, lo, hi, points)
                if v2 >= val:
                    val, p = v2, p2
            if val > best:
                best, best_p = val, p
    return float(best), best_p / np.linalg.norm(best_p)


def sphere_grid_max_numba(c, points=5, levels=30, shrink=0.5):
    """Brute-force ``max <c, u>`` over the unit sphere by zooming cube-face grids."""
    return _sphere_grid_max(_grid_face_numba, c, points, levels, shrink)


def sphere_grid_max_numpy(c, points=5, levels=30, shrink=0.5):
    """numpy twin of :func:`sphere_grid_max_numba`."""
    return _sphere_grid_max(_grid_face_numpy, c, points, levels, shrink)


# --------------------------------------------------------------------------
# Euclidean projection onto an ellipsoid sum_j s_j ||y_j||^2 <= r^2
# --------------------------------------------------------------------------

def _ellipsoid_multiplier_loop(w2, s, r):
    # smallest lam >= 0 with sum s_j w2_j / (1 + lam s_j)^2 <= r^2
    r2 = r * r
    m = w2.shape[0]
    val = 0.0
    for j in range(m):
        val += s[j] * w2[j]
    if val <= r2:
        return 0.0
    hi = 1.0
    for _ in range(2000):
        val = 0.0
        for j in range(m):
            den = 1.0 + hi * s[j]
            val += s[j] * w2[j] / (den * den)
        if val <= r2:
            break
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = 0.0
        for j in range(m):
            den = 1.0 + mid * s[j]
            val += s[j] * w2[j] / (den * den)
        if val > r2:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return hi


_ellipsoid_multiplier_numba = njit(_ellipsoid_multiplier_loop)


def _ellipsoid_multiplier_numpy(w2, s, r):
    r2 = r * r
    f = lambda lam: float(np.sum(s * w2 / (1.0 + lam * s) ** 2))  # noqa: E731
    if f(0.0) <= r2:
        return 0.0
    hi = 1.0
    while f(hi) > r2:
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > r2:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return hi


def ellipsoid_multiplier_numba(w2, s, r):
    return _ellipsoid_multiplier_numba(np.ascontiguousarray(w2, dtype=np.float64),
                                       np.ascontiguousarray(s, dtype=np.float64), float(r))


def ellipsoid_multiplier_numpy(w2, s, r):
    return _ellipsoid_multiplier_numpy(np.asarray(w2, dtype=float),
                                       np.asarray(s, dtype=float), float(r))


# --------------------------------------------------------------------------
# linear objective over {theta : ||(theta - tc) G^{1/2}||_F <= r, ||theta||_F <= R}
# --------------------------------------------------------------------------

def _project_intersection(z, tc, U, s, r, R, sweeps, mult):
    # Dykstra alternating projections: ellipsoid (in U-rotated coords) then ball.
    x = z.copy()
    p = np.zeros_like(z)
    q = np.zeros_like(z)
    for _ in range(sweeps):
        a = x + p
        yc = (a - tc) @ U
        w2 = np.sum(yc * yc, axis=0)
        lam = mult(w2, s, r)
        y = tc + (yc / (1.0 + lam * s)) @ U.T
        p = a - y
        b = y + q
        nb = np.sqrt(np.sum(b * b))
        xn = b * (R / nb) if nb > R else b.copy()
        q = b - xn
        if np.sqrt(np.sum((xn - x) ** 2)) <= 1e-15 * max(1.0, R):
            x = xn
            break
        x = xn
    return x


def _bounded_ascent_loop(C, tc, U, s, r, R, step, max_iter, sweeps):
    x = tc.copy()
    it = 0
    for it in range(1, max_iter + 1):
        xn = _project_intersection_numba(x + step * C, tc, U, s, r, R, sweeps)
        move = np.sqrt(np.sum((xn - x) ** 2))
        x = xn
        if move <= 1e-13 * max(r, 1e-300):
            break
    return x, it


def _project_intersection_jit(z, tc, U, s, r, R, sweeps):
    x = z.copy()
    p = np.zeros_like(z)
    q = np.zeros_like(z)
    for _ in range(sweeps):
        a = x + p
        yc = (a - tc) @ U
        w2 = np.sum(yc * yc, axis=0)
        lam = _ellipsoid_multiplier_numba(w2, s, r)
        y = tc + (yc / (1.0 + lam * s)) @ U.T
        p = a - y
        b = y + q
        nb = np.sqrt(np.sum(b * b))
        if nb > R:
            xn = b * (R / nb)
        else:
            xn = b.copy()
        q = b - xn
        done = np.sqrt(np.sum((xn - x) ** 2)) <= 1e-15 * max(1.0, R)
        x = xn
        if done:
            break
    return x


_project_intersection_numba = njit(_project_intersection_jit)
_bounded_ascent_numba = njit(_bounded_ascent_loop)


def _bounded_ascent_numpy(C, tc, U, s, r, R, step, max_iter, sweeps):
    x = tc.copy()
    it = 0
    for it in range(1, max_iter + 1):
        xn = _project_intersection(x + step * C, tc, U, s, r, R, sweeps,
                                   _ellipsoid_multiplier_numpy)
        move = np.linalg.norm(xn - x)
        x = xn
        if move <= 1e-13 * max(r, 1e-300):
            break
    return x, it


def _prep_bounded(C, tc, U, s):
    f = lambda a: np.ascontiguousarray(a, dtype=np.float64)  # noqa: E731
    return f(C), f(tc), f(U), f(s)


def bounded_linear_ascent_numba(C, tc, U, s, r, R, step=1.0, max_iter=200, sweeps=200):
    """Projected ascent of ``<C, theta - tc>`` over the ellipsoid/ball intersection."""
    C, tc, U, s = _prep_bounded(C, tc, U, s)
    return _bounded_ascent_numba(C, tc, U, s, float(r), float(R), float(step),
                                 int(max_iter), int(sweeps))


def bounded_linear_ascent_numpy(C, tc, U, s, r, R, step=1.0, max_iter=200, sweeps=200):
    """numpy twin of :func:`bounded_linear_ascent_numba`."""
    C, tc, U, s = _prep_bounded(C, tc, U, s)
    return _bounded_ascent_numpy(C, tc, U, s, float(r), float(R), float(step),
                                 int(max_iter), int(sweeps))


if USE_NUMBA:
    BACKEND = "numba"
    ball_ascent = ball_ascent_numba
    sphere_grid_max = sphere_grid_max_numba
    ellipsoid_multiplier = ellipsoid_multiplier_numba
    bounded_linear_ascent = bounded_linear_ascent_numba
else:
    BACKEND = "numpy"
    ball_ascent = ball_ascent_numpy
    sphere_grid_max = sphere_grid_max_numpy
    ellipsoid_multiplier = ellipsoid_multiplier_numpy
    bounded_linear_ascent = bounded_linear_ascent_numpy
