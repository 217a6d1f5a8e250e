"""Reference computations written independently of the package internals.

Each helper recomputes a quantity by a different route than the code under
test: normal equations via ``lstsq``, ellipsoid suprema via the KKT point,
bound formulas spelled out term by term.
"""

import math

import numpy as np


def ols_coef(Phi, Y):
    return np.linalg.lstsq(Phi, Y, rcond=None)[0].T


def rms(V):
    V = np.asarray(V, dtype=float)
    return math.sqrt(float(np.mean(np.sum(V * V, axis=1))))


def linear_class_sup(Phi, V, r):
    """sup <C, D> over tr(D G D^T) <= r^2 at the KKT point, C = V^T Phi / n."""
    n = Phi.shape[0]
    G = Phi.T @ Phi / n
    C = V.T @ Phi / n
    CGinv = np.linalg.solve(G, C.T).T
    return r * math.sqrt(float(np.sum(CGinv * C)))


def thm1_by_hand(E, od, osh, bd, bs, r, bias, beta, alpha, sigma, t, n, d):
    lead = beta / alpha * E
    opt = beta / alpha * od + beta / alpha * osh
    pil = beta / alpha * bd + beta / alpha * bs
    k = 5 * d ** 0.5 + 3 * math.log(n) ** 0.5 + 4
    dev = (k * r + bias) * 2 * 2 ** 0.5 * beta * sigma * t / (alpha * n ** 0.5)
    return lead + opt + pil + dev


def thm2_by_hand(W, T, Bd, Bs, alpha, sigma, t, n, d):
    first = (2 * (W + T) / alpha) ** 0.5
    second = (2 * (Bd + Bs) / alpha) ** 0.5
    third = ((10 * d ** 0.5 + 6 * math.log(n) ** 0.5 + 4) / alpha + 1) * 2 * 2 ** 0.5 * sigma * t / n ** 0.5
    return first + second + third


def squared_wild_diamond(fhat, y, eps, rho):
    """y_i = f_hat(x_i) + (2 rho eps_i - 1)(f_hat(x_i) - y_i)."""
    return fhat + (2 * rho * eps[:, None] - 1) * (fhat - y)
