"""Reference implementations written independently of the package.

They use generic numerics (golden-section search, scipy minimisation,
dense eigendecomposition) instead of the package's closed forms.
"""
import math

import numpy as np
from scipy import optimize


def hinge_smooth(z, gamma):
    """Smoothed hinge via its Moreau-envelope definition ``min_u hinge(u) + (u - z)^2 / (2 gamma)``."""
    z = float(z)
    u = z if z >= 1 else min(z + gamma, 1.0)
    return max(0.0, 1.0 - u) + (u - z) ** 2 / (2 * gamma)


def conjugate_numeric(s, gamma):
    """``sup_z (s z - L(z))`` by bounded scalar maximisation; ``inf`` when unbounded."""
    if s > 1e-12 or s < -1 - 1e-12:
        return math.inf
    res = optimize.minimize_scalar(lambda z: -(s * z - hinge_smooth(z, gamma)), bounds=(-50.0, 50.0),
                                   method="bounded", options={"xatol": 1e-12})
    return -res.fun


def golden_max(f, lo, hi, tol=1e-12, iters=400):
    """Golden-section maximiser of a unimodal ``f`` on ``[lo, hi]``."""
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    cands = [lo, hi, c, d, (a + b) / 2]
    best = max(cands, key=f)
    return best, f(best)


def dual_numeric(alpha, X, y, lambda1, lambda2, r, gamma):
    """``-(1/n) sum L*(-alpha_i) - g*(A alpha / n)`` with ``g*`` found by unconstrained minimisation."""
    Xf = X * y[:, None]
    n, d = Xf.shape
    conj = sum(conjugate_numeric(-a, gamma) for a in alpha) / n
    v = Xf.T @ alpha / n

    def neg(w):
        return -(v @ w - 0.5 * lambda1 * w @ w - 0.5 * lambda2 * (w - r) @ (w - r))

    def grad(w):
        return -(v - lambda1 * w - lambda2 * (w - r))

    res = optimize.minimize(neg, np.zeros(d), jac=grad, method="BFGS", options={"gtol": 1e-12})
    return -conj + res.fun


def primal_direct(w, X, y, lambda1, lambda2, r, gamma):
    margins = (X @ w) * y
    data = np.mean([hinge_smooth(z, gamma) for z in margins])
    return data + 0.5 * lambda1 * w @ w + 0.5 * lambda2 * (w - r) @ (w - r)


def theta_log(h, n_b, n_tilde, gamma, lam):
    """``Theta`` through ``exp(h log1p(-kappa))`` with kappa built from ``1 / (1 + 1/s)``."""
    s = lam * n_b * gamma
    kappa = 1.0 / (1.0 + 1.0 / s) / n_tilde
    return math.exp(h * math.log1p(-kappa))


def sigma_eig(blocks):
    """Largest eigenvalue of ``blockdiag(B_t B_t^T) - B B^T`` by dense eigendecomposition."""
    B = np.vstack(blocks)
    n = B.shape[0]
    Q = np.zeros((n, n))
    off = 0
    for blk in blocks:
        m = blk.shape[0]
        Q[off:off + m, off:off + m] = blk @ blk.T
        off += m
    Q -= B @ B.T
    return float(np.linalg.eigvalsh(Q)[-1])


def f_oracle(h, n_tasks, n_terminals, n_b, n_tilde, c_dev, c_bs, m, gamma, lam, sigma, eps):
    """Projected cost written out term by term."""
    th = theta_log(h, n_b, n_tilde, gamma, lam)
    eta = lam * gamma / (n_b * sigma + lam * gamma)
    per_round = n_tasks * (c_bs + n_terminals * h * c_dev)
    return m * per_round * (1 - eta / n_terminals * (1 - th)) * math.log(n_tasks * n_b / (n_tasks * eps))
