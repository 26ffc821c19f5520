"""Local dual method run on each terminal: randomized exact coordinate ascent
on the terminal's block of dual variables."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .objective import RegulationParams, task_dual


@dataclass(frozen=True)
class LocalUpdate:
    """What a terminal sends to its base station. Carries no raw samples."""

    delta_alpha: np.ndarray
    delta_w: np.ndarray
    iterations_used: int


def coordinate_objective(delta, x_folded, alpha_i, w, lam, n, gamma=1.0):
    """``n`` times the change in ``D_b`` when coordinate ``i`` moves by ``delta``.

    ``-L*(-(alpha_i + delta)) + L*(-alpha_i) - delta w.x - delta^2 |x|^2 / (2 lam n)``;
    ``-inf`` outside the box.
    """
    a = alpha_i + delta
    if a < 0.0 or a > 1.0:
        return -np.inf
    conj_gain = (a - 0.5 * gamma * a * a) - (alpha_i - 0.5 * gamma * alpha_i * alpha_i)
    return conj_gain - delta * float(w @ x_folded) - delta * delta * float(x_folded @ x_folded) / (2.0 * lam * n)


def coordinate_update(x_folded, alpha_i, w, lam, n, gamma=1.0) -> float:
    """Exact maximiser of :func:`coordinate_objective` over ``[-alpha_i, 1 - alpha_i]``.

    The objective is a concave quadratic in ``delta`` on the whole box, so the
    unconstrained stationary point clipped to the box is optimal.
    """
    margin = float(w @ x_folded)
    curvature = gamma + float(x_folded @ x_folded) / (lam * n)
    step = (1.0 - margin - gamma * alpha_i) / curvature
    if not np.isfinite(step):
        raise FloatingPointError(f"non-finite coordinate step (margin={margin}, curvature={curvature})")
    return min(max(alpha_i + step, 0.0), 1.0) - alpha_i


def local_round(shard, alpha_t, w_b, reg: RegulationParams, n_b: int, H: int, rng, gamma=1.0) -> LocalUpdate:
    """Run ``H`` coordinate steps on a private copy of the terminal's state.

    Coordinates are drawn uniformly with replacement from the shard using
    ``rng`` (a ``numpy.random.Generator`` or seed).  ``delta_w`` is the image of
    ``delta_alpha`` under the dual-to-primal map,
    ``(1 / (lam n_b)) sum_i delta_alpha_i y_i x_i``.
    """
    if H < 0:
        raise ValueError("H must be >= 0")
    d = shard.X.shape[1]
    if H == 0:
        return LocalUpdate(np.zeros(shard.size), np.zeros(d), 0)
    rng = np.random.default_rng(rng)
    lam = reg.lam
    alpha = np.array(alpha_t, dtype=float)
    if alpha.shape != (shard.size,):
        raise ValueError(f"dual block has shape {alpha.shape}, expected ({shard.size},)")
    start = alpha.copy()
    w = np.array(w_b, dtype=float)
    Xf = shard.X * shard.y[:, None]
    scale = 1.0 / (lam * n_b)
    for i in rng.integers(shard.size, size=H):
        x = Xf[i]
        delta = coordinate_update(x, alpha[i], w, lam, n_b, gamma)
        if delta != 0.0:
            alpha[i] += delta
            w += (delta * scale) * x
    delta_alpha = alpha - start
    # recomputed from delta_alpha rather than accumulated to keep the two in exact correspondence
    delta_w = scale * (Xf.T @ delta_alpha)
    return LocalUpdate(delta_alpha, delta_w, H)


def terminal_gap(alphas_b, t, task, reg: RegulationParams, gamma=1.0, sweeps=2000, tol=1e-13) -> float:
    """How far terminal ``t``'s block is from its optimum with the other blocks fixed.

    The block maximum is found by cyclic exact coordinate ascent until the
    improvement per sweep drops below ``tol``.  Intended for diagnostics and
    tests, not the training path.
    """
    X, y = task.X_train, task.y_train
    off = task.shard_offsets
    lo, hi = off[t], off[t + 1]
    alpha = np.array(alphas_b, dtype=float)
    base = task_dual(alpha, X, y, reg, gamma)
    Xf = X * y[:, None]
    n = X.shape[0]
    w = (reg.lambda2 * reg.anchor(X.shape[1]) + Xf.T @ alpha / n) / reg.lam
    prev = base
    for _ in range(sweeps):
        for i in range(lo, hi):
            delta = coordinate_update(Xf[i], alpha[i], w, reg.lam, n, gamma)
            alpha[i] += delta
            w += delta * Xf[i] / (reg.lam * n)
        cur = task_dual(alpha, X, y, reg, gamma)
        if cur - prev <= tol:
            break
        prev = cur
    return max(task_dual(alpha, X, y, reg, gamma) - base, 0.0)
