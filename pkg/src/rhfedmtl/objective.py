"""Smoothed-hinge loss, its conjugate, and the primal/dual multi-task objectives.

Labels are folded into the features (``x_tilde = y * x``) so every dual
variable lives in the box ``[0, 1]``.  For a task ``b`` with ``n`` training
samples and ``lam = lambda1 + lambda2`` the primal is::

    P_b(w) = mean_i L(y_i w.x_i) + lambda1/2 |w|^2 + lambda2/2 |w - r|^2

and the dual is::

    D_b(a) = mean_i -L*(-a_i)
             + (lambda1 lambda2 |r|^2 - |v|^2 - 2 lambda2 v.r) / (2 lam)

with ``v = (1/n) sum_i a_i x_tilde_i``.  The primal point paired with ``a`` is
``w = (lambda2 r + v) / lam``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

GAP_TOLERANCE = 1e-9
MAPPING_TOLERANCE = 1e-9


class InvariantViolation(RuntimeError):
    """Raised when a mathematical invariant fails (signals an evaluation bug)."""


@dataclass(frozen=True)
class SmoothedHinge:
    """Smoothed hinge loss, ``(1/gamma)``-smooth.

    ``L(z) = 0`` for ``z >= 1``, ``1 - z - gamma/2`` for ``z <= 1 - gamma`` and
    ``(1 - z)^2 / (2 gamma)`` in between.
    """

    gamma: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be a positive finite number, got {self.gamma!r}")

    def __call__(self, z):
        return loss(z, self.gamma)

    def derivative(self, z):
        return loss_derivative(z, self.gamma)

    def conjugate(self, a):
        return loss_conjugate(a, self.gamma)


def loss(z, gamma=1.0):
    """Smoothed hinge loss evaluated at margin(s) ``z``."""
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("margin must be finite")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    out = np.where(
        z >= 1.0,
        0.0,
        np.where(z <= 1.0 - gamma, 1.0 - z - gamma / 2.0, (1.0 - z) ** 2 / (2.0 * gamma)),
    )
    return out if out.ndim else float(out)


def loss_derivative(z, gamma=1.0):
    z = np.asarray(z, dtype=float)
    out = -np.clip((1.0 - z) / gamma, 0.0, 1.0)
    return out if out.ndim else float(out)


def loss_conjugate(a, gamma=1.0):
    """Return ``L*(-a)`` for the label-folded dual value ``a``.

    Equals ``-a + gamma a^2 / 2`` on ``[0, 1]`` and ``+inf`` elsewhere.
    """
    a = np.asarray(a, dtype=float)
    inside = (a >= 0.0) & (a <= 1.0)
    with np.errstate(invalid="ignore"):
        out = np.where(inside, -a + 0.5 * gamma * a * a, np.inf)
    return out if out.ndim else float(out)


@dataclass
class RegulationParams:
    """Self-regulation weight, multi-task weight and the shared anchor ``r``."""

    lambda1: float
    lambda2: float
    r: np.ndarray = field(default=None)

    def __post_init__(self):
        if not self.lambda1 > 0:
            raise ValueError(f"lambda1 must be > 0, got {self.lambda1!r}")
        if self.lambda2 < 0:
            raise ValueError(f"lambda2 must be >= 0, got {self.lambda2!r}")
        if self.r is not None:
            self.r = np.asarray(self.r, dtype=float)

    @property
    def lam(self) -> float:
        return self.lambda1 + self.lambda2

    def anchor(self, d: int) -> np.ndarray:
        if self.r is None:
            return np.zeros(d)
        if self.r.shape != (d,):
            raise ValueError(f"anchor has shape {self.r.shape}, expected ({d},)")
        return self.r

    def with_anchor(self, r) -> "RegulationParams":
        return RegulationParams(self.lambda1, self.lambda2, np.array(r, dtype=float))


def _folded(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
    return X * y[:, None]


def _check_w(w, d):
    w = np.asarray(w, dtype=float)
    if w.shape != (d,):
        raise ValueError(f"model has shape {w.shape}, expected ({d},)")
    return w


def task_primal(w, X, y, reg: RegulationParams, gamma=1.0) -> float:
    """Primal objective of a single task at model ``w``."""
    Xf = _folded(X, y)
    w = _check_w(w, Xf.shape[1])
    r = reg.anchor(Xf.shape[1])
    data_term = float(np.mean(loss(Xf @ w, gamma)))
    diff = w - r
    return data_term + 0.5 * reg.lambda1 * float(w @ w) + 0.5 * reg.lambda2 * float(diff @ diff)


def task_dual(alpha_b, X, y, reg: RegulationParams, gamma=1.0) -> float:
    """Dual objective ``D_b`` of a single task."""
    Xf = _folded(X, y)
    n, d = Xf.shape
    alpha_b = np.asarray(alpha_b, dtype=float)
    if alpha_b.shape != (n,):
        raise ValueError(f"dual block has shape {alpha_b.shape}, expected ({n},)")
    r = reg.anchor(d)
    v = Xf.T @ alpha_b / n
    conj = -float(np.mean(loss_conjugate(alpha_b, gamma)))
    quad = (reg.lambda1 * reg.lambda2 * float(r @ r) - float(v @ v) - 2.0 * reg.lambda2 * float(v @ r))
    return conj + quad / (2.0 * reg.lam)


def recover_w(alpha_b, reg: RegulationParams, X, y) -> np.ndarray:
    """Primal model paired with the dual block ``alpha_b``: ``(lambda2 r + A alpha) / lam``."""
    Xf = _folded(X, y)
    n, d = Xf.shape
    alpha_b = np.asarray(alpha_b, dtype=float)
    if alpha_b.shape != (n,):
        raise ValueError(f"dual block has shape {alpha_b.shape}, expected ({n},)")
    return (reg.lambda2 * reg.anchor(d) + Xf.T @ alpha_b / n) / reg.lam


def _task_arrays(data):
    return [(task.X_train, task.y_train) for task in data.tasks]


def primal_objective(models: Sequence[np.ndarray], reg: RegulationParams, data, gamma=1.0) -> float:
    """Average of the per-task primal objectives."""
    arrays = _task_arrays(data)
    if len(models) != len(arrays):
        raise ValueError(f"{len(models)} models for {len(arrays)} tasks")
    return float(np.mean([task_primal(w, X, y, reg, gamma) for w, (X, y) in zip(models, arrays)]))


def dual_objective(alphas: Sequence[np.ndarray], reg: RegulationParams, data, gamma=1.0) -> float:
    """Average of the per-task dual objectives ``D_b``."""
    arrays = _task_arrays(data)
    if len(alphas) != len(arrays):
        raise ValueError(f"{len(alphas)} dual blocks for {len(arrays)} tasks")
    return float(np.mean([task_dual(a, X, y, reg, gamma) for a, (X, y) in zip(alphas, arrays)]))


def mapping_residual(w, alpha_b, reg: RegulationParams, X, y) -> float:
    """Relative distance ``|w - recover_w(alpha)| / (1 + |w|)``."""
    w = np.asarray(w, dtype=float)
    return float(np.linalg.norm(w - recover_w(alpha_b, reg, X, y)) / (1.0 + np.linalg.norm(w)))


def task_gap(w, alpha_b, reg: RegulationParams, X, y, gamma=1.0) -> float:
    """Primal-dual gap of one task; ``w`` must be the image of ``alpha_b``."""
    res = mapping_residual(w, alpha_b, reg, X, y)
    if res > MAPPING_TOLERANCE:
        raise InvariantViolation(f"model is not the image of its dual block (residual {res:.3e})")
    gap = task_primal(w, X, y, reg, gamma) - task_dual(alpha_b, X, y, reg, gamma)
    if gap < -GAP_TOLERANCE * max(1.0, abs(gap)):
        raise InvariantViolation(f"negative duality gap {gap:.3e}")
    return gap


def duality_gap(models, alphas, reg: RegulationParams, data, gamma=1.0) -> float:
    """``P(w(alpha)) - D(alpha)`` averaged over tasks.

    Upper-bounds ``D(alpha*) - D(alpha)`` and is the convergence measurement.
    Raises :class:`InvariantViolation` if a model is not the image of its dual
    block or the gap is negative beyond rounding.
    """
    arrays = _task_arrays(data)
    if not (len(models) == len(alphas) == len(arrays)):
        raise ValueError("models, duals and tasks differ in count")
    gaps = [task_gap(w, a, reg, X, y, gamma) for w, a, (X, y) in zip(models, alphas, arrays)]
    return float(np.mean(gaps))
