"""Closed-form planning: per-round contraction, the BS-iteration bound, the
projected resource cost ``f(H)`` and the terminal/BS iteration selection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import TaskStats

BRUTE_FORCE_MAX_N = 64


@dataclass(frozen=True)
class ResourceCosts:
    """Per-iteration costs and budgets, one entry per resource type ``j``."""

    c_dev: tuple = (0.1,)
    c_bs: tuple = (10.0,)
    budget: tuple = (1400.0,)

    def __post_init__(self):
        c_dev, c_bs, budget = (tuple(float(v) for v in np.atleast_1d(x)) for x in (self.c_dev, self.c_bs, self.budget))
        if not (len(c_dev) == len(c_bs) == len(budget)) or not c_dev:
            raise ValueError("c_dev, c_bs and budget need one entry per resource type (J >= 1)")
        if any(v < 0 or math.isnan(v) for v in c_dev + c_bs + budget):
            raise ValueError("costs and budgets must be nonnegative")
        object.__setattr__(self, "c_dev", c_dev)
        object.__setattr__(self, "c_bs", c_bs)
        object.__setattr__(self, "budget", budget)

    @property
    def J(self) -> int:
        return len(self.budget)

    def round_cost(self, h_vec, n_terminals) -> np.ndarray:
        """Cost of one BS iteration on every task, per resource type."""
        return np.array([
            sum(cb + nb * h * cd for h, nb in zip(h_vec, n_terminals))
            for cd, cb in zip(self.c_dev, self.c_bs)
        ])

    def task_round_cost(self, h, n_terminals) -> np.ndarray:
        """Cost of a single task's BS iteration: ``C_BS + N_b H C_dev``."""
        return np.array([cb + n_terminals * h * cd for cd, cb in zip(self.c_dev, self.c_bs)])

    def with_budget(self, budget) -> "ResourceCosts":
        return ResourceCosts(self.c_dev, self.c_bs, tuple(np.broadcast_to(budget, (self.J,)).tolist()))


@dataclass(frozen=True)
class ConvergenceTarget:
    eps_d: float = 0.01
    m: int = 1

    def __post_init__(self):
        if not self.eps_d > 0:
            raise ValueError("eps_d must be > 0")
        if self.m < 1:
            raise ValueError("server iterations M must be >= 1")


@dataclass(frozen=True)
class ResourcePlan:
    h_per_task: tuple
    k: int
    projected_cost: tuple
    feasible: bool
    regime: int
    k_bound: int
    binding: Optional[int] = None
    execution_cost: tuple = field(default=())

    @property
    def h(self) -> int:
        return min(self.h_per_task)

    def as_dict(self) -> dict:
        return {
            "h_per_task": list(self.h_per_task),
            "k": self.k,
            "k_bound": self.k_bound,
            "regime": self.regime,
            "feasible": self.feasible,
            "binding": self.binding,
            "projected_cost": list(self.projected_cost),
            "execution_cost": list(self.execution_cost),
        }


def contraction(n_b, n_tilde, gamma, lambda1, lambda2) -> float:
    """Per-terminal-iteration contraction ``kappa`` so that ``Theta = (1 - kappa)^H``."""
    s = (lambda1 + lambda2) * n_b * gamma
    return s / (1.0 + s) / n_tilde


def theta(h, n_b, n_tilde, gamma, lambda1, lambda2) -> float:
    """Expected shrink factor of a terminal's local gap after ``h`` iterations."""
    if n_tilde < 1 or n_b < n_tilde:
        raise ValueError(f"need 1 <= n_tilde <= n_b, got n_tilde={n_tilde}, n_b={n_b}")
    if h < 0:
        raise ValueError("h must be >= 0")
    return (1.0 - contraction(n_b, n_tilde, gamma, lambda1, lambda2)) ** h


def eta(n_b, sigma, gamma, lambda1, lambda2, variant="theorem") -> float:
    """Step-quality constant of a task.

    ``variant="theorem"``: ``lam gamma / (n_b sigma + lam gamma)`` (default).
    ``variant="proof"``: ``lam n_b gamma / (n_b sigma + lam n_b gamma)``.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    lam = lambda1 + lambda2
    if variant == "theorem":
        return lam * gamma / (n_b * sigma + lam * gamma)
    if variant == "proof":
        return lam * n_b * gamma / (n_b * sigma + lam * n_b * gamma)
    raise ValueError(f"unknown eta variant {variant!r}")


def _folded_blocks(task):
    return [s.X * s.y[:, None] for s in task.shards]


def _cross_term_matrix(blocks):
    X = np.vstack(blocks)
    Q = -(X @ X.T)
    off = 0
    for B in blocks:
        m = B.shape[0]
        Q[off:off + m, off:off + m] += B @ B.T
        off += m
    return Q, X


def task_sigma(task, mode="safe", iters=20000, tol=1e-13, seed=0) -> float:
    """Cross-terminal interference constant of one task.

    The quantity is the largest eigenvalue of
    ``Q = blockdiag(X_t X_t^T) - X X^T`` (rows are label-folded samples), i.e.
    ``max_a (sum_t |X_t^T a_t|^2 - |X^T a|^2) / |a|^2``.

    ``mode="safe"`` drops the subtracted term and bounds each block by its
    operator norm, giving ``max_t |X_t|_2^2``; with one terminal the two
    terms coincide and the value is exactly 0.
    ``mode="brute-force"`` runs shifted power iteration on ``Q`` and is
    limited to ``n_b <= 64``.
    """
    blocks = _folded_blocks(task)
    if mode == "safe":
        if len(blocks) == 1:
            return 0.0
        return max(float(np.linalg.norm(B, 2)) ** 2 if B.size else 0.0 for B in blocks)
    if mode not in ("brute-force", "brute_force"):
        raise ValueError(f"unknown sigma mode {mode!r}")
    n = sum(B.shape[0] for B in blocks)
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute-force sigma needs n_b <= {BRUTE_FORCE_MAX_N}, got {n}")
    Q, X = _cross_term_matrix(blocks)
    shift = float(np.linalg.norm(X, 2)) ** 2
    if shift == 0.0:
        return 0.0
    S = Q + shift * np.eye(n)
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    rayleigh = float(v @ S @ v)
    for _ in range(iters):
        u = S @ v
        norm = np.linalg.norm(u)
        if norm == 0.0:
            break
        v = u / norm
        new = float(v @ S @ v)
        if abs(new - rayleigh) <= tol * max(1.0, abs(new)):
            rayleigh = new
            break
        rayleigh = new
    return max(rayleigh - shift, 0.0)


def sigma_estimate(data, mode="safe") -> float:
    """``max_b sigma_b`` over all tasks of a :class:`~rhfedmtl.data.FederatedDataset`."""
    return max(task_sigma(task, mode) for task in data.tasks)


def k_bound(theta_max, eta_star, t_star, n_list, n_tasks, eps_d) -> int:
    """Smallest integer ``K`` strictly above ``(1 - (1 - Theta) eta*/T*) ln(sum n_b / (N eps))``."""
    bound = k_bound_value(theta_max, eta_star, t_star, n_list, n_tasks, eps_d)
    if bound <= 0:
        return 1
    return int(math.floor(bound)) + 1


def k_bound_value(theta_max, eta_star, t_star, n_list, n_tasks, eps_d) -> float:
    beta = (1.0 - theta_max) * eta_star / t_star
    return (1.0 - beta) * math.log(sum(n_list) / (n_tasks * eps_d))


@dataclass(frozen=True)
class ConvergenceModel:
    """Everything about the learning problem the planner needs."""

    stats: TaskStats
    gamma: float = 1.0
    lambda1: float = 1e-4
    lambda2: float = 1e-6
    sigma: float = 0.0
    eta_variant: str = "theorem"

    @property
    def t_star(self) -> int:
        return max(self.stats.n_terminals)

    @property
    def eta_star(self) -> float:
        return min(eta(nb, self.sigma, self.gamma, self.lambda1, self.lambda2, self.eta_variant)
                   for nb in self.stats.n)

    def theta_max(self, h) -> float:
        return max(theta(h, nb, nt, self.gamma, self.lambda1, self.lambda2)
                   for nb, nt in zip(self.stats.n, self.stats.n_tilde))

    def log_term(self, eps_d) -> float:
        return math.log(sum(self.stats.n) / (self.stats.n_tasks * eps_d))

    def k_bound(self, h, eps_d) -> int:
        return k_bound(self.theta_max(h), self.eta_star, self.t_star, self.stats.n, self.stats.n_tasks, eps_d)

    def k_factor(self, h) -> float:
        return 1.0 - self.eta_star / self.t_star * (1.0 - self.theta_max(h))


def _lhs(h_vec, costs: ResourceCosts, target: ConvergenceTarget, model: ConvergenceModel) -> np.ndarray:
    rounds = costs.round_cost(h_vec, model.stats.n_terminals)
    return target.m * rounds * model.k_factor(min(h_vec)) * model.log_term(target.eps_d)


def cost_f(h, costs: ResourceCosts, target: ConvergenceTarget, model: ConvergenceModel, j=0) -> float:
    """Projected type-``j`` cost of reaching ``eps_d`` with every task at ``h`` terminal iterations.

    ``M sum_b (C_BS + N_b h C_dev) (1 - eta*/T* (1 - Theta(h))) ln(sum n_b / (N eps))``.
    With ``M = 1`` and identical tasks this is ``N`` times the per-task
    expression that a single terminal can evaluate locally, i.e.
    ``(N_b h C_dev + C_BS) (...) ln(...)`` scaled by the task count.
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    return float(_lhs((h,) * model.stats.n_tasks, costs, target, model)[j])


def feasible(h_vec: Sequence[int], costs: ResourceCosts, target: ConvergenceTarget, model: ConvergenceModel):
    """Strict budget test for per-task iteration counts.

    Returns ``(ok, j)`` where ``j`` is the first violated resource type or
    ``None``.  The contraction term uses ``min_b H_b``.
    """
    h_vec = tuple(int(h) for h in h_vec)
    if len(h_vec) != model.stats.n_tasks or min(h_vec) < 1:
        raise ValueError("need one H_b >= 1 per task")
    lhs = _lhs(h_vec, costs, target, model)
    for j, (v, bud) in enumerate(zip(lhs, costs.budget)):
        if not v < bud:
            return False, j
    return True, None


def k_from_budget(h_vec, costs: ResourceCosts, m: int, n_terminals, budget=None) -> float:
    """``floor(min_j budget_j / (M sum_b (C_BS + N_b H_b C_dev)))``; ``inf`` if unbounded."""
    budget = costs.budget if budget is None else budget
    rounds = costs.round_cost(h_vec, n_terminals)
    best = math.inf
    for bud, rc in zip(budget, rounds):
        if math.isinf(bud) or rc == 0:
            continue
        best = min(best, math.floor(bud / (m * rc) + 1e-12))
    return best


def cost_table(costs: ResourceCosts, target: ConvergenceTarget, model: ConvergenceModel, h_max: int, j=0):
    """Rows of ``(h, Theta(h), K bound, f(h))`` for ``h = 1..h_max``."""
    return [
        (h, model.theta_max(h), model.k_bound(h, target.eps_d), cost_f(h, costs, target, model, j))
        for h in range(1, h_max + 1)
    ]


def select_plan(costs: ResourceCosts, target: ConvergenceTarget, model: ConvergenceModel, h_max: int,
                k_cap: int = 1000) -> ResourcePlan:
    """Choose a uniform terminal iteration count ``H`` and BS iteration count ``K``.

    Three regimes, by where the budget sits against ``f`` on ``1..h_max``:

    1. budget below every ``f(h)``: ``H = argmin f`` and ``K`` is whatever the
       budget affords; the plan is flagged infeasible.
    2. ``f`` crosses the budget: ``H`` is the largest ``h`` with
       ``f(h) <= budget < f(h + 1)`` and ``K`` is the convergence bound,
       capped by what the budget affords.
    3. budget above ``f`` everywhere: the smallest feasible ``H`` and ``K`` as
       large as the budget allows, capped at ``k_cap``.

    Ties go to the smaller ``H``.
    """
    if h_max < 1:
        raise ValueError("h_max must be >= 1")
    N = model.stats.n_tasks
    budget = np.asarray(costs.budget)
    fs = {h: _lhs((h,) * N, costs, target, model) for h in range(1, h_max + 2)}
    fits = {h: bool(np.all(f <= budget)) for h, f in fs.items()}
    in_range = range(1, h_max + 1)

    crossings = [h for h in in_range if fits[h] and not fits[h + 1]]
    if not any(fits[h] for h in in_range):
        regime = 1
        scale = np.where(budget > 0, budget, 1.0)
        H = min(in_range, key=lambda h: (float(np.max(fs[h] / scale)), h))
    elif crossings:
        regime = 2
        H = max(crossings)
    else:
        regime = 3
        H = min(h for h in in_range if fits[h])

    h_vec = (H,) * N
    kb = model.k_bound(H, target.eps_d)
    affordable = k_from_budget(h_vec, costs, target.m, model.stats.n_terminals)
    if regime == 1:
        k = affordable
    elif regime == 2:
        k = min(kb, affordable)
    else:
        k = min(affordable, k_cap)
    if math.isinf(k):
        k = k_cap
    k = max(int(k), 1)
    ok, binding = feasible(h_vec, costs, target, model)
    rounds = costs.round_cost(h_vec, model.stats.n_terminals)
    return ResourcePlan(
        h_per_task=h_vec,
        k=k,
        projected_cost=tuple(float(v) for v in fs[H]),
        feasible=ok,
        regime=regime,
        k_bound=kb,
        binding=binding,
        execution_cost=tuple(float(v) for v in target.m * k * rounds),
    )


def fixed_plan(h, costs: ResourceCosts, target: ConvergenceTarget, model: ConvergenceModel,
               k_cap: int = 1000) -> ResourcePlan:
    """Plan with a preset ``H``: ``K`` is simply what the budget affords."""
    N = model.stats.n_tasks
    h_vec = (int(h),) * N
    affordable = k_from_budget(h_vec, costs, target.m, model.stats.n_terminals)
    k = max(int(k_cap if math.isinf(affordable) else affordable), 1)
    ok, binding = feasible(h_vec, costs, target, model)
    return ResourcePlan(
        h_per_task=h_vec,
        k=k,
        projected_cost=tuple(float(v) for v in _lhs(h_vec, costs, target, model)),
        feasible=ok,
        regime=0,
        k_bound=model.k_bound(int(h), target.eps_d),
        binding=binding,
        execution_cost=tuple(float(v) for v in target.m * k * costs.round_cost(h_vec, model.stats.n_terminals)),
    )
