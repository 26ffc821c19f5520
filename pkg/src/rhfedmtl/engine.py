"""Cloud / base-station / terminal training loop.

One server iteration runs ``K`` BS iterations on every task, then refreshes
the regulation anchor ``r`` (the mean task model).  In a BS iteration every
terminal of the task runs the local dual method on its own shard and the BS
averages the returned dual and model deltas.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import objective
from .config import SystemConfig
from .data import FederatedDataset
from .objective import RegulationParams
from .planner import ConvergenceModel, ResourcePlan, fixed_plan, select_plan, sigma_estimate
from .terminal import local_round

log = logging.getLogger(__name__)

BUDGET_SLACK = 1e-9


class BudgetExhausted(RuntimeError):
    """The next BS iteration does not fit in the remaining budget."""


@dataclass
class RoundReport:
    m: int
    b: int
    k: int
    h: int
    dual: float
    primal: float
    gap: float
    accuracy: float
    mapping_residual: float
    consumed: tuple

    def as_row(self) -> dict:
        row = {
            "m": self.m, "b": self.b, "k": self.k, "h": self.h,
            "dual": self.dual, "primal": self.primal, "gap": self.gap,
            "accuracy": self.accuracy, "mapping_residual": self.mapping_residual,
        }
        for j, c in enumerate(self.consumed):
            row[f"consumed_{j}"] = c
        return row


@dataclass
class FederationState:
    models: List[np.ndarray]
    alphas: List[np.ndarray]
    reg: RegulationParams
    consumed: np.ndarray
    m: int = 0
    k: List[int] = field(default_factory=list)
    t_star: int = 1
    eta_star: float = 1.0
    sigma: float = 0.0
    gaps: List[float] = field(default_factory=list)

    @property
    def gap(self) -> float:
        return float(np.mean(self.gaps)) if self.gaps else math.nan


@dataclass
class RunResult:
    trace: List[RoundReport]
    state: FederationState
    plans: List[ResourcePlan]
    status: str
    bs_iterations: List[int]

    @property
    def final_gap(self) -> float:
        return self.state.gap


def predict(w, X, tie_label=1.0) -> np.ndarray:
    s = np.asarray(X, dtype=float) @ w
    return np.where(s > 0, 1.0, np.where(s < 0, -1.0, tie_label))


def accuracy(w, task) -> float:
    if task.y_test.size == 0:
        return math.nan
    return float(np.mean(predict(w, task.X_test, task.tie_label) == task.y_test))


def _check(config: SystemConfig, data: FederatedDataset):
    config.validate()
    if config.n_tasks != data.n_tasks:
        raise ValueError(f"config has {config.n_tasks} tasks, dataset has {data.n_tasks}")


def convergence_model(config: SystemConfig, data: FederatedDataset, sigma=None) -> ConvergenceModel:
    if sigma is None:
        sigma = sigma_estimate(data, config.sigma_mode)
    return ConvergenceModel(data.stats(), config.gamma, config.lambda1, config.lambda2, sigma, config.eta_variant)


def init(config: SystemConfig, data: FederatedDataset) -> FederationState:
    """All-zero duals, models and anchor."""
    _check(config, data)
    d = data.d
    model = convergence_model(config, data)
    state = FederationState(
        models=[np.zeros(d) for _ in data.tasks],
        alphas=[np.zeros(t.n) for t in data.tasks],
        reg=RegulationParams(config.lambda1, config.lambda2, np.zeros(d)),
        consumed=np.zeros(config.costs.J),
        k=[0] * data.n_tasks,
        t_star=model.t_star,
        eta_star=model.eta_star,
        sigma=model.sigma,
    )
    state.gaps = [_task_metrics(state, data, b, config.gamma)[2] for b in range(data.n_tasks)]
    return state


def _task_metrics(state, data, b, gamma):
    task = data.tasks[b]
    X, y = task.X_train, task.y_train
    w, a = state.models[b], state.alphas[b]
    primal = objective.task_primal(w, X, y, state.reg, gamma)
    dual = objective.task_dual(a, X, y, state.reg, gamma)
    gap = objective.task_gap(w, a, state.reg, X, y, gamma)
    return primal, dual, gap


def terminal_seed(root_seed, m, k, t) -> np.random.SeedSequence:
    """Stream for terminal ``t`` in BS iteration ``k`` of server iteration ``m``.

    The task index is deliberately not part of the key: tasks own disjoint
    data, and sharing index streams keeps tasks with identical data on
    identical trajectories.
    """
    return np.random.SeedSequence(root_seed, spawn_key=(m, k, t))


def bs_iteration(state: FederationState, data: FederatedDataset, b: int, h: int, config: SystemConfig,
                 seed: int = 0, terminal_order=None) -> RoundReport:
    """One BS iteration of task ``b`` with ``h`` terminal iterations per terminal.

    Raises :class:`BudgetExhausted` without touching the state when the round
    would overdraw any resource type.
    """
    task = data.tasks[b]
    costs = config.costs
    charge = costs.task_round_cost(h, task.n_terminals)
    budget = np.asarray(costs.budget)
    if np.any(state.consumed + charge > budget + BUDGET_SLACK * np.maximum(budget, 1.0)):
        raise BudgetExhausted(f"task {b}: round costs {charge.tolist()}, "
                              f"{(budget - state.consumed).tolist()} left")
    w_b = state.models[b]
    alpha_b = state.alphas[b]
    off = task.shard_offsets
    order = range(task.n_terminals) if terminal_order is None else terminal_order
    updates = {}
    for t in order:
        shard = task.shards[t]
        rng = np.random.default_rng(terminal_seed(seed, state.m, state.k[b], t))
        updates[t] = local_round(shard, alpha_b[off[t]:off[t + 1]], w_b, state.reg, task.n, h, rng, config.gamma)
    # aggregation barrier: deltas are averaged over the task's terminals in a fixed order
    inv = 1.0 / task.n_terminals
    new_alpha = alpha_b.copy()
    dw = np.zeros_like(w_b)
    for t in range(task.n_terminals):
        new_alpha[off[t]:off[t + 1]] += inv * updates[t].delta_alpha
        dw += updates[t].delta_w
    state.alphas[b] = new_alpha
    state.models[b] = w_b + inv * dw
    state.consumed = state.consumed + charge
    k = state.k[b]
    state.k[b] += 1

    primal, dual, gap = _task_metrics(state, data, b, config.gamma)
    state.gaps[b] = gap
    residual = objective.mapping_residual(state.models[b], state.alphas[b], state.reg, task.X_train, task.y_train)
    return RoundReport(state.m, b, k, h, dual, primal, gap, accuracy(state.models[b], task), residual,
                       tuple(float(c) for c in state.consumed))


def refresh_anchor(state: FederationState, data: FederatedDataset, config: SystemConfig, model=None):
    """Set ``r`` to the mean task model and shift each model accordingly.

    The shift ``lambda2 (r_new - r_old) / lam`` is exactly what the dual-to-primal
    map prescribes, so the BS never needs its terminals' data for it.
    """
    r_old = state.reg.anchor(data.d)
    r_new = np.mean(state.models, axis=0)
    shift = state.reg.lambda2 * (r_new - r_old) / state.reg.lam
    state.models = [w + shift for w in state.models]
    state.reg = state.reg.with_anchor(r_new)
    if model is None:
        model = convergence_model(config, data, state.sigma)
    state.t_star = model.t_star
    state.eta_star = model.eta_star
    state.gaps = [_task_metrics(state, data, b, config.gamma)[2] for b in range(data.n_tasks)]


def server_iteration(state: FederationState, data: FederatedDataset, plan: ResourcePlan, config: SystemConfig,
                     seed: int = 0, sink: Optional[Callable[[RoundReport], None]] = None) -> str:
    """Run ``plan.k`` BS iterations on every task, then refresh the anchor.

    BS iterations are interleaved across tasks (``k`` outer, task inner); the
    anchor is read-only until all of them finish, and is left untouched when
    the gap target is met so the returned models are the converged ones.  Returns ``"converged"``,
    ``"budget_exhausted"`` or ``"done"``.
    """
    status = "done"
    for b in range(data.n_tasks):
        state.k[b] = 0
    try:
        for _ in range(plan.k):
            for b in range(data.n_tasks):
                report = bs_iteration(state, data, b, plan.h_per_task[b], config, seed)
                if sink is not None:
                    sink(report)
            if state.gap <= config.eps_d:
                status = "converged"
                break
    except BudgetExhausted as exc:
        log.info("stopping: %s", exc)
        status = "budget_exhausted"
    if status != "converged":
        refresh_anchor(state, data, config)
    state.m += 1
    return status


def run(config: SystemConfig, data: FederatedDataset, seed: int = 0, fixed_h: Optional[int] = None,
        sink: Optional[Callable[[RoundReport], None]] = None) -> RunResult:
    """Train until the gap reaches ``eps_d``, the budget runs out or ``M`` server iterations finish.

    With ``fixed_h`` the planner is bypassed: every task uses that many
    terminal iterations and ``K`` is what the budget affords.
    """
    state = init(config, data)
    model = convergence_model(config, data, state.sigma)
    trace: List[RoundReport] = []

    def emit(report):
        trace.append(report)
        if sink is not None:
            sink(report)

    h_cap = config.h_max or min(s.size for t in data.tasks for s in t.shards)
    plans = []
    status = "completed"
    plan = None
    for m in range(config.server_iterations):
        if plan is None or config.replan:
            remaining = tuple(np.maximum(np.asarray(config.costs.budget) - state.consumed, 0.0).tolist())
            costs = config.costs.with_budget(remaining)
            target = type(config.target)(config.eps_d, config.server_iterations - m)
            if fixed_h is not None:
                plan = fixed_plan(fixed_h, costs, target, model, config.k_cap)
            else:
                plan = select_plan(costs, target, model, h_cap, config.k_cap)
        plans.append(plan)
        log.debug("server iteration %d: H=%s K=%d regime=%d", m, plan.h_per_task, plan.k, plan.regime)
        outcome = server_iteration(state, data, plan, config, seed, emit)
        if outcome != "done":
            status = outcome
            break
    trace.sort(key=lambda r: (r.m, r.b, r.k))
    bs = [sum(1 for r in trace if r.b == b) for b in range(data.n_tasks)]
    return RunResult(trace, state, plans, status, bs)
