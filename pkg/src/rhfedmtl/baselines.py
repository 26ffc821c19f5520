"""Single-model FedAVG over every task's terminals, budgeted like the
hierarchical methods."""
from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from .config import SystemConfig
from .data import FederatedDataset
from .engine import RoundReport, RunResult, FederationState, accuracy
from .objective import RegulationParams, loss_derivative, task_primal
from .planner import k_from_budget


def local_gradient_steps(w, X, y, lambda1, gamma, h, learning_rate):
    """``h`` full-gradient steps on ``mean L(y w.x) + lambda1/2 |w|^2``."""
    w = np.array(w, dtype=float)
    Xf = X * y[:, None]
    n = X.shape[0]
    for _ in range(h):
        grad = Xf.T @ loss_derivative(Xf @ w, gamma) / n + lambda1 * w
        w -= learning_rate * grad
    return w


def run_fedavg(config: SystemConfig, data: FederatedDataset, h: int = 2, learning_rate: float = 0.1,
               sink: Optional[Callable[[RoundReport], None]] = None) -> RunResult:
    """One global model; each round every terminal takes ``h`` local steps and
    the cloud averages the results weighted by shard size.

    A round is charged like one BS iteration on every task,
    ``sum_b (C_BS + N_b h C_dev)``, and the number of rounds is what the
    budget affords (capped at ``k_cap``).  Only the primal side exists, so
    dual and gap are reported as NaN.
    """
    config.validate()
    d = data.d
    w = np.zeros(d)
    reg = RegulationParams(config.lambda1, 0.0, np.zeros(d))
    costs = config.costs
    n_terms = tuple(t.n_terminals for t in data.tasks)
    h_vec = (h,) * data.n_tasks
    rounds = k_from_budget(h_vec, costs, config.server_iterations, n_terms)
    rounds = config.k_cap if math.isinf(rounds) else int(rounds)
    rounds *= config.server_iterations
    charge = [costs.task_round_cost(h, t.n_terminals) for t in data.tasks]
    budget = np.asarray(costs.budget)
    consumed = np.zeros(costs.J)
    total = sum(t.n for t in data.tasks)
    trace = []
    status = "completed"
    for k in range(rounds):
        if np.any(consumed + sum(charge) > budget + 1e-9 * np.maximum(budget, 1.0)):
            status = "budget_exhausted"
            break
        new_w = np.zeros(d)
        for task in data.tasks:
            for shard in task.shards:
                w_t = local_gradient_steps(w, shard.X, shard.y, config.lambda1, config.gamma, h, learning_rate)
                new_w += (shard.size / total) * w_t
        w = new_w
        for b, task in enumerate(data.tasks):
            consumed = consumed + charge[b]
            report = RoundReport(
                m=0, b=b, k=k, h=h, dual=math.nan,
                primal=task_primal(w, task.X_train, task.y_train, reg, config.gamma),
                gap=math.nan, accuracy=accuracy(w, task), mapping_residual=math.nan,
                consumed=tuple(float(c) for c in consumed),
            )
            trace.append(report)
            if sink is not None:
                sink(report)
    state = FederationState(
        models=[w.copy() for _ in data.tasks],
        alphas=[np.zeros(t.n) for t in data.tasks],
        reg=reg,
        consumed=consumed,
        m=1,
        k=[len(trace) // data.n_tasks] * data.n_tasks,
    )
    bs = [len(trace) // data.n_tasks] * data.n_tasks
    return RunResult(trace, state, [], status, bs)

