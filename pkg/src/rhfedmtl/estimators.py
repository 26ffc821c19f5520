"""scikit-learn style classifiers over the federated trainers.

The extra ``tasks`` argument of ``fit``/``predict`` names the task (base
station) each row belongs to; ``terminals`` optionally names the terminal
holding it.  Without ``terminals`` each task's rows are dealt, in order, into
``n_terminals`` near-equal shards.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import engine
from .baselines import run_fedavg
from .config import SystemConfig
from .data import FederatedDataset, TaskData, TerminalShard


class _FederatedClassifier(ClassifierMixin, BaseEstimator):
    """Shared plumbing: validation, label encoding and sharding."""

    def _system(self, n_tasks, n_terminals) -> SystemConfig:
        return SystemConfig(
            n_tasks=n_tasks, n_terminals=n_terminals, lambda1=self.lambda1, lambda2=self.lambda2,
            gamma=self.gamma, eps_d=self.eps_d, server_iterations=self.server_iterations,
            c_dev=self.c_dev, c_bs=self.c_bs, budget=float(self.budget), k_cap=self.k_cap,
        ).validate()

    def _dataset(self, X, y_pm, tasks, terminals) -> FederatedDataset:
        d = X.shape[1]
        shards_per_task = []
        for b, label in enumerate(self.tasks_):
            rows = np.flatnonzero(tasks == label)
            if terminals is None:
                parts = np.array_split(rows, min(self.n_terminals, rows.size))
            else:
                parts = [rows[terminals[rows] == t] for t in np.unique(terminals[rows])]
            shards = tuple(TerminalShard(b, t, X[p].copy(), y_pm[p].copy(), p.copy()) for t, p in enumerate(parts))
            shards_per_task.append(TaskData(b, shards, np.empty((0, d)), np.empty(0), np.empty(0, dtype=int), label))
        return FederatedDataset(tuple(shards_per_task))

    def fit(self, X, y, tasks, terminals=None):
        """Train one linear model per task.

        Parameters
        ----------
        X : array-like of shape (n_samples, n_features)
        y : array-like of shape (n_samples,)
            Two classes; ``classes_[1]`` is the positive one.
        tasks : array-like of shape (n_samples,)
            Task id of every row.
        terminals : array-like of shape (n_samples,), optional
            Terminal id of every row within its task.
        """
        X, y = check_X_y(X, y, dtype=float)
        tasks = np.asarray(tasks)
        if tasks.shape != (X.shape[0],):
            raise ValueError(f"tasks has shape {tasks.shape}, expected ({X.shape[0]},)")
        if terminals is not None:
            terminals = np.asarray(terminals)
            if terminals.shape != (X.shape[0],):
                raise ValueError(f"terminals has shape {terminals.shape}, expected ({X.shape[0]},)")
        self.classes_ = unique_labels(y)
        if self.classes_.size != 2:
            raise ValueError(f"binary labels required, got {self.classes_.size} classes")
        y_pm = np.where(y == self.classes_[1], 1.0, -1.0)
        self.tasks_ = np.unique(tasks)
        self.n_features_in_ = X.shape[1]
        data = self._dataset(X, y_pm, tasks, terminals)
        system = self._system(data.n_tasks, max(t.n_terminals for t in data.tasks))
        result = self._train(system, data)
        self.coef_ = np.vstack(result.state.models)
        self.plan_ = result.plans[0] if result.plans else None
        self.trace_ = [r.as_row() for r in result.trace]
        self.status_ = result.status
        self.consumed_ = result.state.consumed.copy()
        return self

    def decision_function(self, X, tasks):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        tasks = np.asarray(tasks)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        idx = np.searchsorted(self.tasks_, tasks)
        idx = np.clip(idx, 0, self.tasks_.size - 1)
        if tasks.shape != (X.shape[0],) or np.any(self.tasks_[idx] != tasks):
            raise ValueError("tasks must match X row count and name tasks seen during fit")
        return np.einsum("ij,ij->i", X, self.coef_[idx])

    def predict(self, X, tasks):
        s = self.decision_function(X, tasks)
        return np.where(s >= 0, self.classes_[1], self.classes_[0])

    def score(self, X, y, tasks):
        return float(np.mean(self.predict(X, tasks) == np.asarray(y)))


class RHFedMTLClassifier(_FederatedClassifier):
    """Planner-driven hierarchical multi-task classifier.

    Parameters
    ----------
    n_terminals : int
        Shards per task when ``terminals`` is not given to ``fit``.
    lambda1, lambda2 : float
        Ridge and task-coupling strengths.
    gamma : float
        Smoothing of the hinge loss.
    eps_d : float
        Target duality gap.
    server_iterations : int
        Cloud rounds ``M``.
    c_dev, c_bs, budget : float
        Per-terminal-iteration cost, per-BS-round cost and total budget.
    k_cap : int
        Upper limit on BS iterations when the budget is unbounded.
    random_state : int
    """

    def __init__(self, n_terminals=5, lambda1=1e-4, lambda2=1e-6, gamma=1.0, eps_d=0.01, server_iterations=1,
                 c_dev=0.1, c_bs=10.0, budget=1400.0, k_cap=1000, random_state=0):
        self.n_terminals = n_terminals
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.gamma = gamma
        self.eps_d = eps_d
        self.server_iterations = server_iterations
        self.c_dev = c_dev
        self.c_bs = c_bs
        self.budget = budget
        self.k_cap = k_cap
        self.random_state = random_state

    def _train(self, system, data):
        return engine.run(system, data, seed=self.random_state)


class HFedMTLClassifier(RHFedMTLClassifier):
    """Same trainer with a fixed number of terminal iterations ``fixed_h``."""

    def __init__(self, n_terminals=5, lambda1=1e-4, lambda2=1e-6, gamma=1.0, eps_d=0.01, server_iterations=1,
                 c_dev=0.1, c_bs=10.0, budget=1400.0, k_cap=1000, random_state=0, fixed_h=2):
        super().__init__(n_terminals, lambda1, lambda2, gamma, eps_d, server_iterations, c_dev, c_bs, budget,
                         k_cap, random_state)
        self.fixed_h = fixed_h

    def _train(self, system, data):
        return engine.run(system, data, seed=self.random_state, fixed_h=self.fixed_h)


class FedAvgClassifier(RHFedMTLClassifier):
    """One shared model trained by federated averaging; ``coef_`` repeats it per task."""

    def __init__(self, n_terminals=5, lambda1=1e-4, lambda2=1e-6, gamma=1.0, eps_d=0.01, server_iterations=1,
                 c_dev=0.1, c_bs=10.0, budget=1400.0, k_cap=1000, random_state=0, fixed_h=2,
                 learning_rate=0.1):
        super().__init__(n_terminals, lambda1, lambda2, gamma, eps_d, server_iterations, c_dev, c_bs, budget,
                         k_cap, random_state)
        self.fixed_h = fixed_h
        self.learning_rate = learning_rate

    def _train(self, system, data):
        return run_fedavg(system, data, h=self.fixed_h, learning_rate=self.learning_rate)
