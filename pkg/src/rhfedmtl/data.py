"""Federated datasets: CSV ingestion, per-task/per-terminal partitioning and a
synthetic related-task generator."""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Malformed input data or an impossible partition request."""


@dataclass(frozen=True)
class TerminalShard:
    """Samples held by terminal ``terminal`` of task ``task``.

    Arrays are read-only; shards never leave the terminal scope except through
    the local solver's dual/model deltas.
    """

    task: int
    terminal: int
    X: np.ndarray
    y: np.ndarray
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise DataError(f"shard ({self.task}, {self.terminal}): X {self.X.shape} vs y {self.y.shape}")
        if self.X.shape[0] < 1:
            raise DataError(f"shard ({self.task}, {self.terminal}) is empty")
        if not np.all(np.isfinite(self.X)):
            raise DataError(f"shard ({self.task}, {self.terminal}) has non-finite features")
        for a in (self.X, self.y, self.rows):
            a.setflags(write=False)

    @property
    def size(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class TaskData:
    """Training shards of one task plus the test set held at its base station."""

    task: int
    shards: tuple
    X_test: np.ndarray
    y_test: np.ndarray
    test_rows: np.ndarray = field(repr=False)
    label: object = None

    def __post_init__(self):
        for a in (self.X_test, self.y_test, self.test_rows):
            a.setflags(write=False)
        X = np.concatenate([s.X for s in self.shards])
        y = np.concatenate([s.y for s in self.shards])
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "_X", X)
        object.__setattr__(self, "_y", y)

    @property
    def X_train(self) -> np.ndarray:
        return self._X

    @property
    def y_train(self) -> np.ndarray:
        return self._y

    @property
    def n(self) -> int:
        return self._X.shape[0]

    @property
    def n_terminals(self) -> int:
        return len(self.shards)

    @property
    def n_tilde(self) -> int:
        """Largest shard size among this task's terminals."""
        return max(s.size for s in self.shards)

    @property
    def shard_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([s.size for s in self.shards])])

    @property
    def tie_label(self) -> float:
        """Label predicted for a zero margin: majority class of the BS test set."""
        if self.y_test.size == 0:
            return 1.0
        return 1.0 if np.sum(self.y_test > 0) >= np.sum(self.y_test < 0) else -1.0


@dataclass(frozen=True)
class FederatedDataset:
    tasks: tuple
    feature_names: tuple = ()

    def __post_init__(self):
        if not self.tasks:
            raise DataError("dataset has no tasks")
        dims = {t.X_train.shape[1] for t in self.tasks} | {t.X_test.shape[1] for t in self.tasks}
        if len(dims) != 1:
            raise DataError(f"feature dimension differs across tasks: {sorted(dims)}")

    @property
    def d(self) -> int:
        return self.tasks[0].X_train.shape[1]

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    def stats(self) -> "TaskStats":
        return TaskStats(
            n=tuple(t.n for t in self.tasks),
            n_tilde=tuple(t.n_tilde for t in self.tasks),
            n_terminals=tuple(t.n_terminals for t in self.tasks),
        )

    def fingerprint(self) -> str:
        """SHA-256 over every shard and test array, in canonical order."""
        h = hashlib.sha256()
        for t in self.tasks:
            for s in t.shards:
                h.update(f"{t.task}/{s.terminal}/{s.X.shape}".encode())
                h.update(np.ascontiguousarray(s.X).tobytes())
                h.update(np.ascontiguousarray(s.y).tobytes())
            h.update(np.ascontiguousarray(t.X_test).tobytes())
            h.update(np.ascontiguousarray(t.y_test).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class TaskStats:
    """Per-task sizes the planner needs: ``n_b``, largest shard and terminal count."""

    n: tuple
    n_tilde: tuple
    n_terminals: tuple

    def __post_init__(self):
        if not (len(self.n) == len(self.n_tilde) == len(self.n_terminals)) or not self.n:
            raise ValueError("task stats must be non-empty and of equal length")
        for nb, nt, k in zip(self.n, self.n_tilde, self.n_terminals):
            if nt < 1 or nb < nt or k < 1:
                raise ValueError(f"invalid task stats n={nb}, n_tilde={nt}, N_b={k}")

    @classmethod
    def uniform(cls, n_tasks, n_terminals, shard_size):
        return cls(
            n=(n_terminals * shard_size,) * n_tasks,
            n_tilde=(shard_size,) * n_tasks,
            n_terminals=(n_terminals,) * n_tasks,
        )

    @property
    def n_tasks(self) -> int:
        return len(self.n)


@dataclass(frozen=True)
class RawTable:
    """Parsed rows: features, +/-1 labels and a task id per row."""

    X: np.ndarray
    y: np.ndarray
    task_ids: np.ndarray
    feature_names: tuple = ()
    true_labels: np.ndarray = None

    def task_values(self):
        return sorted(set(self.task_ids.tolist()))


def load_csv(path, label_column, task_column, positive_label="sitting") -> RawTable:
    """Read a comma-separated file with a header row.

    Every column other than ``label_column`` and ``task_column`` must be
    numeric.  Rows whose label equals ``positive_label`` (compared as text)
    become ``+1``; everything else ``-1``.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        for col in (label_column, task_column):
            if col not in header:
                raise DataError(f"{path}: missing column {col!r}")
        li, ti = header.index(label_column), header.index(task_column)
        feat_idx = [i for i in range(len(header)) if i not in (li, ti)]
        X, y, tasks = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                X.append([float(row[i]) for i in feat_idx])
            except ValueError:
                bad = next(header[i] for i in feat_idx if not _is_float(row[i]))
                raise DataError(f"{path}:{lineno}: non-numeric value in feature {bad!r}") from None
            y.append(1.0 if row[li].strip() == str(positive_label) else -1.0)
            tasks.append(_task_key(row[ti].strip()))
    if not X:
        raise DataError(f"{path}: no data rows")
    return RawTable(
        X=np.asarray(X, dtype=float),
        y=np.asarray(y, dtype=float),
        task_ids=np.asarray(tasks, dtype=object),
        feature_names=tuple(header[i] for i in feat_idx),
    )


def _is_float(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def _task_key(s):
    try:
        return int(s)
    except ValueError:
        return s


def write_csv(raw: RawTable, path, label_column="label", task_column="task",
              positive_label="1", negative_label="0"):
    """Write ``raw`` in the format :func:`load_csv` reads."""
    path = Path(path)
    names = raw.feature_names or tuple(f"f{j}" for j in range(raw.X.shape[1]))
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([task_column, *names, label_column])
        for task, x, y in zip(raw.task_ids, raw.X, raw.y):
            w.writerow([task, *(repr(float(v)) for v in x), positive_label if y > 0 else negative_label])
    tmp.replace(path)


def partition(raw: RawTable, n_tasks=None, terminals_per_task=5, test_fraction=2 / 7, seed=0,
              standardize=True) -> FederatedDataset:
    """Split each task's rows into a BS test set and near-equal terminal shards.

    Tasks are taken in sorted task-id order (the first ``n_tasks``).  Each
    task is shuffled with its own stream derived from ``seed``; the first
    ``round(test_fraction * rows)`` shuffled rows form the test set and the
    rest are dealt into ``terminals_per_task`` shards, extra rows going to the
    first shards.  With ``standardize`` the features are centred and scaled
    with statistics of the pooled training rows.
    """
    if not 0 <= test_fraction < 1:
        raise DataError(f"test_fraction must be in [0, 1), got {test_fraction}")
    if terminals_per_task < 1:
        raise DataError("terminals_per_task must be >= 1")
    values = raw.task_values()
    if n_tasks is None:
        n_tasks = len(values)
    if not 1 <= n_tasks <= len(values):
        raise DataError(f"requested {n_tasks} tasks, table has {len(values)}")

    splits = []
    for b, value in enumerate(values[:n_tasks]):
        rows = np.flatnonzero(raw.task_ids == value)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
        rows = rows[rng.permutation(rows.size)]
        n_test = int(round(test_fraction * rows.size))
        train = rows[n_test:]
        if train.size < terminals_per_task:
            raise DataError(
                f"task {value!r}: {train.size} training rows for {terminals_per_task} terminals")
        splits.append((value, rows[:n_test], np.array_split(train, terminals_per_task)))

    X = raw.X
    if standardize:
        train_rows = np.concatenate([np.concatenate(parts) for _, _, parts in splits])
        mu = X[train_rows].mean(axis=0)
        sd = X[train_rows].std(axis=0)
        sd[sd == 0] = 1.0
        X = (X - mu) / sd

    tasks = []
    for b, (value, test, parts) in enumerate(splits):
        shards = tuple(
            TerminalShard(task=b, terminal=t, X=X[p].copy(), y=raw.y[p].copy(), rows=p.copy())
            for t, p in enumerate(parts)
        )
        tasks.append(TaskData(task=b, shards=shards, X_test=X[test].copy(), y_test=raw.y[test].copy(),
                              test_rows=test.copy(), label=value))
    return FederatedDataset(tasks=tuple(tasks), feature_names=tuple(raw.feature_names))


def synth_raw(n_tasks=5, samples_per_task=490, d=50, relatedness=0.7, noise=0.05, seed=0) -> RawTable:
    """Draw related linear classification tasks.

    Task weights are ``rho * u + (1 - rho) * delta_b`` (unit-normalised) with a
    shared base ``u``; features are standard normal and labels
    ``sign(w_b . x)`` flipped with probability ``noise``.
    """
    if not 0.0 <= relatedness <= 1.0:
        raise DataError(f"relatedness must be in [0, 1], got {relatedness}")
    if not 0.0 <= noise <= 1.0:
        raise DataError(f"noise must be in [0, 1], got {noise}")
    if d < 1 or n_tasks < 1 or samples_per_task < 1:
        raise DataError("d, n_tasks and samples_per_task must be >= 1")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    Xs, ys, clean, ids = [], [], [], []
    for b in range(n_tasks):
        delta = rng.standard_normal(d)
        delta /= np.linalg.norm(delta)
        w = relatedness * u + (1.0 - relatedness) * delta
        norm = np.linalg.norm(w)
        w = u if norm == 0 else w / norm
        X = rng.standard_normal((samples_per_task, d))
        y = np.where(X @ w >= 0, 1.0, -1.0)
        flips = rng.random(samples_per_task) < noise
        Xs.append(X)
        clean.append(y)
        ys.append(np.where(flips, -y, y))
        ids.append(np.full(samples_per_task, b))
    return RawTable(
        X=np.vstack(Xs),
        y=np.concatenate(ys),
        task_ids=np.concatenate(ids).astype(object),
        feature_names=tuple(f"f{j}" for j in range(d)),
        true_labels=np.concatenate(clean),
    )


def synth_tasks(n_tasks=5, terminals_per_task=5, samples_per_task=490, d=50, relatedness=0.7,
                noise=0.05, seed=0, test_fraction=2 / 7, standardize=True) -> FederatedDataset:
    raw = synth_raw(n_tasks, samples_per_task, d, relatedness, noise, seed)
    return partition(raw, n_tasks, terminals_per_task, test_fraction, seed, standardize)


def clone_tasks(data: FederatedDataset, n_tasks: int) -> FederatedDataset:
    """Dataset whose tasks are all copies of task 0 (symmetry checks)."""
    src = data.tasks[0]
    tasks = []
    for b in range(n_tasks):
        shards = tuple(TerminalShard(b, s.terminal, s.X.copy(), s.y.copy(), s.rows.copy()) for s in src.shards)
        tasks.append(TaskData(b, shards, src.X_test.copy(), src.y_test.copy(), src.test_rows.copy(), b))
    return FederatedDataset(tuple(tasks), data.feature_names)
