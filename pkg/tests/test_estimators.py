import numpy as np
import pytest
from sklearn.base import clone

from rhfedmtl.data import synth_raw
from rhfedmtl.estimators import FedAvgClassifier, HFedMTLClassifier, RHFedMTLClassifier


@pytest.fixture(scope="module")
def raw():
    return synth_raw(3, 120, 6, relatedness=0.5, seed=0)


@pytest.mark.parametrize("cls", [RHFedMTLClassifier, HFedMTLClassifier, FedAvgClassifier])
def test_fit_predict(cls, raw):
    labels = np.where(raw.y > 0, "sit", "walk")
    tasks = raw.task_ids.astype(int)
    m = cls(n_terminals=3).fit(raw.X[::2], labels[::2], tasks[::2])
    assert m.coef_.shape == (3, 6)
    assert set(m.predict(raw.X[1::2], tasks[1::2])) <= {"sit", "walk"}
    assert m.score(raw.X[1::2], labels[1::2], tasks[1::2]) > 0.6
    assert m.consumed_[0] <= 1400


def test_params_and_clone():
    m = RHFedMTLClassifier(budget=500, lambda1=1e-3)
    c = clone(m)
    assert c.get_params()["budget"] == 500 and c.get_params()["lambda1"] == 1e-3
    assert "fixed_h" in HFedMTLClassifier().get_params()
    assert "learning_rate" in FedAvgClassifier().get_params()


def test_explicit_terminals(raw):
    tasks = raw.task_ids.astype(int)
    terminals = np.arange(tasks.size) % 4
    m = HFedMTLClassifier(budget=300).fit(raw.X, raw.y, tasks, terminals)
    assert m.plan_.h == 2
    assert m.trace_[0]["consumed_0"] == pytest.approx(10 + 4 * 2 * 0.1)


def test_validation(raw):
    tasks = raw.task_ids.astype(int)
    with pytest.raises(ValueError):
        RHFedMTLClassifier().fit(raw.X, np.arange(raw.y.size) % 3, tasks)
    with pytest.raises(ValueError):
        RHFedMTLClassifier().fit(raw.X, raw.y, tasks[:-1])
    m = RHFedMTLClassifier(budget=100).fit(raw.X, raw.y, tasks)
    with pytest.raises(ValueError):
        m.predict(raw.X[:, :3], tasks)
    with pytest.raises(ValueError):
        m.predict(raw.X[:2], np.array([0, 9]))


def test_unfitted():
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        RHFedMTLClassifier().predict(np.zeros((1, 2)), [0])
