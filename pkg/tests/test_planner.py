import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from rhfedmtl.data import TaskStats, synth_tasks
from rhfedmtl.planner import (
    ConvergenceModel, ConvergenceTarget, ResourceCosts, cost_f, cost_table, eta, feasible, fixed_plan,
    k_bound, k_from_budget, select_plan, task_sigma, theta,
)

STATS = TaskStats.uniform(5, 5, 70)
SIGMA = 40.0


def _model(sigma=SIGMA, stats=STATS, lambda1=1e-4, lambda2=1e-6):
    return ConvergenceModel(stats, 1.0, lambda1, lambda2, sigma)


def _costs(budget=1400.0):
    return ResourceCosts((0.1,), (10.0,), (budget,))


def _oracle_f(h, sigma=SIGMA, m=1):
    return oracles.f_oracle(h, 5, 5, 350, 70, 0.1, 10.0, m, 1.0, 1e-4 + 1e-6, sigma, 0.01)


class TestTheta:
    @given(st.integers(0, 500), st.integers(1, 50), st.integers(1, 10), st.floats(1e-6, 10), st.floats(0.05, 5))
    def test_two_evaluation_paths_agree(self, h, n_tilde, mult, lam, gamma):
        n_b = n_tilde * mult
        a = theta(h, n_b, n_tilde, gamma, lam, 0.0)
        b = oracles.theta_log(h, n_b, n_tilde, gamma, lam)
        assert abs(a - b) <= 1e-12

    @given(st.integers(0, 100), st.integers(0, 100))
    def test_exponential_law(self, h1, h2):
        t = lambda h: theta(h, 350, 70, 1.0, 1e-4, 1e-6)  # noqa: E731
        assert t(h1 + h2) == pytest.approx(t(h1) * t(h2), rel=1e-12)

    def test_strictly_decreasing(self):
        vals = [theta(h, 350, 70, 1.0, 1e-4, 1e-6) for h in range(0, 71)]
        assert vals[0] == 1.0
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            theta(1, 10, 20, 1.0, 1e-4, 0)
        with pytest.raises(ValueError):
            theta(-1, 10, 5, 1.0, 1e-4, 0)


class TestEta:
    def test_no_interference_gives_one(self):
        assert eta(350, 0.0, 1.0, 1e-4, 1e-6) == 1.0
        assert eta(350, 0.0, 1.0, 1e-4, 1e-6, "proof") == 1.0

    def test_values(self):
        lam = 1e-4 + 1e-6
        assert eta(350, 2.0, 1.0, 1e-4, 1e-6) == pytest.approx(lam / (700 + lam), rel=1e-15)
        assert eta(350, 2.0, 1.0, 1e-4, 1e-6, "proof") == pytest.approx(350 * lam / (700 + 350 * lam), rel=1e-15)

    def test_theorem_variant_not_above_proof_variant(self):
        sigma = task_sigma(synth_tasks(seed=0).tasks[0], "safe")
        assert eta(350, sigma, 1.0, 1e-4, 1e-6) <= eta(350, sigma, 1.0, 1e-4, 1e-6, "proof")

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            eta(10, 1.0, 1.0, 1e-4, 0, "other")


class TestKBound:
    def test_theta_one_gives_log_term(self):
        # beta = 0: K = floor(ln(350 / 0.01)) + 1 = floor(10.463) + 1
        assert k_bound(1.0, 0.5, 5, [350] * 5, 5, 0.01) == 11

    def test_clamped_to_one(self):
        assert k_bound(0.5, 1.0, 1, [10], 1, 100.0) == 1

    def test_non_increasing_in_h(self):
        m = _model(sigma=0.0, lambda1=1.0)
        ks = [m.k_bound(h, 0.01) for h in range(1, 71)]
        assert all(b <= a for a, b in zip(ks, ks[1:]))
        assert ks[-1] < ks[0]


class TestSigma:
    def test_safe_bound_dominates_brute_force(self):
        rng = np.random.default_rng(0)
        for case in range(50):
            n_terms = int(rng.integers(2, 5))
            per = int(rng.integers(1, 4))
            data = synth_tasks(1, n_terms, int(np.ceil(n_terms * per / (1 - 2 / 7))) + 1, int(rng.integers(1, 6)),
                               seed=case)
            task = data.tasks[0]
            brute = task_sigma(task, "brute-force")
            assert brute <= task_sigma(task, "safe") + 1e-9
            blocks = [s.X * s.y[:, None] for s in task.shards]
            assert brute == pytest.approx(max(oracles.sigma_eig(blocks), 0.0), abs=1e-7)

    def test_single_terminal_is_zero(self):
        task = synth_tasks(1, 1, 20, 3, seed=1).tasks[0]
        assert task_sigma(task, "safe") == 0.0
        assert task_sigma(task, "brute-force") == pytest.approx(0.0, abs=1e-9)

    def test_brute_force_size_limit(self):
        task = synth_tasks(1, 2, 200, 3, seed=1).tasks[0]
        with pytest.raises(ValueError):
            task_sigma(task, "brute-force")


class TestCost:
    def test_matches_oracle_formula(self):
        m = _model()
        for h in (1, 2, 17, 70):
            assert cost_f(h, _costs(), ConvergenceTarget(), m) == pytest.approx(_oracle_f(h), rel=1e-12)

    def test_scales_with_server_iterations(self):
        m = _model()
        one = cost_f(5, _costs(), ConvergenceTarget(0.01, 1), m)
        assert cost_f(5, _costs(), ConvergenceTarget(0.01, 3), m) == pytest.approx(3 * one, rel=1e-14)

    def test_single_task_form(self):
        # at M=1 with identical tasks f is N times (N_b h C_dev + C_BS) (...) ln(...)
        m = _model()
        h = 4
        per_task = (5 * h * 0.1 + 10.0) * m.k_factor(h) * m.log_term(0.01)
        assert cost_f(h, _costs(), ConvergenceTarget(), m) == pytest.approx(5 * per_task, rel=1e-14)

    def test_feasibility_is_strict(self):
        m = _model()
        f2 = cost_f(2, _costs(), ConvergenceTarget(), m)
        assert feasible((2,) * 5, _costs(f2), ConvergenceTarget(), m) == (False, 0)
        assert feasible((2,) * 5, _costs(f2 * (1 + 1e-12)), ConvergenceTarget(), m) == (True, None)

    def test_feasibility_uses_min_h(self):
        m = _model()
        ok, _ = feasible((1, 70, 70, 70, 70), _costs(10_000), ConvergenceTarget(), m)
        lhs = 1 * sum(10 + 5 * h * 0.1 for h in (1, 70, 70, 70, 70)) * m.k_factor(1) * m.log_term(0.01)
        assert ok == (lhs < 10_000)

    def test_k_from_budget(self):
        assert k_from_budget((2,) * 5, _costs(), 1, (5,) * 5) == 25
        assert k_from_budget((2,) * 5, _costs(), 2, (5,) * 5) == 12
        assert k_from_budget((2,) * 5, _costs(math.inf), 1, (5,) * 5) == math.inf
        multi = ResourceCosts((0.1, 1.0), (10.0, 0.0), (1400.0, 100.0))
        assert k_from_budget((2,) * 5, multi, 1, (5,) * 5) == 2

    def test_table_rows(self):
        rows = cost_table(_costs(), ConvergenceTarget(), _model(), 70)
        assert [r[0] for r in rows] == list(range(1, 71))
        assert all(r[3] == pytest.approx(_oracle_f(r[0]), rel=1e-12) for r in rows)

    def test_cost_validation(self):
        with pytest.raises(ValueError):
            ResourceCosts((0.1,), (10.0, 1.0), (1.0,))
        with pytest.raises(ValueError):
            ResourceCosts((-0.1,), (10.0,), (1.0,))
        with pytest.raises(ValueError):
            ConvergenceTarget(0.0)


class TestSelect:
    """Expected plans are read off the oracle f table, then compared."""

    def _oracle_plan(self, budget):
        fs = {h: _oracle_f(h) for h in range(1, 72)}
        fits = {h: fs[h] <= budget for h in fs}
        crossings = [h for h in range(1, 71) if fits[h] and not fits[h + 1]]
        if not any(fits[h] for h in range(1, 71)):
            return 1, min(range(1, 71), key=lambda h: (fs[h], h))
        if crossings:
            return 2, max(crossings)
        return 3, min(h for h in range(1, 71) if fits[h])

    @pytest.mark.parametrize("budget", [50.0, 600.0, 1400.0, 2000.0, math.inf])
    def test_regime_and_h_follow_oracle(self, budget):
        plan = select_plan(_costs(budget), ConvergenceTarget(), _model(), 70)
        regime, h = self._oracle_plan(budget)
        assert (plan.regime, plan.h) == (regime, h)

    def test_frozen_default_plans(self):
        m = _model()
        low = select_plan(_costs(50), ConvergenceTarget(), m, 70)
        assert (low.regime, low.h, low.k, low.feasible) == (1, 1, 1, False)
        mid = select_plan(_costs(1400), ConvergenceTarget(), m, 70)
        assert (mid.regime, mid.h, mid.k, mid.k_bound, mid.feasible) == (2, 33, 10, 11, True)
        assert mid.execution_cost[0] <= 1400
        top = select_plan(_costs(math.inf), ConvergenceTarget(), m, 70, k_cap=1000)
        assert (top.regime, top.h, top.k, top.feasible) == (3, 1, 1000, True)

    def test_fixed_plan_drains_budget(self):
        p = fixed_plan(2, _costs(), ConvergenceTarget(), _model())
        assert (p.h, p.k, p.regime) == (2, 25, 0)
        assert p.execution_cost[0] == pytest.approx(1375.0)

    def test_h_max_validation(self):
        with pytest.raises(ValueError):
            select_plan(_costs(), ConvergenceTarget(), _model(), 0)
