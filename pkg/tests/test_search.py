import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import A, B, C, traces
from lrm.objective import TreeEvaluator, check_selfloop_closure, closure_ok, evaluate, table_of
from lrm.rm import RewardMachine, single_state_rm
from lrm.search import (
    BudgetExceeded,
    SearchConfig,
    exact_enumerate,
    local_search,
    neighbour_deltas,
    neighbours,
    run_search,
    sample_random_rm,
    tabu_search,
)
from lrm.traces import LabelledTrace, build_prefix_tree

TOY = [(A, B, A, C), (A, C, A, B)]


def tree_of(corpus, compressed=False):
    return build_prefix_tree([LabelledTrace(t, compressed=compressed) for t in corpus])


class TestMoves:
    def test_one_state_has_no_neighbours(self):
        assert neighbours(single_state_rm(), [A, B], 1) == []

    def test_sampling_one_state(self):
        rng = np.random.default_rng(0)
        assert sample_random_rm([A, B], 1, rng) == single_state_rm()

    def test_two_states_one_symbol_sees_both_shapes(self):
        rng = np.random.default_rng(1)
        shapes = Counter(sample_random_rm([A], 2, rng).transitions.get((0, A), 0) for _ in range(1000))
        assert set(shapes) == {0, 1}
        # each entry is uniform over the states: roughly half and half
        assert 400 < shapes[1] < 600

    def test_neighbourhood_size(self):
        rm = RewardMachine(2, {(0, A): 1, (0, B): 1, (1, A): 0, (1, B): 0})
        nbrs = neighbours(rm, [A, B], 2)
        # one alternative target per slot
        assert len(nbrs) == 4
        assert len(set(nbrs)) == 4

    def test_three_states_two_alternatives_per_slot(self):
        assert len(neighbours(single_state_rm(), [A, B], 3)) == 3 * 2 * 2

    @given(st.integers(2, 4), st.integers(1, 3), st.integers(0, 10**6))
    def test_moves_are_symmetric(self, u_max, s, seed):
        rng = np.random.default_rng(seed)
        sigma = [A, B, C][:s]
        rm = sample_random_rm(sigma, u_max, rng)
        for nb in neighbours(rm, sigma, u_max):
            assert rm in neighbours(nb, sigma, u_max)

    @given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 10**6))
    def test_compressed_mode_keeps_closure(self, u_max, s, seed):
        rng = np.random.default_rng(seed)
        sigma = [A, B, C][:s]
        rm = sample_random_rm(sigma, u_max, rng, compressed_mode=True)
        assert check_selfloop_closure(rm) == []
        for d in neighbour_deltas(table_of(rm, sigma, u_max), compressed_mode=True):
            assert closure_ok(d)


class TestExact:
    def test_single_state(self):
        tree = tree_of(TOY)
        res = exact_enumerate(tree, 1)
        assert res.best_rm == single_state_rm()
        assert res.best_cost == pytest.approx(evaluate(single_state_rm(), tree).total)

    def test_two_symbol_trace(self):
        assert exact_enumerate(tree_of([(A, B)]), 1).best_cost == 0.0

    def test_toy_optimum(self):
        # the first a always branches to {b, c}; everything else can be made
        # deterministic, so three ln 2 terms remain
        res = exact_enumerate(tree_of(TOY), 2)
        assert res.best_cost == pytest.approx(3 * math.log(2), abs=1e-12)

    def test_budget_refusal(self):
        with pytest.raises(BudgetExceeded):
            exact_enumerate(tree_of(TOY), 3, budget=1000)

    def test_compressed_result_satisfies_closure(self):
        tree = tree_of([(A, B, A, C), (B, C, A, B, C)], compressed=True)
        res = exact_enumerate(tree, 2, compressed_mode=True)
        assert check_selfloop_closure(res.best_rm) == []


class TestLocalSearch:
    def test_zero_cost_corpus_stops_at_zero(self):
        res = local_search(tree_of([(A, B, A, B)]), SearchConfig(u_max=2, t_max=5))
        assert res.best_cost == 0.0
        assert res.cost_trajectory[0][2] == 0.0

    def test_fixed_seed_is_reproducible(self):
        cfg = SearchConfig(u_max=3, t_max=30, seed=4)
        a = local_search(tree_of(TOY), cfg)
        b = local_search(tree_of(TOY), cfg)
        assert a.best_rm == b.best_rm and a.cost_trajectory == b.cost_trajectory

    @pytest.mark.parametrize("search", [local_search, tabu_search])
    def test_matches_exact_on_toy(self, search):
        tree = tree_of(TOY)
        target = exact_enumerate(tree, 2).best_cost
        best = min(search(tree, SearchConfig(u_max=2, t_max=50, seed=s)).best_cost for s in range(10))
        assert best == pytest.approx(target, abs=1e-9)

    @pytest.mark.parametrize("search", [local_search, tabu_search])
    def test_best_so_far_never_increases(self, search):
        res = search(tree_of(TOY), SearchConfig(u_max=3, t_max=40, seed=2))
        best = [row[2] for row in res.cost_trajectory]
        assert all(x >= y for x, y in zip(best, best[1:]))
        assert res.best_cost == best[-1]

    @pytest.mark.parametrize("search", [local_search, tabu_search])
    def test_more_iterations_never_hurt(self, search):
        tree = tree_of([(A, B, C, A, C, B), (B, A, C, C, A), (C, A, B, A)])
        costs = [search(tree, SearchConfig(u_max=3, t_max=t, seed=1)).best_cost for t in (5, 20, 60)]
        assert costs[0] >= costs[1] >= costs[2]

    def test_compressed_search_stays_feasible(self):
        tree = tree_of([(A, B, A, C), (B, C, A, B, C), (C, A, B)], compressed=True)
        for search in (local_search, tabu_search):
            res = search(tree, SearchConfig(u_max=3, t_max=30, compressed_mode=True))
            assert check_selfloop_closure(res.best_rm) == []

    def test_reported_cost_matches_evaluate(self):
        tree = tree_of(TOY)
        res = local_search(tree, SearchConfig(u_max=3, t_max=30))
        assert res.best_cost == pytest.approx(evaluate(res.best_rm, tree).total, abs=1e-9)

    def test_trajectory_csv(self):
        res = local_search(tree_of(TOY), SearchConfig(u_max=2, t_max=3))
        lines = res.trajectory_csv().splitlines()
        assert lines[0] == "iteration,current_cost,best_cost,restarts"
        assert len(lines) == len(res.cost_trajectory) + 1


class TestTabu:
    def test_big_tabu_list_forces_restarts(self):
        res = tabu_search(tree_of(TOY), SearchConfig(u_max=2, t_max=200, tabu_size=10_000))
        assert res.restarts > 0

    def test_one_state_terminates(self):
        res = tabu_search(tree_of(TOY), SearchConfig(u_max=1, t_max=10))
        assert res.best_rm == single_state_rm()

    def test_tabu_size_one_allows_revisits(self):
        # with only the last machine tabu, A -> B -> A is allowed, so the run
        # keeps moving instead of restarting
        res = tabu_search(tree_of([(A, B)]), SearchConfig(u_max=2, t_max=30, tabu_size=1))
        assert res.restarts == 0


class TestRunSearch:
    def test_dispatch(self):
        tree = tree_of(TOY)
        cfg = SearchConfig(u_max=2, t_max=10)
        for m in ("ls", "ts", "exact"):
            assert run_search(m, tree, cfg).best_cost >= 0

    def test_unknown_method(self):
        from lrm.rm import ContractError

        with pytest.raises(ContractError):
            run_search("sa", tree_of(TOY), SearchConfig())

    def test_invalid_config(self):
        from lrm.rm import ContractError

        with pytest.raises(ContractError):
            SearchConfig(u_max=0)

    def test_shared_evaluator(self):
        tree = tree_of(TOY)
        ev = TreeEvaluator(tree)
        a = local_search(tree, SearchConfig(u_max=2, t_max=10), evaluator=ev)
        b = local_search(tree, SearchConfig(u_max=2, t_max=10))
        assert a.best_cost == b.best_cost
