import itertools
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import A, AB, B, C, traces
from lrm.objective import evaluate, machine_of
from lrm.rm import RewardMachine, single_state_rm
from lrm.search import exact_enumerate, sample_random_rm
from lrm.models import (
    ModelBudgetExceeded,
    build_cp,
    build_milp,
    export_cp,
    export_milp,
    parse_cp,
    parse_lp,
    substitute_and_score,
    to_cp_text,
    to_lp,
)
from lrm.traces import LabelledTrace, build_prefix_tree

FIG_TREE = [(B,), (A, B), (A, C)]
TOY = [(A, B, A, C), (A, C, A, B), (B, C, B)]


def tree_of(corpus, compressed=False):
    return build_prefix_tree([LabelledTrace(t, compressed=compressed) for t in corpus])


class TestMilp:
    def test_one_state_forces_state_zero(self):
        tree = tree_of(FIG_TREE)
        model = build_milp(tree, 1)
        xs = [v for v in model.binaries if v.startswith("x_")]
        assert len(xs) == len(tree)
        # only the all-zero machine exists, and it is feasible
        res = substitute_and_score(model, single_state_rm())
        assert res.feasible
        assert res.objective == pytest.approx(evaluate(single_state_rm(), tree).total, abs=1e-6)

    def test_roundtrip_keeps_constraint_count(self):
        tree = tree_of(TOY)
        model = build_milp(tree, 2)
        back = parse_lp(to_lp(model))
        assert len(back.constraints) == len(model.constraints)
        assert back.counts() == model.counts()
        assert sorted(back.binaries) == sorted(model.binaries)

    def test_export_is_deterministic(self):
        assert export_milp(tree_of(TOY), 2, alphabet=AB) == export_milp(tree_of(TOY), 2, alphabet=AB)

    def test_header_records_cap(self):
        text = export_milp(tree_of(TOY), 2)
        assert re.search(r"^\\ m_cap: 3$", text, re.M)

    def test_lp_sections(self):
        text = export_milp(tree_of(TOY), 2)
        for section in ("Minimize", "Subject To", "Bounds", "Binaries", "End"):
            assert re.search(rf"^{section}$", text, re.M)

    def test_budget_refusal(self):
        with pytest.raises(ModelBudgetExceeded):
            build_milp(tree_of(TOY), 3, budget=10)

    def test_closure_violation_is_reported(self):
        tree = tree_of(TOY, compressed=True)
        model = build_milp(tree, 2, compressed_mode=True)
        bad = RewardMachine(2, {(0, A): 1, (1, A): 0})
        res = substitute_and_score(model, bad)
        assert not res.feasible
        assert res.violated == "closure"

    def test_no_closure_rows_when_uncompressed(self):
        assert "closure" not in build_milp(tree_of(TOY), 2).counts()


class TestCp:
    def test_one_state_domain(self):
        model = build_cp(tree_of(FIG_TREE), 1)
        assert set(model.domains.values()) == {(0, 0)}

    def test_no_if_then_when_uncompressed(self):
        text = export_cp(tree_of(TOY), 2)
        assert "if_then" not in text
        assert "if_then" in export_cp(tree_of(TOY, compressed=True), 2, compressed_mode=True)

    def test_roundtrip(self):
        model = build_cp(tree_of(TOY), 2)
        back = parse_cp(to_cp_text(model))
        assert back.domains == model.domains
        assert back.exprs == model.exprs
        assert back.objective == model.objective

    def test_substitution(self):
        tree = tree_of(TOY)
        rm = RewardMachine(2, {(0, B): 1, (1, A): 0})
        res = substitute_and_score(export_cp(tree, 2), rm)
        assert res.feasible
        assert res.objective == pytest.approx(evaluate(rm, tree).total, abs=1e-6)

    def test_closure_violation_is_infeasible(self):
        tree = tree_of(TOY, compressed=True)
        res = substitute_and_score(build_cp(tree, 2, compressed_mode=True), RewardMachine(2, {(0, A): 1, (1, A): 0}))
        assert not res.feasible


class TestConsistency:
    @settings(max_examples=25)
    @given(traces(max_len=6, max_traces=4), st.integers(1, 3), st.booleans(), st.integers(0, 10**6))
    def test_both_models_match_evaluate(self, corpus, u_max, compressed, seed):
        tree = build_prefix_tree([LabelledTrace(t) for t in corpus])
        if compressed:
            from lrm.traces import compress

            tree = build_prefix_tree([compress(LabelledTrace(t)) for t in corpus])
        milp = export_milp(tree, u_max, compressed_mode=compressed)
        cp = export_cp(tree, u_max, compressed_mode=compressed)
        rng = np.random.default_rng(seed)
        for _ in range(5):
            rm = sample_random_rm(tree.observations, u_max, rng, compressed_mode=compressed)
            want = evaluate(rm, tree).total
            m = substitute_and_score(milp, rm)
            c = substitute_and_score(cp, rm)
            assert m.feasible and c.feasible
            assert m.objective == pytest.approx(want, abs=1e-6)
            assert c.objective == pytest.approx(want, abs=1e-6)

    @pytest.mark.parametrize("compressed", [False, True])
    def test_exhaustive_substitution_minimum_is_exact_optimum(self, compressed):
        from lrm.traces import compress

        corpus = [LabelledTrace(t) for t in TOY]
        if compressed:
            corpus = [compress(t) for t in corpus]
        tree = build_prefix_tree(corpus)
        sigma = tree.observations
        milp, cp = build_milp(tree, 2, compressed_mode=compressed), build_cp(tree, 2, compressed_mode=compressed)
        best_m = best_c = float("inf")
        for flat in itertools.product(range(2), repeat=2 * len(sigma)):
            rm = machine_of(np.array(flat).reshape(2, len(sigma)), sigma)
            m, c = substitute_and_score(milp, rm), substitute_and_score(cp, rm)
            assert m.feasible == c.feasible
            if m.feasible:
                best_m, best_c = min(best_m, m.objective), min(best_c, c.objective)
        exact = exact_enumerate(tree, 2, compressed_mode=compressed).best_cost
        assert best_m == pytest.approx(exact, abs=1e-6)
        assert best_c == pytest.approx(exact, abs=1e-6)
