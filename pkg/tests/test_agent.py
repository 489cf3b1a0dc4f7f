import copy
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import A, B, C, machines, traces
from lrm.agent import LoopConfig, QTable, q_update, qrm_update, run_joint_loop, select_action
from lrm.envs import CookieEnv
from lrm.envs.fixtures import perfect_cookie_rm
from lrm.envs.rollout import collect
from lrm.rm import Alphabet, ContractError, RewardMachine, estimate_delta_r, prediction_sets
from lrm.traces import LabelledTrace, TraceSet

COOKIE = Alphabet(CookieEnv.propositions)


def sigma(*names):
    return COOKIE.encode(names)


class TestSelectAction:
    def test_uniform_when_always_exploring(self):
        rng = np.random.default_rng(0)
        q = QTable()
        q[("o", 0, 2)] = 5.0
        counts = Counter(select_action(q, "o", 0, 1.0, rng) for _ in range(8000))
        assert set(counts) == {0, 1, 2, 3}
        assert all(1800 < c < 2200 for c in counts.values())

    def test_ties_go_to_lowest_id(self):
        q = QTable(default=0.3)
        assert select_action(q, "o", 0, 0.0, None) == 0
        q.row("o", 0)
        assert select_action(q, "o", 0, 0.0, None) == 0

    def test_argmax(self):
        q = QTable()
        for a, v in enumerate((0, 1, 0, 0)):
            q[("o", 1, a)] = v
        assert select_action(q, "o", 1, 0.0, None) == 1
        assert select_action(q, "o", 0, 0.0, None) == 0


class TestQUpdate:
    def test_zero_learning_rate(self):
        q = QTable()
        q[("o", 0, 1)] = 0.5
        q_update(q, "o", 0, 1, 1.0, "p", 0, 0.9, 0.0, False)
        assert q["o", 0, 1] == 0.5

    def test_terminal_full_step(self):
        q = QTable()
        q_update(q, "o", 0, 2, 1.0, "p", 0, 0.9, 1.0, True)
        assert q["o", 0, 2] == 1.0

    def test_idempotent_at_fixed_point(self):
        q = QTable()
        q[("p", 1, 3)] = 2.0
        for _ in range(2):
            q_update(q, "o", 0, 0, 0.5, "p", 1, 0.9, 1.0, False)
            assert q["o", 0, 0] == pytest.approx(0.5 + 0.9 * 2.0)

    def test_bootstraps_from_next_state(self):
        q = QTable(default=1.0)
        q_update(q, "o", 0, 0, 0.0, "p", 1, 0.5, 0.5, False)
        assert q["o", 0, 0] == pytest.approx(0.75)


@pytest.fixture(scope="module")
def cookie_sets():
    ts = collect("cookie", 100_000, seed=0).compress()
    rm = perfect_cookie_rm(COOKIE)
    rm = rm.with_rewards(estimate_delta_r(rm, ts))
    return rm, prediction_sets(rm, ts)


class TestQRMUpdate:
    def test_single_state_matches_plain_update(self):
        ts = TraceSet(Alphabet("abc"), [LabelledTrace((A, B, A, C), (1.0, 0.0, 0.0))])
        rm = RewardMachine(1)
        rm = rm.with_rewards(estimate_delta_r(rm, ts))
        n = prediction_sets(rm, ts)
        q1, q2 = QTable(default=0.2), QTable(default=0.2)
        qrm_update(q1, rm, n, ("o", A, 3, 9.0, "p", B), 0.9, 0.5, False)
        q_update(q2, "o", 0, 3, rm.reward(0, B), "p", 0, 0.9, 0.5, False)
        assert q1.rows == q2.rows
        assert q1["o", 0, 3] == pytest.approx(0.2 + 0.5 * (1.0 + 0.9 * 0.2 - 0.2), abs=1e-5)

    def test_entering_green_room_with_cookie(self, cookie_sets):
        rm, n = cookie_sets
        q = QTable()
        qrm_update(q, rm, n, ("hall", sigma("R1"), 3, 0.0, "green", sigma("R0", "C")), 0.9, 0.1, False)
        touched = {u for (_, u) in q.rows}
        assert touched == {1, 2}
        assert q.peek("hall", 0) is None and q.peek("hall", 3) is None

    def test_unwitnessed_transition_updates_nothing(self, cookie_sets):
        rm, n = cookie_sets
        q = QTable()
        # no single step leads from the orange room into the green room
        qrm_update(q, rm, n, ("o", sigma("R3"), 0, 0.0, "p", sigma("R0", "C")), 0.9, 0.1, False)
        assert len(q) == 0

    @given(traces(), machines(), st.sampled_from([A, B, C]), st.sampled_from([A, B, C]))
    def test_filter_soundness(self, corpus, rm, s, s2):
        corpus = [LabelledTrace(t, (1.0,) * (len(t) - 1)) for t in corpus]
        n = prediction_sets(rm, corpus)
        rm = rm.with_rewards(estimate_delta_r(rm, corpus))
        q = QTable(default=0.5)
        for u in range(rm.num_states):
            q.row("o", u)
        before = copy.deepcopy(q.rows)
        qrm_update(q, rm, n, ("o", s, 1, 0.0, "p", s2), 0.9, 0.5, False)
        for u in range(rm.num_states):
            if not n.allows(u, s, s2):
                assert q.rows[("o", u)] == before[("o", u)]
            else:
                assert q.rows[("o", u)][1] != 0.5 or rm.reward(u, s2) + 0.9 * 0.5 == 0.5


class TestLoopConfig:
    @pytest.mark.parametrize(
        "kw", [{"gamma": 1.0}, {"gamma": 0.0}, {"epsilon": 1.5}, {"method": "bfs"}, {"t_train": -1}]
    )
    def test_rejects(self, kw):
        with pytest.raises(ContractError):
            LoopConfig(**kw)

    def test_defaults(self):
        cfg = LoopConfig()
        assert (cfg.u_max, cfg.t_max, cfg.tabu_size, cfg.t_w, cfg.epsilon, cfg.gamma) == (
            10, 100, 100, 200_000, 0.1, 0.9
        )


class TestJointLoop:
    def test_no_training_gives_empty_log(self):
        res = run_joint_loop("cookie", LoopConfig(t_w=2000, t_train=0))
        rm, q, log = res
        assert log == [] and len(q) == 0 and rm.num_states >= 1
        assert res.reward_csv() == "step,window_reward,relearns,rm_cost\n"

    def test_complete_corpus_never_relearns(self):
        # one state sees every gravity label pair within the warm-up
        cfg = LoopConfig(domain="gravity", u_max=1, t_w=20_000, t_train=20_000, t_max=5, log_every=5000)
        res = run_joint_loop(cfg=cfg)
        assert res.relearns == 0
        assert [row[2] for row in res.reward_log] == [0, 0, 0, 0]

    def test_adoptions_strictly_lower_cost(self):
        cfg = LoopConfig(t_w=3000, t_train=30_000, t_max=20, seed=1)
        res = run_joint_loop("cookie", cfg, check_every=1)
        assert res.adoptions
        for _, new, old in res.adoptions:
            assert new < old
        assert sum(r[2] for r in res.reward_log) == res.relearns
        assert res.q.all_finite()

    def test_fixed_machine_state_tracking(self):
        cfg = LoopConfig(t_w=0, t_train=20_000, qrm_enabled=False)
        res = run_joint_loop("cookie", cfg, rm=perfect_cookie_rm(), check_every=1)
        assert res.relearns == 0 and res.rm.transitions == perfect_cookie_rm().transitions

    def test_budget_exhaustion_warns(self, caplog):
        cfg = LoopConfig(t_w=500, t_train=5000, t_max=2, relearn_budget=0)
        with caplog.at_level("WARNING"):
            res = run_joint_loop("cookie", cfg)
        assert res.relearns == 0
        assert "exhausted" in caplog.text

    def test_deterministic(self):
        cfg = LoopConfig(t_w=2000, t_train=10_000, t_max=10, log_every=2000)
        a, b = run_joint_loop("cookie", cfg), run_joint_loop("cookie", cfg)
        assert a.reward_log == b.reward_log and a.q.rows == b.q.rows
