"""Tabular Q-learning over (observation, machine state) and the joint loop
that learns a reward machine and a policy together."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .envs import make
from .envs.grid import ACTIONS
from .envs.rollout import collect
from .objective import TreeEvaluator, table_of
from .rm import (
    ContractError,
    PredictionSets,
    RewardMachine,
    estimate_delta_r,
    prediction_sets,
    run_trace,
    transition,
)
from .search import TOL, SearchConfig, run_search
from .traces import LabelledTrace, TraceSet, build_prefix_tree, compress

log = logging.getLogger(__name__)

NUM_ACTIONS = len(ACTIONS)


class QTable:
    """Map (observation, state, action) -> value; unseen entries read as
    ``default``.  Rows of action values are stored per (observation, state)."""

    def __init__(self, num_actions: int = NUM_ACTIONS, default: float = 0.0):
        self.num_actions = num_actions
        self.default = default
        self.rows: dict = {}

    def row(self, o, u) -> list:
        r = self.rows.get((o, u))
        if r is None:
            r = self.rows[(o, u)] = [self.default] * self.num_actions
        return r

    def peek(self, o, u):
        return self.rows.get((o, u))

    def __getitem__(self, key) -> float:
        o, u, a = key
        r = self.rows.get((o, u))
        return self.default if r is None else r[a]

    def __setitem__(self, key, value):
        o, u, a = key
        self.row(o, u)[a] = float(value)

    def __len__(self):
        return len(self.rows)

    def max_value(self, o, u) -> float:
        r = self.rows.get((o, u))
        return self.default if r is None else max(r)

    def all_finite(self) -> bool:
        return all(math.isfinite(v) for r in self.rows.values() for v in r)


def select_action(q: QTable, o, u: int, epsilon: float, rng) -> int:
    """Epsilon-greedy; greedy ties go to the lowest action id."""
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(q.num_actions))
    r = q.peek(o, u)
    if r is None:
        return 0
    return r.index(max(r))


def q_update(q: QTable, o, u, a, r, o2, u2, gamma, alpha, done):
    row = q.row(o, u)
    target = r if done else r + gamma * q.max_value(o2, u2)
    row[a] += alpha * (target - row[a])


def qrm_update(q: QTable, rm: RewardMachine, n: PredictionSets, experience, gamma, alpha, done):
    """Counterfactual update of every machine state that has witnessed the
    observed high-level transition.

    ``experience`` is ``(o, sigma, a, r_env, o2, sigma2)``; the environment
    reward is ignored in favour of the machine's reward estimates.
    """
    o, sigma, a, _r_env, o2, sigma2 = experience
    for u in range(rm.num_states):
        if not n.allows(u, sigma, sigma2):
            continue
        u2 = transition(rm, u, sigma2)
        q_update(q, o, u, a, rm.reward(u, sigma2), o2, u2, gamma, alpha, done)


# ---------------------------------------------------------------- joint loop


@dataclass(frozen=True)
class LoopConfig:
    domain: str = "cookie"
    u_max: int = 10
    t_w: int = 200_000
    t_train: int = 2_000_000
    epsilon: float = 0.1
    gamma: float = 0.9
    alpha: float = 0.1
    # value of unseen (observation, state, action) entries; optimistic values
    # make the greedy policy try untested actions
    q_init: float = 1.0
    method: str = "ls"
    t_max: int = 100
    tabu_size: int = 100
    compressed_mode: bool = True
    qrm_enabled: bool = True
    relearn_budget: int = 100
    seed: int = 0
    log_every: int = 10_000

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ContractError("gamma must lie in (0, 1)")
        if not 0 <= self.epsilon <= 1:
            raise ContractError("epsilon must lie in [0, 1]")
        if self.method not in ("ls", "ts", "exact"):
            raise ContractError(f"unknown search method {self.method!r}")
        if self.t_w < 0 or self.t_train < 0 or self.relearn_budget < 0 or self.log_every < 1:
            raise ContractError("step counts and budgets must be non-negative")

    def search_config(self) -> SearchConfig:
        return SearchConfig(
            u_max=self.u_max,
            t_max=self.t_max,
            tabu_size=self.tabu_size,
            seed=self.seed,
            compressed_mode=self.compressed_mode,
        )


@dataclass
class LoopResult:
    rm: RewardMachine
    q: QTable
    # rows of (step, reward in window, relearns in window, current machine cost)
    reward_log: list
    corpus: TraceSet
    relearns: int = 0
    # (step, cost of the adopted machine, cost of the machine it replaced),
    # both on the corpus at adoption time
    adoptions: list = field(default_factory=list)
    episode_rewards: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.rm, self.q, self.reward_log))

    def reward_csv(self) -> str:
        rows = ["step,window_reward,relearns,rm_cost"]
        rows += [f"{s},{r!r},{k},{c!r}" for s, r, k, c in self.reward_log]
        return "\n".join(rows) + "\n"


class _Learner:
    """Holds the corpus and the current machine with its statistics."""

    def __init__(self, cfg: LoopConfig, corpus: TraceSet, rm: RewardMachine | None):
        self.cfg = cfg
        self.corpus = corpus
        self.fixed = rm is not None
        self.rm = rm if rm is not None else self._search()[0]
        self.refresh()

    def _tree(self):
        return build_prefix_tree(self.corpus)

    def _search(self):
        tree = self._tree()
        if not tree.observations:
            return RewardMachine(1), 0.0
        res = run_search(self.cfg.method, tree, self.cfg.search_config())
        return res.best_rm, res.best_cost

    def cost(self, rm=None) -> float:
        tree = self._tree()
        if not tree.observations:
            return 0.0
        ev = TreeEvaluator(tree)
        return ev.cost(table_of(rm or self.rm, ev.sigma))

    def refresh(self):
        self.n = prediction_sets(self.rm, self.corpus)
        self.rm = self.rm.with_rewards(estimate_delta_r(self.rm, self.corpus))
        self._cost = None

    @property
    def current_cost(self) -> float:
        # rebuilding the tree is the expensive part, so only on demand
        if self._cost is None:
            self._cost = self.cost()
        return self._cost

    def add(self, trace: LabelledTrace):
        self.corpus.traces.append(compress(trace) if self.cfg.compressed_mode else trace)

    def relearn(self):
        """Search again on the grown corpus; returns (old, new) costs if the
        new machine was adopted, else None."""
        old = self.cost()
        cand, new = self._search()
        if new < old - TOL:
            self.rm = cand
            self.refresh()
            return old, self.current_cost
        self.refresh()
        return None


def run_joint_loop(
    domain: str | None = None,
    cfg: LoopConfig | None = None,
    rm: RewardMachine | None = None,
    check_every: int = 0,
) -> LoopResult:
    """Learn a reward machine from random warm-up traces, then run
    Q-learning, relearning the machine whenever it fails to predict.

    Passing ``rm`` fixes the machine: no search and no relearning.
    ``check_every > 0`` re-runs the machine over the episode so far every
    that many steps and raises if the tracked state disagrees.
    """
    cfg = cfg or LoopConfig()
    domain = domain or cfg.domain
    env = make(domain, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 2])
    warm = collect(domain, cfg.t_w, cfg.seed)
    if cfg.compressed_mode:
        warm = warm.compress()
    learner = _Learner(cfg, warm, rm)
    q = QTable(default=cfg.q_init)
    result = LoopResult(learner.rm, q, [], learner.corpus)
    if cfg.t_train == 0:
        return result

    warned = False
    window_reward, window_relearns = 0.0, 0
    o = env.reset()
    sigma = env.label(None, None, o)
    u = 0
    ep_obs, ep_rew = [sigma], []
    ep_total = 0.0
    for step in range(cfg.t_train):
        cur = learner.rm
        a = select_action(q, o, u, cfg.epsilon, rng)
        o2, r, done = env.step(a)
        sigma2 = env.label(o, a, o2)
        u2 = transition(cur, u, sigma2)
        if cfg.qrm_enabled:
            qrm_update(q, cur, learner.n, (o, sigma, a, r, o2, sigma2), cfg.gamma, cfg.alpha, done)
        else:
            q_update(q, o, u, a, r, o2, u2, cfg.gamma, cfg.alpha, done)
        ep_obs.append(sigma2)
        ep_rew.append(r)
        ep_total += r
        window_reward += r

        watch = cfg.qrm_enabled or not learner.fixed
        if watch and not learner.n.allows(u, sigma, sigma2):
            learner.add(LabelledTrace(tuple(ep_obs), tuple(ep_rew)))
            if learner.fixed:
                learner.refresh()
            elif result.relearns < cfg.relearn_budget:
                result.relearns += 1
                window_relearns += 1
                adopted = learner.relearn()
                if adopted:
                    result.adoptions.append((step, adopted[1], adopted[0]))
                    q = QTable(default=cfg.q_init)
                done = True
            else:
                # keep the machine but let its statistics see the new trace,
                # otherwise the filter keeps skipping the true state
                if not warned:
                    log.warning("relearn budget of %d exhausted; keeping the current machine", cfg.relearn_budget)
                    warned = True
                learner.refresh()

        o, sigma, u = o2, sigma2, u2
        if check_every and step % check_every == 0 and not done:
            if run_trace(learner.rm, ep_obs)[-1] != u:
                raise RuntimeError(f"machine state drifted at step {step}")
        if done:
            result.episode_rewards.append(ep_total)
            o = env.reset()
            sigma = env.label(None, None, o)
            u = 0
            ep_obs, ep_rew, ep_total = [sigma], [], 0.0
        if (step + 1) % cfg.log_every == 0:
            result.reward_log.append((step + 1, window_reward, window_relearns, learner.current_cost))
            window_reward, window_relearns = 0.0, 0

    result.rm, result.q = learner.rm, q
    return result


def greedy_episode_reward(domain: str, rm: RewardMachine, q: QTable, seed: int, epsilon=0.0) -> float:
    """Reward of one episode following ``q`` (ties to the lowest action)."""
    env = make(domain, seed)
    rng = np.random.default_rng([seed, 3])
    o = env.reset()
    u, total, done = 0, 0.0, False
    while not done:
        a = select_action(q, o, u, epsilon, rng)
        o2, r, done = env.step(a)
        u = transition(rm, u, env.label(o, a, o2))
        o = o2
        total += r
    return total
