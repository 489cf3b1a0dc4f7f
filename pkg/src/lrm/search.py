"""Local search with restarts, tabu search and exhaustive enumeration.

Candidate machines are dense ``(u_max, |Sigma|)`` integer tables where entry
``[u, j]`` is the successor of state ``u`` on the j-th observation of the
corpus alphabet.  A table entry equal to its row index is a self-loop (an
absent transition), so every table is a distinct machine and the
neighbourhood "add / remove / retarget one transition" is "change one entry".
"""
from __future__ import annotations

import itertools
import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .objective import TreeEvaluator, closure_ok, machine_of, table_of
from .rm import ContractError, RewardMachine
from .traces import PrefixTree

log = logging.getLogger(__name__)

# Improvements smaller than this are treated as floating-point noise.
TOL = 1e-9

DEFAULT_ENUMERATION_BUDGET = 2_000_000


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class SearchConfig:
    u_max: int = 10
    t_max: int = 100
    tabu_size: int = 100
    seed: int = 0
    compressed_mode: bool = False
    wall_clock_limit: float | None = None

    def __post_init__(self):
        if self.u_max < 1 or self.t_max < 1 or self.tabu_size < 1:
            raise ContractError(f"invalid search config {self}")


@dataclass
class SearchResult:
    best_rm: RewardMachine
    best_cost: float
    iterations_used: int
    restarts: int
    evaluations: int = 0
    # rows of (iteration, current cost, best cost, restarts)
    cost_trajectory: list = field(default_factory=list)

    def trajectory_csv(self) -> str:
        rows = ["iteration,current_cost,best_cost,restarts"]
        rows += [f"{t},{c!r},{b!r},{r}" for t, c, b, r in self.cost_trajectory]
        return "\n".join(rows) + "\n"


# ---------------------------------------------------------------- moves


def repair_closure(delta: np.ndarray) -> np.ndarray:
    """Force delta[v, j] = v wherever some state enters v on observation j.

    Only ever turns transitions into self-loops, so tables that already
    satisfy the closure are returned unchanged.
    """
    delta = delta.copy()
    U, S = delta.shape
    changed = True
    while changed:
        changed = False
        for j in range(S):
            for u in range(U):
                v = delta[u, j]
                if v != u and delta[v, j] != v:
                    delta[v, j] = v
                    changed = True
    return delta


def sample_delta(u_max: int, num_sigma: int, rng, compressed_mode=False) -> np.ndarray:
    """Uniform random table (each entry uniform over the states)."""
    delta = rng.integers(0, u_max, size=(u_max, num_sigma))
    if compressed_mode:
        delta = repair_closure(delta)
    return delta


def neighbour_deltas(delta: np.ndarray, compressed_mode=False) -> np.ndarray:
    """All tables differing from ``delta`` in exactly one entry.

    Canonical order: by state, then observation column, then new target.
    """
    U, S = delta.shape
    if U == 1:
        return np.empty((0, U, S), dtype=delta.dtype)
    u, j, v = np.meshgrid(np.arange(U), np.arange(S), np.arange(U), indexing="ij")
    u, j, v = u.ravel(), j.ravel(), v.ravel()
    keep = v != delta[u, j]
    u, j, v = u[keep], j[keep], v[keep]
    out = np.repeat(delta[None], len(u), axis=0)
    out[np.arange(len(u)), u, j] = v
    if compressed_mode:
        out = out[_closure_mask(out)]
    return out


def _closure_mask(deltas: np.ndarray) -> np.ndarray:
    follow = np.take_along_axis(deltas, deltas, axis=1)
    return np.all(follow == deltas, axis=(1, 2))


def first_argmin(costs: np.ndarray) -> int:
    """Index of the first cost within TOL of the minimum."""
    return int(np.flatnonzero(costs <= costs.min() + TOL)[0])


def _key(delta: np.ndarray) -> bytes:
    return np.ascontiguousarray(delta, dtype=np.int64).tobytes()


def sample_random_rm(sigma, u_max: int, rng, compressed_mode=False) -> RewardMachine:
    sigma = list(sigma)
    if not sigma:
        raise ContractError("empty observation alphabet")
    return machine_of(sample_delta(u_max, len(sigma), rng, compressed_mode), sigma)


def neighbours(rm: RewardMachine, sigma, u_max: int, compressed_mode=False) -> list:
    sigma = list(sigma)
    base = table_of(rm, sigma, u_max)
    return [machine_of(d, sigma) for d in neighbour_deltas(base, compressed_mode)]


# ---------------------------------------------------------------- searches


class _Run:
    """Bookkeeping shared by both searches."""

    def __init__(self, tree, cfg, evaluator=None):
        self.cfg = cfg
        self.ev = evaluator or TreeEvaluator(tree)
        self.S = self.ev.num_sigma
        self.rng = np.random.default_rng(cfg.seed)
        self.best_cost = math.inf
        self.best = None
        self.t = 0
        self.restarts = 0
        self.evaluations = 0
        self.trajectory = []
        self.deadline = (
            time.monotonic() + cfg.wall_clock_limit if cfg.wall_clock_limit else None
        )

    def running(self) -> bool:
        if self.best is not None and self.deadline is not None and time.monotonic() > self.deadline:
            return False
        return self.t <= self.cfg.t_max

    def sample(self):
        delta = sample_delta(self.cfg.u_max, self.S, self.rng, self.cfg.compressed_mode)
        return delta, self.evaluate(delta[None])[0]

    def evaluate(self, deltas):
        self.evaluations += len(deltas)
        return self.ev.costs(deltas)

    def offer(self, delta, cost):
        if cost < self.best_cost - TOL:
            self.best_cost, self.best = float(cost), delta.copy()

    def log_row(self, cost):
        self.trajectory.append((self.t, float(cost), self.best_cost, self.restarts))

    def result(self) -> SearchResult:
        return SearchResult(
            best_rm=machine_of(self.best, self.ev.sigma),
            best_cost=self.best_cost,
            iterations_used=self.t,
            restarts=self.restarts,
            evaluations=self.evaluations,
            cost_trajectory=self.trajectory,
        )


def local_search(tree: PrefixTree, cfg: SearchConfig, evaluator=None) -> SearchResult:
    """Steepest descent over the one-entry neighbourhood, restarting from a
    fresh random machine at every local optimum; returns the best seen."""
    run = _Run(tree, cfg, evaluator)
    first = True
    while run.running():
        if not first:
            run.restarts += 1
        first = False
        prev = math.inf
        delta, c = run.sample()
        run.offer(delta, c)
        run.log_row(c)
        while run.running() and c < prev - TOL:
            run.t += 1
            prev = c
            cand = neighbour_deltas(delta, cfg.compressed_mode)
            if len(cand):
                costs = run.evaluate(cand)
                i = first_argmin(costs)
                if costs[i] < c - TOL:
                    c, delta = costs[i], cand[i]
            run.offer(delta, c)
            run.log_row(c)
    return run.result()


def tabu_search(tree: PrefixTree, cfg: SearchConfig, evaluator=None) -> SearchResult:
    """Always move to the best non-tabu neighbour (even uphill); the last
    ``tabu_size`` visited machines are tabu.  Restart once the whole
    neighbourhood is tabu."""
    run = _Run(tree, cfg, evaluator)
    tabu = deque()
    tabu_set = set()
    first = True
    while run.running():
        if not first:
            run.restarts += 1
        first = False
        delta, c = run.sample()
        run.offer(delta, c)
        run.log_row(c)
        if _key(delta) in tabu_set:
            # every reachable machine may already be tabu; spend an iteration
            # so the run still terminates
            run.t += 1
            continue
        while run.running() and _key(delta) not in tabu_set:
            run.t += 1
            c = math.inf
            k = _key(delta)
            tabu.append(k)
            tabu_set.add(k)
            if len(tabu) > cfg.tabu_size:
                tabu_set.discard(tabu.popleft())
            cand = neighbour_deltas(delta, cfg.compressed_mode)
            if len(cand):
                free = np.array([_key(d) not in tabu_set for d in cand], dtype=bool)
                cand = cand[free]
            if len(cand):
                costs = run.evaluate(cand)
                i = first_argmin(costs)
                c, delta = costs[i], cand[i]
            run.offer(delta, c)
            run.log_row(c)
    return run.result()


def exact_enumerate(
    tree: PrefixTree,
    u_max: int,
    compressed_mode: bool = False,
    budget: int = DEFAULT_ENUMERATION_BUDGET,
    evaluator=None,
    batch: int = 4096,
) -> SearchResult:
    """Evaluate every transition table with ``u_max`` states.

    Ties are broken by enumeration order, which is lexicographic in the
    flattened table.  Refuses (``BudgetExceeded``) rather than truncating.
    """
    ev = evaluator or TreeEvaluator(tree)
    S = ev.num_sigma
    slots = u_max * S
    count = u_max**slots
    if count > budget:
        raise BudgetExceeded(
            f"{count} machines to enumerate (u_max={u_max}, |Sigma|={S}) exceeds budget {budget}"
        )
    best_cost, best = math.inf, None
    evaluations = 0
    it = itertools.product(range(u_max), repeat=slots)
    while True:
        chunk = np.array(list(itertools.islice(it, batch)), dtype=np.int64)
        if not len(chunk):
            break
        deltas = chunk.reshape(-1, u_max, S)
        if compressed_mode:
            deltas = deltas[_closure_mask(deltas)]
        if not len(deltas):
            continue
        costs = ev.costs(deltas)
        evaluations += len(deltas)
        i = first_argmin(costs)
        if costs[i] < best_cost - TOL:
            best_cost, best = float(costs[i]), deltas[i].copy()
    assert best is not None and (not compressed_mode or closure_ok(best))
    return SearchResult(machine_of(best, ev.sigma), best_cost, count, 0, evaluations)


def run_search(method: str, tree: PrefixTree, cfg: SearchConfig, **kw) -> SearchResult:
    if method == "ls":
        return local_search(tree, cfg, **kw)
    if method == "ts":
        return tabu_search(tree, cfg, **kw)
    if method == "exact":
        return exact_enumerate(tree, cfg.u_max, cfg.compressed_mode, **kw)
    raise ContractError(f"unknown search method {method!r}")
