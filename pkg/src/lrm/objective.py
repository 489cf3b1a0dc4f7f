"""Exact LRM objective over a prefix tree.

Index alignment: a node at depth d >= 1 stands for the prefix
(sigma_0 .. sigma_{d-1}) and holds the machine state x_{d-1}.  Depth-1 nodes
therefore hold the initial state (the first observation never moves the
machine) and deeper nodes hold ``delta(state(parent), o(node))``.  Node ``n``
scores ``weight[n] * ln |N(state(n), o(n))|`` where ``weight`` counts the
traces continuing past ``n``; summed over the tree this is exactly the
trace-by-trace objective.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .rm import Alphabet, ContractError, RewardMachine, transition
from .traces import PrefixTree

# Cap on booleans materialised per batch chunk when counting prediction sets.
_TABLE_BUDGET = 1 << 24


class ClosureViolation(ContractError):
    pass


@dataclass(frozen=True)
class LrmCost:
    total: float
    per_node: dict | None = None


def check_selfloop_closure(rm: RewardMachine) -> list[tuple]:
    """Transitions (u, sigma) -> v whose target does not self-loop on sigma."""
    return [
        (u, sigma, v)
        for (u, sigma), v in rm.transitions.items()
        if transition(rm, v, sigma) != v
    ]


def closure_ok(delta: np.ndarray) -> bool:
    """Dense form of the self-loop closure check for a (U, S) table."""
    cols = np.arange(delta.shape[1])
    return bool(np.all(delta[delta, cols] == delta))


def table_of(rm: RewardMachine, sigma, num_states: int | None = None) -> np.ndarray:
    """Dense (U, |sigma|) successor table of ``rm``; other observations are ignored."""
    U = num_states or rm.num_states
    if rm.num_states > U:
        raise ContractError(f"machine has {rm.num_states} states, table has {U}")
    col = {s: i for i, s in enumerate(sigma)}
    delta = np.tile(np.arange(U, dtype=np.int64)[:, None], (1, max(len(col), 1)))
    for (u, s), v in rm.transitions.items():
        if s in col:
            delta[u, col[s]] = v
    return delta


def machine_of(delta: np.ndarray, sigma) -> RewardMachine:
    U = delta.shape[0]
    trans = {
        (u, sigma[j]): int(delta[u, j])
        for u in range(U)
        for j in range(len(sigma))
        if delta[u, j] != u
    }
    return RewardMachine(U, trans)


@numba.njit(cache=True)
def _batch_costs(deltas, order, parent, obs, root, node_w):
    # one pass per table: assign states top-down, mark each witnessed
    # (state, obs, next obs) triple, and pool node weights per (state, obs)
    K, U, S = deltas.shape
    n = parent.shape[0]
    logs = np.log(np.maximum(np.arange(S + 1), 1))
    out = np.empty(K)
    states = np.zeros(n, dtype=np.int64)
    seen = np.zeros((U * S, S), dtype=np.bool_)
    sizes = np.zeros(U * S, dtype=np.int64)
    pooled = np.zeros(U * S)
    for k in range(K):
        d = deltas[k]
        seen[:] = False
        sizes[:] = 0
        pooled[:] = 0.0
        for node in order:
            p = parent[node]
            if p == root:
                states[node] = 0
            else:
                sp = states[p]
                states[node] = d[sp, obs[node]]
                key = sp * S + obs[p]
                if not seen[key, obs[node]]:
                    seen[key, obs[node]] = True
                    sizes[key] += 1
            pooled[states[node] * S + obs[node]] += node_w[node]
        c = 0.0
        for key in range(U * S):
            if pooled[key] > 0.0:
                c += pooled[key] * logs[sizes[key]]
        out[k] = c
    return out


class TreeEvaluator:
    """Prefix tree flattened to arrays for fast repeated evaluation.

    ``sigma`` fixes the column order of transition tables; by default it is
    the sorted set of observations in the tree.
    """

    def __init__(self, tree: PrefixTree, sigma=None):
        self.tree = tree
        self.sigma = list(tree.observations if sigma is None else sigma)
        col = {s: i for i, s in enumerate(self.sigma)}
        missing = set(tree.observations) - set(col)
        if missing:
            raise ContractError(f"observations {sorted(missing)} not in the alphabet")
        self.num_sigma = S = max(len(self.sigma), 1)
        n = len(tree)
        self.obs = np.array([0] + [col[o] for o in tree.obs[1:]], dtype=np.int64)
        parent = np.array(tree.parent, dtype=np.int64)
        depth = np.array(tree.depth, dtype=np.int64)
        weight = np.array(tree.weight, dtype=np.float64)

        order = np.argsort(depth, kind="stable")
        bounds = np.searchsorted(depth[order], np.arange(2, depth.max(initial=0) + 2))
        self.levels = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            nodes = order[lo:hi]
            self.levels.append((nodes, parent[nodes], self.obs[nodes]))

        child = np.arange(1, n)
        src = parent[child]
        keep = src != tree.root
        self.edge_src = src[keep]
        self.edge_key = self.obs[self.edge_src] * S + self.obs[child[keep]]
        self.order = order[depth[order] >= 1]
        self.parent = parent
        self.scored = np.flatnonzero(weight > 0)
        self.scored = self.scored[self.scored != tree.root]
        self.scored_w = weight[self.scored]
        self.node_w = np.zeros(n)
        self.node_w[self.scored] = self.scored_w
        self.num_nodes = n

    # -- evaluation

    def states(self, deltas: np.ndarray) -> np.ndarray:
        """Machine state at every node, one row per transition table."""
        K, U, S = deltas.shape
        flat = deltas.reshape(K, U * S)
        states = np.zeros((K, self.num_nodes), dtype=np.int64)
        for nodes, parents, obs in self.levels:
            idx = states[:, parents] * S + obs
            states[:, nodes] = np.take_along_axis(flat, idx, axis=1)
        return states

    def set_sizes(self, states: np.ndarray, U: int) -> np.ndarray:
        """|N_{u,sigma}| for every (u, sigma), shape (K, U*S)."""
        K = states.shape[0]
        S = self.num_sigma
        M = U * S * S
        keys = states[:, self.edge_src] * (S * S) + self.edge_key
        sizes = np.empty((K, U * S), dtype=np.int64)
        chunk = max(1, _TABLE_BUDGET // max(M, 1))
        for lo in range(0, K, chunk):
            hi = min(K, lo + chunk)
            table = np.zeros((hi - lo, M), dtype=bool)
            rows = np.arange(hi - lo)[:, None]
            table[rows, keys[lo:hi]] = True
            sizes[lo:hi] = table.reshape(hi - lo, U * S, S).sum(axis=2)
        return sizes

    def costs(self, deltas: np.ndarray, fast: bool = True) -> np.ndarray:
        """Objective for a batch of (U, S) transition tables.

        ``fast=False`` uses the vectorised numpy path instead of the compiled
        loop; both give the same numbers.
        """
        deltas = np.asarray(deltas, dtype=np.int64)
        if deltas.ndim == 2:
            deltas = deltas[None]
        K, U, S = deltas.shape
        if S != self.num_sigma:
            raise ContractError(f"table has {S} columns, tree alphabet has {self.num_sigma}")
        if not len(self.scored):
            return np.zeros(K)
        if fast:
            return _batch_costs(
                np.ascontiguousarray(deltas), self.order, self.parent, self.obs, self.tree.root, self.node_w
            )
        states = self.states(deltas)
        sizes = self.set_sizes(states, U)
        idx = states[:, self.scored] * S + self.obs[self.scored]
        n = np.take_along_axis(sizes, idx, axis=1)
        return np.log(n) @ self.scored_w

    def cost(self, delta: np.ndarray) -> float:
        return float(self.costs(delta)[0])


def evaluate(
    rm: RewardMachine,
    tree: PrefixTree,
    alphabet: Alphabet | None = None,
    per_node: bool = False,
) -> LrmCost:
    """LRM cost of ``rm`` on the corpus summarised by ``tree`` (natural log).

    Raises ``ClosureViolation`` when the tree comes from compressed traces
    and ``rm`` leaves a state on the observation that entered it.
    """
    if alphabet is not None:
        bad = [s for s in tree.observations if not alphabet.covers(s)]
        if bad:
            raise ContractError(f"observations {bad} not covered by {alphabet!r}")
    if tree.compressed:
        violations = check_selfloop_closure(rm)
        if violations:
            raise ClosureViolation(f"machine violates self-loop closure: {violations[:3]}")
    ev = TreeEvaluator(tree)
    delta = table_of(rm, ev.sigma)
    if not per_node:
        return LrmCost(ev.cost(delta))
    states = ev.states(delta[None])
    sizes = ev.set_sizes(states, rm.num_states)[0]
    st = states[0]
    parts = {
        int(n): float(w * np.log(sizes[st[n] * ev.num_sigma + ev.obs[n]]))
        for n, w in zip(ev.scored, ev.scored_w)
    }
    return LrmCost(float(sum(parts.values())), parts)
