"""Reward machines over high-level observations.

A high-level observation is a truth assignment over a fixed, ordered set of
propositions.  It is stored as a plain ``int`` bit set (bit ``i`` set means
proposition ``i`` holds), which gives O(1) hashing and equality, a total
order, and arbitrary width for free.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

HighLevelObs = int

DEFAULT_EPSILON = 1e-6


class ContractError(ValueError):
    """An argument violates an operation's precondition."""


@dataclass(frozen=True)
class Proposition:
    id: int
    name: str


class Alphabet:
    """Ordered proposition set; converts between names and bit sets."""

    def __init__(self, names: Iterable[str]):
        names = list(names)
        if len(set(names)) != len(names):
            raise ContractError(f"duplicate proposition names in {names}")
        self.propositions = tuple(Proposition(i, n) for i, n in enumerate(names))
        self._index = {p.name: p.id for p in self.propositions}

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.propositions)

    def __len__(self):
        return len(self.propositions)

    def __iter__(self):
        return iter(self.propositions)

    def __eq__(self, other):
        return isinstance(other, Alphabet) and self.names == other.names

    def __hash__(self):
        return hash(self.names)

    def __repr__(self):
        return f"Alphabet({list(self.names)!r})"

    def encode(self, names: Iterable[str]) -> HighLevelObs:
        bits = 0
        for n in names:
            try:
                bits |= 1 << self._index[n]
            except KeyError:
                raise ContractError(f"unknown proposition {n!r}") from None
        return bits

    def decode(self, sigma: HighLevelObs) -> tuple[str, ...]:
        """Names of the true propositions, in alphabet order."""
        if sigma >> len(self.propositions):
            raise ContractError(f"observation {sigma:#x} wider than the alphabet")
        return tuple(p.name for p in self.propositions if sigma >> p.id & 1)

    def covers(self, sigma: HighLevelObs) -> bool:
        return sigma >= 0 and not sigma >> len(self.propositions)

    def label(self, sigma: HighLevelObs) -> str:
        return " ".join(self.decode(sigma)) or "{}"


@dataclass(frozen=True)
class RewardMachine:
    """Deterministic reward machine with initial state 0.

    ``transitions`` is partial; a missing ``(u, sigma)`` key is a self-loop.
    Explicit self-loops are dropped on construction so that two machines with
    the same behaviour compare equal.
    """

    num_states: int
    transitions: Mapping[tuple[int, HighLevelObs], int] = field(default_factory=dict)
    rewards: Mapping[tuple[int, HighLevelObs], float] = field(default_factory=dict)

    def __post_init__(self):
        if self.num_states < 1:
            raise ContractError("a reward machine needs at least one state")
        clean = {}
        for (u, sigma), v in self.transitions.items():
            if not (0 <= u < self.num_states and 0 <= v < self.num_states):
                raise ContractError(f"transition ({u}, {sigma}) -> {v} out of range")
            if u != v:
                clean[(u, sigma)] = v
        object.__setattr__(self, "transitions", dict(sorted(clean.items())))
        object.__setattr__(self, "rewards", dict(sorted(self.rewards.items())))

    initial = 0

    def __hash__(self):
        return hash((self.num_states, tuple(self.transitions.items())))

    def with_rewards(self, rewards: Mapping) -> "RewardMachine":
        return RewardMachine(self.num_states, self.transitions, rewards)

    def reward(self, u: int, sigma: HighLevelObs) -> float:
        return self.rewards.get((u, sigma), 0.0)


def single_state_rm() -> RewardMachine:
    return RewardMachine(1)


def transition(rm: RewardMachine, u: int, sigma: HighLevelObs) -> int:
    if not 0 <= u < rm.num_states:
        raise ContractError(f"state {u} out of range for a {rm.num_states}-state machine")
    return rm.transitions.get((u, sigma), u)


def run_trace(rm: RewardMachine, obs_seq: Sequence[HighLevelObs]) -> list[int]:
    """States x_0..x_T visited while reading ``obs_seq``.

    x_0 is the initial state and the first observation does not move the
    machine: x_t = transition(x_{t-1}, obs_seq[t]) for t >= 1.
    """
    obs_seq = getattr(obs_seq, "obs_seq", obs_seq)
    if not len(obs_seq):
        return []
    delta = rm.transitions
    u = rm.initial
    states = [u]
    for sigma in obs_seq[1:]:
        u = delta.get((u, sigma), u)
        states.append(u)
    return states


@dataclass(frozen=True)
class PredictionSets:
    """Next observations seen after each ``(state, observation)`` pair."""

    entries: Mapping[tuple[int, HighLevelObs], frozenset]
    counts: Mapping[tuple[int, HighLevelObs], int]
    # Built from compressed traces: a repeated observation is never recorded
    # there, and under self-loop closure the machine ignores it, so repeats
    # always count as witnessed.
    compressed: bool = False

    def __contains__(self, key):
        return key in self.entries

    def get(self, u: int, sigma: HighLevelObs) -> frozenset:
        return self.entries.get((u, sigma), frozenset())

    def allows(self, u: int, sigma: HighLevelObs, nxt: HighLevelObs) -> bool:
        if self.compressed and nxt == sigma:
            return True
        return nxt in self.entries.get((u, sigma), ())


def _obs_sequences(corpus) -> list:
    return [getattr(t, "obs_seq", t) for t in getattr(corpus, "traces", corpus)]


def prediction_sets(rm: RewardMachine, corpus) -> PredictionSets:
    """Collect N_{u,sigma} by running ``rm`` over every trace of ``corpus``.

    ``corpus`` may be a TraceSet, a list of LabelledTrace, or a list of plain
    observation sequences.
    """
    entries = defaultdict(set)
    counts = defaultdict(int)
    for obs in _obs_sequences(corpus):
        states = run_trace(rm, obs)
        for t in range(len(obs) - 1):
            key = (states[t], obs[t])
            entries[key].add(obs[t + 1])
            counts[key] += 1
    traces = getattr(corpus, "traces", corpus)
    compressed = bool(traces) and all(getattr(t, "compressed", False) for t in traces)
    return PredictionSets(
        {k: frozenset(v) for k, v in entries.items()},
        dict(counts),
        compressed,
    )


def estimate_delta_r(rm: RewardMachine, corpus, eps: float = DEFAULT_EPSILON) -> dict:
    """Empirical mean reward for entering each observation from each state.

    ``corpus`` must carry rewards (TraceSet or list of LabelledTrace); the
    reward of step t+1 is attributed to (x_t, obs[t+1]).  The ``eps`` in the
    denominator shrinks rarely seen pairs slightly towards zero.
    """
    if eps <= 0:
        raise ContractError("eps must be positive")
    total = defaultdict(float)
    seen = defaultdict(int)
    for tr in getattr(corpus, "traces", corpus):
        states = run_trace(rm, tr.obs_seq)
        for t, r in enumerate(tr.reward_seq):
            key = (states[t], tr.obs_seq[t + 1])
            total[key] += r
            seen[key] += 1
    return {k: total[k] / (seen[k] + eps) for k in seen}


def naive_cost(corpus) -> float:
    """Flat LRM cost of ``corpus`` under the single-state machine."""
    return flat_cost(single_state_rm(), corpus)


def flat_cost(rm: RewardMachine, corpus) -> float:
    """LRM objective summed trace by trace, without a prefix tree.

    Kept deliberately simple: it is the reference the tree evaluator is
    checked against.
    """
    n = prediction_sets(rm, corpus)
    cost = 0.0
    for obs in _obs_sequences(corpus):
        states = run_trace(rm, obs)
        for t in range(len(obs) - 1):
            cost += math.log(len(n.entries[(states[t], obs[t])]))
    return cost


# ---------------------------------------------------------------- export


def to_dot(rm: RewardMachine, alphabet: Alphabet) -> str:
    lines = ["digraph rm {", "  rankdir=LR;", '  start [shape=point];']
    for u in range(rm.num_states):
        shape = "doublecircle" if u == rm.initial else "circle"
        lines.append(f'  {u} [shape={shape}, label="u{u}"];')
    lines.append(f"  start -> {rm.initial};")
    edges = defaultdict(list)
    for (u, sigma), v in rm.transitions.items():
        edges[u, v].append(f"<{alphabet.label(sigma)}, {rm.reward(u, sigma):.3g}>")
    for (u, v), labels in sorted(edges.items()):
        text = "; ".join(labels).replace('"', r"\"")
        lines.append(f'  {u} -> {v} [label="{text}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_json(rm: RewardMachine, alphabet: Alphabet) -> dict:
    """Canonical JSON-able form; observations are sorted proposition lists."""

    def obs(sigma):
        return sorted(alphabet.decode(sigma))

    def key(item):
        (u, sigma), _ = item
        return (u, obs(sigma))

    return {
        "alphabet": list(alphabet.names),
        "num_states": rm.num_states,
        "initial": rm.initial,
        "transitions": [
            {"from": u, "obs": obs(s), "to": v}
            for (u, s), v in sorted(rm.transitions.items(), key=key)
        ],
        "rewards": [
            {"state": u, "obs": obs(s), "reward": r}
            for (u, s), r in sorted(rm.rewards.items(), key=key)
        ],
    }


def from_json(data: dict) -> tuple[RewardMachine, Alphabet]:
    alphabet = Alphabet(data["alphabet"])
    transitions = {
        (t["from"], alphabet.encode(t["obs"])): t["to"] for t in data["transitions"]
    }
    rewards = {
        (r["state"], alphabet.encode(r["obs"])): float(r["reward"])
        for r in data.get("rewards", [])
    }
    return RewardMachine(data["num_states"], transitions, rewards), alphabet


def dumps(rm: RewardMachine, alphabet: Alphabet) -> str:
    return json.dumps(to_json(rm, alphabet), sort_keys=True, indent=1)
