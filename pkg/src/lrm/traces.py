"""Labelled traces, compression, prefix trees and trace-file I/O."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .rm import Alphabet, ContractError, HighLevelObs

FORMAT_VERSION = 1


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class RawStep:
    """One environment interaction: the action taken, the reward received and
    the observation that followed."""

    action: int
    reward: float
    obs: object


@dataclass(frozen=True)
class LabelledTrace:
    """High-level observations sigma_0..sigma_T and the rewards r_1..r_T.

    ``reward_seq[t]`` is the reward received on the step into
    ``obs_seq[t + 1]``.
    """

    obs_seq: tuple[HighLevelObs, ...]
    reward_seq: tuple[float, ...] = ()
    compressed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "obs_seq", tuple(self.obs_seq))
        rewards = tuple(float(r) for r in self.reward_seq)
        if not rewards and len(self.obs_seq) > 1:
            rewards = (0.0,) * (len(self.obs_seq) - 1)
        if self.obs_seq and len(rewards) != len(self.obs_seq) - 1:
            raise ContractError(
                f"{len(rewards)} rewards for {len(self.obs_seq)} observations"
            )
        object.__setattr__(self, "reward_seq", rewards)

    def __len__(self):
        return len(self.obs_seq)

    @property
    def total_reward(self) -> float:
        return sum(self.reward_seq)


@dataclass
class TraceSet:
    alphabet: Alphabet
    traces: list[LabelledTrace] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    @property
    def observations(self) -> list[HighLevelObs]:
        """Sorted distinct observations occurring in the corpus (Sigma)."""
        return sorted({s for t in self.traces for s in t.obs_seq})

    @property
    def num_observations(self) -> int:
        return sum(len(t) for t in self.traces)

    @property
    def compressed(self) -> bool | None:
        flags = {t.compressed for t in self.traces}
        if len(flags) > 1:
            raise ConfigurationError("corpus mixes compressed and uncompressed traces")
        return flags.pop() if flags else None

    def compress(self) -> "TraceSet":
        return TraceSet(self.alphabet, [compress(t) for t in self.traces], dict(self.meta))


def label_trace(
    raw: Sequence[RawStep],
    labeller: Callable[[object, object, object], HighLevelObs],
    o0,
) -> LabelledTrace:
    """Turn an episode into a labelled trace.

    ``labeller(o, a, o2)`` is called with ``(None, None, o0)`` for the first
    observation.
    """
    obs = [labeller(None, None, o0)]
    prev = o0
    for step in raw:
        obs.append(labeller(prev, step.action, step.obs))
        prev = step.obs
    return LabelledTrace(tuple(obs), tuple(s.reward for s in raw))


def compress(trace: LabelledTrace) -> LabelledTrace:
    """Collapse runs of repeated observations from index 1 on.

    The first observation is always kept verbatim (so ``(a, a, a)`` becomes
    ``(a, a)``).  Rewards earned inside a collapsed run are added to the step
    that survives, which keeps the trace total unchanged.
    """
    if trace.compressed or len(trace) <= 1:
        return LabelledTrace(trace.obs_seq, trace.reward_seq, compressed=True)
    obs = list(trace.obs_seq[:2])
    rewards = [trace.reward_seq[0]]
    for sigma, r in zip(trace.obs_seq[2:], trace.reward_seq[1:]):
        if sigma == obs[-1]:
            rewards[-1] += r
        else:
            obs.append(sigma)
            rewards.append(r)
    return LabelledTrace(tuple(obs), tuple(rewards), compressed=True)


# ---------------------------------------------------------------- prefix tree


@dataclass
class PrefixTree:
    """Trie over the corpus; node 0 is the root (the empty prefix).

    Node ids are dense and follow insertion order.  ``weight[n]`` is the
    counter bumped each time a trace leaves ``n`` towards a child, so it counts
    traces that *continue* past ``n``; ``visits[n]`` counts traces whose
    prefix reaches ``n`` at all (they differ only by traces ending at ``n``).
    """

    parent: list[int] = field(default_factory=lambda: [-1])
    obs: list[HighLevelObs] = field(default_factory=lambda: [-1])
    depth: list[int] = field(default_factory=lambda: [0])
    weight: list[int] = field(default_factory=lambda: [0])
    visits: list[int] = field(default_factory=lambda: [0])
    children: list[dict] = field(default_factory=lambda: [{}])
    compressed: bool = False
    root: int = 0

    def __len__(self):
        return len(self.parent)

    def _add_child(self, n: int, sigma: HighLevelObs) -> int:
        c = len(self.parent)
        self.parent.append(n)
        self.obs.append(sigma)
        self.depth.append(self.depth[n] + 1)
        self.weight.append(0)
        self.visits.append(0)
        self.children.append({})
        self.children[n][sigma] = c
        return c

    def add(self, obs_seq: Sequence[HighLevelObs]):
        node = self.root
        self.visits[node] += 1
        for sigma in obs_seq:
            self.weight[node] += 1
            child = self.children[node].get(sigma)
            if child is None:
                child = self._add_child(node, sigma)
            node = child
            self.visits[node] += 1

    @property
    def observations(self) -> list[HighLevelObs]:
        return sorted(set(self.obs[1:]))

    def prefix(self, n: int) -> tuple[HighLevelObs, ...]:
        out = []
        while n != self.root:
            out.append(self.obs[n])
            n = self.parent[n]
        return tuple(reversed(out))

    def prefixes(self) -> list[tuple]:
        return [self.prefix(n) for n in range(len(self))]

    def inner_nodes(self) -> list[int]:
        return [n for n in range(1, len(self)) if self.children[n]]


def build_prefix_tree(corpus) -> PrefixTree:
    traces = list(getattr(corpus, "traces", corpus))
    flags = {getattr(t, "compressed", False) for t in traces}
    if len(flags) > 1:
        raise ConfigurationError("cannot build a prefix tree from mixed compressed/uncompressed traces")
    tree = PrefixTree(compressed=flags.pop() if flags else False)
    for t in traces:
        tree.add(getattr(t, "obs_seq", t))
    return tree


# ---------------------------------------------------------------- I/O


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _header(ts: TraceSet) -> dict:
    from . import __version__

    return {
        "type": "header",
        "format": FORMAT_VERSION,
        "alphabet": list(ts.alphabet.names),
        "tool_version": __version__,
        **ts.meta,
    }


def dump_traces(ts: TraceSet, fp):
    """Write ``ts`` as JSON lines: one header record, then one trace per line."""
    fp.write(json.dumps(_header(ts), sort_keys=True) + "\n")
    for t in ts.traces:
        rec = {
            "obs": [list(ts.alphabet.decode(s)) for s in t.obs_seq],
            "rewards": list(t.reward_seq),
            "compressed": t.compressed,
        }
        fp.write(json.dumps(rec) + "\n")


def load_traces(fp) -> TraceSet:
    lines = [ln for ln in fp if ln.strip()]
    if not lines:
        raise ConfigurationError("empty trace file (missing header)")
    header = json.loads(lines[0])
    if header.get("type") != "header":
        raise ConfigurationError("trace file does not start with a header record")
    alphabet = Alphabet(header["alphabet"])
    meta = {k: v for k, v in header.items() if k not in ("type", "format", "alphabet", "tool_version")}
    traces = []
    for ln in lines[1:]:
        rec = json.loads(ln)
        obs = tuple(alphabet.encode(names) for names in rec["obs"])
        traces.append(LabelledTrace(obs, tuple(rec["rewards"]), bool(rec.get("compressed", False))))
    return TraceSet(alphabet, traces, meta)


def save_traces(ts: TraceSet, path):
    with open(path, "w") as fp:
        dump_traces(ts, fp)


def read_traces(path) -> TraceSet:
    with open(path) as fp:
        return load_traces(fp)

