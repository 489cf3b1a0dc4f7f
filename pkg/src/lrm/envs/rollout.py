"""Recording environment rollouts as labelled traces."""
from __future__ import annotations

import numpy as np

from ..rm import Alphabet
from ..traces import LabelledTrace, TraceSet
from .domains import make
from .grid import ACTIONS


def random_policy(rng):
    def act(obs):
        return int(rng.integers(len(ACTIONS)))

    return act


def collect(domain: str, steps: int, seed: int = 0, policy=None) -> TraceSet:
    """Run ``steps`` environment steps and return one trace per episode.

    Episodes end at terminal events or the step cap; a final episode cut
    short by the step budget is kept as it is.  ``policy(obs) -> action``
    defaults to uniform random actions from a generator seeded by ``seed``.
    """
    env = make(domain, seed)
    alphabet = Alphabet(env.propositions)
    if policy is None:
        policy = random_policy(np.random.default_rng([seed, 1]))
    traces = []
    o = env.reset()
    obs, rewards = [env.label(None, None, o)], []
    for i in range(steps):
        a = policy(o)
        o2, r, done = env.step(a)
        obs.append(env.label(o, a, o2))
        rewards.append(r)
        o = o2
        if done or i == steps - 1:
            traces.append(LabelledTrace(tuple(obs), tuple(rewards)))
            if done and i < steps - 1:
                o = env.reset()
                obs, rewards = [env.label(None, None, o)], []
    meta = {"domain": env.domain, "steps": steps, "seed": seed}
    return TraceSet(alphabet, traces, meta)
