"""Hand-built reward machines and a scripted reference policy."""
from __future__ import annotations

from ..rm import Alphabet, RewardMachine, transition
from .domains import CookieEnv, GravityEnv
from .grid import BLUE, GREEN


def perfect_cookie_rm(alphabet: Alphabet | None = None) -> RewardMachine:
    """Four states: no cookie (0), cookie somewhere (1), cookie known to be
    in the green room (2) or in the blue room (3)."""
    ab = alphabet or Alphabet(CookieEnv.propositions)
    e = ab.encode
    bp = e(["R3", "BP"])
    trans = {
        (0, bp): 1,
        (1, e(["R0", "C"])): 2,
        (1, e(["R0"])): 3,
        (1, e(["R2", "C"])): 3,
        (1, e(["R2"])): 2,
        (2, e(["R0", "CE"])): 0,
        (2, bp): 1,
        (3, e(["R2", "CE"])): 0,
        (3, bp): 1,
    }
    return RewardMachine(4, trans)


def perfect_gravity_rm(alphabet: Alphabet | None = None) -> RewardMachine:
    """Two states tracking whether the force is on; the button toggles it."""
    ab = alphabet or Alphabet(GravityEnv.propositions)
    bp = ab.encode(["BP"])
    return RewardMachine(2, {(0, bp): 1, (1, bp): 0})


class ScriptedCookiePolicy:
    """Near-optimal cookie-domain controller that reads the perfect machine's
    state: press the button, look in the green room, fall back to the blue
    room, eat, repeat."""

    def __init__(self, env: CookieEnv):
        self.env = env
        self.layout = env.layout
        self.rm = perfect_cookie_rm()
        self.u = 0

    def reset(self, obs):
        self.u = 0

    def observe(self, obs):
        self.u = transition(self.rm, self.u, obs.label)

    def __call__(self, obs) -> int:
        pos = obs.pos
        if self.u == 0:
            target = CookieEnv.BUTTON
        elif self.u == 1:
            target = CookieEnv.COOKIE_CELLS[GREEN]
        else:
            target = CookieEnv.COOKIE_CELLS[GREEN if self.u == 2 else BLUE]
        if self.u == 0 and pos == target:
            # step off so the next move back onto the button presses it
            return self.layout.toward(pos, (8, 2))
        return self.layout.toward(pos, target)


def run_scripted_cookie(seed: int, episodes: int = 1) -> list[float]:
    """Per-episode reward of the scripted controller."""
    env = CookieEnv(seed)
    pol = ScriptedCookiePolicy(env)
    out = []
    for _ in range(episodes):
        o = env.reset()
        pol.reset(o)
        total, done = 0.0, False
        while not done:
            o, r, done = env.step(pol(o))
            pol.observe(o)
            total += r
        out.append(total)
    return out
