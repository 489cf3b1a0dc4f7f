"""Grid-world plumbing shared by the benchmark domains.

Coordinates are ``(x, y)`` with ``y`` growing downwards, so "up" is
``y - 1``.  Movement between two cells is allowed when both are floor cells
and they belong to the same room or form a declared doorway.
"""
from __future__ import annotations

from collections import deque
from typing import NamedTuple

import numpy as np

UP, RIGHT, DOWN, LEFT = range(4)
ACTIONS = (UP, RIGHT, DOWN, LEFT)
ACTION_NAMES = ("up", "right", "down", "left")
MOVES = {UP: (0, -1), RIGHT: (1, 0), DOWN: (0, 1), LEFT: (-1, 0)}

GREEN, HALLWAY, BLUE, ORANGE = range(4)
ROOM_PROPS = ("R0", "R1", "R2", "R3")


class Observation(NamedTuple):
    """What the agent sees.

    ``visible`` lists the dynamic objects in the agent's current room as
    sorted ``(kind, x, y)`` triples; everything in other rooms is blacked
    out.  ``label`` is the labelling-function output for the step that
    produced this observation.
    """

    pos: tuple
    room: int
    visible: tuple = ()
    carrying: bool = False
    label: int = 0


class Layout:
    def __init__(self, rooms: dict, doors=(), static=None):
        # rooms: room id -> iterable of cells
        self.room_of = {c: r for r, cells in rooms.items() for c in cells}
        self.doors = {frozenset(d) for d in doors}
        self.static = static or {}  # kind -> cell, for fixed objects
        xs = [c[0] for c in self.room_of]
        ys = [c[1] for c in self.room_of]
        self.width, self.height = max(xs) + 1, max(ys) + 1
        self._moves = {}
        for c in self.room_of:
            for a, (dx, dy) in MOVES.items():
                n = (c[0] + dx, c[1] + dy)
                self._moves[c, a] = n if self.connected(c, n) else c

    def connected(self, a, b) -> bool:
        ra, rb = self.room_of.get(a), self.room_of.get(b)
        if ra is None or rb is None:
            return False
        return ra == rb or frozenset((a, b)) in self.doors

    def move(self, cell, action):
        return self._moves[cell, action]

    def cells(self, room=None) -> list:
        return sorted(c for c, r in self.room_of.items() if room is None or r == room)

    def distances(self, target, blocked=()) -> dict:
        """BFS distance from every reachable cell to ``target``."""
        dist = {target: 0}
        q = deque([target])
        while q:
            c = q.popleft()
            for a in ACTIONS:
                n = self.move(c, a)
                if n != c and n not in dist and n not in blocked:
                    dist[n] = dist[c] + 1
                    q.append(n)
        return dist

    def toward(self, cell, target, blocked=()) -> int:
        """First action of a shortest path (lowest action id on ties)."""
        dist = self._dist_cache(target, blocked)
        best, best_d = UP, None
        for a in ACTIONS:
            n = self.move(cell, a)
            if n in blocked or n not in dist:
                continue
            if best_d is None or dist[n] < best_d:
                best, best_d = a, dist[n]
        return best

    def _dist_cache(self, target, blocked):
        key = (target, frozenset(blocked))
        if not hasattr(self, "_dcache"):
            self._dcache = {}
        if key not in self._dcache:
            self._dcache[key] = self.distances(target, blocked)
        return self._dcache[key]

    def layers(self, obs: Observation, kinds=()) -> dict:
        """Binary matrices: agent position, visible mask, one per object kind."""
        shape = (self.height, self.width)
        agent = np.zeros(shape, dtype=np.int8)
        agent[obs.pos[1], obs.pos[0]] = 1
        mask = np.zeros(shape, dtype=np.int8)
        for x, y in self.cells(obs.room):
            mask[y, x] = 1
        out = {"agent": agent, "visible": mask}
        for k in kinds:
            out[k] = np.zeros(shape, dtype=np.int8)
        for kind, cell in self.static.items():
            if self.room_of.get(cell) == obs.room and kind in out:
                out[kind][cell[1], cell[0]] = 1
        for kind, x, y in obs.visible:
            out.setdefault(kind, np.zeros(shape, dtype=np.int8))[y, x] = 1
        return out


def rect(x0, y0, x1, y1):
    return [(x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1)]


def three_rooms(orange=None) -> dict:
    """Green (west) and blue (east) 5x5 rooms joined by a 1x7 hallway, with
    the orange 5x5 room above the hallway's middle cell."""
    return {
        GREEN: rect(0, 3, 4, 7),
        HALLWAY: rect(5, 5, 11, 5),
        BLUE: rect(12, 3, 16, 7),
        ORANGE: rect(6, 0, 10, 4) if orange is None else orange,
    }


THREE_ROOM_DOORS = [((4, 5), (5, 5)), ((11, 5), (12, 5)), ((8, 4), (8, 5))]
HALLWAY_START = (8, 5)


class GridEnv:
    """Base class: seeded RNG, slip model, step counter.

    Subclasses implement ``_reset``, ``_transition`` and ``_observe``.
    """

    domain = "grid"
    propositions: tuple = ()
    max_steps = 500
    slip = 0.05

    def __init__(self, seed=None):
        self.rng = np.random.default_rng(seed)
        self.steps = 0
        self.obs = None

    def reset(self, seed=None) -> Observation:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.steps = 0
        self._reset()
        self.obs = self._observe(0)
        return self.obs

    def step(self, action: int):
        if action not in MOVES:
            raise ValueError(f"invalid action {action!r}")
        if self.obs is None:
            raise RuntimeError("call reset() before step()")
        if self.rng.random() < self.slip:
            action = (action + 1 + int(self.rng.integers(3))) % 4
        self.steps += 1
        reward, done, events = self._transition(action)
        if self.steps >= self.max_steps:
            done = True
        self.obs = self._observe(events)
        return self.obs, reward, done

    def label(self, o, a, o2) -> int:
        """Labelling function; the environment records the event bits on the
        observation it emits, so this only reads them back."""
        return o2.label

    def _prop(self, name) -> int:
        return 1 << self.propositions.index(name)
