"""The cookie, symbol, 2-keys and gravity domains.

Room sizes and object cells are fixed here; see ``docs/layouts.md`` for a
map of each layout.
"""
from __future__ import annotations

from .grid import (
    BLUE,
    DOWN,
    GREEN,
    HALLWAY_START,
    ORANGE,
    ROOM_PROPS,
    THREE_ROOM_DOORS,
    UP,
    GridEnv,
    Layout,
    Observation,
    rect,
    three_rooms,
)


class CookieEnv(GridEnv):
    """Press the button in the orange room to make a cookie appear in the
    green or blue room; eating it pays +1.  Pressing again replaces any
    uneaten cookie."""

    domain = "cookie"
    propositions = ("C", "CE", "BP", *ROOM_PROPS)
    max_steps = 5000
    BUTTON = (8, 1)
    COOKIE_CELLS = {GREEN: (1, 5), BLUE: (15, 5)}
    layout = Layout(three_rooms(), THREE_ROOM_DOORS, static={"button": BUTTON})

    def _reset(self):
        self.pos = HALLWAY_START
        self.cookie = None

    def _transition(self, action):
        old = self.pos
        self.pos = self.layout.move(old, action)
        events, reward = 0, 0.0
        if self.pos == self.BUTTON and old != self.pos:
            events |= self._prop("BP")
            room = GREEN if self.rng.random() < 0.5 else BLUE
            self.cookie = self.COOKIE_CELLS[room]
        if self.cookie is not None and self.pos == self.cookie:
            events |= self._prop("CE")
            self.cookie = None
            reward = 1.0
        return reward, False, events

    def _observe(self, events) -> Observation:
        room = self.layout.room_of[self.pos]
        label = events | self._prop(ROOM_PROPS[room])
        visible = ()
        if self.cookie is not None and self.layout.room_of[self.cookie] == room:
            label |= self._prop("C")
            visible = (("cookie", *self.cookie),)
        return Observation(self.pos, room, visible, False, label)


class SymbolEnv(GridEnv):
    """A symbol (and maybe an arrow) on the orange room's board names the
    goal; touching any symbol in the green or blue room ends the episode
    with +1 if it is the goal symbol in an allowed room, -1 otherwise.

    Arrows point at the room to use: ``right`` is the blue (east) room and
    ``left`` the green (west) room; without an arrow either room counts.
    Touching a symbol also sets that symbol's proposition.
    """

    domain = "symbol"
    SYMBOLS = ("club", "spade", "diamond")
    ARROWS = ("left", "right", None)
    propositions = (
        *ROOM_PROPS,
        "sym_club",
        "sym_spade",
        "sym_diamond",
        "arrow_left",
        "arrow_right",
        "no_arrow",
        "touched_correct",
        "touched_wrong",
    )
    max_steps = 500
    BOARD = (8, 1)
    ARROW_CELL = (8, 2)
    SYMBOL_CELLS = {
        (1, 3): ("club", GREEN),
        (1, 5): ("spade", GREEN),
        (1, 7): ("diamond", GREEN),
        (15, 3): ("diamond", BLUE),
        (15, 5): ("club", BLUE),
        (15, 7): ("spade", BLUE),
    }
    layout = Layout(three_rooms(), THREE_ROOM_DOORS)

    def _reset(self):
        self.pos = HALLWAY_START
        self.target = self.SYMBOLS[int(self.rng.integers(3))]
        self.arrow = self.ARROWS[int(self.rng.integers(3))]

    def correct(self, symbol, room) -> bool:
        if symbol != self.target:
            return False
        if self.arrow is None:
            return True
        return room == (BLUE if self.arrow == "right" else GREEN)

    def _transition(self, action):
        old = self.pos
        self.pos = self.layout.move(old, action)
        hit = self.SYMBOL_CELLS.get(self.pos)
        if hit is None or old == self.pos:
            return 0.0, False, 0
        symbol, room = hit
        ok = self.correct(symbol, room)
        events = self._prop(f"sym_{symbol}")
        events |= self._prop("touched_correct" if ok else "touched_wrong")
        return (1.0 if ok else -1.0), True, events

    def _observe(self, events) -> Observation:
        room = self.layout.room_of[self.pos]
        label = events | self._prop(ROOM_PROPS[room])
        visible = ()
        if room == ORANGE:
            label |= self._prop(f"sym_{self.target}")
            label |= self._prop(f"arrow_{self.arrow}" if self.arrow else "no_arrow")
            visible = ((f"board_{self.target}", *self.BOARD),)
            if self.arrow:
                visible += ((f"arrow_{self.arrow}", *self.ARROW_CELL),)
        elif room in (GREEN, BLUE):
            visible = tuple(
                sorted((s, *c) for c, (s, r) in self.SYMBOL_CELLS.items() if r == room)
            )
        return Observation(self.pos, room, visible, False, label)


def _keys_orange():
    cells = rect(6, 0, 10, 4)
    walls = {(x, y) for x in (6, 7, 9, 10) for y in (2, 4)}
    return [c for c in cells if c not in walls]


class KeysEnv(GridEnv):
    """Reach the coffee behind two locked doors in the orange room.

    Each door consumes one key; the agent carries at most one key, so it has
    to fetch the keys one at a time.  Keys start both in the green room, both
    in the blue room, or one in each.
    """

    domain = "2keys"
    propositions = (*ROOM_PROPS, "key_here", "carrying_key", "door1_open", "door2_open", "coffee_reached")
    max_steps = 500
    DOOR1, DOOR2 = (8, 4), (8, 2)
    COFFEE = (8, 0)
    PLACEMENTS = {
        "green": ((2, 4), (2, 6)),
        "blue": ((14, 4), (14, 6)),
        "split": ((2, 5), (14, 5)),
    }
    layout = Layout(three_rooms(_keys_orange()), THREE_ROOM_DOORS, static={"coffee": COFFEE})

    def _reset(self):
        self.pos = HALLWAY_START
        self.placement = list(self.PLACEMENTS)[int(self.rng.integers(3))]
        self.keys = set(self.PLACEMENTS[self.placement])
        self.carrying = False
        self.open = {self.DOOR1: False, self.DOOR2: False}

    def _transition(self, action):
        nxt = self.layout.move(self.pos, action)
        if nxt in self.open and not self.open[nxt]:
            if not self.carrying:
                nxt = self.pos
            else:
                self.open[nxt] = True
                self.carrying = False
        self.pos = nxt
        if self.pos in self.keys and not self.carrying:
            self.keys.discard(self.pos)
            self.carrying = True
        if self.pos == self.COFFEE:
            return 1.0, True, self._prop("coffee_reached")
        return 0.0, False, 0

    def _observe(self, events) -> Observation:
        room = self.layout.room_of[self.pos]
        label = events | self._prop(ROOM_PROPS[room])
        visible = tuple(sorted(("key", *k) for k in self.keys if self.layout.room_of[k] == room))
        if visible:
            label |= self._prop("key_here")
        if self.carrying:
            label |= self._prop("carrying_key")
        if room == ORANGE:
            visible += tuple(("door_closed", *d) for d, o in sorted(self.open.items()) if not o)
        for i, d in enumerate((self.DOOR1, self.DOOR2), 1):
            if self.open[d]:
                label |= self._prop(f"door{i}_open")
        return Observation(self.pos, room, visible, self.carrying, label)


class GravityEnv(GridEnv):
    """One 3x3 room; an invisible force turns most "up" moves into "down"
    moves.  Stepping on the button toggles the force; the cookie (top
    right) pays +1 and ends the episode."""

    domain = "gravity"
    propositions = ("CE", "BP")
    max_steps = 200
    PULL = 0.8
    START, BUTTON, COOKIE = (1, 2), (0, 2), (2, 0)
    layout = Layout({0: rect(0, 0, 2, 2)}, static={"button": BUTTON, "cookie": COOKIE})

    def _reset(self):
        self.pos = self.START
        self.force = True

    def _transition(self, action):
        if action == UP and self.force and self.rng.random() < self.PULL:
            action = DOWN
        old = self.pos
        self.pos = self.layout.move(old, action)
        events = 0
        if self.pos == self.BUTTON and old != self.pos:
            events |= self._prop("BP")
            self.force = not self.force
        if self.pos == self.COOKIE:
            return 1.0, True, events | self._prop("CE")
        return 0.0, False, events

    def _observe(self, events) -> Observation:
        return Observation(self.pos, 0, (), False, events)


DOMAINS = {cls.domain: cls for cls in (CookieEnv, SymbolEnv, KeysEnv, GravityEnv)}
DOMAINS["keys"] = KeysEnv


def make(domain: str, seed=None) -> GridEnv:
    try:
        return DOMAINS[domain](seed)
    except KeyError:
        raise ValueError(f"unknown domain {domain!r}; choose from {sorted(DOMAINS)}") from None
