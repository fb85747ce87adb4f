"""Gridworld and Taxi task-environments as tabular MDPs."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .mdp import TabularMdp, ValidationError

WALL, FREE, GOAL, FIREPIT, HALLWAY = "#", ".", "G", "F", "H"
GLYPHS = (WALL, FREE, GOAL, FIREPIT, HALLWAY)

MOVES = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1)}
FOUR_ACTIONS = ("up", "down", "left", "right")
THREE_ACTIONS = ("left", "right", "down")

VARIANTS = (
    "default",
    "two_goals",
    "firepit",
    "no_goal",
    "negative_hallways",
    "three_actions",
    "gravity",
)

DEFAULT_DISCOUNT = 0.95


class ConfigurationError(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message, line=None, column=None):
        where = "" if line is None else f" (line {line}, column {column})"
        super().__init__(message + where)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class GridSpec:
    """Cell layout plus dynamics and reward parameters of a gridworld."""

    cells: tuple
    action_set: tuple = FOUR_ACTIONS
    slip: float = 0.1
    gravity_slide: float = 0.0
    goal_reward: float = 1.0
    firepit_reward: float = -1.0
    hallway_reward: float = 0.0

    def __post_init__(self):
        cells = tuple(str(row) for row in self.cells)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "action_set", tuple(self.action_set))
        if not cells or not cells[0]:
            raise ValidationError("grid must have at least one cell")
        if any(len(row) != len(cells[0]) for row in cells):
            raise ValidationError("grid rows must all have the same length")
        if any(ch not in GLYPHS for row in cells for ch in row):
            raise ValidationError("grid contains an unknown cell kind")
        if not any(ch != WALL for row in cells for ch in row):
            raise ValidationError("grid needs at least one non-wall cell")
        if not self.action_set or any(a not in MOVES for a in self.action_set):
            raise ValidationError(f"action_set must be drawn from {FOUR_ACTIONS}")
        if len(set(self.action_set)) != len(self.action_set):
            raise ValidationError("action_set has duplicates")
        if not (0 <= self.slip <= 1 and 0 <= self.gravity_slide <= 1):
            raise ValidationError("slip and gravity_slide must lie in [0, 1]")
        if self.slip + self.gravity_slide > 1:
            raise ValidationError("slip + gravity_slide must not exceed 1")

    @property
    def rows(self) -> int:
        return len(self.cells)

    @property
    def cols(self) -> int:
        return len(self.cells[0])

    def kind(self, r: int, c: int) -> str:
        return self.cells[r][c]

    def positions(self) -> list:
        """Row-major coordinates of non-wall cells; index = MDP state."""
        return [
            (r, c)
            for r in range(self.rows)
            for c in range(self.cols)
            if self.cells[r][c] != WALL
        ]


_PARAM_KEYS = ("actions", "slip", "gravity_slide", "goal_reward", "firepit_reward", "hallway_reward")


def render_grid(spec: GridSpec) -> str:
    """ASCII map; dynamics parameters go in leading ``key=value`` lines."""
    lines = [
        f"actions={','.join(spec.action_set)}",
        f"slip={spec.slip!r}",
        f"gravity_slide={spec.gravity_slide!r}",
        f"goal_reward={spec.goal_reward!r}",
        f"firepit_reward={spec.firepit_reward!r}",
        f"hallway_reward={spec.hallway_reward!r}",
    ]
    return "\n".join(lines + list(spec.cells)) + "\n"


def parse_grid(text: str) -> GridSpec:
    params = {}
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        if "=" in line:
            if rows:
                raise ParseError("parameter line after map rows", lineno, line.index("=") + 1)
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in _PARAM_KEYS:
                raise ParseError(f"unknown parameter {key!r}", lineno, 1)
            params[key] = value.strip()
            continue
        for col, ch in enumerate(line, start=1):
            if ch not in GLYPHS:
                raise ParseError(f"unknown glyph {ch!r}", lineno, col)
        if rows and len(line) != len(rows[0][1]):
            raise ParseError(
                f"ragged row: expected {len(rows[0][1])} cells, got {len(line)}",
                lineno,
                min(len(line), len(rows[0][1])) + 1,
            )
        rows.append((lineno, line))
    if not rows:
        raise ParseError("empty map")
    kwargs = {}
    if "actions" in params:
        kwargs["action_set"] = tuple(a.strip() for a in params.pop("actions").split(","))
    for key, value in params.items():
        kwargs[key] = float(value)
    try:
        return GridSpec(cells=tuple(line for _, line in rows), **kwargs)
    except ValidationError as exc:
        raise ParseError(str(exc)) from exc


def _cell_reward(spec: GridSpec, kind: str) -> float:
    if kind == GOAL:
        return spec.goal_reward
    if kind == FIREPIT:
        return spec.firepit_reward
    if kind == HALLWAY:
        return spec.hallway_reward
    return 0.0


def grid_to_mdp(spec: GridSpec, discount: float = DEFAULT_DISCOUNT, name: str = "") -> TabularMdp:
    """Slip mass is shared uniformly by the other actions' directions and staying put.

    Moves into walls or off the map leave the agent in place. Gravity then moves
    ``gravity_slide`` of the whole row proportionally onto the cell below.
    Rewards are paid for the cell entered and folded into R(s, a) by expectation.
    """
    cells = spec.positions()
    index = {rc: i for i, rc in enumerate(cells)}
    S, A = len(cells), len(spec.action_set)

    def neighbour(s, direction):
        r, c = cells[s]
        dr, dc = MOVES[direction]
        rc = (r + dr, c + dc)
        return index.get(rc, s)

    terminal = np.array([spec.kind(*rc) in (GOAL, FIREPIT) for rc in cells])
    cell_reward = np.array([_cell_reward(spec, spec.kind(*rc)) for rc in cells])
    P = np.zeros((S, A, S))
    for s in range(S):
        if terminal[s]:
            P[s, :, s] = 1.0
            continue
        down = neighbour(s, "down")
        for a, direction in enumerate(spec.action_set):
            row = np.zeros(S)
            row[neighbour(s, direction)] += 1.0 - spec.slip
            others = [d for d in spec.action_set if d != direction]
            share = spec.slip / (len(others) + 1)
            for d in others:
                row[neighbour(s, d)] += share
            row[s] += share
            if spec.gravity_slide:
                row *= 1.0 - spec.gravity_slide
                row[down] += spec.gravity_slide
            P[s, a] = row
    R = P @ cell_reward
    R[terminal] = 0.0
    return TabularMdp(P, R, discount, terminal=terminal, name=name)


def _room_origin(room_size, ry, rx):
    return ry * (room_size + 1) + 1, rx * (room_size + 1) + 1


def room_center(room_size: int, rooms_x: int, room: int) -> tuple:
    ry, rx = divmod(room, rooms_x)
    r0, c0 = _room_origin(room_size, ry, rx)
    return r0 + room_size // 2, c0 + room_size // 2


def build_rooms(
    rooms_x: int,
    rooms_y: int,
    room_size: int,
    variant: str = "default",
    goal_room: int = 0,
    slip: float = 0.1,
    hallway_penalty: float = -1.0,
    discount: float = DEFAULT_DISCOUNT,
):
    """Rooms on a lattice, one-cell walls, one centred hallway per shared wall.

    Returns ``(GridSpec, TabularMdp)``. ``goal_room`` indexes rooms row-major.
    """
    if rooms_x < 1 or rooms_y < 1:
        raise ConfigurationError("rooms_x and rooms_y must be at least 1")
    if room_size < 3:
        raise ConfigurationError("room_size must be at least 3")
    if variant not in VARIANTS:
        raise ConfigurationError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    n_rooms = rooms_x * rooms_y
    if variant in ("two_goals", "firepit", "negative_hallways") and n_rooms < 2:
        raise ConfigurationError(f"variant {variant!r} needs at least two rooms")
    if not 0 <= goal_room < n_rooms:
        raise ConfigurationError(f"goal_room must lie in [0, {n_rooms})")

    H = rooms_y * (room_size + 1) + 1
    W = rooms_x * (room_size + 1) + 1
    grid = [[WALL] * W for _ in range(H)]
    for ry in range(rooms_y):
        for rx in range(rooms_x):
            r0, c0 = _room_origin(room_size, ry, rx)
            for r in range(r0, r0 + room_size):
                for c in range(c0, c0 + room_size):
                    grid[r][c] = FREE
            mid = room_size // 2
            if rx + 1 < rooms_x:
                grid[r0 + mid][c0 + room_size] = HALLWAY
            if ry + 1 < rooms_y:
                grid[r0 + room_size][c0 + mid] = HALLWAY

    goals = [] if variant == "no_goal" else [goal_room]
    if variant == "two_goals":
        goals.append(n_rooms - 1 if goal_room != n_rooms - 1 else 0)
    if variant == "negative_hallways":
        # shifted goal: this source differs in goal placement as well as rewards
        goals = [n_rooms - 1 if goal_room != n_rooms - 1 else 0]
    for room in goals:
        r, c = room_center(room_size, rooms_x, room)
        grid[r][c] = GOAL
    if variant == "firepit":
        for room in range(n_rooms):
            if room not in goals:
                r, c = room_center(room_size, rooms_x, room)
                grid[r][c] = FIREPIT

    kwargs = {"slip": slip}
    if variant == "three_actions":
        kwargs["action_set"] = THREE_ACTIONS
    if variant == "gravity":
        kwargs["gravity_slide"] = 0.1
    if variant == "negative_hallways":
        kwargs["hallway_reward"] = hallway_penalty
    spec = GridSpec(cells=tuple("".join(row) for row in grid), **kwargs)
    label = f"rooms{rooms_x}x{rooms_y}s{room_size}:{variant}:g{goal_room}"
    return spec, grid_to_mdp(spec, discount=discount, name=label)


TAXI_ACTIONS = ("South", "North", "West", "East", "Pickup", "Drop")
TAXI_DEPOTS = ((0, 0), (2, 2))
IN_TAXI = 2


def taxi_state(row: int, col: int, passenger: int, destination: int) -> int:
    return ((row * 3 + col) * 3 + passenger) * 2 + destination


def taxi_decode(state: int) -> tuple:
    rest, destination = divmod(state, 2)
    rest, passenger = divmod(rest, 3)
    row, col = divmod(rest, 3)
    return row, col, passenger, destination


def build_taxi(
    step_reward: float = -1.0,
    drop_reward: float = 20.0,
    illegal_reward: float = -10.0,
    discount: float = DEFAULT_DISCOUNT,
) -> TabularMdp:
    """3x3 Taxi with depots at the top-left and bottom-right corners.

    Passenger location 0/1 is a depot, 2 is inside the taxi. A passenger
    resting at their destination depot is the terminal outcome of a
    successful drop.
    """
    S, A = 54, len(TAXI_ACTIONS)
    P = np.zeros((S, A, S))
    R = np.zeros((S, A))
    terminal = np.zeros(S, dtype=bool)
    for s in range(S):
        row, col, passenger, destination = taxi_decode(s)
        if passenger == destination:
            terminal[s] = True
            P[s, :, s] = 1.0
            continue
        for a, name in enumerate(TAXI_ACTIONS):
            r, c, p = row, col, passenger
            reward = step_reward
            if name == "South":
                r = min(row + 1, 2)
            elif name == "North":
                r = max(row - 1, 0)
            elif name == "West":
                c = max(col - 1, 0)
            elif name == "East":
                c = min(col + 1, 2)
            elif name == "Pickup":
                if passenger != IN_TAXI and TAXI_DEPOTS[passenger] == (row, col):
                    p = IN_TAXI
                else:
                    reward = illegal_reward
            else:
                if passenger == IN_TAXI and TAXI_DEPOTS[destination] == (row, col):
                    p = destination
                    reward = drop_reward
                elif passenger == IN_TAXI and (row, col) in TAXI_DEPOTS:
                    p = TAXI_DEPOTS.index((row, col))
                else:
                    reward = illegal_reward
            P[s, a, taxi_state(r, c, p, destination)] = 1.0
            R[s, a] = reward
    init = (~terminal).astype(float)
    init /= init.sum()
    return TabularMdp(P, R, discount, terminal=terminal, initial_distribution=init, name="taxi")


@dataclass(frozen=True, eq=False)
class SampledModel:
    """CSR view of an MDP's positive transition entries for inverse-CDF sampling.

    Row ``s * A + a`` of ``succ_*`` lists the successors of ``(s, a)`` with
    running cumulative probabilities.
    """

    succ_ptr: np.ndarray
    succ_idx: np.ndarray
    succ_cum: np.ndarray
    reward: np.ndarray
    terminal: np.ndarray
    init_idx: np.ndarray
    init_cum: np.ndarray

    @classmethod
    def from_mdp(cls, mdp: TabularMdp) -> "SampledModel":
        S, A = mdp.num_states, mdp.num_actions
        ptr, idx, cum = [0], [], []
        for row in mdp.transition.reshape(S * A, S):
            nz = np.flatnonzero(row > 0)
            idx.extend(nz.tolist())
            cum.extend(np.cumsum(row[nz]).tolist())
            ptr.append(len(idx))
        init_idx = np.flatnonzero(mdp.initial_distribution > 0)
        return cls(
            np.asarray(ptr, dtype=np.int64),
            np.asarray(idx, dtype=np.int64),
            np.asarray(cum, dtype=np.float64),
            np.ascontiguousarray(mdp.reward),
            np.ascontiguousarray(mdp.terminal, dtype=np.uint8),
            init_idx.astype(np.int64),
            np.cumsum(mdp.initial_distribution[init_idx]),
        )

    def arrays(self):
        return (self.succ_ptr, self.succ_idx, self.succ_cum, self.reward,
                self.terminal, self.init_idx, self.init_cum)


class Simulator:
    """Samples transitions of a TabularMdp with its own RNG stream.

    Rewards are the MDP's expected rewards R(s, a).
    """

    def __init__(self, mdp: TabularMdp, rng_seed: int = 0):
        self.mdp = mdp
        self.rng_seed = int(rng_seed)
        self.rng = np.random.default_rng(self.rng_seed)
        self.current_state = None
        self.step_count = 0
        self._cum = np.cumsum(mdp.transition, axis=2)
        self._init_cum = np.cumsum(mdp.initial_distribution)
        self._model = None

    @property
    def model(self) -> SampledModel:
        if self._model is None:
            self._model = SampledModel.from_mdp(self.mdp)
        return self._model

    def clone(self, rng_seed: int) -> "Simulator":
        """Same MDP, fresh RNG stream."""
        other = Simulator.__new__(Simulator)
        other.__dict__.update(self.__dict__)
        other.rng_seed = int(rng_seed)
        other.rng = np.random.default_rng(other.rng_seed)
        other.current_state = None
        other.step_count = 0
        return other

    def reset(self) -> int:
        self.current_state = _draw(self._init_cum, self.rng.random())
        return self.current_state

    def step(self, action: int):
        """Returns ``(next_state, reward, done)``."""
        if self.current_state is None:
            raise RuntimeError("call reset() before step()")
        s = self.current_state
        nxt = _draw(self._cum[s, action], self.rng.random())
        reward = float(self.mdp.reward[s, action])
        self.current_state = nxt
        self.step_count += 1
        return nxt, reward, bool(self.mdp.terminal[nxt])

    def sample_next(self, state: int, action: int, size: int) -> np.ndarray:
        u = self.rng.random(size)
        cum = self._cum[state, action]
        return np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)


def _draw(cum, u):
    i = int(np.searchsorted(cum, u, side="right"))
    return min(i, len(cum) - 1)


# -- environment descriptors -------------------------------------------------

PRESETS = {
    "FourSmallRooms": dict(rooms_x=2, rooms_y=2, room_size=5),
    "FourLargeRooms": dict(rooms_x=2, rooms_y=2, room_size=8),
    "SixLargeRooms": dict(rooms_x=3, rooms_y=2, room_size=8),
    "NineLargeRooms": dict(rooms_x=3, rooms_y=3, room_size=8),
}


@dataclass(frozen=True)
class EnvDescriptor:
    """Plain-data recipe for building an environment."""

    kind: str = "rooms"
    rooms_x: int = 2
    rooms_y: int = 2
    room_size: int = 5
    variant: str = "default"
    goal_room: int = 0
    slip: float = 0.1
    hallway_penalty: float = -1.0
    discount: float = DEFAULT_DISCOUNT
    map_path: str = ""
    step_reward: float = -1.0
    drop_reward: float = 20.0
    illegal_reward: float = -10.0

    def build(self) -> TabularMdp:
        if self.kind == "rooms":
            return build_rooms(
                self.rooms_x,
                self.rooms_y,
                self.room_size,
                self.variant,
                goal_room=self.goal_room,
                slip=self.slip,
                hallway_penalty=self.hallway_penalty,
                discount=self.discount,
            )[1]
        if self.kind == "taxi":
            return build_taxi(self.step_reward, self.drop_reward, self.illegal_reward, self.discount)
        if self.kind == "grid":
            with open(self.map_path) as fh:
                spec = parse_grid(fh.read())
            return grid_to_mdp(spec, discount=self.discount, name=self.map_path)
        raise ConfigurationError(f"unknown environment kind {self.kind!r}")

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in dataclasses.fields(self))

    @classmethod
    def from_mapping(cls, mapping) -> "EnvDescriptor":
        mapping = dict(mapping)
        base = {}
        preset = mapping.pop("env", None) or mapping.pop("preset", None)
        if preset:
            if preset == "Taxi":
                base["kind"] = "taxi"
            elif preset in PRESETS:
                base.update(PRESETS[preset])
            else:
                raise ConfigurationError(f"unknown environment preset {preset!r}")
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for key, value in mapping.items():
            if key not in types:
                raise ConfigurationError(f"unknown environment key {key!r}")
            kind = types[key]
            try:
                if kind == "int":
                    base[key] = int(value)
                elif kind == "float":
                    base[key] = float(value)
                else:
                    base[key] = str(value)
            except ValueError as exc:
                raise ConfigurationError(f"bad value for {key!r}: {value!r}") from exc
        return cls(**base)

    @classmethod
    def from_text(cls, text: str) -> "EnvDescriptor":
        mapping = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith(";"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigurationError(f"expected key = value, got {line!r}")
            mapping[key.strip()] = value.strip()
        return cls.from_mapping(mapping)


def preset(name: str, **overrides) -> EnvDescriptor:
    return EnvDescriptor.from_mapping({"env": name, **overrides})
