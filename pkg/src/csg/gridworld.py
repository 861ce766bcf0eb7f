"""Procedurally generated Door & Key gridworld.

Two rooms split by a wall with one locked door; the key and agent start
in the left room, the goal in the right. Observations are egocentric,
occluded M x M views. All functions are pure: step/observe map inputs to
outputs with no hidden state, so separate actors can share nothing.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Optional

import numpy as np

# Tile vocabulary: exactly 8 symbols with stable indices.
UNSEEN = 0
EMPTY = 1
WALL = 2
KEY = 3          # yellow
DOOR_OPEN = 4    # yellow
DOOR_CLOSED = 5  # yellow
DOOR_LOCKED = 6  # yellow
GOAL = 7         # green

VOCAB_SIZE = 8

TILE_NAMES = {
    UNSEEN: "unseen",
    EMPTY: "empty floor",
    WALL: "wall",
    KEY: "yellow key",
    DOOR_OPEN: "open yellow door",
    DOOR_CLOSED: "closed yellow door",
    DOOR_LOCKED: "locked yellow door",
    GOAL: "green goal",
}

_DOORS = (DOOR_OPEN, DOOR_CLOSED, DOOR_LOCKED)
# Tiles the agent may walk onto / that light passes through.
_WALKABLE = (EMPTY, DOOR_OPEN, GOAL)
_TRANSPARENT = (EMPTY, KEY, DOOR_OPEN, GOAL)


@dataclass(frozen=True)
class TileSymbol:
    """(kind, color, door_state) triple behind each vocabulary index."""
    kind: str
    color: str
    door_state: str

    @property
    def index(self):
        return TILE_SYMBOLS.index(self)


TILE_SYMBOLS = (
    TileSymbol("unseen", "none", "n/a"),
    TileSymbol("empty", "none", "n/a"),
    TileSymbol("wall", "none", "n/a"),
    TileSymbol("key", "yellow", "n/a"),
    TileSymbol("door", "yellow", "open"),
    TileSymbol("door", "yellow", "closed"),
    TileSymbol("door", "yellow", "locked"),
    TileSymbol("goal", "green", "n/a"),
)


class Action(IntEnum):
    TURN_LEFT = 0
    TURN_RIGHT = 1
    MOVE_FORWARD = 2
    PICKUP = 3
    DROP = 4
    TOGGLE = 5


NUM_ACTIONS = 6

# (row, col) deltas: north, east, south, west.
DIR_VECTORS = ((-1, 0), (0, 1), (1, 0), (0, -1))
DIR_GLYPHS = ("^", ">", "v", "<")


@dataclass
class GridState:
    n: int
    grid: np.ndarray           # (n, n) int8 tile indices
    agent_pos: tuple           # (row, col)
    agent_dir: int             # 0..3, index into DIR_VECTORS
    carried: Optional[int]     # tile index of carried object (key) or None
    t: int
    t_max: int
    layout_seed: int
    wall_col: int = field(default=-1)

    def copy(self):
        return replace(self, grid=self.grid.copy())


@dataclass
class Observation:
    view: np.ndarray  # (m, m) int8 tile indices
    m: int

    @property
    def agent_cell(self):
        return ((self.m - 1) // 2, self.m - 1)

    @property
    def front_cell(self):
        return ((self.m - 1) // 2, self.m - 2)

    def flat(self):
        return self.view.reshape(-1)


def generate(layout_seed, n):
    """Random Door & Key layout; identical output for identical seeds."""
    if n < 5:
        raise ValueError(f"grid size {n} too small to place objects (need >= 5)")
    rng = np.random.default_rng(layout_seed)

    grid = np.full((n, n), EMPTY, dtype=np.int8)
    grid[0, :] = grid[-1, :] = WALL
    grid[:, 0] = grid[:, -1] = WALL

    wall_col = int(rng.integers(2, n - 2))
    grid[:, wall_col] = WALL
    door_row = int(rng.integers(1, n - 1))
    grid[door_row, wall_col] = DOOR_LOCKED

    left_cells = [(r, c) for r in range(1, n - 1) for c in range(1, wall_col)]
    picks = rng.choice(len(left_cells), size=2, replace=False)
    key_pos = left_cells[picks[0]]
    agent_pos = left_cells[picks[1]]
    grid[key_pos] = KEY
    agent_dir = int(rng.integers(0, 4))

    right_cells = [(r, c) for r in range(1, n - 1) for c in range(wall_col + 1, n - 1)]
    goal_pos = right_cells[int(rng.integers(0, len(right_cells)))]
    grid[goal_pos] = GOAL

    return GridState(n=n, grid=grid, agent_pos=agent_pos, agent_dir=agent_dir,
                     carried=None, t=0, t_max=10 * n * n,
                     layout_seed=int(layout_seed), wall_col=wall_col)


def front_pos(state):
    dr, dc = DIR_VECTORS[state.agent_dir]
    return (state.agent_pos[0] + dr, state.agent_pos[1] + dc)


def step(state, action):
    """Apply one action. Returns (next_state, terminated, extrinsic_reward).

    Invalid actions are no-ops that still consume a step.
    """
    if state.t >= state.t_max:
        raise ValueError("step() on a finished episode")
    s = state.copy()
    s.t += 1
    terminated = False
    r_e = 0.0

    fr, fc = front_pos(s)
    in_bounds = 0 <= fr < s.n and 0 <= fc < s.n
    front = s.grid[fr, fc] if in_bounds else WALL

    action = Action(action)
    if action == Action.TURN_LEFT:
        s.agent_dir = (s.agent_dir - 1) % 4
    elif action == Action.TURN_RIGHT:
        s.agent_dir = (s.agent_dir + 1) % 4
    elif action == Action.MOVE_FORWARD:
        if in_bounds and front in _WALKABLE:
            s.agent_pos = (fr, fc)
            if front == GOAL:
                terminated = True
                r_e = 1.0 - 0.9 * s.t / s.t_max
    elif action == Action.PICKUP:
        if in_bounds and front == KEY and s.carried is None:
            s.carried = KEY
            s.grid[fr, fc] = EMPTY
    elif action == Action.DROP:
        if in_bounds and front == EMPTY and s.carried is not None:
            s.grid[fr, fc] = s.carried
            s.carried = None
    elif action == Action.TOGGLE:
        if in_bounds:
            if front == DOOR_LOCKED and s.carried == KEY:
                s.grid[fr, fc] = DOOR_OPEN
            elif front == DOOR_CLOSED:
                s.grid[fr, fc] = DOOR_OPEN
            elif front == DOOR_OPEN:
                s.grid[fr, fc] = DOOR_CLOSED

    if not terminated and s.t >= s.t_max:
        terminated = True
        r_e = 0.0
    return s, terminated, r_e


def observe(state, m):
    """Egocentric occluded view; agent fixed at (row (m-1)//2, col m-1),
    facing decreasing column index."""
    if m < 3 or m % 2 == 0:
        raise ValueError(f"view size must be odd and >= 3, got {m}")
    center = (m - 1) // 2
    dr, dc = DIR_VECTORS[state.agent_dir]
    # right-hand vector: heading rotated clockwise
    rr, rc = DIR_VECTORS[(state.agent_dir + 1) % 4]
    ar, ac = state.agent_pos

    vr, vc = np.mgrid[0:m, 0:m]
    f = (m - 1) - vc               # forward distance
    lat = vr - center              # lateral offset, + to the agent's right
    wr = ar + f * dr + lat * rr
    wc = ac + f * dc + lat * rc
    oob = (wr < 0) | (wr >= state.n) | (wc < 0) | (wc >= state.n)
    raw = np.full((m, m), WALL, dtype=np.int8)  # out-of-grid treated as opaque
    raw[~oob] = state.grid[wr[~oob], wc[~oob]]

    visible = _flood_visibility(raw, (center, m - 1))
    view = np.where(visible & ~oob, raw, UNSEEN).astype(np.int8)

    if state.carried is not None:
        view[center, m - 1] = state.carried
    else:
        view[center, m - 1] = state.grid[ar, ac]
    return Observation(view=view, m=m)


def _flood_visibility(raw, agent_cell):
    """Iterative neighbor propagation: transparent visible cells light up
    all 8 neighbors; walls and non-open doors receive light but pass none."""
    m = raw.shape[0]
    visible = np.zeros((m, m), dtype=bool)
    visible[agent_cell] = True
    frontier = deque([agent_cell])
    while frontier:
        r, c = frontier.popleft()
        if (r, c) != agent_cell and raw[r, c] not in _TRANSPARENT:
            continue  # lit but opaque: passes no light onward
        for nr in (r - 1, r, r + 1):
            for nc in (c - 1, c, c + 1):
                if 0 <= nr < m and 0 <= nc < m and not visible[nr, nc]:
                    visible[nr, nc] = True
                    frontier.append((nr, nc))
    return visible


_GLYPHS = {UNSEEN: "?", EMPTY: ".", WALL: "#", KEY: "K",
           DOOR_OPEN: "/", DOOR_CLOSED: "+", DOOR_LOCKED: "L", GOAL: "G"}


def render_ascii(state):
    rows = []
    for r in range(state.n):
        row = []
        for c in range(state.n):
            if (r, c) == state.agent_pos:
                row.append(DIR_GLYPHS[state.agent_dir])
            else:
                row.append(_GLYPHS[int(state.grid[r, c])])
        rows.append("".join(row))
    return "\n".join(rows)


def count_objects(state):
    """(#keys incl. carried, #doors, #goals) — each must stay 1."""
    keys = int((state.grid == KEY).sum()) + (1 if state.carried == KEY else 0)
    doors = int(np.isin(state.grid, _DOORS).sum())
    goals = int((state.grid == GOAL).sum())
    return keys, doors, goals


def solvable(state):
    """BFS over environment state (position, carrying, door openness).

    Heading is omitted because turning is never blocked, so it cannot
    affect reachability; pickup/toggle from a cell only needs adjacency.
    """
    key_cells = [tuple(p) for p in np.argwhere(state.grid == KEY)]
    door_cells = [tuple(p) for p in np.argwhere(np.isin(state.grid, _DOORS))]
    goal_cells = [tuple(p) for p in np.argwhere(state.grid == GOAL)]
    if not goal_cells:
        return False
    key_pos = key_cells[0] if key_cells else None
    door_pos = door_cells[0] if door_cells else None
    door0 = int(state.grid[door_pos]) if door_pos else DOOR_OPEN
    goal = goal_cells[0]

    start = (state.agent_pos, state.carried == KEY, door0 == DOOR_OPEN)
    seen = {start}
    q = deque([start])
    while q:
        pos, has_key, door_open = q.popleft()
        if pos == goal:
            return True
        nxt = []
        for dr, dc in DIR_VECTORS:
            np_ = (pos[0] + dr, pos[1] + dc)
            if not (0 <= np_[0] < state.n and 0 <= np_[1] < state.n):
                continue
            tile = int(state.grid[np_])
            if np_ == door_pos:
                if door_open:
                    nxt.append((np_, has_key, True))
                elif door0 == DOOR_CLOSED or has_key:  # open (unlock) and pass
                    nxt.append((np_, has_key, True))
            elif np_ == key_pos:
                if has_key:  # cell is empty once the key is carried
                    nxt.append((np_, True, door_open))
                else:
                    nxt.append((pos, True, door_open))  # pick it up from here
            elif tile in (EMPTY, GOAL):
                nxt.append((np_, has_key, door_open))
        for s2 in nxt:
            if s2 not in seen:
                seen.add(s2)
                q.append(s2)
    return False
