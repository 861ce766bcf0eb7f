"""Independent re-implementation of the Door & Key action semantics.

Written as a mutable object with dict-based object storage, deliberately
structured nothing like the library's pure-functional numpy version, so a
side-by-side comparison exercises the semantics rather than shared code.
"""

FLOOR, WALL_T, KEY_T, DOOR_OPEN_T, DOOR_CLOSED_T, DOOR_LOCKED_T, GOAL_T = (
    "floor", "wall", "key", "door_open", "door_closed", "door_locked", "goal")

HEADINGS = {0: (-1, 0), 1: (0, 1), 2: (1, 0), 3: (0, -1)}


class ReferenceDoorKey:
    """Mutable Door & Key world; built from an explicit tile map."""

    def __init__(self, tiles, agent_pos, agent_dir, carrying=None):
        self.n = len(tiles)
        self.cells = {}
        for r, row in enumerate(tiles):
            for c, t in enumerate(row):
                if t != FLOOR:
                    self.cells[(r, c)] = t
        self.pos = tuple(agent_pos)
        self.heading = agent_dir
        self.carrying = carrying
        self.clock = 0
        self.max_clock = 10 * self.n * self.n
        self.done = False

    def tile_at(self, cell):
        r, c = cell
        if not (0 <= r < self.n and 0 <= c < self.n):
            return WALL_T
        return self.cells.get(cell, FLOOR)

    def ahead(self):
        dr, dc = HEADINGS[self.heading]
        return (self.pos[0] + dr, self.pos[1] + dc)

    def act(self, action):
        """Returns (reward, done). Action codes match the library's order."""
        assert not self.done, "episode already over"
        self.clock += 1
        reward = 0.0
        target = self.ahead()
        tile = self.tile_at(target)

        if action == 0:
            self.heading = (self.heading + 3) % 4
        elif action == 1:
            self.heading = (self.heading + 1) % 4
        elif action == 2:
            if tile in (FLOOR, DOOR_OPEN_T, GOAL_T):
                self.pos = target
                if tile == GOAL_T:
                    self.done = True
                    reward = 1.0 - 0.9 * self.clock / self.max_clock
        elif action == 3:
            if tile == KEY_T and self.carrying is None:
                self.carrying = KEY_T
                del self.cells[target]
        elif action == 4:
            if tile == FLOOR and self.carrying is not None:
                self.cells[target] = self.carrying
                self.carrying = None
        elif action == 5:
            if tile == DOOR_LOCKED_T and self.carrying == KEY_T:
                self.cells[target] = DOOR_OPEN_T
            elif tile == DOOR_CLOSED_T:
                self.cells[target] = DOOR_OPEN_T
            elif tile == DOOR_OPEN_T:
                self.cells[target] = DOOR_CLOSED_T

        if not self.done and self.clock >= self.max_clock:
            self.done = True
        return reward, self.done


# Mapping from the library's integer tile vocabulary to reference names.
_FROM_INDEX = {1: FLOOR, 2: WALL_T, 3: KEY_T, 4: DOOR_OPEN_T,
               5: DOOR_CLOSED_T, 6: DOOR_LOCKED_T, 7: GOAL_T}
_TO_INDEX = {v: k for k, v in _FROM_INDEX.items()}


def from_grid_state(state):
    """Build a ReferenceDoorKey mirroring a library GridState."""
    tiles = [[_FROM_INDEX[int(state.grid[r, c])] for c in range(state.n)]
             for r in range(state.n)]
    carrying = KEY_T if state.carried is not None else None
    ref = ReferenceDoorKey(tiles, state.agent_pos, state.agent_dir, carrying)
    ref.clock = state.t
    return ref


def grids_agree(ref, state):
    """True iff the reference world and a library GridState match exactly."""
    if ref.pos != tuple(state.agent_pos) or ref.heading != state.agent_dir:
        return False
    if (ref.carrying == KEY_T) != (state.carried is not None):
        return False
    for r in range(state.n):
        for c in range(state.n):
            if _TO_INDEX[ref.tile_at((r, c))] != int(state.grid[r, c]):
                return False
    return True
