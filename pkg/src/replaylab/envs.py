"""Seedable gridworlds whose dynamics or observations change at scheduled steps.

Observations are concatenated one-hot blocks (agent cell, then an optional
egocentric object view or background id). The phase is a function of the global step
count only, so a run's trajectory is a pure function of (seed, actions).
"""
import bisect
from collections import deque
from dataclasses import dataclass, field

import numpy as np

UP, DOWN, LEFT, RIGHT, NOOP = range(5)
N_ACTIONS = 5
DELTAS = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))
ACTION_NAMES = ("up", "down", "left", "right", "noop")

TEST_SET_SIZE = 256


@dataclass
class PhaseSchedule:
    change_steps: list = field(default_factory=list)

    def __post_init__(self):
        steps = [int(s) for s in self.change_steps]
        if any(s < 0 for s in steps) or steps != sorted(steps):
            raise ValueError("change steps must be sorted and nonnegative")
        self.change_steps = steps

    def phase_of(self, step):
        return bisect.bisect_right(self.change_steps, step)


def steps_to_kth_interaction(interaction_steps, k, t0=0):
    """Steps after ``t0`` until the k-th interaction, or None if it never came.

    ``interaction_steps`` holds the global step of each interaction in order;
    a per-step cumulative count series is accepted as well.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    steps = list(interaction_steps)
    if len(steps) < k:
        return None
    return steps[k - 1] - t0


def interaction_steps_from_counts(steps, cumulative):
    """Expand (step, cumulative count) samples into one step per interaction."""
    out = []
    prev = 0
    for s, c in zip(steps, cumulative):
        out.extend([s] * (c - prev))
        prev = c
    return out


class GridEnv:
    """Shared machinery: moves with wall clipping, episodes, phase bookkeeping."""

    name = "grid"

    def __init__(self, size=9, change_steps=(), episode_length=1000, seed=0,
                 start_cell=(0, 0)):
        if size < 3:
            raise ValueError("grid size must be >= 3")
        self.size = int(size)
        self.schedule = PhaseSchedule(list(change_steps))
        self.episode_length = int(episode_length)
        self.start_cell = tuple(start_cell)
        self.seed = seed
        self.n_actions = N_ACTIONS
        self._check_reachability()
        self.test_sets = self._build_test_sets(seed)
        self.reset(seed)

    # -- layout ---------------------------------------------------------

    @property
    def blocks(self):
        return [("agent", self.size * self.size)]

    @property
    def obs_dim(self):
        return sum(n for _, n in self.blocks)

    @property
    def n_phases(self):
        return len(self.schedule.change_steps) + 1

    def cell_index(self, cell):
        return cell[0] * self.size + cell[1]

    def _in_bounds(self, r, c):
        return 0 <= r < self.size and 0 <= c < self.size

    def quantize(self, obs):
        """Snap a real vector to the nearest valid block encoding."""
        obs = np.asarray(obs)
        out = np.zeros(obs.shape, dtype=np.float32)
        lo = 0
        for _, n in self.blocks:
            seg = obs[lo:lo + n]
            j = int(np.argmax(seg))
            if seg[j] >= 0.5:
                out[lo + j] = 1.0
            lo += n
        return out

    # -- state transitions (pure) ----------------------------------------

    def _initial_state(self, phase):
        return {"agent": self.start_cell}

    def _encode(self, state, phase):
        obs = np.zeros(self.obs_dim, dtype=np.float32)
        obs[self.cell_index(state["agent"])] = 1.0
        return obs

    def _allowed(self, cell, action, phase):
        return True

    def _transition(self, state, action, phase):
        """Next state and whether an interaction happened."""
        r, c = state["agent"]
        if not self._allowed((r, c), action, phase):
            return dict(state), False
        dr, dc = DELTAS[action]
        nr, nc = r + dr, c + dc
        if not self._in_bounds(nr, nc):
            nr, nc = r, c
        new = dict(state)
        new["agent"] = (nr, nc)
        return new, False

    def _reward(self, state, phase):
        return 0.0

    def _terminal(self, state, phase):
        return False

    def _enter_phase(self, state, old, new):
        return state

    # -- episode API ---------------------------------------------------

    def reset(self, seed=None):
        """Full reset: start cell, step counters zeroed, phase 0."""
        if seed is not None:
            self.seed = seed
        self.rng = np.random.default_rng(self.seed)
        self.global_step = 0
        self.episode_step = 0
        self.interactions = 0
        self.interaction_steps = []
        self.phase = self.schedule.phase_of(0)
        self.state = self._initial_state(self.phase)
        return self._encode(self.state, self.phase)

    def new_episode(self):
        """Return the agent to the start cell without touching the global clock."""
        self.episode_step = 0
        self.state = self._initial_state(self.phase)
        return self._encode(self.state, self.phase)

    def observe(self):
        return self._encode(self.state, self.phase)

    def step(self, action):
        if not (isinstance(action, (int, np.integer)) and 0 <= action < N_ACTIONS):
            raise ValueError(f"invalid action id {action!r}")
        state, hit = self._transition(self.state, int(action), self.phase)
        self.global_step += 1
        self.episode_step += 1
        if hit:
            self.interactions += 1
            self.interaction_steps.append(self.global_step)
        reward = self._reward(state, self.phase)
        terminal = self._terminal(state, self.phase)
        phase = self.schedule.phase_of(self.global_step)
        if phase != self.phase:
            state = self._enter_phase(state, self.phase, phase)
            self.phase = phase
        self.state = state
        truncated = bool(self.episode_length) and self.episode_step >= self.episode_length
        info = {"phase": self.phase, "interactions": self.interactions,
                "global_step": self.global_step, "truncated": truncated and not terminal}
        return self._encode(state, self.phase), reward, terminal, info

    # -- construction-time checks and test sets --------------------------

    def _reachable(self, phase):
        start = self._initial_state(phase)
        seen = {start["agent"]}
        queue = deque([start])
        while queue:
            s = queue.popleft()
            for a in range(N_ACTIONS):
                n, _ = self._transition(s, a, phase)
                if n["agent"] not in seen:
                    seen.add(n["agent"])
                    queue.append(n)
        return seen

    def _check_reachability(self):
        for phase in range(self.n_phases):
            missing = self.size * self.size - len(self._reachable(phase) | self._blocked_cells(phase))
            if missing:
                raise ValueError(f"{missing} cells unreachable in phase {phase}")

    def _blocked_cells(self, phase):
        """Cells that legitimately cannot be entered (e.g. occupied by an object)."""
        return set()

    def _scripted_start(self, rng, phase):
        state = self._initial_state(phase)
        occupied = self._blocked_cells(phase)
        while True:
            cell = (int(rng.integers(self.size)), int(rng.integers(self.size)))
            if cell not in occupied:
                state["agent"] = cell
                return state

    def _build_test_sets(self, seed, n=TEST_SET_SIZE, segment=8):
        """Per-phase held-out transitions from a scripted random-walk policy."""
        sets = {}
        for phase in range(self.n_phases):
            rng = np.random.default_rng([int(seed), 7919, phase])
            obs, acts, nxt, rew = [], [], [], []
            while len(obs) < n:
                state = self._scripted_start(rng, phase)
                for _ in range(segment):
                    if len(obs) >= n:
                        break
                    a = int(rng.integers(N_ACTIONS))
                    new, _ = self._transition(state, a, phase)
                    obs.append(self._encode(state, phase))
                    acts.append(a)
                    nxt.append(self._encode(new, phase))
                    rew.append(self._reward(new, phase))
                    if self._terminal(new, phase):
                        break
                    state = new
            sets[phase] = (np.array(obs), np.array(acts), np.array(nxt), np.array(rew))
        return sets


class NovelObjectGrid(GridEnv):
    """Empty arena until ``t0``, then a pushable object appears near the centre.

    With ``t1`` set the object is removed again at ``t1``. Reward is always
    zero; moving into the object's cell counts as an interaction and pushes
    the object one cell along the move if that cell is inside the grid
    (otherwise both stay put).

    The object is observed egocentrically: a one-hot over the
    ``(2 * view_radius + 1)**2`` offsets around the agent, all zero when the
    object is absent or out of view. States far from the object therefore
    look the same before and after it appears.
    """

    name = "novel_object"

    def __init__(self, size=9, t0=20_000, t1=None, episode_length=1000, seed=0,
                 start_cell=(0, 0), view_radius=2):
        self.view_radius = int(view_radius)
        if self.view_radius < 1:
            raise ValueError("view_radius must be >= 1")
        self.t0 = int(t0)
        self.t1 = None if t1 is None else int(t1)
        if self.t1 is not None and self.t1 <= self.t0:
            raise ValueError("t1 must come after t0")
        steps = [self.t0] + ([self.t1] if self.t1 is not None else [])
        self.center = (size // 2, size // 2)
        super().__init__(size, steps, episode_length, seed, start_cell)

    @property
    def blocks(self):
        w = 2 * self.view_radius + 1
        return [("agent", self.size * self.size), ("object_view", w * w)]

    def view_index(self, agent, obj):
        """Position of the object inside the agent's view, or None if unseen."""
        if obj is None:
            return None
        rad = self.view_radius
        dr, dc = obj[0] - agent[0], obj[1] - agent[1]
        if abs(dr) > rad or abs(dc) > rad:
            return None
        return (dr + rad) * (2 * rad + 1) + (dc + rad)

    def object_present(self, phase):
        return phase == 1

    def object_cell(self):
        return self.state.get("object")

    def _place_object(self, agent):
        cx, cy = self.center
        for dr, dc in ((0, 0), (0, 1), (1, 0), (0, -1), (-1, 0)):
            cell = (cx + dr, cy + dc)
            if cell != agent:
                return cell

    def _initial_state(self, phase):
        state = {"agent": self.start_cell, "object": None}
        if self.object_present(phase):
            state["object"] = self._place_object(self.start_cell)
        return state

    def _encode(self, state, phase):
        obs = np.zeros(self.obs_dim, dtype=np.float32)
        obs[self.cell_index(state["agent"])] = 1.0
        v = self.view_index(state["agent"], state.get("object"))
        if v is not None:
            obs[self.size * self.size + v] = 1.0
        return obs

    def _transition(self, state, action, phase):
        r, c = state["agent"]
        dr, dc = DELTAS[action]
        nr, nc = r + dr, c + dc
        new = dict(state)
        if not self._in_bounds(nr, nc) or action == NOOP:
            return new, False
        obj = state.get("object")
        if obj is not None and (nr, nc) == obj:
            pr, pc = obj[0] + dr, obj[1] + dc
            if self._in_bounds(pr, pc):
                new["object"] = (pr, pc)
                new["agent"] = (nr, nc)
            return new, True
        new["agent"] = (nr, nc)
        return new, False

    def _enter_phase(self, state, old, new):
        state = dict(state)
        if self.object_present(new):
            state["object"] = self._place_object(state["agent"])
        else:
            state["object"] = None
        return state

    def _blocked_cells(self, phase):
        if self.object_present(phase):
            return {self._place_object(self.start_cell)}
        return set()

    def _reachable(self, phase):
        # the object can be pushed, so judge reachability on the empty arena
        start = {"agent": self.start_cell, "object": None}
        seen = {start["agent"]}
        queue = deque([start])
        while queue:
            s = queue.popleft()
            for a in range(N_ACTIONS):
                n, _ = GridEnv._transition(self, s, a, phase)
                if n["agent"] not in seen:
                    seen.add(n["agent"])
                    queue.append(n)
        return seen

    def _scripted_start(self, rng, phase):
        state = self._initial_state(phase)
        obj = state["object"]
        rad = self.view_radius
        while True:
            if obj is None:
                cell = (int(rng.integers(self.size)), int(rng.integers(self.size)))
            else:
                # start with the object in view so the set probes object dynamics
                cell = (obj[0] + int(rng.integers(-rad, rad + 1)),
                        obj[1] + int(rng.integers(-rad, rad + 1)))
            if self._in_bounds(*cell) and cell != obj:
                state["agent"] = cell
                return state


class ConstrainedGrid(GridEnv):
    """Vertical moves are blocked inside a constrained region until ``t0``.

    Reward is shaped by distance to ``goal_cell``; cells inside the region
    pay nothing while the constraint is active, so the best reward is only
    attainable after release.
    """

    name = "constrained"

    def __init__(self, size=9, t0=20_000, episode_length=1000, seed=0,
                 start_cell=None, goal_cell=(0, 0), region=None, blocked_actions=(UP, DOWN)):
        half = size // 2
        self.region = frozenset(region) if region is not None else frozenset(
            (r, c) for r in range(half) for c in range(half))
        self.blocked_actions_by_region = {"region": frozenset(blocked_actions)}
        self.goal_cell = tuple(goal_cell)
        self.t0 = int(t0)
        if start_cell is None:
            start_cell = (size - 1, 0)
        super().__init__(size, [self.t0], episode_length, seed, start_cell)

    def blocked(self, phase):
        return self.blocked_actions_by_region["region"] if phase == 0 else frozenset()

    def _allowed(self, cell, action, phase):
        return not (cell in self.region and action in self.blocked(phase))

    def _reward(self, state, phase):
        cell = state["agent"]
        if phase == 0 and cell in self.region:
            return 0.0
        d = abs(cell[0] - self.goal_cell[0]) + abs(cell[1] - self.goal_cell[1])
        return 1.0 - d / (2.0 * (self.size - 1))


class PhaseSwapGrid(GridEnv):
    """Background id flips at ``t0`` and reverts at ``t1``; reward 1 at the goal."""

    name = "phase_swap"

    def __init__(self, size=9, t0=20_000, t1=40_000, episode_length=1000, seed=0,
                 start_cell=(0, 0), goal_cell=None, n_backgrounds=2):
        if t1 <= t0:
            raise ValueError("t1 must come after t0")
        self.t0, self.t1 = int(t0), int(t1)
        self.n_backgrounds = int(n_backgrounds)
        self.goal_cell = tuple(goal_cell) if goal_cell is not None else (size - 1, size - 1)
        super().__init__(size, [self.t0, self.t1], episode_length, seed, start_cell)

    @property
    def blocks(self):
        return [("agent", self.size * self.size), ("background", self.n_backgrounds)]

    def background_id(self, phase):
        return 1 if phase == 1 else 0

    def _encode(self, state, phase):
        obs = np.zeros(self.obs_dim, dtype=np.float32)
        obs[self.cell_index(state["agent"])] = 1.0
        obs[self.size * self.size + self.background_id(phase)] = 1.0
        return obs

    def _reward(self, state, phase):
        return 1.0 if state["agent"] == self.goal_cell else 0.0

    def _terminal(self, state, phase):
        return state["agent"] == self.goal_cell


ENVIRONMENTS = {
    NovelObjectGrid.name: NovelObjectGrid,
    ConstrainedGrid.name: ConstrainedGrid,
    PhaseSwapGrid.name: PhaseSwapGrid,
}


def make_env(name, **params):
    try:
        cls = ENVIRONMENTS[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}") from None
    return cls(**params)
