"""Ring-buffer replay with visit counts and pluggable prioritization.

Slot ids handed out by :meth:`PrioritizedBuffer.add` are global insertion
indices; the physical slot is ``(id - base) % capacity`` where ``base`` only
moves on :meth:`PrioritizedBuffer.clear`. An id whose slot has since been
overwritten is stale and is skipped by :meth:`update_priorities`.
"""
import enum
import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .sumtree import SumTree

# magic, then version u32, capacity u64, obs_dim u32, inserted_total u64,
# write_cursor u64, id_base u64, next_id u64, running_loss_min f64
_HEADER = "<IQIQQQQd"


class EmptyBufferError(RuntimeError):
    pass


class Strategy(str, enum.Enum):
    UNIFORM = "uniform"
    TD = "td"
    COUNT = "count"
    ADVERSARIAL = "adversarial"
    CURIOUS = "curious"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "").replace("_", "")
        aliases = {"curiousreplay": "curious", "cr": "curious", "tdprioritized": "td",
                   "countonly": "count", "adversarialonly": "adversarial"}
        key = aliases.get(key, key)
        for s in cls:
            if s.value == key:
                return s
        raise ValueError(f"unknown strategy {name!r}")


@dataclass(frozen=True)
class Transition:
    observation: np.ndarray
    action: int
    reward: float
    next_observation: np.ndarray
    terminal: bool = False
    env_step: int = 0
    # diagnostics only; prioritization and learning never read it
    phase_tag: Optional[int] = None

    def __post_init__(self):
        if np.shape(self.observation) != np.shape(self.next_observation):
            raise ValueError("observation and next_observation differ in shape")


@dataclass
class PriorityParams:
    strategy: Strategy = Strategy.CURIOUS
    c: float = 1e4
    beta: float = 0.7
    alpha: float = 0.7
    epsilon: float = 0.01
    p_max: float = 1e5
    use_running_min: bool = False
    gamma: float = 0.99

    def __post_init__(self):
        self.strategy = Strategy.parse(self.strategy)
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.p_max > 0:
            raise ValueError("p_max must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")


def compute_priority(params, visit_count, signal):
    """Priority of one transition given its visit count and loss/TD signal."""
    if math.isnan(signal) or math.isinf(signal):
        raise ValueError(f"signal must be finite, got {signal}")
    if visit_count < 0:
        raise ValueError("visit_count must be nonnegative")
    s = params.strategy
    if s is Strategy.UNIFORM:
        return 1.0
    if s is Strategy.COUNT:
        return params.beta ** visit_count
    error_term = (abs(signal) + params.epsilon) ** params.alpha
    if s is Strategy.CURIOUS:
        return params.c * params.beta ** visit_count + error_term
    # ADVERSARIAL and TD share the form; only the signal's meaning differs
    return error_term


@dataclass
class PriorityDiagnostics:
    occupied: int
    relative_probability: dict = field(default_factory=dict)  # tag -> median
    mean_visit_count: dict = field(default_factory=dict)      # tag -> mean
    histogram_counts: list = field(default_factory=list)
    histogram_edges: list = field(default_factory=list)       # log10(priority)

    def as_dict(self):
        return {
            "occupied": self.occupied,
            "relative_probability": {str(k): v for k, v in self.relative_probability.items()},
            "mean_visit_count": {str(k): v for k, v in self.mean_visit_count.items()},
            "histogram_counts": list(self.histogram_counts),
            "histogram_edges": list(self.histogram_edges),
        }


class PrioritizedBuffer:
    def __init__(self, capacity, params=None):
        capacity = int(capacity)
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.params = params if params is not None else PriorityParams()
        self.slots = [None] * capacity
        self.priority = np.zeros(capacity, dtype=np.float64)
        self.visit_count = np.zeros(capacity, dtype=np.int64)
        self.last_signal = np.zeros(capacity, dtype=np.float64)
        self.slot_id = np.full(capacity, -1, dtype=np.int64)
        self.phase_tags = np.full(capacity, -1, dtype=np.int64)
        self.tree = SumTree(capacity)
        self.write_cursor = 0
        self.inserted_total = 0
        self.running_loss_min = math.inf
        self._id_base = 0
        self._next_id = 0
        self.skipped_updates = 0
        self.priority_updates = 0
        self.obs_dim = None

    def __len__(self):
        return min(self.inserted_total, self.capacity)

    @property
    def occupied(self):
        return len(self)

    def add(self, transition):
        dim = int(np.size(transition.observation))
        if self.obs_dim is None:
            self.obs_dim = dim
        elif dim != self.obs_dim:
            raise ValueError(f"observation dimension {dim} != buffer dimension {self.obs_dim}")
        slot = self.write_cursor
        sid = self._next_id
        self.slots[slot] = transition
        self.slot_id[slot] = sid
        self.phase_tags[slot] = -1 if transition.phase_tag is None else transition.phase_tag
        self.priority[slot] = self.params.p_max
        self.visit_count[slot] = 0
        self.last_signal[slot] = 0.0
        self.tree.set(slot, self.params.p_max)
        self.write_cursor = (slot + 1) % self.capacity
        self.inserted_total += 1
        self._next_id += 1
        return sid

    def clear(self):
        """Drop every stored transition; outstanding ids become stale."""
        for slot in range(len(self)):
            self.slots[slot] = None
            self.tree.set(slot, 0.0)
        self.slot_id[:] = -1
        self.phase_tags[:] = -1
        self.priority[:] = 0.0
        self.visit_count[:] = 0
        self.last_signal[:] = 0.0
        self.write_cursor = 0
        self.inserted_total = 0
        # ids keep counting so that pre-clear ids read as stale
        self._id_base = self._next_id

    def _slot_of(self, sid):
        if not self._id_base <= sid < self._next_id:
            return None
        slot = (sid - self._id_base) % self.capacity
        if self.slot_id[slot] != sid:
            return None
        return slot

    def get(self, sid):
        slot = self._slot_of(sid)
        if slot is None:
            raise KeyError(f"slot id {sid} is not resident")
        return self.slots[slot]

    def sample_batch(self, batch_size, rng):
        if len(self) == 0:
            raise EmptyBufferError("cannot sample from an empty buffer")
        slots = self.tree.sample_batch(batch_size, rng)
        return [(int(self.slot_id[s]), self.slots[s]) for s in slots]

    def probabilities(self, ids):
        """p_i / sum_j p_j for each id, for callers adding importance weights."""
        total = self.tree.total()
        out = []
        for sid in ids:
            slot = self._slot_of(sid)
            out.append(0.0 if slot is None else self.priority[slot] / total)
        return out

    def update_priorities(self, ids, signals):
        if len(ids) != len(signals):
            raise ValueError("ids and signals must have the same length")
        params = self.params
        uniform = params.strategy is Strategy.UNIFORM
        for sid, signal in zip(ids, signals):
            signal = float(signal)
            if math.isnan(signal):
                raise ValueError("signal must not be NaN")
            slot = self._slot_of(sid)
            if slot is None:
                self.skipped_updates += 1
                continue
            effective = signal
            if params.use_running_min:
                self.running_loss_min = min(self.running_loss_min, signal)
                effective = signal - self.running_loss_min
            v = int(self.visit_count[slot])
            if not uniform:
                p = compute_priority(params, v, effective)
                self.priority[slot] = p
                self.tree.set(slot, p)
            self.visit_count[slot] = v + 1
            self.last_signal[slot] = signal
            self.priority_updates += 1

    def diagnostics(self, bins=12):
        n = len(self)
        diag = PriorityDiagnostics(occupied=n)
        if n == 0:
            return diag
        pri = self.priority[:n]
        total = pri.sum()
        rel = (pri / total) * n
        tags = self.phase_tags[:n]
        visits = self.visit_count[:n]
        for tag in np.unique(tags):
            mask = tags == tag
            key = None if tag == -1 else int(tag)
            diag.relative_probability[key] = float(np.median(rel[mask]))
            diag.mean_visit_count[key] = float(visits[mask].mean())
        logp = np.log10(pri)
        lo, hi = float(logp.min()), float(logp.max())
        if hi - lo < 1e-12:
            lo, hi = lo - 0.5, hi + 0.5
        counts, edges = np.histogram(logp, bins=bins, range=(lo, hi))
        diag.histogram_counts = counts.tolist()
        diag.histogram_edges = edges.tolist()
        return diag

    # -- binary snapshot -------------------------------------------------

    MAGIC = b"CRBF"
    VERSION = 1

    def _record_dtype(self, dim):
        return np.dtype([
            ("occupied", "<u1"), ("slot_id", "<i8"), ("priority", "<f8"),
            ("visit_count", "<u8"), ("last_signal", "<f8"), ("action", "<i8"),
            ("reward", "<f8"), ("terminal", "<u1"), ("env_step", "<u8"),
            ("phase_tag", "<i4"), ("observation", "<f8", (dim,)),
            ("next_observation", "<f8", (dim,)),
        ])

    def save(self, path):
        """Write the little-endian snapshot described in the README."""
        dim = self.obs_dim or 0
        rec = np.zeros(self.capacity, dtype=self._record_dtype(dim))
        for slot, t in enumerate(self.slots):
            if t is None:
                continue
            r = rec[slot]
            r["occupied"] = 1
            r["slot_id"] = self.slot_id[slot]
            r["priority"] = self.priority[slot]
            r["visit_count"] = self.visit_count[slot]
            r["last_signal"] = self.last_signal[slot]
            r["action"] = t.action
            r["reward"] = t.reward
            r["terminal"] = int(bool(t.terminal))
            r["env_step"] = t.env_step
            r["phase_tag"] = -1 if t.phase_tag is None else t.phase_tag
            r["observation"] = t.observation
            r["next_observation"] = t.next_observation
        header = self.MAGIC + struct.pack(
            _HEADER, self.VERSION, self.capacity, dim, self.inserted_total,
            self.write_cursor, self._id_base, self._next_id, self.running_loss_min)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(rec.tobytes())

    @classmethod
    def load(cls, path, params=None):
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:4] != cls.MAGIC:
            raise ValueError("not a replay snapshot (bad magic)")
        hsize = 4 + struct.calcsize(_HEADER)
        version, capacity, dim, inserted, cursor, id_base, next_id, run_min = struct.unpack(
            _HEADER, data[4:hsize])
        if version != cls.VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        buf = cls(capacity, params)
        rec = np.frombuffer(data[hsize:], dtype=buf._record_dtype(dim), count=capacity)
        buf.obs_dim = dim if inserted else None
        buf.inserted_total = inserted
        buf.write_cursor = cursor
        buf._id_base = id_base
        buf._next_id = next_id
        buf.running_loss_min = run_min
        for slot in range(capacity):
            r = rec[slot]
            if not r["occupied"]:
                continue
            tag = int(r["phase_tag"])
            buf.slots[slot] = Transition(
                observation=np.array(r["observation"]), action=int(r["action"]),
                reward=float(r["reward"]), next_observation=np.array(r["next_observation"]),
                terminal=bool(r["terminal"]), env_step=int(r["env_step"]),
                phase_tag=None if tag < 0 else tag)
            buf.slot_id[slot] = r["slot_id"]
            buf.phase_tags[slot] = tag
            buf.priority[slot] = r["priority"]
            buf.visit_count[slot] = r["visit_count"]
            buf.last_signal[slot] = r["last_signal"]
            buf.tree.set(slot, float(r["priority"]))
        return buf
