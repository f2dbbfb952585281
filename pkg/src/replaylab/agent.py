"""Dyna-style tabular agent running the prioritized replay training cycle."""
import enum
from dataclasses import dataclass

import numpy as np

from .replay import PriorityParams, Strategy, Transition


class IntrinsicMode(str, enum.Enum):
    NONE = "none"
    DISAGREEMENT = "disagreement"


def obs_key(obs):
    return np.asarray(obs, dtype=np.float32).tobytes()


class ValueTable:
    """Q(x, a) keyed by the byte image of the quantized observation."""

    def __init__(self, n_actions, learning_rate=0.5, gamma=0.99, epsilon_greedy=0.1):
        if not 0.0 < gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 <= epsilon_greedy <= 1.0:
            raise ValueError("epsilon_greedy must lie in [0, 1]")
        self.n_actions = n_actions
        self.learning_rate = learning_rate
        self.gamma = gamma
        self.epsilon_greedy = epsilon_greedy
        self.q_values = {}
        self._zeros = np.zeros(n_actions)

    def q(self, key):
        return self.q_values.get(key, self._zeros)

    def value(self, key):
        row = self.q_values.get(key)
        return 0.0 if row is None else float(row.max())

    def update(self, key, action, target):
        row = self.q_values.get(key)
        if row is None:
            row = self.q_values[key] = np.zeros(self.n_actions)
        row[action] += self.learning_rate * (target - row[action])

    def greedy(self, key):
        row = self.q_values.get(key)
        # np.argmax returns the lowest index among ties
        return 0 if row is None else int(np.argmax(row))


@dataclass
class AgentConfig:
    steps_per_train: int = 5
    batch_size: int = 16
    imagination_rollouts_per_train: int = 8
    intrinsic_mode: IntrinsicMode = IntrinsicMode.NONE
    intrinsic_scale: float = 1.0
    epsilon_greedy: float = 0.1
    q_learning_rate: float = 0.5

    def __post_init__(self):
        self.intrinsic_mode = IntrinsicMode(str(getattr(self.intrinsic_mode, "value", self.intrinsic_mode)).lower())
        if self.steps_per_train < 1:
            raise ValueError("steps_per_train must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.imagination_rollouts_per_train < 0:
            raise ValueError("imagination_rollouts_per_train must be >= 0")
        if self.intrinsic_scale < 0:
            raise ValueError("intrinsic_scale must be >= 0")


@dataclass
class CycleReport:
    env_step: int
    interactions: int
    mean_model_loss: float
    mean_reward: float
    mean_abs_td: float
    skipped_updates: int


def intrinsic_reward(ensemble, observation, action, scale):
    return scale * ensemble.disagreement(observation, action)


class Agent:
    """Owns the environment interface, value table and policy.

    The world model, disagreement ensemble and buffer are passed into each
    :meth:`train_cycle` so they can be inspected or swapped by the caller.
    """

    def __init__(self, env, config=None, params=None):
        self.env = env
        self.config = config or AgentConfig()
        self.params = params or PriorityParams(strategy=Strategy.UNIFORM)
        self.strategy = self.params.strategy
        # one discount serves both Q-learning and TD priorities
        self.values = ValueTable(env.n_actions, self.config.q_learning_rate,
                                 self.params.gamma, self.config.epsilon_greedy)
        self.observation = env.observe()
        self.cycles = 0

    def act(self, observation, rng):
        explore = rng.random() < self.values.epsilon_greedy
        if explore:
            return int(rng.integers(self.env.n_actions))
        return self.values.greedy(obs_key(observation))

    def collect(self, buffer, rng, steps):
        env = self.env
        rewards = []
        for _ in range(steps):
            obs = self.observation
            phase = env.phase
            action = self.act(obs, rng)
            nxt, reward, terminal, info = env.step(action)
            buffer.add(Transition(obs, action, reward, nxt, terminal, env.global_step, phase))
            rewards.append(reward)
            if terminal or info["truncated"]:
                self.observation = env.new_episode()
            else:
                self.observation = nxt
        return rewards

    def train_cycle(self, buffer, model, ensemble, rng):
        cfg = self.config
        ext = self.collect(buffer, rng, cfg.steps_per_train)
        batch = buffer.sample_batch(cfg.batch_size, rng)
        ids = [sid for sid, _ in batch]
        trans = [t for _, t in batch]
        obs = np.stack([t.observation for t in trans]).astype(np.float64)
        actions = np.fromiter((t.action for t in trans), dtype=np.int64, count=len(trans))
        next_obs = np.stack([t.next_observation for t in trans]).astype(np.float64)
        rewards = np.fromiter((t.reward for t in trans), dtype=np.float64, count=len(trans))
        terminal = np.fromiter((t.terminal for t in trans), dtype=bool, count=len(trans))

        intrinsic = cfg.intrinsic_mode is IntrinsicMode.DISAGREEMENT
        if intrinsic and ensemble is None:
            raise ValueError("disagreement reward needs an ensemble")
        if intrinsic:
            used = cfg.intrinsic_scale * ensemble.disagreement_batch(obs, actions)
        else:
            used = rewards

        losses = model.train_arrays(obs, actions, next_obs, rewards)
        if ensemble is not None:
            ensemble.train_arrays(obs, actions, next_obs, rewards)

        vt = self.values
        gamma = vt.gamma
        keys = [obs_key(t.observation) for t in trans]
        next_keys = [obs_key(t.next_observation) for t in trans]
        # TD errors use the values from before this cycle's updates
        td = [used[i] + gamma * vt.value(next_keys[i]) * (not terminal[i]) - vt.value(keys[i])
              for i in range(len(trans))]
        for i in range(len(trans)):
            target = used[i] + gamma * vt.value(next_keys[i]) * (not terminal[i])
            vt.update(keys[i], int(actions[i]), target)
        self._imagine(obs, model, ensemble, rng, intrinsic)

        s = self.strategy
        if s is Strategy.TD:
            signals = td
        elif s is Strategy.UNIFORM:
            signals = [0.0] * len(ids)
        else:
            signals = losses.tolist()
        before = buffer.skipped_updates
        buffer.update_priorities(ids, signals)
        self.cycles += 1
        return CycleReport(
            env_step=self.env.global_step,
            interactions=getattr(self.env, "interactions", 0),
            mean_model_loss=float(np.mean(losses)),
            mean_reward=float(np.mean(ext)),
            mean_abs_td=float(np.mean(np.abs(td))),
            skipped_updates=buffer.skipped_updates - before,
        )

    def _imagine(self, obs, model, ensemble, rng, intrinsic):
        """One-step model rollouts from batch states with random actions."""
        n = self.config.imagination_rollouts_per_train
        if n == 0:
            return
        rows = np.arange(n) % obs.shape[0]
        starts = obs[rows]
        actions = rng.integers(self.env.n_actions, size=n)
        pred = model.forward(starts, actions)
        if intrinsic:
            rewards = self.config.intrinsic_scale * ensemble.disagreement_batch(starts, actions)
        else:
            rewards = pred[:, -1]
        vt = self.values
        for i in range(n):
            nxt = self.env.quantize(pred[i, :-1])
            target = rewards[i] + vt.gamma * vt.value(obs_key(nxt))
            vt.update(obs_key(starts[i]), int(actions[i]), target)
