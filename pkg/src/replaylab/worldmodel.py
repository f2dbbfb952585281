"""Action-conditioned linear world model and a disagreement ensemble.

Each action owns an affine map from the observation to (next observation,
reward). With one-hot gridworld observations this represents any
deterministic move exactly, which an additive observation-plus-action input
cannot.
"""
import numpy as np
from numba import njit


def stack_batch(transitions):
    """Column arrays (obs, actions, next_obs, rewards) for a list of transitions."""
    obs = np.stack([np.asarray(t.observation, dtype=np.float64) for t in transitions])
    actions = np.fromiter((t.action for t in transitions), dtype=np.int64, count=len(transitions))
    next_obs = np.stack([np.asarray(t.next_observation, dtype=np.float64) for t in transitions])
    rewards = np.fromiter((t.reward for t in transitions), dtype=np.float64, count=len(transitions))
    return obs, actions, next_obs, rewards


@njit(cache=True)
def _forward_kernel(params, scale, feats, actions, out):
    n, d = feats.shape
    width = out.shape[1]
    for i in range(n):
        a = actions[i]
        for k in range(width):
            out[i, k] = 0.0
        for j in range(d):
            f = feats[i, j]
            if f != 0.0:
                f *= scale
                for k in range(width):
                    out[i, k] += f * params[a, j, k]


@njit(cache=True)
def _row_mean_update_kernel(params, feats, actions, rows, counts):
    """Like _outer_update_kernel but each touched row takes the mean update."""
    n, d = feats.shape
    width = rows.shape[1]
    counts[:, :] = 0
    for i in range(n):
        a = actions[i]
        for j in range(d):
            if feats[i, j] != 0.0:
                counts[a, j] += 1
    for i in range(n):
        a = actions[i]
        for j in range(d):
            f = feats[i, j]
            if f != 0.0:
                f /= counts[a, j]
                for k in range(width):
                    params[a, j, k] += f * rows[i, k]


@njit(cache=True)
def _outer_update_kernel(params, feats, actions, rows):
    """params[a_i, j, :] += feats[i, j] * rows[i, :] over nonzero features."""
    n, d = feats.shape
    width = rows.shape[1]
    for i in range(n):
        a = actions[i]
        for j in range(d):
            f = feats[i, j]
            if f != 0.0:
                for k in range(width):
                    params[a, j, k] += f * rows[i, k]


def _with_bias(obs):
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    out = np.empty((obs.shape[0], obs.shape[1] + 1))
    out[:, :-1] = obs
    out[:, -1] = 1.0
    return out


class DynamicsModel:
    """Linear next-observation and reward predictor.

    ``params[a]`` is a ``(obs_dim + 1, obs_dim + 1)`` matrix: rows index the
    observation features plus a bias, the first ``obs_dim`` columns predict
    the next observation and the last column predicts the reward.

    Training takes a preconditioned gradient step on the batch loss: each
    transition's gradient is divided by its squared feature norm, the
    observation head uses the summed rather than per-dimension averaged
    error, and each weight row averages the contributions of the batch items
    that touch it. A learning rate of 1 therefore fits a lone transition in
    one step regardless of ``obs_dim``, feature scale or batch size, and any
    rate in (0, 1] is stable. Weight decay is applied lazily through a global
    multiplier so a step costs O(nonzero features).
    """

    def __init__(self, obs_dim, n_actions, learning_rate=0.1, weight_decay=0.0,
                 seed=0, init_scale=0.05):
        if obs_dim < 1 or n_actions < 1:
            raise ValueError("obs_dim and n_actions must be positive")
        if not learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if weight_decay < 0 or learning_rate * weight_decay >= 1:
            raise ValueError("weight_decay must be >= 0 and below 1 / learning_rate")
        self.obs_dim = int(obs_dim)
        self.n_actions = int(n_actions)
        self.learning_rate = float(learning_rate)
        self.weight_decay = float(weight_decay)
        rng = np.random.default_rng(seed)
        d = self.obs_dim + 1
        self._raw = rng.uniform(-init_scale, init_scale, size=(self.n_actions, d, d))
        self._scale = 1.0
        self._counts = np.zeros((self.n_actions, d), dtype=np.int64)

    @property
    def params(self):
        return self._raw * self._scale

    @params.setter
    def params(self, value):
        value = np.array(value, dtype=np.float64)
        if value.shape != self._raw.shape:
            raise ValueError(f"params must have shape {self._raw.shape}")
        self._raw = value
        self._scale = 1.0

    @property
    def weights(self):
        return self.params[:, :, :-1]

    @property
    def reward_weights(self):
        return self.params[:, :, -1]

    def copy(self):
        other = object.__new__(DynamicsModel)
        other.__dict__.update(self.__dict__)
        other._raw = self._raw.copy()
        other._counts = self._counts.copy()
        return other

    def _check(self, obs, actions):
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        if obs.shape[1] != self.obs_dim:
            raise ValueError(f"observation dimension {obs.shape[1]} != model dimension {self.obs_dim}")
        actions = np.atleast_1d(np.asarray(actions, dtype=np.int64))
        if actions.shape[0] != obs.shape[0]:
            raise ValueError("one action per observation required")
        if actions.size and (actions.min() < 0 or actions.max() >= self.n_actions):
            raise ValueError("action id out of range")
        return obs, actions

    def _forward(self, feats, actions):
        out = np.empty((feats.shape[0], self.obs_dim + 1))
        _forward_kernel(self._raw, self._scale, feats, actions, out)
        return out

    def forward(self, obs, actions):
        """Batched prediction; returns an ``(n, obs_dim + 1)`` array."""
        obs, actions = self._check(obs, actions)
        return self._forward(_with_bias(obs), actions)

    def predict(self, observation, action):
        out = self.forward(np.asarray(observation)[None, :], [action])[0]
        return out[:-1], float(out[-1])

    def _residual(self, obs, actions, next_obs, rewards):
        obs, actions = self._check(obs, actions)
        next_obs = np.atleast_2d(np.asarray(next_obs, dtype=np.float64))
        if next_obs.shape != obs.shape:
            raise ValueError("next observation dimension mismatch")
        feats = _with_bias(obs)
        resid = self._forward(feats, actions)
        resid[:, :-1] -= next_obs
        resid[:, -1] -= np.asarray(rewards, dtype=np.float64)
        return feats, actions, resid

    def _losses(self, resid):
        return np.einsum("ij,ij->i", resid[:, :-1], resid[:, :-1]) / self.obs_dim + resid[:, -1] ** 2

    def batch_losses(self, obs, actions, next_obs, rewards):
        return self._losses(self._residual(obs, actions, next_obs, rewards)[2])

    def loss(self, transition):
        o, a, n, r = stack_batch([transition])
        return float(self.batch_losses(o, a, n, r)[0])

    def gradient(self, obs, actions, next_obs, rewards):
        """Exact gradient of the mean batch loss with respect to ``params``."""
        feats, actions, resid = self._residual(obs, actions, next_obs, rewards)
        resid[:, :-1] *= 2.0 / self.obs_dim
        resid[:, -1] *= 2.0
        grad = np.zeros_like(self._raw)
        _outer_update_kernel(grad, feats, actions, resid / feats.shape[0])
        return grad

    def train_arrays(self, obs, actions, next_obs, rewards):
        """One training step; returns per-item losses from before the step."""
        feats, actions, resid = self._residual(obs, actions, next_obs, rewards)
        losses = self._losses(resid)
        if self.weight_decay:
            self._scale *= 1.0 - self.learning_rate * self.weight_decay
            if self._scale < 1e-150:
                self._raw *= self._scale
                self._scale = 1.0
        step = self.learning_rate / np.einsum("ij,ij->i", feats, feats)
        _row_mean_update_kernel(self._raw, feats, actions, resid * (-step / self._scale)[:, None],
                                self._counts)
        return losses

    def train_batch(self, batch):
        if not batch:
            raise ValueError("empty batch")
        return self.train_arrays(*stack_batch(batch)).tolist()


class DisagreementEnsemble:
    """K independently initialised models trained on identical batches."""

    def __init__(self, obs_dim, n_actions, k=5, learning_rate=0.1, weight_decay=0.0,
                 seed=0, init_scale=0.05):
        if k < 1:
            raise ValueError("ensemble needs at least one member")
        self.members = [
            DynamicsModel(obs_dim, n_actions, learning_rate, weight_decay,
                          seed=seed + 1000 * (i + 1), init_scale=init_scale)
            for i in range(k)
        ]

    def __len__(self):
        return len(self.members)

    def train_arrays(self, obs, actions, next_obs, rewards):
        for m in self.members:
            m.train_arrays(obs, actions, next_obs, rewards)

    def train_batch(self, batch):
        self.train_arrays(*stack_batch(batch))

    def disagreement_batch(self, obs, actions):
        """Mean over output dimensions of the across-member population variance."""
        m0 = self.members[0]
        obs, actions = m0._check(obs, actions)
        feats = _with_bias(obs)
        preds = np.stack([m._forward(feats, actions)[:, :-1] for m in self.members])
        return preds.var(axis=0).mean(axis=1)

    def disagreement(self, observation, action):
        return float(self.disagreement_batch(np.asarray(observation)[None, :], [action])[0])
