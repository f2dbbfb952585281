"""Run templates for the changing-environment assays used by the acceptance suite."""
from .agent import AgentConfig
from .config import ModelConfig, RunConfig
from .replay import PriorityParams, Strategy

ADAPTATION_SEEDS = list(range(10))
ADAPTATION_STRATEGIES = ("curious", "uniform", "count", "adversarial")
ADAPTATION_METRIC = "steps_to_interaction:5"

# shared agent/model settings for every assay
GAMMA = 0.9
INTRINSIC_SCALE = 100.0
MODEL_LR = 0.5


def _base(strategy, **priority):
    return RunConfig(
        env_name="novel_object",
        priority=PriorityParams(strategy=Strategy.parse(strategy), gamma=GAMMA, **priority),
        agent=AgentConfig(intrinsic_mode="disagreement", intrinsic_scale=INTRINSIC_SCALE),
        model=ModelConfig(learning_rate=MODEL_LR),
    )


def adaptation(strategy, seed=0, t0=20_000, total_steps=60_000):
    """Novel object appears at ``t0`` in an otherwise static 9x9 arena."""
    cfg = _base(strategy)
    return cfg.replace(env_params={"size": 9, "t0": t0}, total_steps=total_steps, seed=seed)


FORGETTING_T0 = 10_000
FORGETTING_T1 = 30_000
FORGETTING_TOTAL = 50_000
# untouched weights halve over the 20k steps after removal: (1 - lr * wd) ** 4000 = 0.5
FORGETTING_WEIGHT_DECAY = 3.5e-4


def forgetting(seed=0, clear=False, weight_decay=None):
    """Object appears at T0 and is removed at T1; optionally wipe the buffer at T1."""
    cfg = _base("curious")
    wd = FORGETTING_WEIGHT_DECAY if weight_decay is None else weight_decay
    return cfg.replace(
        env_params={"size": 9, "t0": FORGETTING_T0, "t1": FORGETTING_T1},
        model=ModelConfig(learning_rate=MODEL_LR, weight_decay=wd),
        total_steps=FORGETTING_TOTAL, seed=seed,
        clear_buffer_at=[FORGETTING_T1] if clear else [],
        label="curious_clear" if clear else "curious",
    )
