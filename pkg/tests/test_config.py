import numpy as np
import pytest
from hypothesis import given, strategies as st

from replaylab import config as C
from replaylab.agent import AgentConfig
from replaylab.replay import PriorityParams, Strategy


def random_config(rng):
    env = ["novel_object", "constrained", "phase_swap"][rng.integers(3)]
    t0 = int(rng.integers(1, 500)) * 5
    params = {"t0": t0, "size": int(rng.integers(5, 12))}
    if env != "constrained" and rng.random() < 0.7:
        params["t1"] = t0 + int(rng.integers(1, 400)) * 5
    if env == "phase_swap" and "t1" not in params:
        params["t1"] = t0 + 5
    L = int(rng.integers(1, 8))
    return C.RunConfig(
        env_name=env, env_params=params,
        priority=PriorityParams(
            strategy=list(Strategy)[rng.integers(5)], c=float(rng.uniform(0.1, 1e5)),
            beta=float(rng.random()), alpha=float(rng.random()),
            epsilon=float(rng.uniform(1e-6, 1)), p_max=float(rng.uniform(1, 1e6)),
            use_running_min=bool(rng.random() < 0.5), gamma=float(rng.uniform(0.01, 0.999))),
        agent=AgentConfig(steps_per_train=L, batch_size=int(rng.integers(1, 64)),
                          imagination_rollouts_per_train=int(rng.integers(0, 16)),
                          intrinsic_mode=["none", "disagreement"][rng.integers(2)],
                          intrinsic_scale=float(rng.uniform(0, 500)),
                          epsilon_greedy=float(rng.random()),
                          q_learning_rate=float(rng.uniform(0.01, 1))),
        model=C.ModelConfig(learning_rate=float(rng.uniform(0.01, 1)),
                            weight_decay=float(rng.uniform(0, 0.5)),
                            ensemble_size=int(rng.integers(1, 8)),
                            init_scale=float(rng.uniform(0, 1))),
        capacity=int(rng.integers(1, 10**6)),
        total_steps=L * int(rng.integers(0, 10**4)),
        seed=int(rng.integers(0, 2**31)),
        metrics_interval=L * int(rng.integers(1, 100)),
        out=f"runs/{rng.integers(1000)} dir",
        label=None if rng.random() < 0.5 else f"lbl#{rng.integers(100)}",
        clear_buffer_at=sorted(L * int(v) for v in rng.integers(0, 1000, rng.integers(0, 3))),
    )


def test_round_trip_1000_configs():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        cfg = random_config(rng)
        assert C.loads(C.dumps(cfg)) == cfg


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_values_round_trip(x):
    assert C.parse_value("k", C.format_value(x)) == x


def test_comments_and_blank_lines():
    cfg = C.loads('# hi\n\nenv.name = "phase_swap"  # trailing\nrun.label = "a#b"\n'
                  'env.t0 = 10\nenv.t1 = 20\n')
    assert cfg.env_name == "phase_swap" and cfg.label == "a#b"
    assert cfg.env_params == {"t0": 10, "t1": 20}


@pytest.mark.parametrize("text,field", [
    ("priority.bogus = 1", "priority.bogus"),
    ("priority.c = \"x\"", "priority.c"),
    ("agent.batch_size = 1.5", "agent.batch_size"),
    ("run.total_steps = 7", "run.total_steps"),
    ("run.metrics_interval = 3", "run.metrics_interval"),
    ("nosection = 1", "nosection"),
    ("thing.x = 1", "thing.x"),
    ("env.name = \"mars\"", "env.name"),
    ("env.warp = 3", "env"),
    ("priority.use_running_min = 1", "priority.use_running_min"),
    ("run.clear_buffer_at = [1.5]", "run.clear_buffer_at"),
    ("priority.beta = 2.0", "priority"),
    ("run.seed = [1", "run.seed"),
    ("justtext", "line 1"),
])
def test_errors_name_the_field(text, field):
    with pytest.raises(C.ConfigError) as err:
        C.loads(text)
    assert err.value.field == field


def test_duplicate_key():
    with pytest.raises(C.ConfigError):
        C.loads("run.seed = 1\nrun.seed = 2\n")


def test_overrides_and_save(tmp_path):
    cfg = C.RunConfig().with_overrides({"priority.strategy": "td", "run.seed": 9})
    assert cfg.priority.strategy is Strategy.TD and cfg.seed == 9 and cfg.name == "td"
    path = tmp_path / "c.cfg"
    C.save(cfg, path, comment="two\nlines")
    assert path.read_text().startswith("# two\n# lines\n")
    assert C.load(path) == cfg


def test_shipped_configs_load():
    import glob
    import os
    root = os.path.join(os.path.dirname(__file__), "..", "configs")
    paths = glob.glob(os.path.join(root, "*.cfg"))
    assert paths
    for p in paths:
        C.load(p)
