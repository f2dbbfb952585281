import numpy as np
import pytest

from replaylab.envs import (DOWN, LEFT, NOOP, RIGHT, UP, ConstrainedGrid, NovelObjectGrid,
                            PhaseSchedule, PhaseSwapGrid, interaction_steps_from_counts,
                            make_env, steps_to_kth_interaction)


def agent_cell(env, obs):
    i = int(np.argmax(obs[:env.size * env.size]))
    return divmod(i, env.size)


def test_reset_is_deterministic():
    for name in ("novel_object", "constrained", "phase_swap"):
        a, b = make_env(name, seed=3), make_env(name, seed=3)
        np.testing.assert_array_equal(a.reset(3), b.reset(3))


def test_novel_object_reset_has_no_object():
    env = NovelObjectGrid(t0=50)
    obs = env.reset()
    assert not obs[81:].any()
    assert env.object_cell() is None


def test_phase_swap_reset_background():
    env = PhaseSwapGrid(t0=5, t1=10)
    obs = env.reset()
    np.testing.assert_array_equal(obs[81:], [1.0, 0.0])


def test_wall_clipping():
    env = NovelObjectGrid(t0=50)
    obs = env.reset()
    for a in (UP, LEFT, NOOP):
        nxt, r, term, _ = env.step(a)
        np.testing.assert_array_equal(nxt, obs)
        assert r == 0.0 and not term


def test_invalid_action():
    env = NovelObjectGrid()
    with pytest.raises(ValueError):
        env.step(5)
    with pytest.raises(ValueError):
        env.step(-1)


def walk_to(env, cell):
    r, c = env.state["agent"]
    while r < cell[0]:
        env.step(DOWN)
        r += 1
    while c < cell[1]:
        env.step(RIGHT)
        c += 1
    assert env.state["agent"] == cell


def test_object_appears_at_t0_near_centre():
    env = NovelObjectGrid(t0=10)
    env.reset()
    walk_to(env, (3, 4))
    while env.global_step < 9:
        obs, *_ = env.step(NOOP)
        assert not obs[81:].any()
    obs, _, _, info = env.step(NOOP)
    assert info["phase"] == 1
    assert env.object_cell() == env.center
    assert obs[81 + env.view_index((3, 4), env.center)] == 1.0


def test_push_counts_interaction_and_moves_object():
    env = NovelObjectGrid(t0=0)
    env.reset()
    assert env.object_cell() == (4, 4)
    walk_to(env, (3, 4))
    _, _, _, info = env.step(DOWN)
    assert info["interactions"] == 1
    assert env.object_cell() == (5, 4) and env.state["agent"] == (4, 4)
    assert env.interaction_steps == [env.global_step]


def test_blocked_push_still_counts():
    env = NovelObjectGrid(t0=0)
    env.reset()
    env.state = {"agent": (8, 6), "object": (8, 7)}
    env.step(RIGHT)
    assert env.state == {"agent": (8, 7), "object": (8, 8)}
    env.step(RIGHT)
    assert env.state == {"agent": (8, 7), "object": (8, 8)}
    assert env.interactions == 2


def test_object_removed_at_t1():
    env = NovelObjectGrid(t0=2, t1=4)
    env.reset()
    for _ in range(3):
        env.step(NOOP)
    assert env.object_cell() is not None
    env.step(NOOP)
    assert env.phase == 2 and env.object_cell() is None


def test_constrained_blocks_vertical_moves_until_release():
    env = ConstrainedGrid(t0=20, start_cell=(1, 1))
    env.reset()
    env.step(UP)
    assert env.state["agent"] == (1, 1)
    _, r, _, _ = env.step(LEFT)
    assert env.state["agent"] == (1, 0) and r == 0.0
    while env.global_step < 20:
        env.step(NOOP)
    _, r, _, _ = env.step(UP)
    assert env.state["agent"] == (0, 0) and r == 1.0


def test_phase_swap_goal_and_background():
    env = PhaseSwapGrid(size=3, t0=2, t1=6, start_cell=(2, 1))
    obs = env.reset()
    _, r, term, _ = env.step(RIGHT)
    assert r == 1.0 and term
    obs = env.new_episode()
    obs, *_ = env.step(NOOP)
    np.testing.assert_array_equal(obs[9:], [0.0, 1.0])
    for _ in range(4):
        obs, *_ = env.step(NOOP)
    np.testing.assert_array_equal(obs[9:], [1.0, 0.0])


def test_episode_truncation_keeps_clock():
    env = NovelObjectGrid(t0=100, episode_length=5)
    env.reset()
    for i in range(5):
        _, _, _, info = env.step(RIGHT)
    assert info["truncated"]
    env.new_episode()
    assert env.global_step == 5 and env.state["agent"] == env.start_cell


def test_schedule():
    s = PhaseSchedule([10, 20])
    assert [s.phase_of(t) for t in (0, 9, 10, 19, 20, 99)] == [0, 0, 1, 1, 2, 2]
    with pytest.raises(ValueError):
        PhaseSchedule([20, 10])


def test_steps_to_kth_interaction():
    t0 = 1000
    assert steps_to_kth_interaction([t0 + 3, t0 + 10], 1, t0) == 3
    assert steps_to_kth_interaction([t0 + 3], 2, t0) is None
    trace = [t0 + 1, t0 + 5, t0 + 6, t0 + 900, t0 + 1234, t0 + 2000]
    assert steps_to_kth_interaction(trace, 5, t0) == 1234
    assert interaction_steps_from_counts([5, 6, 9], [0, 2, 3]) == [6, 6, 9]
    with pytest.raises(ValueError):
        steps_to_kth_interaction([], 0)


def test_test_sets_are_fixed_per_phase():
    a, b = NovelObjectGrid(t0=30, t1=60, seed=1), NovelObjectGrid(t0=30, t1=60, seed=1)
    assert sorted(a.test_sets) == [0, 1, 2]
    for p in a.test_sets:
        for x, y in zip(a.test_sets[p], b.test_sets[p]):
            np.testing.assert_array_equal(x, y)
    obs, acts, nxt, rew = a.test_sets[1]
    assert obs[:, 81:].any() and len(acts) == len(obs) == len(nxt) == len(rew)


def test_quantize_round_trips_observations():
    env = NovelObjectGrid(t0=0)
    env.reset()
    rng = np.random.default_rng(0)
    for _ in range(200):
        obs, *_ = env.step(int(rng.integers(5)))
        noisy = obs + rng.normal(0, 0.05, obs.shape)
        np.testing.assert_array_equal(env.quantize(noisy), obs)
