import os
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from src.env.gridworld import KixEnv, locate_object, world_to_text
from src.env.objects import DIR_TO_VEC, Action, WorldObject
from src.errors import CheckpointError, ConfigError, NoCandidatesError
from src.knowledge.recommender import InteractionGoal
from src.learning.ppo import PpoConfig, Trajectory
from src.learning.rollout import (
    META_SUCCESS_REWARD, GoalTracker, InteractionResult, VariantConfig, WorkerOutput, WorkerState, WorkerStats,
    collect_meta_batch, episode_seed, meta_reward, run_episode, run_interaction_segment, run_proposal,
    run_reach_then_interact, target_faced,
)
from src.learning.trainer import LATEST, LOSSES_CSV, PROGRESS_CSV, evaluate_success, load_checkpoint, \
    save_checkpoint, train
from src.policies.nets import META_ACTIONS
from src.policies.repository import PolicyRepository


class ScriptedPolicy:
    """Always plays the same low-level action"""

    def __init__(self, action):
        self.action = int(action)
        self.calls = 0

    def predict(self, obs):
        self.calls += 1
        probs = np.zeros((1, len(Action)))
        probs[0, self.action] = 1.0
        return probs, np.zeros(1)


def short_layout(layout, max_steps=60):
    return replace(layout, max_steps=max_steps)


def fresh_env(layout, seed=0, task=0):
    env = KixEnv(layout, task)
    env.reset(seed)
    return env


def place_in_front(env, obj):
    """Put ``obj`` on a free interior cell and turn the agent to face it"""
    world = env.world
    layout = world.layout
    for y in range(layout.height):
        for x in range(layout.width):
            if layout.room_of((x, y)) is None or world.get((x, y)) is not None:
                continue
            for d, (dx, dy) in enumerate(DIR_TO_VEC):
                stand = (x - dx, y - dy)
                if layout.room_of(stand) is not None and world.get(stand) is None and stand != (x, y):
                    world.put((x, y), obj)
                    world.agent_pos, world.agent_dir = stand, d
                    return (x, y)
    raise AssertionError("no free cell pair")


def face_existing(env, oid):
    world = env.world
    pos = locate_object(world, oid).pos
    for d, (dx, dy) in enumerate(DIR_TO_VEC):
        stand = (pos[0] - dx, pos[1] - dy)
        if world.layout.room_of(stand) is not None and world.get(stand) is None:
            world.agent_pos, world.agent_dir = stand, d
            return pos
    raise AssertionError(f"object {oid} has no free neighbour")


def small_config(variant="KIX1", **overrides):
    settings = dict(variant=variant, meta_batch_size=8, interaction_budget=4, reach_budget=4, fallback_budget=2,
                    base_rollout_steps=16, total_steps=1, eval_every=1000, eval_episodes=2, checkpoint_every=1000)
    settings.update(overrides)
    return VariantConfig(**settings)


class TestMetaReward:
    def test_values(self):
        goal = InteractionGoal(1, "pickup")
        assert meta_reward(InteractionResult(goal, False, 3, 0.0, False)) == 0.0
        assert meta_reward(InteractionResult(goal, True, 3, 0.0, False)) == META_SUCCESS_REWARD
        won = InteractionResult(goal, True, 3, 0.9, True, env_success=True)
        assert meta_reward(won) == pytest.approx(META_SUCCESS_REWARD + 1.0 + 0.9)


class TestGoalTracker:
    def test_pickup(self, mini_layout):
        env = fresh_env(mini_layout)
        place_in_front(env, WorldObject("key", "red", oid=500))
        tracker = GoalTracker(env.world, InteractionGoal(500, "pickup"))
        assert not tracker.update(env.world)
        env.step(Action.pickup)
        assert tracker.update(env.world)

    def test_drop_needs_prior_carry(self, mini_layout):
        env = fresh_env(mini_layout)
        place_in_front(env, WorldObject("key", "red", oid=501))
        tracker = GoalTracker(env.world, InteractionGoal(501, "drop"))
        assert not tracker.update(env.world)
        env.step(Action.pickup)
        assert not tracker.update(env.world)
        env.step(Action.drop)
        assert tracker.update(env.world)

    def test_reveal(self, mini_layout):
        env = fresh_env(mini_layout)
        box = next(o for o in env.world.all_objects() if o.kind == "box")
        face_existing(env, box.oid)
        tracker = GoalTracker(env.world, InteractionGoal(box.oid, "reveal"))
        env.step(Action.toggle)
        assert tracker.update(env.world)

    def test_open_and_open_with_key(self, mini_layout):
        env = fresh_env(mini_layout)
        pos = mini_layout.door_position((0, 0), (1, 0))
        door = env.world.get(pos)
        door.state = "closed"
        face_existing(env, door.oid)
        opened = GoalTracker(env.world, InteractionGoal(door.oid, "open"))
        with_key = GoalTracker(env.world, InteractionGoal(door.oid, "open_with_key"))
        env.step(Action.toggle)
        assert opened.update(env.world)
        assert not with_key.update(env.world)

    def test_open_with_key_on_locked_door(self, mini_layout):
        env = fresh_env(mini_layout)
        pos = mini_layout.door_position((0, 0), (1, 0))
        door = env.world.get(pos)
        door.state = "locked"
        face_existing(env, door.oid)
        env.world.carrying = WorldObject("key", door.color, oid=502)
        tracker = GoalTracker(env.world, InteractionGoal(door.oid, "open_with_key"))
        env.step(Action.toggle)
        assert tracker.update(env.world)

    def test_stale_goal(self, mini_layout):
        env = fresh_env(mini_layout)
        assert GoalTracker(env.world, InteractionGoal(9999, "pickup")).stale


class TestSegments:
    def test_scripted_pickup_segment(self, mini_layout):
        env = fresh_env(mini_layout)
        place_in_front(env, WorldObject("key", "red", oid=600))
        result, traj = run_interaction_segment(env, InteractionGoal(600, "pickup"), ScriptedPolicy(Action.pickup),
                                               8, np.random.default_rng(0))
        assert result.success and result.steps == 1
        assert traj.rewards == [1.0] and traj.segment_ends == [True]
        assert meta_reward(result) == META_SUCCESS_REWARD

    def test_budget_exhausted(self, mini_layout):
        env = fresh_env(mini_layout)
        place_in_front(env, WorldObject("key", "red", oid=601))
        result, traj = run_interaction_segment(env, InteractionGoal(601, "pickup"), ScriptedPolicy(Action.left),
                                               5, np.random.default_rng(0))
        assert not result.success and result.steps == 5
        assert traj.rewards == [0.0] * 5
        assert traj.segment_ends[-1]

    def test_stale_goal_runs_nothing(self, mini_layout):
        env = fresh_env(mini_layout)
        result, traj = run_interaction_segment(env, InteractionGoal(9999, "pickup"), ScriptedPolicy(Action.pickup),
                                               5, np.random.default_rng(0))
        assert result.steps == 0 and len(traj) == 0

    def test_reach_is_vacuous_when_faced(self, mini_layout):
        env = fresh_env(mini_layout)
        place_in_front(env, WorldObject("ball", "red", oid=602))
        assert target_faced(env.world, 602)
        reach = ScriptedPolicy(Action.left)
        result, reach_traj, traj = run_reach_then_interact(
            env, InteractionGoal(602, "pickup"), reach, ScriptedPolicy(Action.pickup), 4, 4, np.random.default_rng(0))
        assert reach.calls == 0 and len(reach_traj) == 0
        assert result.success and result.reached and len(traj) == 1

    def test_steps_left_caps_both_segments(self, mini_layout):
        env = fresh_env(mini_layout)
        place_in_front(env, WorldObject("ball", "red", oid=606))
        result, _, traj = run_reach_then_interact(
            env, InteractionGoal(606, "pickup"), ScriptedPolicy(Action.left), ScriptedPolicy(Action.forward), 8, 8,
            np.random.default_rng(0), steps_left=3)
        assert result.steps == 3 and len(traj) == 3 and traj.segment_ends[-1]

        env = fresh_env(mini_layout)
        place_in_front(env, WorldObject("ball", "red", oid=607))
        env.world.agent_dir = (env.world.agent_dir + 2) % 4
        interaction = ScriptedPolicy(Action.pickup)
        result, reach_traj, traj = run_reach_then_interact(
            env, InteractionGoal(607, "pickup"), ScriptedPolicy(Action.drop), interaction, 8, 8,
            np.random.default_rng(0), steps_left=3)
        assert result.steps == 3 and len(reach_traj) == 3 and not result.reached
        assert traj is None and interaction.calls == 0

    def test_failed_reach_skips_interaction(self, mini_layout):
        env = fresh_env(mini_layout)
        place_in_front(env, WorldObject("ball", "red", oid=603))
        env.world.agent_dir = (env.world.agent_dir + 2) % 4
        assert not target_faced(env.world, 603)
        interaction = ScriptedPolicy(Action.pickup)
        # two left turns face the ball again, so the reach only fails with a budget of one
        result, reach_traj, traj = run_reach_then_interact(
            env, InteractionGoal(603, "pickup"), ScriptedPolicy(Action.left), interaction, 1, 4,
            np.random.default_rng(0))
        assert traj is None and interaction.calls == 0
        assert not result.reached and result.steps == 1 and len(reach_traj) == 1

    def test_reach_then_interact_counts_both_segments(self, mini_layout):
        env = fresh_env(mini_layout)
        place_in_front(env, WorldObject("ball", "red", oid=604))
        env.world.agent_dir = (env.world.agent_dir + 2) % 4
        result, reach_traj, traj = run_reach_then_interact(
            env, InteractionGoal(604, "pickup"), ScriptedPolicy(Action.left), ScriptedPolicy(Action.pickup), 4, 4,
            np.random.default_rng(0))
        assert len(reach_traj) == 2 and reach_traj.rewards == [0.0, 1.0]
        assert result.success and result.steps == 3

    def test_carried_target_counts_as_reached(self, mini_layout):
        env = fresh_env(mini_layout)
        env.world.carrying = WorldObject("key", "red", oid=605)
        assert target_faced(env.world, 605)


class TestCollection:
    def test_collects_exact_meta_batch(self, mini_layout):
        config = small_config()
        repo = PolicyRepository.create("KIX1", np.random.default_rng(0))
        states = [WorkerState(0, 1, 7, 0, short_layout(mini_layout))]
        _, batch = collect_meta_batch(states, repo, config)
        assert len(batch.meta) == 8
        low_level = sum(len(batch.interactions[name]) for name in META_ACTIONS)
        assert batch.stats.env_steps == low_level + batch.stats.fallback_steps

    def test_two_workers_split_the_batch(self, mini_layout):
        config = small_config(workers=2)
        repo = PolicyRepository.create("KIX2", np.random.default_rng(0))
        layout = short_layout(mini_layout)
        states = [WorkerState(w, 2, 7, 1, layout) for w in range(2)]
        states, batch = collect_meta_batch(states, repo, config)
        assert len(batch.meta) == 8
        assert [s.worker_id for s in states] == [0, 1]
        low_level = sum(len(batch.interactions[name]) for name in META_ACTIONS) + len(batch.reach)
        assert batch.stats.env_steps == low_level + batch.stats.fallback_steps

    def test_base_collects_flat_steps(self, mini_layout):
        config = small_config("BASE")
        repo = PolicyRepository.create("BASE", np.random.default_rng(0))
        _, batch = collect_meta_batch([WorkerState(0, 1, 7, 0, short_layout(mini_layout))], repo, config)
        assert len(batch.base) == 16 and len(batch.meta) == 0
        assert batch.base.segment_ends[-1]

    @pytest.mark.parametrize("variant,workers", [("BASE", 1), ("KIX1", 1), ("KIX2", 1), ("KIX1", 2), ("BASE", 2)])
    def test_step_budget_caps_the_batch(self, mini_layout, variant, workers):
        config = small_config(variant, interaction_budget=16, reach_budget=16, workers=workers)
        repo = PolicyRepository.create(variant, np.random.default_rng(0))
        states = [WorkerState(w, workers, 7, 0, short_layout(mini_layout)) for w in range(workers)]
        _, batch = collect_meta_batch(states, repo, config, step_budget=5)
        assert batch.stats.env_steps == 5
        low_level = sum(len(batch.interactions[name]) for name in META_ACTIONS) + len(batch.reach)
        assert len(batch.base) + low_level + batch.stats.fallback_steps == 5
        for traj in [batch.meta, batch.reach, batch.base, *batch.interactions.values()]:
            assert not traj.actions or traj.segment_ends[-1]

    def test_fallback_ending_the_episode_closes_the_meta_record(self, mini_layout, monkeypatch):
        def nothing_in_view(*args, **kwargs):
            raise NoCandidatesError("empty view")

        monkeypatch.setattr("src.learning.rollout.recommend", nothing_in_view)
        env = fresh_env(mini_layout)
        env.world.step_count = env.world.max_steps - 1
        out = WorkerOutput(None, Trajectory("meta"), {}, Trajectory("reach"), Trajectory("base"), WorkerStats())
        out.meta.append(np.zeros(3), 0, -0.5, 0.3, 0.0, False)
        repo = PolicyRepository.create("KIX1", np.random.default_rng(0))
        assert not run_proposal(env, repo, small_config(), np.random.default_rng(0), "sample", out)
        assert env.done and out.stats.fallback_steps == 1
        assert out.meta.dones == [True]
        assert out.meta.segment_ends == [True] and out.meta.next_values == [0.0]

    def test_collection_leaves_repository_untouched(self, mini_layout):
        repo = PolicyRepository.create("KIX1", np.random.default_rng(0))
        before = {k: v.copy() for k, v in repo.to_arrays().items()}
        collect_meta_batch([WorkerState(0, 1, 7, 0, short_layout(mini_layout))], repo, small_config())
        for k, v in repo.to_arrays().items():
            assert np.array_equal(before[k], v)

    def test_worker_episode_matches_global_episode(self, mini_layout):
        state = WorkerState(1, 2, 9, 0, mini_layout)
        state.next_episode()
        state.next_episode()
        assert state.episode_index == 3
        env = KixEnv(mini_layout, 0)
        env.reset(episode_seed(9, 3))
        assert world_to_text(state.env.world) == world_to_text(env.world)


class TestEpisodes:
    @pytest.mark.parametrize("variant", ["BASE", "KIX1", "KIX2"])
    def test_run_episode_is_deterministic(self, variant, mini_layout):
        repo = PolicyRepository.create(variant, np.random.default_rng(2))
        layout = short_layout(mini_layout, 40)
        config = small_config(variant)
        a = run_episode(repo, layout, 0, 5, 3, config, "sample")
        b = run_episode(repo, layout, 0, 5, 3, config, "sample")
        assert (a.env_return, a.success, a.steps) == (b.env_return, b.success, b.steps)
        assert np.array_equal(a.visits, b.visits)
        assert a.visits.sum() <= a.steps

    def test_success_rate_does_not_depend_on_workers(self, mini_layout):
        repo = PolicyRepository.create("KIX1", np.random.default_rng(2))
        layout = short_layout(mini_layout, 30)
        one = evaluate_success(repo, layout, 0, 4, small_config(workers=1), 3)
        two = evaluate_success(repo, layout, 0, 4, small_config(workers=2), 3)
        assert one == two


class TestCheckpoints:
    def test_roundtrip(self, tmp_path, mini_layout):
        repo = PolicyRepository.create("KIX2", np.random.default_rng(0))
        config = small_config("KIX2")
        path = save_checkpoint(str(tmp_path / "a.ckpt"), repo, config, PpoConfig(lr=1e-3), PpoConfig(), mini_layout,
                               {"env_steps": 12})
        loaded, variant_config, meta_ppo, low_ppo, layout, metadata = load_checkpoint(path, "KIX2")
        assert variant_config == config and layout == mini_layout
        assert meta_ppo.lr == 1e-3 and metadata["env_steps"] == 12
        for (k1, a1), (k2, a2) in zip(repo.to_arrays().items(), loaded.to_arrays().items()):
            assert k1 == k2 and np.array_equal(a1, a2)

    def test_truncated_file(self, tmp_path, mini_layout):
        repo = PolicyRepository.create("BASE", np.random.default_rng(0))
        path = save_checkpoint(str(tmp_path / "b.ckpt"), repo, small_config("BASE"), PpoConfig(), PpoConfig(),
                               mini_layout)
        with open(path, "rb") as f:
            data = f.read()
        with open(path, "wb") as f:
            f.write(data[:len(data) // 2])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_wrong_variant(self, tmp_path, mini_layout):
        repo = PolicyRepository.create("KIX1", np.random.default_rng(0))
        path = save_checkpoint(str(tmp_path / "c.ckpt"), repo, small_config(), PpoConfig(), PpoConfig(), mini_layout)
        with pytest.raises(CheckpointError, match="manifest mismatch"):
            load_checkpoint(path, "BASE")


class TestTrain:
    def test_zero_budget_writes_initial_checkpoint_only(self, tmp_path, mini_layout):
        ckpt, logs = str(tmp_path / "ckpt"), str(tmp_path / "logs")
        summary = train(small_config(total_steps=0), PpoConfig(), PpoConfig(), mini_layout, 3, 0, ckpt, logs)
        assert summary.env_steps == 0 and summary.updates == 0
        assert sorted(os.listdir(ckpt)) == [LATEST, "step_0000000000.ckpt"]
        assert not os.path.exists(os.path.join(logs, LOSSES_CSV))

    @pytest.mark.parametrize("variant", ["BASE", "KIX1", "KIX2"])
    def test_every_variant_spends_exactly_the_budget(self, tmp_path, mini_layout, variant):
        config = small_config(variant, interaction_budget=16, reach_budget=16, base_rollout_steps=64,
                              total_steps=10)
        logs = str(tmp_path / "logs")
        summary = train(config, PpoConfig(minibatch_size=4), PpoConfig(minibatch_size=4), short_layout(mini_layout),
                        3, 0, str(tmp_path / "ckpt"), logs)
        assert summary.env_steps == 10
        progress = pd.read_csv(os.path.join(logs, PROGRESS_CSV))
        assert progress["env_steps"].iloc[-1] == 10

    def test_invalid_config_rejected(self, tmp_path, mini_layout):
        with pytest.raises(ConfigError, match="meta_batch_size"):
            train(small_config(meta_batch_size=0), PpoConfig(), PpoConfig(), mini_layout, 3, 0,
                  str(tmp_path / "c"), str(tmp_path / "l"))

    @pytest.mark.parametrize("variant", ["BASE", "KIX2"])
    def test_identical_runs_write_identical_losses(self, tmp_path, mini_layout, variant):
        layout = short_layout(mini_layout)
        frames, arrays = [], []
        for run in ("a", "b"):
            ckpt, logs = str(tmp_path / run / "ckpt"), str(tmp_path / run / "logs")
            summary = train(small_config(variant, total_steps=24), PpoConfig(minibatch_size=4),
                            PpoConfig(minibatch_size=4), layout, 11, 0, ckpt, logs)
            assert summary.env_steps == 24
            frames.append(pd.read_csv(os.path.join(logs, LOSSES_CSV)))
            arrays.append(load_checkpoint(os.path.join(ckpt, LATEST), variant)[0].to_arrays())
            assert os.path.exists(os.path.join(logs, PROGRESS_CSV))
        pd.testing.assert_frame_equal(frames[0], frames[1])
        for k in arrays[0]:
            assert np.array_equal(arrays[0][k], arrays[1][k])

    def test_update_changes_latest_checkpoint(self, tmp_path, mini_layout):
        ckpt, logs = str(tmp_path / "ckpt"), str(tmp_path / "logs")
        train(small_config(total_steps=24), PpoConfig(), PpoConfig(), short_layout(mini_layout), 11, 0, ckpt, logs)
        initial = load_checkpoint(os.path.join(ckpt, "step_0000000000.ckpt"))[0].to_arrays()
        latest = load_checkpoint(os.path.join(ckpt, LATEST))[0].to_arrays()
        assert any(not np.array_equal(initial[k], latest[k]) for k in initial)

    @pytest.mark.slow
    def test_kix2_desk_scale_run(self, tmp_path, mini_layout):
        config = small_config("KIX2", meta_batch_size=32, interaction_budget=16, reach_budget=16,
                              total_steps=20000, eval_every=10, eval_episodes=10, workers=2)
        summary = train(config, PpoConfig(lr=1e-3, minibatch_size=16), PpoConfig(), mini_layout, 0, 0,
                        str(tmp_path / "ckpt"), str(tmp_path / "logs"))
        progress = pd.read_csv(os.path.join(str(tmp_path / "logs"), PROGRESS_CSV))
        assert summary.env_steps == 20000
        assert progress["eval_success_rate"].notna().any()

    @pytest.mark.slow
    def test_kix1_learns_the_mini_task(self, tmp_path, mini_layout):
        config = VariantConfig(variant="KIX1", total_steps=200000, workers=4, eval_every=10, eval_episodes=20)
        solved = 0
        for seed in range(3):
            summary = train(config, PpoConfig(lr=1e-3, minibatch_size=16), PpoConfig(lr=2.5e-4), mini_layout,
                            seed, 0, str(tmp_path / f"ckpt{seed}"), str(tmp_path / f"logs{seed}"))
            final = evaluate_success(load_checkpoint(summary.checkpoints[-1])[0], mini_layout, 0, seed, config, 50)
            solved += final >= 0.8
        assert solved >= 2
