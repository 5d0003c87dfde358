import os

import pandas as pd
import pytest
import yaml

from src.env.objects import Action
from src.errors import ConfigError
from src.kix import main, parse_actions
from src.utils.config import RESOLVED_CONFIG, RunConfig, parse_config

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DEFAULT_CONFIG = os.path.join(ROOT, "config", "default_config.yaml")


def write_config(tmp_path, **values):
    settings = {
        "checkpoint_dir": str(tmp_path / "checkpoints"),
        "log_dir": str(tmp_path / "runs"),
        "report_dir": str(tmp_path / "reports"),
    }
    settings.update(values)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(settings))
    return str(path)


class TestParseConfig:
    def test_default_file_matches_dataclass_defaults(self):
        config = parse_config(DEFAULT_CONFIG, echo=False)
        defaults = RunConfig(run_name="KIX1_task0_seed0")
        assert config == defaults

    def test_flag_beats_file(self, tmp_path):
        path = write_config(tmp_path, seed=1)
        assert parse_config(path, flags={"seed": 2}, echo=False).seed == 2
        assert parse_config(path, flags={"seed": None}, echo=False).seed == 1

    def test_set_beats_file_and_flag_beats_set(self, tmp_path):
        path = write_config(tmp_path, seed=1)
        assert parse_config(path, ["seed=3"], echo=False).seed == 3
        assert parse_config(path, ["seed=3"], {"seed": 4}, echo=False).seed == 4

    @pytest.mark.parametrize("source", ["file", "set"])
    def test_unknown_key_is_named(self, tmp_path, source):
        if source == "file":
            path, overrides = write_config(tmp_path, gama=0.9), []
        else:
            path, overrides = write_config(tmp_path), ["gama=0.9"]
        with pytest.raises(ConfigError, match="gama") as info:
            parse_config(path, overrides, echo=False)
        assert info.value.key == "gama"

    @pytest.mark.parametrize("key,value", [("seed", "abc"), ("seed", True), ("obstructed", 1), ("variants", {"a": 1})])
    def test_type_mismatch(self, tmp_path, key, value):
        with pytest.raises(ConfigError) as info:
            parse_config(write_config(tmp_path, **{key: value}), echo=False)
        assert info.value.key == key

    def test_exponent_strings_parse_as_floats(self, tmp_path):
        config = parse_config(write_config(tmp_path), ["lr=1e-3"], echo=False)
        assert config.lr == 0.001

    def test_scalar_for_list_key(self, tmp_path):
        assert parse_config(write_config(tmp_path), ["tasks=2"], echo=False).tasks == [2]

    def test_layout_preset_and_override(self, tmp_path):
        config = parse_config(write_config(tmp_path, layout="mini", room_size=5), echo=False)
        assert (config.rooms_x, config.rooms_y, config.room_size, config.obstructed) == (2, 1, 5, False)

    def test_invalid_values(self, tmp_path):
        with pytest.raises(ConfigError, match="variant"):
            parse_config(write_config(tmp_path, variant="KIX3"), echo=False)
        with pytest.raises(ConfigError, match="clip_eps"):
            parse_config(write_config(tmp_path, clip_eps=2.0), echo=False)
        with pytest.raises(ConfigError, match="layout"):
            parse_config(write_config(tmp_path, layout="huge"), echo=False)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            parse_config(str(tmp_path / "absent.yaml"), echo=False)

    def test_echo_reparses_identically(self, tmp_path):
        config = parse_config(write_config(tmp_path, layout="mini", seed=5), ["lr=0.01"], {"task": 2})
        echoed = os.path.join(config.run_dir, RESOLVED_CONFIG)
        assert os.path.exists(echoed)
        assert config.run_name == "KIX1_task2_seed5"
        assert parse_config(echoed, echo=False) == config


class TestActions:
    def test_parse(self):
        assert parse_actions("left, forward,toggle") == [Action.left, Action.forward, Action.toggle]
        assert parse_actions("") == []

    def test_unknown_action(self):
        with pytest.raises(ConfigError, match="jump"):
            parse_actions("left,jump")


class TestMain:
    def test_inspect_graph_on_fresh_task0_world(self, tmp_path, capsys):
        assert main(["inspect-graph", "--config", write_config(tmp_path), "--seed", "3"]) == 0
        out = capsys.readouterr().out
        sections = out.split("# type graph")
        assert "# world" in sections[0] and "# instance graph" in sections[0]
        type_edges = [line for line in sections[1].splitlines() if line.startswith("edge")]
        assert set(type_edges) <= {"edge agent -visible-> door"}
        assert not os.path.exists(tmp_path / "runs")

    def test_inspect_graph_replays_actions(self, tmp_path, capsys):
        assert main(["inspect-graph", "--config", write_config(tmp_path, layout="mini"),
                     "--actions", "left,left"]) == 0
        assert "step=2/" in capsys.readouterr().out

    def test_unknown_action_exit_code(self, tmp_path):
        assert main(["inspect-graph", "--config", write_config(tmp_path), "--actions", "jump"]) == 2

    def test_eval_without_checkpoint(self, tmp_path):
        assert main(["eval", "--config", write_config(tmp_path)]) == 2

    def test_missing_checkpoint_file(self, tmp_path):
        path = write_config(tmp_path)
        assert main(["eval", "--config", path, "--checkpoint", str(tmp_path / "none.ckpt")]) == 3

    def test_unknown_key_exit_code(self, tmp_path):
        assert main(["train", "--config", write_config(tmp_path), "--set", "gama=0.9"]) == 2

    def test_train_eval_compare(self, tmp_path):
        path = write_config(tmp_path, layout="mini", max_steps=20, total_steps=0, episodes=3,
                            variants=["KIX1"], tasks=[0, 1])
        assert main(["train", "--config", path]) == 0
        checkpoint = tmp_path / "checkpoints" / "KIX1_task0_seed0" / "latest.ckpt"
        assert checkpoint.exists()
        for task in ("0", "1"):
            assert main(["eval", "--config", path, "--checkpoint", str(checkpoint), "--task", task]) == 0
        assert (tmp_path / "reports" / "episodes_KIX1_task1_seed0.csv").exists()
        assert main(["compare", "--config", path]) == 0
        profiles = pd.read_csv(tmp_path / "reports" / "return_profiles_seed0.csv")
        assert len(profiles) == 2 and set(profiles["k"]) == {1}
        assert (tmp_path / "reports" / "report_seed0.xlsx").exists()

    @pytest.mark.slow
    def test_kix_agents_beat_base_on_the_mini_layout(self, tmp_path):
        path = write_config(tmp_path, layout="mini", total_steps=200000, workers=4, episodes=200)
        ordered = {task: 0 for task in range(4)}
        for seed in range(3):
            for variant in ("BASE", "KIX1", "KIX2"):
                flags = ["--config", path, "--variant", variant, "--seed", str(seed)]
                assert main(["train", *flags]) == 0
                checkpoint = tmp_path / "checkpoints" / f"{variant}_task0_seed{seed}" / "latest.ckpt"
                for task in range(4):
                    assert main(["eval", *flags, "--checkpoint", str(checkpoint), "--task", str(task)]) == 0
            assert main(["compare", "--config", path, "--seed", str(seed)]) == 0
            profiles = pd.read_csv(tmp_path / "reports" / f"return_profiles_seed{seed}.csv")
            means = profiles.set_index(["variant", "task"])["mean"]
            for task in range(4):
                ordered[task] += bool(means[("KIX2", task)] >= means[("KIX1", task)] > means[("BASE", task)])
        assert all(count >= 2 for count in ordered.values()), ordered
