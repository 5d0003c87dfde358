"""
Run configuration: a flat YAML mapping of documented keys with typed defaults
"""

import logging
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, get_args, get_origin, get_type_hints

import yaml

from ..analyzers.metrics import GROUND_METRICS
from ..env.gridworld import TASK_IDS
from ..env.objects import LAYOUT_PRESETS, Layout
from ..errors import ConfigError
from ..learning.ppo import PpoConfig
from ..learning.rollout import VariantConfig
from ..policies.repository import VARIANTS

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = "config/default_config.yaml"
RESOLVED_CONFIG = "resolved_config.yaml"
LAYOUT_KEYS = ("rooms_x", "rooms_y", "room_size", "obstructed", "max_steps")
EVAL_MODES = ("greedy", "sample")


@dataclass
class RunConfig:
    variant: str = "KIX1"
    task: int = 0
    layout: str = "full"
    rooms_x: int = 3
    rooms_y: int = 3
    room_size: int = 5
    obstructed: bool = True
    max_steps: int = 0
    seed: int = 0
    workers: int = 1
    total_steps: int = 200000
    meta_batch_size: int = 128
    interaction_budget: int = 64
    reach_budget: int = 64
    fallback_budget: int = 16
    base_rollout_steps: int = 512
    eval_every: int = 10
    eval_episodes: int = 20
    checkpoint_every: int = 10
    clip_eps: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    gamma_meta: float = 0.99
    gamma_interaction: float = 0.99
    epochs: int = 4
    minibatch_size: int = 64
    meta_minibatch_size: int = 16
    lr: float = 2.5e-4
    meta_lr: float = 1e-3
    max_grad_norm: float = 0.5
    normalize_advantages: bool = True
    value_temperature: float = 1.0
    eval_mode: str = "greedy"
    episodes: int = 1000
    top_k: int = 100
    ground_metric: str = "manhattan"
    variants: List[str] = field(default_factory=lambda: list(VARIANTS))
    tasks: List[int] = field(default_factory=lambda: list(TASK_IDS))
    checkpoint: str = ""
    checkpoint_dir: str = "checkpoints"
    log_dir: str = "runs"
    report_dir: str = "reports"
    run_name: str = ""

    @property
    def run_dir(self) -> str:
        return os.path.join(self.log_dir, self.run_name)

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError("variant", f"must be one of {', '.join(VARIANTS)}, got {self.variant}")
        if self.task not in TASK_IDS:
            raise ConfigError("task", f"must be one of {list(TASK_IDS)}, got {self.task}")
        if self.layout not in LAYOUT_PRESETS:
            raise ConfigError("layout", f"must be one of {', '.join(LAYOUT_PRESETS)}, got {self.layout}")
        if self.eval_mode not in EVAL_MODES:
            raise ConfigError("eval_mode", f"must be one of {', '.join(EVAL_MODES)}, got {self.eval_mode}")
        if self.ground_metric not in GROUND_METRICS:
            raise ConfigError("ground_metric", f"must be one of {', '.join(GROUND_METRICS)}, got {self.ground_metric}")
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown:
            raise ConfigError("variants", f"unknown variants {unknown}")
        bad_tasks = [t for t in self.tasks if t not in TASK_IDS]
        if bad_tasks:
            raise ConfigError("tasks", f"unknown tasks {bad_tasks}")
        for key in ("episodes", "top_k", "meta_minibatch_size"):
            if getattr(self, key) < 1:
                raise ConfigError(key, f"must be at least 1, got {getattr(self, key)}")
        if self.max_steps < 0:
            raise ConfigError("max_steps", "must be non-negative")
        variant_config(self).validate()
        for ppo in ppo_configs(self):
            ppo.validate()
        build_layout(self).validate()


_HINTS = get_type_hints(RunConfig)


def _check_type(key: str, value: Any) -> Any:
    """Return ``value`` coerced to the declared type of ``key`` or raise naming the key"""
    expected = _HINTS[key]
    if get_origin(expected) in (list, List):
        (item_type,) = get_args(expected)
        if isinstance(value, (str, int)) and not isinstance(value, bool):
            value = [value]
        if not isinstance(value, (list, tuple)):
            raise ConfigError(key, f"expected a list, got {type(value).__name__}")
        return [_check_scalar(key, item_type, v) for v in value]
    return _check_scalar(key, expected, value)


def _check_scalar(key: str, expected: type, value: Any) -> Any:
    if expected is bool:
        if isinstance(value, bool):
            return value
    elif expected is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif expected is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        # YAML 1.1 reads exponents without a dot ("1e-3") as strings
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
    elif expected is str:
        if value is None:
            return ""
        if isinstance(value, str):
            return value
    raise ConfigError(key, f"expected {expected.__name__}, got {type(value).__name__} {value!r}")


def _parse_override(item: str) -> Tuple[str, Any]:
    if "=" not in item:
        raise ConfigError(item, "override must look like key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    try:
        value = yaml.safe_load(raw) if raw.strip() else ""
    except yaml.YAMLError as e:
        raise ConfigError(key, f"cannot parse value {raw!r}: {e}") from e
    return key, value


def load_config_file(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise ConfigError("config", f"file {path} does not exist")
    with open(path, "r") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError("config", f"{path} is not valid YAML: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config", f"{path} must hold a flat mapping, got {type(data).__name__}")
    return data


def parse_config(path: Optional[str] = DEFAULT_CONFIG_PATH, overrides: Sequence[str] = (),
                 flags: Optional[Mapping[str, Any]] = None, echo: bool = True) -> RunConfig:
    """
    Resolve defaults, file, ``--set`` overrides and dedicated flags (in that order)

    Layout keys start from the selected preset; any layout key given in the
    file or on the command line wins over the preset. Flags whose value is
    None are treated as not given.
    """
    given: Dict[str, Any] = {}
    sources: List[Tuple[str, Mapping[str, Any]]] = []
    if path is not None:
        sources.append((path, load_config_file(path)))
    sources.append(("--set", dict(_parse_override(o) for o in overrides)))
    sources.append(("flags", {k: v for k, v in (flags or {}).items() if v is not None}))

    for origin, values in sources:
        for key, value in values.items():
            if key not in _HINTS:
                raise ConfigError(key, f"unknown key from {origin}")
            given[key] = _check_type(key, value)

    preset_name = given.get("layout", RunConfig.layout)
    if preset_name not in LAYOUT_PRESETS:
        raise ConfigError("layout", f"must be one of {', '.join(LAYOUT_PRESETS)}, got {preset_name}")
    preset = asdict(LAYOUT_PRESETS[preset_name])
    resolved = {k: preset[k] for k in LAYOUT_KEYS}
    resolved.update(given)

    config = RunConfig(**resolved)
    if not config.run_name:
        config = replace(config, run_name=f"{config.variant}_task{config.task}_seed{config.seed}")
    config.validate()
    if echo:
        write_resolved_config(config)
    return config


def write_resolved_config(config: RunConfig) -> str:
    os.makedirs(config.run_dir, exist_ok=True)
    path = os.path.join(config.run_dir, RESOLVED_CONFIG)
    with open(path, "w") as f:
        yaml.safe_dump(asdict(config), f, sort_keys=False, default_flow_style=False)
    logger.info(f"Resolved configuration written to {path}")
    return path


def variant_config(config: RunConfig) -> VariantConfig:
    return VariantConfig(
        variant=config.variant,
        meta_batch_size=config.meta_batch_size,
        interaction_budget=config.interaction_budget,
        reach_budget=config.reach_budget,
        fallback_budget=config.fallback_budget,
        base_rollout_steps=config.base_rollout_steps,
        total_steps=config.total_steps,
        workers=config.workers,
        eval_every=config.eval_every,
        eval_episodes=config.eval_episodes,
        checkpoint_every=config.checkpoint_every,
        gamma_meta=config.gamma_meta,
        gamma_interaction=config.gamma_interaction,
        value_temperature=config.value_temperature,
    )


def ppo_configs(config: RunConfig) -> Tuple[PpoConfig, PpoConfig]:
    """(meta, low-level) PPO settings; they differ in learning rate, minibatch size and discount"""
    shared = dict(clip_eps=config.clip_eps, entropy_coef=config.entropy_coef, value_coef=config.value_coef,
                  epochs=config.epochs, max_grad_norm=config.max_grad_norm,
                  normalize_advantages=config.normalize_advantages)
    meta = PpoConfig(lr=config.meta_lr, minibatch_size=config.meta_minibatch_size, gamma=config.gamma_meta, **shared)
    low = PpoConfig(lr=config.lr, minibatch_size=config.minibatch_size, gamma=config.gamma_interaction, **shared)
    return meta, low


def build_layout(config: RunConfig) -> Layout:
    return Layout(rooms_x=config.rooms_x, rooms_y=config.rooms_y, room_size=config.room_size,
                  obstructed=config.obstructed, max_steps=config.max_steps)
