import argparse
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence, Tuple

from .analyzers.comparison import emit_report
from .analyzers.episodes import EpisodeLog, rollout_eval
from .env.gridworld import KixEnv, world_to_text
from .env.objects import Action
from .errors import ConfigError, KixError
from .knowledge.graphs import build_instance_graph, map_to_type_graph
from .learning.rollout import episode_seed
from .learning.trainer import train
from .utils.config import DEFAULT_CONFIG_PATH, RunConfig, build_layout, parse_config, ppo_configs, variant_config

logger = logging.getLogger(__name__)

COMMANDS = ("train", "eval", "compare", "inspect-graph")


def cmd_train(config: RunConfig):
    meta_ppo, low_ppo = ppo_configs(config)
    summary = train(variant_config(config), meta_ppo, low_ppo, build_layout(config), config.seed, config.task,
                    os.path.join(config.checkpoint_dir, config.run_name), config.run_dir)
    logger.info(f"Training of {summary.variant} finished after {summary.env_steps} env steps "
                f"and {summary.updates} updates")
    if summary.last_eval_success is not None:
        logger.info(f"Last greedy evaluation success rate: {summary.last_eval_success:.3f}")
    return summary


def cmd_eval(config: RunConfig) -> str:
    if not config.checkpoint:
        raise ConfigError("checkpoint", "eval needs a trained checkpoint (--checkpoint PATH)")
    log = rollout_eval(config.checkpoint, config.task, config.episodes, config.seed, config.eval_mode,
                       config.workers, config.variant)
    return log.save(config.report_dir)


def collect_logs(config: RunConfig) -> Dict[Tuple[str, int], EpisodeLog]:
    """Episode logs of every requested (variant, task) found in the report directory"""
    logs = {}
    for variant in config.variants:
        for task in config.tasks:
            stem = EpisodeLog(variant, task, config.seed, config.rooms_x, config.rooms_y).file_stem()
            path = os.path.join(config.report_dir, f"{stem}.csv")
            if not os.path.exists(path):
                logger.warning(f"No episode log for {variant} on task {task} at {path}; skipping")
                continue
            logs[(variant, task)] = EpisodeLog.load(path, variant)
    return logs


def cmd_compare(config: RunConfig) -> Dict[str, str]:
    logs = collect_logs(config)
    logger.info(f"Comparing {len(logs)} episode logs")
    return emit_report(logs, config.report_dir, config.top_k, config.ground_metric, f"seed{config.seed}")


def parse_actions(text: Optional[str]) -> List[Action]:
    if not text:
        return []
    actions = []
    for name in text.split(","):
        name = name.strip()
        if name not in Action.__members__:
            raise ConfigError("actions", f"unknown action '{name}'; expected one of {', '.join(Action.__members__)}")
        actions.append(Action[name])
    return actions


def cmd_inspect_graph(config: RunConfig, actions: Sequence[Action]) -> str:
    """Replay ``actions`` on episode 0 of ``seed`` and render the world with both graphs"""
    env = KixEnv(build_layout(config), config.task)
    env.reset(episode_seed(config.seed, 0))
    for action in actions:
        if env.done:
            logger.warning("Episode ended before the action sequence was exhausted")
            break
        env.step(action)
    gi = build_instance_graph(env.observation, env.world.carrying)
    gk = map_to_type_graph(gi)
    return "\n".join(["# world", world_to_text(env.world), "# instance graph", gi.to_text(),
                      "# type graph", gk.to_text()])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Train and evaluate knowledge-guided hierarchical agents")
    parser.add_argument("command", choices=COMMANDS, help="Workflow to run")
    parser.add_argument("--config", type=str, default=DEFAULT_CONFIG_PATH,
                        help="Path to configuration file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override one configuration key (repeatable)")
    parser.add_argument("--seed", type=int, help="Root seed")
    parser.add_argument("--variant", type=str, help="Agent variant: KIX1, KIX2 or BASE")
    parser.add_argument("--task", type=int, help="Task id 0-3")
    parser.add_argument("--checkpoint", type=str, help="Checkpoint to evaluate")
    parser.add_argument("--actions", type=str, default="",
                        help="Comma-separated action names replayed by inspect-graph")
    parser.add_argument("--log-level", type=str, default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    try:
        logger.info(f"Loading configuration from {args.config}")
        flags = {"seed": args.seed, "variant": args.variant, "task": args.task, "checkpoint": args.checkpoint}
        config = parse_config(args.config, args.overrides, flags, echo=args.command != "inspect-graph")

        if args.command == "train":
            cmd_train(config)
        elif args.command == "eval":
            path = cmd_eval(config)
            logger.info(f"Episode log written to {path}")
        elif args.command == "compare":
            paths = cmd_compare(config)
            logger.info(f"Report workbook generated at: {paths['workbook']}")
        else:
            print(cmd_inspect_graph(config, parse_actions(args.actions)))
    except KixError as e:
        logger.error(f"Command {args.command} failed: {str(e)}", exc_info=True)
        return e.exit_code
    except Exception as e:
        logger.error(f"Program execution failed: {str(e)}", exc_info=True)
        return 1
    return 0


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        logger.info("Program interrupted by user")
        sys.exit(130)
