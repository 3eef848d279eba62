"""
Main entry point for the formation sensing simulator.
Loads a scenario from config, trains or runs the formation, writes CSV/JSON outputs.
"""

import argparse
import logging
import os
import sys

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from formation_sensing_system.cognition.ddpg import train  # noqa: E402
from formation_sensing_system.core.config import load_scenario, resolve_config_path  # noqa: E402
from formation_sensing_system.core.event_bus import setup_json_logging  # noqa: E402
from formation_sensing_system.core.exceptions import (  # noqa: E402
    ConfigValidationError,
    InvalidArgumentError,
    SimulationError,
    TrainingDivergenceError,
)
from formation_sensing_system.core.models import RewardMode  # noqa: E402
from formation_sensing_system.core.orchestrator import (  # noqa: E402
    EXIT_CONFIG,
    EXIT_DIVERGENCE,
    EXIT_OK,
    baseline_ordering,
    compare_baselines,
    monte_carlo_crlb,
    run_scenario,
)
from formation_sensing_system.infrastructure import persistence  # noqa: E402
from formation_sensing_system.infrastructure.logger import system_logger  # noqa: E402
from formation_sensing_system.infrastructure.providers import get_provider  # noqa: E402
from formation_sensing_system.templates.figure_template import dataset_to_frame, extract  # noqa: E402

logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger("CLI")


def _csv_list(value: str):
    return [item.strip() for item in value.split(",") if item.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="UAV formation path-following with ISAC obstacle sensing")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser):
        p.add_argument("--config", help="scenario JSON (default: $SCENARIO_CONFIG or config/scenario_config.json)")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--out", default="output", help="output directory")

    p_train = sub.add_parser("train", help="train the shared path-following policy")
    common(p_train)
    p_train.add_argument("--mode", choices=[m.value for m in RewardMode], help="reward mode")
    p_train.add_argument("--episodes", type=int)
    p_train.add_argument("--steps", type=int)

    p_run = sub.add_parser("run", help="run the scenario with a trained policy")
    common(p_run)
    p_run.add_argument("--checkpoint", help="policy checkpoint (default: training.checkpoint in the config)")
    p_run.add_argument("--fixed-formation", action="store_true", help="keep the uniform formation (VFEO off)")

    p_crlb = sub.add_parser("validate-crlb", help="Monte Carlo check of the formation CRLB")
    common(p_crlb)
    p_crlb.add_argument("--trials", type=int, default=2000)
    p_crlb.add_argument("--pipeline", choices=["gaussian", "isac"], default="gaussian")

    p_cmp = sub.add_parser("compare-baselines", help="train every reward mode on the same seeds")
    common(p_cmp)
    p_cmp.add_argument("--modes", type=_csv_list, default=["awpf", "fwpf_d_only", "fwpf_dv_fixed"])
    p_cmp.add_argument("--seeds", type=_csv_list, default=["0", "1", "2"])
    p_cmp.add_argument("--episodes", type=int)
    p_cmp.add_argument("--steps", type=int)

    p_report = sub.add_parser("report", help="extract one figure dataset from a records CSV")
    p_report.add_argument("--records", required=True)
    p_report.add_argument("--fig", required=True)
    p_report.add_argument("--baseline", help="fixed-formation records CSV to compare against (fig11)")
    p_report.add_argument("--out", required=True, help="output CSV path")
    return parser


def load_config(args):
    config = load_scenario(resolve_config_path(args.config))
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})
    return config


def cmd_train(args, config) -> int:
    overrides = {}
    if args.mode:
        overrides["mode"] = RewardMode(args.mode)
    if args.episodes is not None:
        overrides["episodes"] = args.episodes
    if args.steps is not None:
        overrides["steps_per_episode"] = args.steps
    spec = config.training.model_copy(update=overrides)

    print(f"\n🚀 Training [{spec.mode.value}] {spec.episodes} episodes × {spec.steps_per_episode} steps")
    try:
        result = train(
            spec,
            config.seed,
            r_f=config.formation.r_f,
            dt=config.dt,
            v_max=config.v_max,
            on_episode=lambda episode, reward: system_logger.training_episode(spec.mode.value, episode, reward),
        )
    except TrainingDivergenceError as e:
        print(f"   ✗ Training diverged: {e} {e.diagnostics}")
        return EXIT_DIVERGENCE

    checkpoint = spec.checkpoint or os.path.join(args.out, "policy.json")
    get_provider(checkpoint).save(result.params, meta={"mode": spec.mode.value, "seed": config.seed})
    curve = persistence.write_reward_curve(result.rewards, os.path.join(args.out, "rewards.csv"))
    print(f"💾 {checkpoint}")
    print(f"💾 {curve}")
    return EXIT_OK


def cmd_run(args, config) -> int:
    checkpoint = args.checkpoint or config.training.checkpoint
    if not checkpoint:
        print("   ✗ No policy checkpoint: pass --checkpoint or set training.checkpoint")
        return EXIT_CONFIG
    policy = get_provider(checkpoint).load()
    if args.fixed_formation:
        config = config.model_copy(update={"vfeo": config.vfeo.model_copy(update={"enabled": False})})

    handler = setup_json_logging(os.path.join(args.out, "trace.log"))
    try:
        outcome = run_scenario(config, policy)
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()

    records = persistence.write_records(outcome.records, os.path.join(args.out, "records.csv"))
    summary = persistence.write_json(outcome.summary, os.path.join(args.out, "summary.json"))
    print(f"\n📊 {len(outcome.records)} cycles, exit code {outcome.exit_code}")
    print(f"💾 {records}")
    print(f"💾 {summary}")
    return outcome.exit_code


def cmd_validate_crlb(args, config) -> int:
    report = monte_carlo_crlb(config, args.trials, pipeline=args.pipeline)
    path = persistence.write_json(report, os.path.join(args.out, "crlb_report.json"))
    print(f"\n📊 RMSE_pos/ε_P = {report['ratio_pos']:.3f}, RMSE_vel/ε_V = {report['ratio_vel']:.3f}")
    print(f"💾 {path}")
    return EXIT_OK


def cmd_compare(args, config) -> int:
    table = compare_baselines(
        config,
        modes=args.modes,
        seeds=[int(seed) for seed in args.seeds],
        episodes=args.episodes,
        steps=args.steps,
    )
    path = persistence.write_table(table, os.path.join(args.out, "baselines.csv"))
    print(f"\n{table.to_string(index=False)}")
    print(f"💾 {path}")
    ordering = persistence.write_json(baseline_ordering(table), os.path.join(args.out, "baseline_ordering.json"))
    print(f"💾 {ordering}")
    return EXIT_OK


def cmd_report(args) -> int:
    if args.fig == "fig8":
        frame = persistence.read_reward_curve(args.records)
    else:
        frame = persistence.read_records(args.records)
    baseline = persistence.read_records(args.baseline) if args.baseline else None
    dataset = extract(frame, args.fig, baseline=baseline)
    path = persistence.write_table(dataset_to_frame(dataset), args.out)
    print(f"💾 {path} ({dataset.rows} rows)")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "run": cmd_run,
    "validate-crlb": cmd_validate_crlb,
    "compare-baselines": cmd_compare,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    print("=" * 60)
    print("🛩️  Formation Sensing Simulator")
    print("=" * 60)

    try:
        if args.command == "report":
            return cmd_report(args)

        print("\n📂 Loading config...")
        try:
            config = load_config(args)
        except (ConfigValidationError, FileNotFoundError) as e:
            print(f"   ✗ Failed to load config: {e}")
            for error in getattr(e, "errors", []):
                print(f"     - {error}")
            return EXIT_CONFIG
        print(f"   ✓ Scenario: {config.name} (seed {config.seed})")
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](args, config)

    except (InvalidArgumentError, FileNotFoundError) as e:
        print(f"\n❌ Error: {e}")
        return EXIT_CONFIG
    except SimulationError as e:
        print(f"\n❌ Numeric failure: {e}")
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
