"""Main entry point for the safe arm RL experiments"""
import argparse
import logging
import os
import sys
from typing import List, Optional

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.config import DEFAULT_OUTPUT_DIRECTORY, EXPERIMENT_DIRECTORY  # noqa: E402
from src.errors import ConfigurationError, SafeArmError  # noqa: E402
from src.schemas import ExperimentConfig  # noqa: E402

logger = logging.getLogger("safe_arm_rl")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    """One subparser per command; argparse exits are turned into exit codes by cli()"""
    parser = argparse.ArgumentParser(
        prog="safe_arm_rl",
        description="PPO vs Lagrangian PPO on a simulated arm reaching past an obstacle",
    )
    parser.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one algorithm / action representation over the config's seeds")
    train.add_argument("--config", required=True, help="experiment config JSON")
    train.add_argument("--algo", choices=["ppo", "cppo"], help="override trainer.algorithm")
    train.add_argument("--ar", choices=["ar1", "ar2"], help="override env.action_repr")
    train.add_argument("--seed", type=int, help="run only this seed")
    train.add_argument("--out", help=f"output directory (default {DEFAULT_OUTPUT_DIRECTORY})")
    train.add_argument("--desk-scale", action="store_true", help="cap epochs and episode length")
    train.add_argument("--epochs", type=int, help="override trainer.max_epochs")
    train.add_argument("--checkpoint", action="store_true", help="save checkpoint.npz per run")
    train.add_argument("--curves", action="store_true", help="write learning curves next to the runs")

    summarize = sub.add_parser("summarize", help="cost table (and curves) over finished runs")
    summarize.add_argument("--runs", required=True, help="directory holding <algo>_<ar>_seed<N>/ runs")
    summarize.add_argument("--window", type=int, help="final-epoch window (default from the reports)")

    sub.add_parser("gradcheck", help="gradient and GAE verification suite")
    simcheck = sub.add_parser("simcheck", help="kinematics and collision verification suite")
    simcheck.add_argument("--arm", default=None, help="arm model name or path (default panda)")
    return parser


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    from src.harness import load_experiment_config

    path = args.config
    if not os.path.isfile(path) and os.path.isfile(os.path.join(EXPERIMENT_DIRECTORY, path)):
        path = os.path.join(EXPERIMENT_DIRECTORY, path)
    config = load_experiment_config(path)
    update = {}
    trainer_update = {}
    env_update = {}
    if args.algo:
        trainer_update["algorithm"] = args.algo
    if args.epochs is not None:
        if args.epochs < 1:
            raise ConfigurationError(f"--epochs must be >= 1, got {args.epochs}")
        trainer_update["max_epochs"] = args.epochs
    if args.ar:
        env_update["action_repr"] = args.ar
    if args.seed is not None:
        update["seeds"] = [args.seed]
    if args.out:
        update["output_dir"] = args.out
    if args.desk_scale:
        update["desk_scale"] = True
    if args.checkpoint:
        update["save_checkpoint"] = True
    # round-trip through validation so overrides obey the same constraints as the file
    raw = config.model_dump(mode="json")
    raw["trainer"].update(trainer_update)
    raw["env"].update(env_update)
    raw.update(update)
    return ExperimentConfig.model_validate(raw)


def cmd_train(args: argparse.Namespace) -> int:
    """Train every configured seed; with --curves also write the curve files next to the runs"""
    from pydantic import ValidationError

    from src.curves import emit_curves
    from src.harness import run_experiment

    try:
        config = _experiment_config(args)
    except ValidationError as e:
        raise ConfigurationError(f"invalid override: {e}") from e
    reports = run_experiment(config)
    if args.curves:
        emit_curves(reports, config.output_dir)
    print("\n" + "=" * 60)
    print(f"Training complete: {len(reports)} run(s) in {config.output_dir}")
    print("=" * 60)
    return EXIT_OK


def cmd_summarize(args: argparse.Namespace) -> int:
    from src.curves import emit_curves
    from src.harness import load_reports, summarize_runs, write_summary

    reports = load_reports(args.runs)
    window = args.window if args.window is not None else reports[0].summary.final_window
    table = summarize_runs(reports, window)
    paths = write_summary(table, args.runs)
    emit_curves(reports, args.runs)
    print("=" * 60)
    print(f"Summary of {len(reports)} run(s) in {args.runs}")
    print("=" * 60)
    print(table.render_text())
    print(f"Wrote {paths['text']} and {paths['csv']}")
    return EXIT_OK


def _report_checks(title: str, results) -> int:
    print("=" * 60)
    print(title)
    print("=" * 60)
    for i, result in enumerate(results, 1):
        print(f"[Step {i}/{len(results)}] {result.line()}")
    ok = all(r.passed for r in results)
    print("=" * 60)
    print("All checks passed" if ok else "Some checks FAILED")
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_gradcheck(args: argparse.Namespace) -> int:
    """Backprop, log-prob, surrogate and GAE checks against finite differences or brute force"""
    from src.verification import run_gradcheck

    return _report_checks("Numerical verification (gradients, GAE)", run_gradcheck())


def cmd_simcheck(args: argparse.Namespace) -> int:
    """Jacobian, IK and collision checks on one arm model"""
    from src.kinematics import load_arm_model
    from src.verification import run_simcheck

    arm = load_arm_model(args.arm) if args.arm else None
    return _report_checks("Simulation verification (Jacobian, IK, collision)", run_simcheck(arm=arm))


COMMANDS = {
    "train": cmd_train,
    "summarize": cmd_summarize,
    "gradcheck": cmd_gradcheck,
    "simcheck": cmd_simcheck,
}


def cli(args: Optional[List[str]] = None) -> int:
    """Run one command and return its exit code (0 ok, 1 failure, 2 usage)"""
    parser = build_parser()
    try:
        parsed = parser.parse_args(args)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    logging.basicConfig(level=getattr(logging, parsed.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[parsed.command](parsed)
    except SafeArmError as e:
        print(f"\nError: {e}\n", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as e:
        print(f"\nError: {e}\n", file=sys.stderr)
        return EXIT_FAILURE
    except KeyboardInterrupt:
        print("\nInterrupted.", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(cli())
