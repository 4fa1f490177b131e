"""Command-line entry point.

Subcommands:
    gen-suite   write a task-suite JSON file
    collect     dump expert demonstrations for one task as JSON lines
    train       run the sequential-training phase only (adaptation off)
    adapt-test  run the test-time adaptation pass on a finished seed directory
    run         full pipeline for a config (train + optional adaptation)
    compare     tabulate several finished runs against each other
    report      print a synopsis of one finished run directory

Exit codes: 0 success, 2 configuration error, 3 completed with cell failures.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .errors import ConfigurationError, FormatError, InputError, Lifelong2dError
from .memory import load_memory
from .policy import load_params
from .recall import adapt_and_test
from .seeding import spawn_seed
from .taskworld import collect_demos, demo_to_dict, load_suite, make_suite, save_suite


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment INI file (defaults apply if omitted)")
    p.add_argument(
        "--set", dest="overrides", action="append", default=[],
        metavar="SECTION.KEY=VALUE", help="override a config value",
    )


def _parse_args(argv: list[str] | None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="lifelong2d", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-suite", help="generate a task suite file")
    p.add_argument("--family", required=True)
    p.add_argument("--n-tasks", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--paraphrases", type=int, default=10)
    p.add_argument("--out", required=True)

    p = sub.add_parser("collect", help="collect expert demos for one task")
    p.add_argument("--suite", required=True)
    p.add_argument("--task", type=int, required=True)
    p.add_argument("--n", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d-v", type=int, default=32)
    p.add_argument("--d-l", type=int, default=32)
    p.add_argument("--lang-mode", default="cluster")
    p.add_argument("--encoder-seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="sequential training only")
    _add_config_args(p)

    p = sub.add_parser("adapt-test", help="adaptation pass on a finished seed dir")
    _add_config_args(p)
    p.add_argument("--seed-dir", required=True)
    p.add_argument("--task", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("run", help="full pipeline for a config")
    _add_config_args(p)

    p = sub.add_parser("compare", help="tabulate finished runs")
    p.add_argument("records", nargs="+", help="record.json paths")
    p.add_argument("--out-prefix", help="write <prefix>.csv and <prefix>.txt")

    p = sub.add_parser("report", help="synopsis of one run directory")
    p.add_argument("run_dir")

    return parser.parse_args(argv)


def _cmd_gen_suite(args: argparse.Namespace) -> int:
    try:
        tasks = make_suite(args.family, args.n_tasks, args.seed, args.paraphrases)
    except InputError as exc:
        # a bad flag value is a configuration problem, not a runtime failure
        raise ConfigurationError(str(exc)) from exc
    save_suite(tasks, args.out)
    print(f"wrote {len(tasks)} tasks to {args.out}")
    return 0


def _cmd_collect(args: argparse.Namespace) -> int:
    from .encoders import LanguageEncoder, VisionEncoder
    from .taskworld import CONTENT_VOCAB

    tasks = load_suite(args.suite)
    if not 0 <= args.task < len(tasks):
        raise ConfigurationError(f"task index {args.task} outside the suite")
    task = tasks[args.task]
    try:
        venc = VisionEncoder(task.obs_len, args.d_v, seed=args.encoder_seed)
        lenc = LanguageEncoder(CONTENT_VOCAB, args.d_l, mode=args.lang_mode,
                               seed=args.encoder_seed)
    except InputError as exc:
        raise ConfigurationError(str(exc)) from exc
    demos = collect_demos(task, venc, lenc, args.n, args.seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        for demo in demos:
            fh.write(json.dumps(demo_to_dict(demo), sort_keys=True) + "\n")
    print(f"wrote {len(demos)} demos ({sum(len(d) for d in demos)} frames) to {args.out}")
    return 0


def _cmd_run(args: argparse.Namespace, force_no_adapt: bool = False) -> int:
    overrides = list(args.overrides)
    if force_no_adapt:
        overrides.append("adapt.mode=none")
    cfg = harness.parse_config(args.config, overrides)
    record = harness.run_experiment(cfg)
    print(
        f"run {record['config_hash']} ({record['label']}): "
        f"ASR {harness.format_asr(record['asr_mean'], record['asr_std'])}, "
        f"{record['failures']} cell failures"
    )
    return 3 if record["failures"] else 0


def _cmd_adapt_test(args: argparse.Namespace) -> int:
    cfg = harness.parse_config(args.config, args.overrides)
    if cfg["adapt"]["mode"] == "none":
        raise ConfigurationError("adapt-test needs adapt.mode=uniform or selective")
    tasks = load_suite(f"{args.seed_dir}/checkpoints/suite.json")
    if not 0 <= args.task < len(tasks):
        raise ConfigurationError(f"task index {args.task} outside the suite")
    params, _meta = load_params(f"{args.seed_dir}/checkpoints/final.bin")
    mem = load_memory(f"{args.seed_dir}/checkpoints/memory.jsonl")
    _tasks, venc, lenc, _pcfg = harness.build_components(cfg)
    acfg = harness._adapt_config(cfg)
    tcfg = harness._train_config(cfg)
    _, report = adapt_and_test(
        params, mem, tasks[args.task], venc, lenc, acfg, tcfg,
        spawn_seed(args.seed, "adapt", args.task),
    )
    print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    records = [harness.load_record(p) for p in args.records]
    csv_text, table_text = harness.compare(records)
    sys.stdout.write(table_text)
    if args.out_prefix:
        with open(args.out_prefix + ".csv", "w", encoding="utf-8") as fh:
            fh.write(csv_text)
        with open(args.out_prefix + ".txt", "w", encoding="utf-8") as fh:
            fh.write(table_text)
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    sys.stdout.write(harness.report_text(args.run_dir))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _parse_args(argv)
    try:
        if args.command == "gen-suite":
            return _cmd_gen_suite(args)
        if args.command == "collect":
            return _cmd_collect(args)
        if args.command == "train":
            return _cmd_run(args, force_no_adapt=True)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "adapt-test":
            return _cmd_adapt_test(args)
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "report":
            return _cmd_report(args)
        raise ConfigurationError(f"unknown command {args.command!r}")
    except (ConfigurationError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Lifelong2dError as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
