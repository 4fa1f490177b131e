"""Experiment harness: INI config, sequential runs, metrics files, comparison.

A run is fully described by one INI file. Each (config, seed) cell trains a
policy through the task sequence, evaluates success-rate matrices, optionally
runs the test-time adaptation pass, and writes:

    runs/<confighash>/seed<k>/train.jsonl      per-epoch training events
    runs/<confighash>/seed<k>/metrics.jsonl    per-episode evaluation events
    runs/<confighash>/seed<k>/reports.jsonl    adaptation reports (wall time lives here)
    runs/<confighash>/seed<k>/summary.csv      per-task roll-up
    runs/<confighash>/seed<k>/checkpoints/     final policy + episodic memory
    runs/<confighash>/record.json              aggregate record for comparisons

Everything except the wall_time fields in reports.jsonl is a pure function of
the config, so reruns are byte-identical. Failures inside a cell are recorded
and the run continues.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .encoders import LanguageEncoder, VisionEncoder
from .errors import ConfigurationError, InputError, Lifelong2dError
from .lifelong import (
    StrategyConfig,
    TrainConfig,
    evaluate_matrix_row,
    init_strategy_state,
    masked_params,
    train_task,
)
from .memory import AdmissionConfig, EpisodicMemory, save_memory
from .policy import PolicyConfig, init_params, save_params
from .recall import AdaptConfig, adapt_and_test
from .seeding import spawn_seed
from .taskworld import CONTENT_VOCAB, collect_demos, make_suite, save_suite

METHOD_ORDER = ("ewc", "agem", "agem-wla", "er", "er-wla", "packnet")
AUTO_ALPHAS = {
    "spatial": (1.0, 0.5),
    "object": (1.0, 0.5),
    "goal": (0.5, 1.0),
    "mixed": (1.0, 0.1),
}


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_seeds(raw: str) -> list[int]:
    parts = raw.replace(",", " ").split()
    if not parts:
        raise ValueError("empty seed list")
    return [int(p) for p in parts]


def _parse_float_or_auto(raw: str):
    if raw.strip().lower() == "auto":
        return "auto"
    return float(raw)


# section -> key -> (parser, default)
_SCHEMA: dict[str, dict[str, tuple]] = {
    "suite": {
        "family": (str, "spatial"),
        "n_tasks": (int, 5),
        "seed": (int, 7),
        "paraphrases": (int, 10),
        "demos_per_task": (int, 48),
    },
    "encoders": {
        "d_v": (int, 48),
        "d_l": (int, 32),
        "lang_mode": (str, "cluster"),
        "seed": (int, 0),
    },
    "policy": {
        "window": (int, 10),
        "hidden": (int, 128),
        "modes": (int, 5),
        "feature_gain": (float, 16.0),
    },
    "train": {
        "epochs": (int, 50),
        "batch_size": (int, 32),
        "lr": (float, 1e-4),
        "weight_decay": (float, 1e-4),
        "grad_clip": (float, 100.0),
        "loss_scale": (float, 1.0),
        "eval_every": (int, 10),
        "probe_episodes": (int, 20),
    },
    "strategy": {
        "kind": (str, "naive"),
        "er_mix": (float, 0.5),
        "ewc_lambda": (float, 100.0),
        "ewc_fisher_batches": (int, 16),
        "packnet_prune_frac": (float, 0.75),
        "packnet_posttrain_epochs": (int, 10),
    },
    "memory": {
        "kind": (str, "oracle_quota"),
        "per_task": (int, 8),
        "capacity": (int, 64),
    },
    "adapt": {
        "mode": (str, "none"),  # none | uniform | selective
        "quiz_episodes": (int, 10),
        "retrieve_frac": (float, 0.10),
        "alpha_v": (_parse_float_or_auto, "auto"),
        "alpha_l": (_parse_float_or_auto, "auto"),
        "adapt_epochs": (int, 20),
        "smooth_window": (int, 5),
        "pad": (int, 15),
        "weight_increment": (float, 0.3),
        "weight_clip": (float, 2.0),
        "max_failed_rollouts": (int, 5),
        "segment_mode": (str, "anchor_pad"),
    },
    "eval": {
        "episodes": (int, 20),
        "max_episode_len": (int, 150),
        "matrix": (str, "full"),  # full | final
    },
    "run": {
        "seeds": (_parse_seeds, [1, 21, 42]),
        "out_dir": (str, "runs"),
        "label": (str, ""),
    },
}


@dataclass
class ExperimentConfig:
    """Typed view of one experiment INI (see _SCHEMA for keys and defaults)."""

    values: dict[str, dict] = field(default_factory=dict)

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def canonical(self) -> dict:
        """Hash-relevant content: everything except presentation keys."""
        doc = {s: dict(sorted(kv.items())) for s, kv in sorted(self.values.items())}
        doc["run"] = {"seeds": self.values["run"]["seeds"]}
        return doc

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:12]

    def method_name(self) -> str:
        kind = self.values["strategy"]["kind"]
        mode = self.values["adapt"]["mode"]
        if mode == "selective":
            return f"{kind}-wla"
        if mode == "uniform":
            return f"{kind}-ula"
        return kind

    def label(self) -> str:
        return self.values["run"]["label"] or self.method_name()


def parse_config(
    path: str | None = None,
    overrides: list[str] | None = None,
    text: str | None = None,
) -> ExperimentConfig:
    """Read an INI config; unknown sections/keys or untypable values fail.

    `overrides` entries look like "section.key=value" and are applied on top.
    With neither path nor text, the schema defaults are returned.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if text is not None:
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigurationError(f"malformed config: {exc}") from exc

    raw: dict[str, dict[str, str]] = {s: dict(cp.items(s)) for s in cp.sections()}
    for section in raw:
        if section not in _SCHEMA:
            raise ConfigurationError(f"unknown config section [{section}]")
        for key in raw[section]:
            if key not in _SCHEMA[section]:
                raise ConfigurationError(f"unknown config key {section}.{key}")
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigurationError(f"override must look like section.key=value, got {item!r}")
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigurationError(f"unknown override target {target!r}")
        raw.setdefault(section, {})[key] = value

    values: dict[str, dict] = {}
    for section, keys in _SCHEMA.items():
        values[section] = {}
        for key, (parser, default) in keys.items():
            if section in raw and key in raw[section]:
                try:
                    values[section][key] = parser(raw[section][key])
                except (ValueError, TypeError) as exc:
                    raise ConfigurationError(f"bad value for {section}.{key}: {exc}") from exc
            else:
                values[section][key] = default
    cfg = ExperimentConfig(values=values)
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: ExperimentConfig) -> None:
    v = cfg.values
    if v["encoders"]["lang_mode"] not in ("cluster", "noisy"):
        raise ConfigurationError("encoders.lang_mode must be cluster or noisy")
    if v["adapt"]["mode"] not in ("none", "uniform", "selective"):
        raise ConfigurationError("adapt.mode must be none, uniform, or selective")
    if v["adapt"]["segment_mode"] not in ("anchor_pad", "band"):
        raise ConfigurationError("adapt.segment_mode must be anchor_pad or band")
    if v["eval"]["matrix"] not in ("full", "final"):
        raise ConfigurationError("eval.matrix must be full or final")
    if v["suite"]["demos_per_task"] < 1:
        raise ConfigurationError("suite.demos_per_task must be >= 1")
    if not v["run"]["seeds"]:
        raise ConfigurationError("run.seeds must not be empty")
    strategy = StrategyConfig(
        kind=v["strategy"]["kind"],
        er_mix=v["strategy"]["er_mix"],
        ewc_lambda=v["strategy"]["ewc_lambda"],
        ewc_fisher_batches=v["strategy"]["ewc_fisher_batches"],
        packnet_prune_frac=v["strategy"]["packnet_prune_frac"],
        packnet_posttrain_epochs=v["strategy"]["packnet_posttrain_epochs"],
    )
    admission = AdmissionConfig(
        kind=v["memory"]["kind"],
        per_task=v["memory"]["per_task"],
        capacity=v["memory"]["capacity"],
    )
    # bad values in a config file are config errors, whatever the component says
    try:
        strategy.validate()
        admission.validate()
    except Lifelong2dError as exc:
        raise ConfigurationError(str(exc)) from exc


def _resolved_alphas(cfg: ExperimentConfig) -> tuple[float, float]:
    family = cfg["suite"]["family"]
    a_v = cfg["adapt"]["alpha_v"]
    a_l = cfg["adapt"]["alpha_l"]
    auto = AUTO_ALPHAS.get(family, (1.0, 0.5))
    return (
        auto[0] if a_v == "auto" else float(a_v),
        auto[1] if a_l == "auto" else float(a_l),
    )


def build_components(cfg: ExperimentConfig):
    """(tasks, vision encoder, language encoder, policy config) for a config."""
    s = cfg["suite"]
    tasks = make_suite(s["family"], s["n_tasks"], s["seed"], s["paraphrases"])
    e = cfg["encoders"]
    venc = VisionEncoder(tasks[0].obs_len, e["d_v"], seed=e["seed"])
    lenc = LanguageEncoder(CONTENT_VOCAB, e["d_l"], mode=e["lang_mode"], seed=e["seed"])
    p = cfg["policy"]
    pcfg = PolicyConfig(
        d_v=e["d_v"], d_l=e["d_l"], window=p["window"], hidden=p["hidden"],
        modes=p["modes"], feature_gain=p["feature_gain"],
    )
    return tasks, venc, lenc, pcfg


def _train_config(cfg: ExperimentConfig) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        epochs=t["epochs"],
        batch_size=t["batch_size"],
        lr=t["lr"],
        weight_decay=t["weight_decay"],
        grad_clip=t["grad_clip"],
        loss_scale=t["loss_scale"],
        eval_every=t["eval_every"],
        probe_episodes=t["probe_episodes"],
        max_episode_len=cfg["eval"]["max_episode_len"],
    )


def _strategy_config(cfg: ExperimentConfig) -> StrategyConfig:
    s = cfg["strategy"]
    return StrategyConfig(
        kind=s["kind"],
        er_mix=s["er_mix"],
        ewc_lambda=s["ewc_lambda"],
        ewc_fisher_batches=s["ewc_fisher_batches"],
        packnet_prune_frac=s["packnet_prune_frac"],
        packnet_posttrain_epochs=s["packnet_posttrain_epochs"],
    )


def _adapt_config(cfg: ExperimentConfig) -> AdaptConfig:
    a = cfg["adapt"]
    alpha_v, alpha_l = _resolved_alphas(cfg)
    return AdaptConfig(
        quiz_episodes=a["quiz_episodes"],
        retrieve_frac=a["retrieve_frac"],
        alpha_v=alpha_v,
        alpha_l=alpha_l,
        weighting="selective" if a["mode"] == "selective" else "uniform",
        smooth_window=a["smooth_window"],
        pad=a["pad"],
        segment_mode=a["segment_mode"],
        weight_increment=a["weight_increment"],
        weight_clip=a["weight_clip"],
        max_failed_rollouts=a["max_failed_rollouts"],
        adapt_epochs=a["adapt_epochs"],
        eval_episodes=cfg["eval"]["episodes"],
        max_episode_len=cfg["eval"]["max_episode_len"],
    )


class _JsonlWriter:
    def __init__(self, path: str):
        self._fh = open(path, "w", encoding="utf-8")

    def write(self, event: dict) -> None:
        self._fh.write(json.dumps(event, sort_keys=True) + "\n")

    def close(self) -> None:
        self._fh.close()


def run_seed(cfg: ExperimentConfig, seed: int, seed_dir: str) -> dict:
    """One (config, seed) cell: train the sequence, evaluate, adapt, write files."""
    os.makedirs(os.path.join(seed_dir, "checkpoints"), exist_ok=True)
    tasks, venc, lenc, pcfg = build_components(cfg)
    train_cfg = _train_config(cfg)
    strategy = _strategy_config(cfg)
    admission = AdmissionConfig(
        kind=cfg["memory"]["kind"],
        per_task=cfg["memory"]["per_task"],
        capacity=cfg["memory"]["capacity"],
    )
    params = init_params(pcfg, spawn_seed(seed, "policy-init"))
    mem = EpisodicMemory(admission, seed=spawn_seed(seed, "memory"))
    state = init_strategy_state(strategy, params)

    train_log = _JsonlWriter(os.path.join(seed_dir, "train.jsonl"))
    metrics = _JsonlWriter(os.path.join(seed_dir, "metrics.jsonl"))
    reports_fh = _JsonlWriter(os.path.join(seed_dir, "reports.jsonl"))
    failures: list[dict] = []
    matrix: list[dict] = []
    suite_seed = cfg["suite"]["seed"]

    try:
        for k, task in enumerate(tasks):
            try:
                demos = collect_demos(
                    task, venc, lenc,
                    cfg["suite"]["demos_per_task"],
                    spawn_seed(suite_seed, "collect", seed, k),
                )
                params = train_task(
                    params, demos, mem, task, strategy, state, train_cfg,
                    venc, lenc, spawn_seed(seed, "train", k), log=train_log.write,
                )
            except Lifelong2dError as exc:
                failures.append({"stage": "train", "task_pos": k, "error": str(exc)})
                metrics.write({"event": "cell_failure", "stage": "train",
                               "task_pos": k, "error": str(exc)})
            if cfg["eval"]["matrix"] == "full" or k == len(tasks) - 1:
                rates = evaluate_matrix_row(
                    params, tasks[: k + 1], venc, lenc,
                    cfg["eval"]["episodes"], spawn_seed(seed, "matrix", k),
                    cfg["eval"]["max_episode_len"],
                    owner=state.owner,
                    on_episode=lambda j, e, ok, after=k: metrics.write(
                        {"event": "matrix_episode", "after_task": after,
                         "task": j, "episode": e, "success": int(ok)}
                    ),
                )
                matrix.append({"after_task": k, "rates": rates})
                metrics.write({"event": "matrix_row", "after_task": k, "rates": rates})

        reports = []
        if cfg["adapt"]["mode"] != "none":
            acfg = _adapt_config(cfg)
            for k, task in enumerate(tasks):
                base = masked_params(params, state.owner, k) if state.owner else params
                started = time.perf_counter()
                try:
                    _, report = adapt_and_test(
                        base, mem, task, venc, lenc, acfg, train_cfg,
                        spawn_seed(seed, "adapt", k),
                    )
                except Lifelong2dError as exc:
                    failures.append({"stage": "adapt", "task_pos": k, "error": str(exc)})
                    metrics.write({"event": "cell_failure", "stage": "adapt",
                                   "task_pos": k, "error": str(exc)})
                    continue
                report.wall_time = time.perf_counter() - started
                reports.append(report)
                reports_fh.write(report.to_dict())
                for e, ok in enumerate(report.eval_successes):
                    metrics.write({"event": "adapt_episode", "task": k,
                                   "episode": e, "success": int(ok)})
    finally:
        train_log.close()
        metrics.close()
        reports_fh.close()

    save_params(params, os.path.join(seed_dir, "checkpoints", "final.bin"),
                meta={"seed": seed, "config_hash": cfg.config_hash()})
    save_memory(mem, os.path.join(seed_dir, "checkpoints", "memory.jsonl"))
    save_suite(tasks, os.path.join(seed_dir, "checkpoints", "suite.json"))

    record = {
        "seed": seed,
        "matrix": matrix,
        "final_rates": matrix[-1]["rates"] if matrix else [],
        "adapted_rates": [r.adapted_rate for r in reports] if cfg["adapt"]["mode"] != "none" else None,
        "quiz_rates": [r.quiz_rate for r in reports] if cfg["adapt"]["mode"] != "none" else None,
        "retrieval_accuracies": [r.retrieval_accuracy for r in reports]
        if cfg["adapt"]["mode"] != "none" else None,
        "adapted_task_ids": [r.eval_task_id for r in reports]
        if cfg["adapt"]["mode"] != "none" else None,
        "exhausted_at": state.exhausted_at,
        "failures": failures,
    }
    with open(os.path.join(seed_dir, "summary.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(summary_csv(record))
    with open(os.path.join(seed_dir, "seed_record.json"), "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return record


def summary_csv(record: dict) -> str:
    """Per-task roll-up as CSV text; every figure re-derivable from the JSONL."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(
        ["seed", "task", "post_rate", "quiz_rate", "adapted_rate", "retrieval_accuracy"]
    )
    final = record["final_rates"]
    adapted = record["adapted_rates"]
    quizzes = record["quiz_rates"]
    ras = record["retrieval_accuracies"]
    aids = record["adapted_task_ids"]
    for j, rate in enumerate(final):
        if adapted is not None and aids is not None and j in aids:
            i = aids.index(j)
            row = [record["seed"], j, repr(float(rate)), repr(float(quizzes[i])),
                   repr(float(adapted[i])), repr(float(ras[i]))]
        else:
            row = [record["seed"], j, repr(float(rate)), "", "", ""]
        writer.writerow(row)
    return out.getvalue()


def recomputed_summary_csv(seed_dir: str) -> str:
    """Rebuild summary.csv purely from the per-episode JSONL events.

    Used as an aggregation audit: the stored CSV must match this byte for
    byte.
    """
    events = []
    with open(os.path.join(seed_dir, "metrics.jsonl"), "r", encoding="utf-8") as fh:
        events = [json.loads(line) for line in fh if line.strip()]
    reports = []
    with open(os.path.join(seed_dir, "reports.jsonl"), "r", encoding="utf-8") as fh:
        reports = [json.loads(line) for line in fh if line.strip()]
    with open(os.path.join(seed_dir, "seed_record.json"), "r", encoding="utf-8") as fh:
        seed = json.load(fh)["seed"]

    rows = [e for e in events if e["event"] == "matrix_episode"]
    if rows:
        last = max(e["after_task"] for e in rows)
        tasks = sorted({e["task"] for e in rows if e["after_task"] == last})
        final = []
        for j in tasks:
            outcomes = [e["success"] for e in rows if e["after_task"] == last and e["task"] == j]
            final.append(float(np.mean(outcomes)))
    else:
        final = []

    record = {
        "seed": seed,
        "final_rates": final,
        "adapted_rates": [float(np.mean(r["eval_successes"])) for r in reports] or None,
        "quiz_rates": [float(np.mean(r["quiz_successes"])) for r in reports] or None,
        "retrieval_accuracies": [
            float(np.mean([t == r["eval_task_id"] for t in r["retrieved_task_ids"]]))
            for r in reports
        ] or None,
        "adapted_task_ids": [r["eval_task_id"] for r in reports] or None,
    }
    return summary_csv(record)


def run_experiment(cfg: ExperimentConfig, base_dir: str | None = None) -> dict:
    """All seeds of one config; returns (and writes) the aggregate record."""
    out_root = base_dir if base_dir is not None else cfg["run"]["out_dir"]
    run_dir = os.path.join(out_root, cfg.config_hash())
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(cfg.canonical(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    seed_records = []
    for seed in cfg["run"]["seeds"]:
        seed_dir = os.path.join(run_dir, f"seed{seed}")
        seed_records.append(run_seed(cfg, seed, seed_dir))

    headline = []
    for rec in seed_records:
        rates = rec["adapted_rates"] if rec["adapted_rates"] is not None else rec["final_rates"]
        headline.extend(float(r) for r in rates)
    mean, std = asr(headline)
    record = {
        "config_hash": cfg.config_hash(),
        "label": cfg.label(),
        "method": cfg.method_name(),
        "family": cfg["suite"]["family"],
        "n_tasks": cfg["suite"]["n_tasks"],
        "seeds": cfg["run"]["seeds"],
        "asr_mean": mean,
        "asr_std": std,
        "headline_rates": headline,
        "seed_records": seed_records,
        "failures": sum(len(r["failures"]) for r in seed_records),
    }
    with open(os.path.join(run_dir, "record.json"), "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return record


def asr(rates: list[float]) -> tuple[float, float]:
    """Mean and population std of pooled per-task success rates."""
    if not rates:
        return 0.0, 0.0
    arr = np.asarray(rates, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def format_asr(mean: float, std: float) -> str:
    """Percent with two decimals, mean +/- std."""
    return f"{100.0 * mean:.2f} +/- {100.0 * std:.2f}"


def retrieval_accuracy(report: dict) -> float:
    """Fraction of retrieved demos whose task id matches the queried task.

    Recomputed from the raw id lists (independent of the stored figure).
    """
    ids = report["retrieved_task_ids"]
    if not ids:
        return 0.0
    return float(np.mean([t == report["eval_task_id"] for t in ids]))


def _method_sort_key(method: str) -> tuple[int, str]:
    try:
        return (METHOD_ORDER.index(method), method)
    except ValueError:
        return (len(METHOD_ORDER), method)


def compare(records: list[dict]) -> tuple[str, str]:
    """(csv_text, table_text) across run records, fixed method column order.

    Adds success-rate deltas for each method that has a -wla variant present.
    """
    suites = {(r["family"], r["n_tasks"]) for r in records}
    if len(suites) > 1:
        raise InputError(f"records cover different suites: {sorted(suites)}")
    rows = sorted(records, key=lambda r: _method_sort_key(r["method"]))
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["method", "label", "asr_mean", "asr_std", "cells"])
    for r in rows:
        writer.writerow(
            [r["method"], r["label"], repr(float(r["asr_mean"])),
             repr(float(r["asr_std"])), len(r["headline_rates"])]
        )
    by_method = {r["method"]: r for r in rows}
    for base in ("er", "agem", "ewc", "naive", "packnet"):
        wla = f"{base}-wla"
        if base in by_method and wla in by_method:
            delta = by_method[wla]["asr_mean"] - by_method[base]["asr_mean"]
            writer.writerow([f"{wla}-minus-{base}", "", repr(float(delta)), "", ""])

    width = max([len(r["label"]) for r in rows] + [8])
    lines = [f"{'method':<{width}}  success rate (percent)"]
    for r in rows:
        lines.append(f"{r['label']:<{width}}  {format_asr(r['asr_mean'], r['asr_std'])}")
    return out.getvalue(), "\n".join(lines) + "\n"


def load_record(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def report_text(run_dir: str) -> str:
    """Human-readable synopsis of a finished run directory."""
    record = load_record(os.path.join(run_dir, "record.json"))
    lines = [
        f"run {record['config_hash']} ({record['label']}) on {record['family']}"
        f" x{record['n_tasks']} tasks, seeds {record['seeds']}",
        f"success rate: {format_asr(record['asr_mean'], record['asr_std'])}",
        f"cell failures: {record['failures']}",
    ]
    for rec in record["seed_records"]:
        final = ", ".join(f"{r:.2f}" for r in rec["final_rates"])
        lines.append(f"  seed {rec['seed']}: post-training rates [{final}]")
        if rec["adapted_rates"] is not None:
            adapted = ", ".join(f"{r:.2f}" for r in rec["adapted_rates"])
            lines.append(f"  seed {rec['seed']}: adapted rates      [{adapted}]")
        if rec["exhausted_at"] is not None:
            lines.append(f"  seed {rec['seed']}: capacity exhausted at task {rec['exhausted_at']}")
    return "\n".join(lines) + "\n"


__all__ = [
    "AUTO_ALPHAS",
    "METHOD_ORDER",
    "ExperimentConfig",
    "asr",
    "build_components",
    "compare",
    "format_asr",
    "load_record",
    "parse_config",
    "recomputed_summary_csv",
    "report_text",
    "retrieval_accuracy",
    "run_experiment",
    "run_seed",
    "summary_csv",
]
