"""Schema-linking datasets, reward scoring and toy GRPO training from the command line.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, RunConfig
from .data import (
    DatasetError,
    build_cot_prompt,
    fixture_path,
    load_examples,
    load_linked_dataset,
    load_predictions,
    load_spider_schemas,
    save_linked_dataset,
    schema_for,
    write_jsonl,
)
from .metrics import aggregate_report
from .response import parse_response
from .rewards import RewardConfigError, total_reward
from .schema import SchemaError, SchemaLinkSet
from .sim import LOG_FIELDS, SimulationError, read_run_log, train_loop

log = logging.getLogger("schemalink")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(ValueError):
    pass


def _out_dir(cfg: RunConfig, default: str) -> Path:
    path = Path(cfg.out or default)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require(value: Optional[str], flag: str) -> str:
    if not value:
        raise UsageError(f"missing {flag}")
    return value


def _schemas(cfg: RunConfig):
    return load_spider_schemas(cfg.schemas or fixture_path("toy_tables.json"))


def _dataset(cfg: RunConfig, schemas):
    """Linked dataset from --dataset, else linked on the fly from --examples."""
    if cfg.dataset:
        return load_linked_dataset(cfg.dataset)
    examples, rejections = load_examples(
        cfg.examples or fixture_path("toy_examples.json"), schemas, cfg.exclude_join_columns
    )
    for rej in rejections:
        log.warning("rejected record %d: %s", rej.index, rej.reason)
    return examples


def _scored_predictions(cfg: RunConfig, schemas, examples):
    """Yield ``(example, parsed response)``; unknown ids abort the run."""
    by_id = {ex.id: ex for ex in examples}
    predictions = load_predictions(_require(cfg.predictions, "--predictions"))
    missing = [pid for pid, _ in predictions if pid not in by_id]
    if missing:
        raise DatasetError(f"predictions without ground truth: {missing[:5]}")
    unscored = len(by_id) - len({pid for pid, _ in predictions})
    if unscored:
        log.warning("%d dataset examples have no prediction", unscored)
    for pid, response in predictions:
        ex = by_id[pid]
        yield ex, parse_response(response, schema_for(ex, schemas), accept_singular=cfg.reward.accept_singular_marker)


def cmd_extract(cfg: RunConfig, args) -> int:
    schemas = load_spider_schemas(_require(cfg.schemas, "--schemas"))
    examples, rejections = load_examples(_require(cfg.examples, "--examples"), schemas, cfg.exclude_join_columns)
    out = _out_dir(cfg, "extract_out")
    save_linked_dataset(examples, out / "dataset.jsonl")
    write_jsonl((r.to_json() for r in rejections), out / "rejections.jsonl")
    print(f"linked {len(examples)} examples, rejected {len(rejections)}", file=sys.stderr)
    return EXIT_OK


def cmd_prompts(cfg: RunConfig, args) -> int:
    schemas = _schemas(cfg)
    examples = _dataset(cfg, schemas)[: cfg.count]
    records = ({"id": ex.id, "prompt": build_cot_prompt(ex, schema_for(ex, schemas))} for ex in examples)
    out = Path(cfg.out or "prompts.jsonl")
    write_jsonl(records, out)
    print(f"wrote {len(examples)} prompts to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_score(cfg: RunConfig, args) -> int:
    schemas = _schemas(cfg)
    examples = _dataset(cfg, schemas)
    rows, pairs = [], []
    for ex, parsed in _scored_predictions(cfg, schemas, examples):
        breakdown = total_reward(parsed, ex.truth, cfg.reward)
        rows.append({"id": ex.id, **breakdown.to_dict()})
        pairs.append((parsed.predicted or SchemaLinkSet(), ex.truth))
    if not pairs:
        raise DatasetError("no predictions to score")
    report = aggregate_report(pairs)
    out = _out_dir(cfg, "score_out")
    write_jsonl(rows, out / "rewards.jsonl")
    (out / "report.json").write_text(report.to_json() + "\n")
    print(report.to_text())
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    schemas = _schemas(cfg)
    examples = _dataset(cfg, schemas)
    pairs = [(p.predicted or SchemaLinkSet(), ex.truth) for ex, p in _scored_predictions(cfg, schemas, examples)]
    if not pairs:
        raise DatasetError("no predictions to evaluate")
    report = aggregate_report(pairs)
    out = Path(cfg.out or "report.json")
    out.write_text(report.to_json() + "\n")
    print(report.to_text())
    return EXIT_OK


def cmd_train_sim(cfg: RunConfig, args) -> int:
    schemas = _schemas(cfg)
    examples = _dataset(cfg, schemas)
    out = _out_dir(cfg, "train_out")
    sim = dataclasses.replace(cfg.sim_config(), log_path=str(out / "run_log.jsonl"))
    try:
        policy, records = train_loop(sim, examples, schemas)
    except SimulationError as err:
        (out / "policy.json").write_text(json.dumps(err.policy.to_json()) + "\n")
        raise
    (out / "policy.json").write_text(json.dumps(policy.to_json()) + "\n")
    last = records[-1]
    print(
        f"iterations {last['iteration']}: mean reward {last['mean_reward']:.3f}, "
        f"table FilteredAcc {last['table_filtered']:.3f}, column FilteredAcc {last['col_filtered']:.3f}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_report(cfg: RunConfig, args) -> int:
    records = read_run_log(_require(args.log, "--log"))
    out = Path(cfg.out or "training_curve.csv")
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        writer.writeheader()
        for record in records:
            writer.writerow({k: "" if record.get(k) is None else record[k] for k in LOG_FIELDS})
    print(f"wrote {len(records)} rows to {out}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "extract": cmd_extract,
    "prompts": cmd_prompts,
    "score": cmd_score,
    "train-sim": cmd_train_sim,
    "eval": cmd_eval,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--schemas", help="Spider-layout schema file (default: bundled toy schemas)")
    common.add_argument("--examples", help="raw {db_id, question, query} records")
    common.add_argument("--dataset", help="linked dataset written by `extract`")
    common.add_argument("--predictions", help="line records {id, response}")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--exclude-join-columns", action="store_true", default=None,
                        help="drop columns used only in JOIN ... ON conditions")
    common.add_argument("--literal-set-difference", action="store_true", default=None,
                        help="reward |truth - pred| as typeset instead of |truth & pred|")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="schemalink", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("extract", parents=[common], help="build ground truth from gold SQL")
    p = sub.add_parser("prompts", parents=[common], help="emit CoT-generation prompts")
    p.add_argument("--count", type=int, help="number of leading examples (default 200)")
    sub.add_parser("score", parents=[common], help="reward breakdown and metrics for predictions")
    p = sub.add_parser("train-sim", parents=[common], help="GRPO training of the toy policy")
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    sub.add_parser("eval", parents=[common], help="EM / FilteredAcc / Rec report for predictions")
    p = sub.add_parser("report", parents=[common], help="run log to per-iteration CSV")
    p.add_argument("--log", help="run_log.jsonl written by train-sim")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for name in ("schemas", "examples", "dataset", "predictions", "out", "exclude_join_columns"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if getattr(args, "count", None) is not None:
        cfg.count = args.count
    if args.literal_set_difference:
        cfg.reward = dataclasses.replace(cfg.reward, literal_set_difference_mode=True)
    sim = dict(cfg.sim)
    for name in ("seed", "iterations"):
        if getattr(args, name, None) is not None:
            sim[name] = getattr(args, name)
    return RunConfig(**{**cfg.__dict__, "sim": sim})


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigError, DatasetError, SchemaError, RewardConfigError, FileNotFoundError,
            ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except (SimulationError, OSError) as err:
        print(f"runtime failure: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
