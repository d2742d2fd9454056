"""Command-line interface.

Subcommands:

* ``run``     -- select over a benchmark JSONL file, write verdicts JSONL
* ``bsf1``    -- score two ResultSet JSON files against each other
* ``cluster`` -- show execution-equivalence clusters per benchmark item
* ``convert`` -- turn official BIRD/Spider question files into benchmark JSONL

Exit code 0 means the command completed; infrastructure failures (missing
files, unreachable provider) exit nonzero with a message on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

from .bsf1 import bsf1
from .harness import (
    BenchmarkFormatError,
    convert_official,
    load_benchmark,
    run_benchmark,
    write_report_jsonl,
)
from .clustering import cluster_candidates
from .llm import HttpChatProvider, ProviderConfig, ProviderError
from .pipeline import PipelineConfig
from .results import ResultSet
from .solver import SubprocessScriptExecutor

BASELINE_ALIASES = {
    "sc": "self_consistency",
    "eg": "execution_guided",
    "random": "random",
    "self_consistency": "self_consistency",
    "execution_guided": "execution_guided",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sqlarbiter",
        description="Training-free SQL candidate selection by execution duels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="select over a benchmark file")
    run.add_argument("--input", required=True, help="benchmark JSONL file")
    run.add_argument("--db-root", required=True, help="directory of SQLite databases")
    run.add_argument("--provider", required=True, help="chat-completions endpoint URL")
    run.add_argument("--model", required=True, help="model name sent to the provider")
    run.add_argument("--temperature", type=float, default=0.7)
    run.add_argument("--t-max", type=int, default=3, help="retry budget per agent")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument(
        "--baselines",
        default="",
        help="comma-separated: sc, eg, random (also scored against gold)",
    )
    run.add_argument("--output", required=True, help="verdicts JSONL path")
    run.add_argument(
        "--api-key-env",
        default="SQLARBITER_API_KEY",
        help="environment variable holding the provider API key",
    )
    run.add_argument(
        "--runner-cmd",
        default=f"{sys.executable} -m dfsandbox",
        help="command line of the script runner child process",
    )
    run.add_argument("--sql-timeout-ms", type=int, default=30_000)
    run.add_argument("--script-timeout-ms", type=int, default=10_000)

    score = sub.add_parser("bsf1", help="score two ResultSet JSON files")
    score.add_argument("--left", required=True, help="candidate ResultSet JSON file")
    score.add_argument("--right", required=True, help="reference ResultSet JSON file")

    cluster = sub.add_parser("cluster", help="cluster candidates by execution result")
    cluster.add_argument("--input", required=True)
    cluster.add_argument("--db-root", required=True)

    convert = sub.add_parser("convert", help="convert official benchmark files")
    convert.add_argument("--format", required=True, choices=["bird", "spider"])
    convert.add_argument("--input", required=True)
    convert.add_argument("--output", required=True)
    convert.add_argument(
        "--candidates",
        help="JSON file mapping question_id to a list of candidate SQLs",
    )
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    items = load_benchmark(args.input, args.db_root)
    baselines = []
    for token in filter(None, (t.strip() for t in args.baselines.split(","))):
        if token not in BASELINE_ALIASES:
            print(f"unknown baseline: {token}", file=sys.stderr)
            return 2
        baselines.append(BASELINE_ALIASES[token])
    config = PipelineConfig(
        t_max=args.t_max,
        temperature=args.temperature,
        model=args.model,
        sql_timeout_ms=args.sql_timeout_ms,
        script_timeout_ms=args.script_timeout_ms,
        worker_count=args.workers,
    )
    provider = HttpChatProvider(
        ProviderConfig(
            endpoint_url=args.provider,
            model=args.model,
            api_key_env_var=args.api_key_env,
        )
    )
    executor = SubprocessScriptExecutor(args.runner_cmd.split())
    try:
        report = run_benchmark(
            items, config, provider, executor, baselines=baselines, seed=args.seed
        )
    finally:
        executor.close()
    write_report_jsonl(report, args.output)
    print(json.dumps(report.to_json_dict(), ensure_ascii=False))
    return 0


def _cmd_bsf1(args: argparse.Namespace) -> int:
    with open(args.left, "r", encoding="utf-8") as fh:
        left = ResultSet.from_json(fh.read())
    with open(args.right, "r", encoding="utf-8") as fh:
        right = ResultSet.from_json(fh.read())
    print(json.dumps(bsf1(left, right).as_dict()))
    return 0


def _cmd_cluster(args: argparse.Namespace) -> int:
    items = load_benchmark(args.input, args.db_root)
    for item in items:
        if not item.runnable:
            print(
                json.dumps(
                    {"question_id": item.question_id, "error": item.unrunnable_reason}
                )
            )
            continue
        clusters = cluster_candidates(item.candidate_set())
        print(
            json.dumps(
                {
                    "question_id": item.question_id,
                    "clusters": [
                        {
                            "members": c.member_indices,
                            "representative": c.representative_index,
                            "is_error_cluster": c.is_error_cluster,
                        }
                        for c in clusters
                    ],
                }
            )
        )
    return 0


def _cmd_convert(args: argparse.Namespace) -> int:
    lines = convert_official(args.format, args.input, args.candidates)
    with open(args.output, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(json.dumps(line, ensure_ascii=False) + "\n")
    print(f"wrote {len(lines)} items to {args.output}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "bsf1": _cmd_bsf1,
        "cluster": _cmd_cluster,
        "convert": _cmd_convert,
    }
    try:
        return handlers[args.command](args)
    except (OSError, BenchmarkFormatError, ProviderError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
