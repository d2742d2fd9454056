"""Benchmark ingestion, baseline selectors, EX / Pass@N metrics, reporting.

The input format is line-delimited JSON, one item per line:

    {"question_id": ..., "question": ..., "evidence": ...,
     "db_id": ..., "candidates": [...], "gold_sql": ...}

``db_id`` resolves to ``<db_root>/<db_id>.sqlite`` or the nested
``<db_root>/<db_id>/<db_id>.sqlite`` layout.  Items whose database file is
missing are flagged unrunnable rather than failing the whole load; items
whose gold SQL errors on its database are excluded from EX denominators.
"""

from __future__ import annotations

import concurrent.futures
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .clustering import CandidateSet, cluster_candidates
from .llm import Provider
from .pipeline import PipelineConfig, Verdict, select_one
from .results import canonicalize
from .solver import ScriptExecutor
from .sqlexec import DEFAULT_SQL_TIMEOUT_MS, DatabaseRef, execute_sql

BASELINE_KINDS = ("random", "execution_guided", "self_consistency")


class BenchmarkFormatError(Exception):
    """The benchmark file is malformed; the message names the line."""


@dataclass
class BenchmarkItem:
    question_id: str
    question: str
    db_id: str
    candidates: list[str]
    evidence: Optional[str] = None
    gold_sql: Optional[str] = None
    db_path: Optional[Path] = None
    unrunnable_reason: Optional[str] = None

    @property
    def runnable(self) -> bool:
        return self.unrunnable_reason is None

    def candidate_set(self) -> CandidateSet:
        if not self.runnable:
            raise ValueError(f"item {self.question_id} is unrunnable")
        return CandidateSet(
            question_id=self.question_id,
            question=self.question,
            evidence=self.evidence,
            candidates=self.candidates,
            db=DatabaseRef(location=str(self.db_path)),
        )


def resolve_db_path(db_root: str | Path, db_id: str) -> Optional[Path]:
    root = Path(db_root)
    for candidate in (root / f"{db_id}.sqlite", root / db_id / f"{db_id}.sqlite"):
        if candidate.exists():
            return candidate
    return None


def load_benchmark(path: str | Path, db_root: str | Path) -> list[BenchmarkItem]:
    items = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BenchmarkFormatError(f"line {lineno}: invalid JSON: {exc}") from exc
            missing = [
                key
                for key in ("question_id", "question", "db_id", "candidates")
                if key not in obj
            ]
            if missing:
                raise BenchmarkFormatError(
                    f"line {lineno}: missing fields: {', '.join(missing)}"
                )
            if not isinstance(obj["candidates"], list) or not all(
                isinstance(c, str) for c in obj["candidates"]
            ):
                raise BenchmarkFormatError(
                    f"line {lineno}: candidates must be a list of SQL strings"
                )
            db_path = resolve_db_path(db_root, str(obj["db_id"]))
            items.append(
                BenchmarkItem(
                    question_id=str(obj["question_id"]),
                    question=str(obj["question"]),
                    evidence=obj.get("evidence"),
                    db_id=str(obj["db_id"]),
                    candidates=list(obj["candidates"]),
                    gold_sql=obj.get("gold_sql"),
                    db_path=db_path,
                    unrunnable_reason=(
                        None if db_path else f"database not found for db_id {obj['db_id']}"
                    ),
                )
            )
    return items


def ex_match(
    pred_sql: str,
    gold_sql: str,
    db: DatabaseRef,
    timeout_ms: int = DEFAULT_SQL_TIMEOUT_MS,
) -> Optional[bool]:
    """Execution-accuracy check: canonical result equality on the real db.

    Returns None when the gold SQL itself fails (the item then leaves the
    EX denominator); a failing prediction is simply False.
    """
    gold_out = execute_sql(db, gold_sql, timeout_ms=timeout_ms)
    if not gold_out.ok:
        return None
    pred_out = execute_sql(db, pred_sql, timeout_ms=timeout_ms)
    if not pred_out.ok:
        return False
    return canonicalize(pred_out.result) == canonicalize(gold_out.result)


def baseline_select(kind: str, cs: CandidateSet, seed: int = 0) -> int:
    """Index chosen by one of the training-free baselines."""
    if kind == "random":
        return random.Random(seed).randrange(len(cs.candidates))
    if kind == "execution_guided":
        for idx, sql in enumerate(cs.candidates):
            if execute_sql(cs.db, sql).ok:
                return idx
        return 0
    if kind == "self_consistency":
        clusters = cluster_candidates(cs)
        live = [c for c in clusters if not c.is_error_cluster]
        return live[0].representative_index if live else 0
    raise ValueError(f"unknown baseline kind: {kind}")


def pass_at_n(items: Sequence[BenchmarkItem]) -> float:
    """Percent of gold-bearing items where any candidate is EX-correct."""
    hits = 0
    total = 0
    for item in items:
        if not item.runnable or item.gold_sql is None:
            continue
        db = DatabaseRef(location=str(item.db_path))
        matches = [ex_match(sql, item.gold_sql, db) for sql in item.candidates]
        if all(m is None for m in matches):
            continue  # gold itself failed
        total += 1
        if any(m is True for m in matches):
            hits += 1
    return 100.0 * hits / total if total else 0.0


@dataclass
class ItemRecord:
    item: BenchmarkItem
    verdict: Optional[Verdict] = None
    ex_correct: Optional[bool] = None
    baseline_indices: dict[str, int] = field(default_factory=dict)
    baseline_ex: dict[str, Optional[bool]] = field(default_factory=dict)
    error: Optional[str] = None

    def to_json_dict(self) -> dict:
        return {
            "question_id": self.item.question_id,
            "db_id": self.item.db_id,
            "verdict": self.verdict.to_json_dict() if self.verdict else None,
            "ex_correct": self.ex_correct,
            "baselines": {
                kind: {"index": idx, "ex_correct": self.baseline_ex.get(kind)}
                for kind, idx in self.baseline_indices.items()
            },
            "error": self.error,
        }


@dataclass
class RunReport:
    records: list[ItemRecord]
    ex_percent: Optional[float]
    pass_at_n_percent: Optional[float]
    baseline_ex_percent: dict[str, float]
    mean_tokens: float
    mean_latency_ms: float
    config: PipelineConfig

    def to_json_dict(self) -> dict:
        return {
            "aggregate": True,
            "items": len(self.records),
            "ex_percent": self.ex_percent,
            "pass_at_n_percent": self.pass_at_n_percent,
            "baseline_ex_percent": self.baseline_ex_percent,
            "mean_tokens": self.mean_tokens,
            "mean_latency_ms": self.mean_latency_ms,
            "config": {
                "t_max": self.config.t_max,
                "temperature": self.config.temperature,
                "model": self.config.model,
                "workers": self.config.worker_count,
            },
        }


def _percent(flags: list[Optional[bool]]) -> Optional[float]:
    scored = [f for f in flags if f is not None]
    if not scored:
        return None
    return 100.0 * sum(scored) / len(scored)


def run_benchmark(
    items: Sequence[BenchmarkItem],
    config: PipelineConfig,
    provider: Optional[Provider],
    executor: Optional[ScriptExecutor],
    baselines: Sequence[str] = (),
    seed: int = 0,
) -> RunReport:
    """Select for every runnable item, score against gold where present."""
    for kind in baselines:
        if kind not in BASELINE_KINDS:
            raise ValueError(f"unknown baseline kind: {kind}")

    def process(item: BenchmarkItem) -> ItemRecord:
        record = ItemRecord(item=item)
        if not item.runnable:
            record.error = item.unrunnable_reason
            return record
        cs = item.candidate_set()
        record.verdict = select_one(cs, config, provider, executor)
        for kind in baselines:
            record.baseline_indices[kind] = baseline_select(kind, cs, seed)
        if item.gold_sql is not None:
            db = cs.db
            record.ex_correct = ex_match(
                record.verdict.selected_sql, item.gold_sql, db, config.sql_timeout_ms
            )
            for kind, idx in record.baseline_indices.items():
                record.baseline_ex[kind] = ex_match(
                    cs.candidates[idx], item.gold_sql, db, config.sql_timeout_ms
                )
        return record

    if config.worker_count > 1:
        with concurrent.futures.ThreadPoolExecutor(config.worker_count) as pool:
            records = list(pool.map(process, items))
    else:
        records = [process(item) for item in items]

    verdicts = [r.verdict for r in records if r.verdict is not None]
    tokens = [
        v.usage.total_prompt_tokens + v.usage.total_completion_tokens for v in verdicts
    ]
    latencies = [v.usage.wall_ms for v in verdicts]
    return RunReport(
        records=records,
        ex_percent=_percent([r.ex_correct for r in records]),
        pass_at_n_percent=(
            pass_at_n(items) if any(i.gold_sql for i in items) else None
        ),
        baseline_ex_percent={
            kind: _percent([r.baseline_ex.get(kind) for r in records]) or 0.0
            for kind in baselines
        },
        mean_tokens=sum(tokens) / len(tokens) if tokens else 0.0,
        mean_latency_ms=sum(latencies) / len(latencies) if latencies else 0.0,
        config=config,
    )


def write_report_jsonl(report: RunReport, path: str | Path) -> None:
    """One verdict record per line plus a final aggregate record."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in report.records:
            fh.write(json.dumps(record.to_json_dict(), ensure_ascii=False) + "\n")
        fh.write(json.dumps(report.to_json_dict(), ensure_ascii=False) + "\n")


def convert_official(
    format_: str,
    input_path: str | Path,
    candidates_path: Optional[str | Path] = None,
) -> list[dict]:
    """Convert a BIRD/Spider official question file to benchmark lines.

    Candidate SQLs are not part of the official files (they come from a
    generator); supply them as a JSON object mapping question_id -> list
    of SQL, or omit to emit empty candidate lists.
    """
    with open(input_path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    candidates_by_id: dict = {}
    if candidates_path is not None:
        with open(candidates_path, "r", encoding="utf-8") as fh:
            candidates_by_id = json.load(fh)

    lines = []
    for i, entry in enumerate(raw):
        if format_ == "bird":
            qid = str(entry.get("question_id", i))
            gold = entry.get("SQL")
            evidence = entry.get("evidence") or None
        elif format_ == "spider":
            qid = str(i)
            gold = entry.get("query")
            evidence = None
        else:
            raise ValueError(f"unknown benchmark format: {format_}")
        lines.append(
            {
                "question_id": qid,
                "question": entry["question"],
                "evidence": evidence,
                "db_id": entry["db_id"],
                "candidates": list(candidates_by_id.get(qid, [])),
                "gold_sql": gold,
            }
        )
    return lines
