"""Orchestration of the four selection stages with graceful degradation.

The ladder of fallbacks keeps the majority-vote answer as the floor:

* one execution-equivalence cluster -> its representative, no agent calls,
* every candidate errored -> candidate 0,
* slicing fails all retries -> continue with the full schema,
* data synthesis fails, prompt overflows, or the reference script never
  runs -> the champion wins by default (reasons mdd_failed/solver_failed),
* a score tie -> the champion (reason tie_fallback_majority).

Every verdict carries the agent traces and token totals needed to replay
the decision.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

from .bsf1 import verdict as duel_verdict
from .clustering import (
    AllFailed,
    CandidateSet,
    ChampionOnly,
    cluster_candidates,
    select_duel,
)
from .llm import DEFAULT_TEMPERATURE, PromptOverflow, Provider, Usage
from .slicer import SlicerFailed, SlicerTrace, run_slicer
from .solver import (
    DEFAULT_SCRIPT_TIMEOUT_MS,
    ScriptExecutor,
    SolverFailed,
    SolverRequest,
    SolverTrace,
    run_solver,
)
from .sqlexec import DEFAULT_SQL_TIMEOUT_MS, SchemaSlice, introspect_schema
from .tester import (
    TesterFailed,
    TesterTrace,
    render_relationships,
    run_tester,
    sample_value_hints,
)

REASONS = (
    "duel_won_champion",
    "duel_won_challenger",
    "single_cluster",
    "all_failed",
    "mdd_failed",
    "solver_failed",
    "tie_fallback_majority",
)


@dataclass
class PipelineConfig:
    t_max: int = 3
    temperature: float = DEFAULT_TEMPERATURE
    model: str = ""
    sql_timeout_ms: int = DEFAULT_SQL_TIMEOUT_MS
    script_timeout_ms: int = DEFAULT_SCRIPT_TIMEOUT_MS
    context_budget_chars: Optional[int] = 400_000
    worker_count: int = 1
    scratch_dir: Optional[str] = None

    def __post_init__(self) -> None:
        if self.t_max < 1:
            raise ValueError("t_max must be at least 1")
        if self.worker_count < 1:
            raise ValueError("worker_count must be at least 1")


@dataclass
class Traces:
    slicer: Optional[SlicerTrace] = None
    tester: Optional[TesterTrace] = None
    solver: Optional[SolverTrace] = None


@dataclass
class UsageTotals:
    total_prompt_tokens: int = 0
    total_completion_tokens: int = 0
    wall_ms: int = 0


@dataclass
class Scores:
    s_champ: float
    s_chal: float


@dataclass
class Verdict:
    question_id: str
    selected_index: int
    selected_sql: str
    reason: str
    scores: Optional[Scores] = None
    traces: Traces = field(default_factory=Traces)
    usage: UsageTotals = field(default_factory=UsageTotals)

    def to_json_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "selected_index": self.selected_index,
            "selected_sql": self.selected_sql,
            "reason": self.reason,
            "scores": (
                {"s_champ": self.scores.s_champ, "s_chal": self.scores.s_chal}
                if self.scores
                else None
            ),
            "usage": {
                "total_prompt_tokens": self.usage.total_prompt_tokens,
                "total_completion_tokens": self.usage.total_completion_tokens,
                "wall_ms": self.usage.wall_ms,
            },
        }


def select_one(
    cs: CandidateSet,
    config: PipelineConfig,
    provider: Optional[Provider],
    executor: Optional[ScriptExecutor],
) -> Verdict:
    """Run the full selection pipeline for one question.

    ``provider``/``executor`` may be None only when no duel can occur (the
    degenerate verdicts never call them); passing None otherwise is a
    programming error surfaced as AttributeError.
    """
    start = time.monotonic()
    traces = Traces()
    usage = Usage()

    def finish(index: int, reason: str, scores: Optional[Scores] = None) -> Verdict:
        return Verdict(
            question_id=cs.question_id,
            selected_index=index,
            selected_sql=cs.candidates[index],
            reason=reason,
            scores=scores,
            traces=traces,
            usage=UsageTotals(
                total_prompt_tokens=usage.prompt_tokens,
                total_completion_tokens=usage.completion_tokens,
                wall_ms=int((time.monotonic() - start) * 1000),
            ),
        )

    # an unreadable database is an infrastructure failure, not a verdict
    meta = introspect_schema(cs.db)

    clusters = cluster_candidates(cs, timeout_ms=config.sql_timeout_ms)
    duel = select_duel(clusters)
    if isinstance(duel, AllFailed):
        return finish(duel.fallback_index, "all_failed")
    if isinstance(duel, ChampionOnly):
        return finish(duel.champion_index, "single_cluster")

    # Stage 2a: schema slice, falling back to the full schema
    try:
        slice_, traces.slicer = run_slicer(
            cs,
            meta,
            duel,
            provider,
            t_max=config.t_max,
            temperature=config.temperature,
            model=config.model,
            max_prompt_chars=config.context_budget_chars,
        )
        usage = usage + traces.slicer.total_usage()
    except SlicerFailed as failure:
        traces.slicer = failure.trace
        usage = usage + failure.trace.total_usage()
        slice_ = SchemaSlice.full(meta)
    except PromptOverflow:
        return finish(duel.champion_index, "mdd_failed")

    # Stage 2b: adversarial data synthesis
    try:
        mdd, traces.tester = run_tester(
            cs,
            slice_,
            meta,
            duel,
            provider,
            t_max=config.t_max,
            temperature=config.temperature,
            model=config.model,
            sql_timeout_ms=config.sql_timeout_ms,
            value_hints=sample_value_hints(cs.db, slice_),
            scratch_dir=config.scratch_dir,
            max_prompt_chars=config.context_budget_chars,
        )
        usage = usage + traces.tester.total_usage()
    except TesterFailed as failure:
        traces.tester = failure.trace
        usage = usage + failure.trace.total_usage()
        return finish(duel.champion_index, "mdd_failed")
    except PromptOverflow:
        return finish(duel.champion_index, "mdd_failed")

    # Stage 3: imperative reference anchor
    try:
        try:
            req = SolverRequest(
                question=cs.question,
                evidence=cs.evidence,
                mdd=mdd,
                relationships=render_relationships(slice_, meta),
                table_names=mdd.slice.tables(),
            )
            reference_result, traces.solver = run_solver(
                req,
                provider,
                executor,
                t_max=config.t_max,
                temperature=config.temperature,
                model=config.model,
                script_timeout_ms=config.script_timeout_ms,
                max_prompt_chars=config.context_budget_chars,
            )
            usage = usage + traces.solver.total_usage()
        except SolverFailed as failure:
            traces.solver = failure.trace
            usage = usage + failure.trace.total_usage()
            return finish(duel.champion_index, "solver_failed")
        except PromptOverflow:
            return finish(duel.champion_index, "solver_failed")

        # Stage 4: cross-paradigm verdict
        decision = duel_verdict(
            duel.champion_index,
            duel.challenger_index,
            mdd.champion_result,
            mdd.challenger_result,
            reference_result,
        )
        return finish(
            decision.winner_index,
            decision.reason,
            Scores(s_champ=decision.s_champ.f1, s_chal=decision.s_chal.f1),
        )
    finally:
        mdd.cleanup()
