"""Stage 2a: distill the schema to what the duel pair actually needs.

Each proposed slice is validated by a dry run: the duel SQLs must compile
against an empty instance built from the sliced schema.  Parse problems,
unknown names, and compilation errors all feed their message into the
next retry prompt; the first slice that passes wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .clustering import CandidateSet, DuelPair
from .llm import (
    DEFAULT_TEMPERATURE,
    ChatRequest,
    ParseError,
    Provider,
    Usage,
    check_context_budget,
    parse_slicer_result,
    parse_tagged,
    render_prompt,
)
from .sqlexec import SchemaMeta, SchemaSlice, SliceError, dry_run
from .tester import render_schema_with_types

DEFAULT_T_MAX = 3


@dataclass
class SlicerAttempt:
    prompt: str
    response: str
    outcome: str  # "ok" | "error"
    detail: str = ""
    usage: Usage = field(default_factory=Usage)


@dataclass
class SlicerTrace:
    attempts: list[SlicerAttempt] = field(default_factory=list)
    final: Optional[SchemaSlice] = None

    def total_usage(self) -> Usage:
        total = Usage()
        for a in self.attempts:
            total = total + a.usage
        return total


class SlicerFailed(Exception):
    def __init__(self, trace: SlicerTrace, last_error: str):
        super().__init__(last_error)
        self.trace = trace
        self.last_error = last_error


def format_candidate_sqls(sql_1: str, sql_2: str) -> str:
    return f"-- SQL 1\n{sql_1}\n\n-- SQL 2\n{sql_2}"


def run_slicer(
    cs: CandidateSet,
    meta: SchemaMeta,
    duel: DuelPair,
    provider: Provider,
    t_max: int = DEFAULT_T_MAX,
    temperature: float = DEFAULT_TEMPERATURE,
    model: str = "",
    max_prompt_chars: Optional[int] = None,
) -> tuple[SchemaSlice, SlicerTrace]:
    """Dry-run-validated slicing loop; raises SlicerFailed after t_max tries."""
    sql_1 = cs.candidates[duel.champion_index]
    sql_2 = cs.candidates[duel.challenger_index]
    bindings = {
        "full_schema": render_schema_with_types(SchemaSlice.full(meta), meta),
        "candidate_sqls": format_candidate_sqls(sql_1, sql_2),
    }
    trace = SlicerTrace()
    user_turns: list[str] = []
    assistant_turns: list[str] = []
    system = ""
    last_error = ""

    for attempt_no in range(1, t_max + 1):
        if attempt_no == 1:
            system, user = render_prompt("slicer", "initial", bindings)
        else:
            _, user = render_prompt("slicer", "retry", {"error_message": last_error})
        user_turns.append(user)
        check_context_budget(system, user_turns, max_prompt_chars)
        raw, usage = provider.complete(
            "slicer",
            ChatRequest(
                system=system,
                user_turns=list(user_turns),
                temperature=temperature,
                model=model,
                assistant_turns=list(assistant_turns),
            ),
        )
        assistant_turns.append(raw)

        try:
            parsed = parse_tagged(raw, usage)
            slice_ = parse_slicer_result(parsed.result_block, meta)
            outcomes = dry_run(slice_, meta, [sql_1, sql_2])
        except (ParseError, SliceError) as exc:
            last_error = str(exc)
            trace.attempts.append(SlicerAttempt(user, raw, "error", last_error, usage))
            continue

        failures = [o.error_message for o in outcomes if not o.ok]
        if failures:
            last_error = "; ".join(failures)
            trace.attempts.append(SlicerAttempt(user, raw, "error", last_error, usage))
            continue

        trace.attempts.append(SlicerAttempt(user, raw, "ok", usage=usage))
        trace.final = slice_
        return slice_, trace

    raise SlicerFailed(trace, last_error)
