"""Stage 2b: synthesize data on which the duel pair provably diverges.

The goal is an MDD, a minimal distinguishing database: a micro-instance
of the sliced schema whose rows force the two candidate queries to return
different results.  The tester agent proposes rows; each proposal is
materialized into a fresh micro-database and both duel SQLs are executed
on it.  An attempt succeeds only when both executions are ok AND their
canonical results differ -- an error-vs-ok pair is treated as an error
attempt, not as divergence, because it tests executability rather than
semantics.  Identical results feed an "ineffective data" retry; engine
errors feed their verbatim message.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

from .clustering import CandidateSet, DuelPair
from .llm import (
    DEFAULT_TEMPERATURE,
    ChatRequest,
    ParseError,
    Provider,
    Usage,
    check_context_budget,
    parse_tagged,
    parse_tester_result,
    render_prompt,
)
from .results import ResultSet, canonicalize
from .sqlexec import (
    DEFAULT_SQL_TIMEOUT_MS,
    DatabaseRef,
    MddError,
    SchemaMeta,
    SchemaSlice,
    execute_sql,
    materialize_mdd,
)

DEFAULT_T_MAX = 3

IDENTICAL_RESULTS_FEEDBACK = (
    "The generated data is INEFFECTIVE: SQL 1 and SQL 2 returned identical "
    "results on it, so it does not distinguish their logic.\n"
    "Shared result (canonical rows):\n{result}\n"
    "Add or change rows so that the two queries return DIFFERENT results."
)


@dataclass
class TestData:
    """Synthesized rows per sliced table; values are JSON scalars."""

    tables: dict[str, list[dict[str, Any]]]

    def row_count(self) -> int:
        return sum(len(rows) for rows in self.tables.values())


@dataclass
class MDDInstance:
    """A materialized micro-database on which the duelists diverge.

    Construction re-checks the divergence, so an instance in hand is
    always a valid discriminator.
    """

    db: DatabaseRef
    slice: SchemaSlice
    data: TestData
    champion_result: ResultSet
    challenger_result: ResultSet

    def __post_init__(self) -> None:
        if canonicalize(self.champion_result) == canonicalize(self.challenger_result):
            raise ValueError("MDD is not discriminative: identical duel results")

    def cleanup(self) -> None:
        self.db.delete_file()


@dataclass
class TesterAttempt:
    prompt: str
    response: str
    outcome: str  # "ok" | "identical-results" | "error"
    detail: str = ""
    usage: Usage = field(default_factory=Usage)


@dataclass
class TesterTrace:
    attempts: list[TesterAttempt] = field(default_factory=list)
    final: Optional[MDDInstance] = None

    def total_usage(self) -> Usage:
        total = Usage()
        for a in self.attempts:
            total = total + a.usage
        return total


class TesterFailed(Exception):
    def __init__(self, trace: TesterTrace, last_error: str):
        super().__init__(last_error)
        self.trace = trace
        self.last_error = last_error


def render_schema_with_types(
    slice_: SchemaSlice,
    meta: SchemaMeta,
    value_hints: Optional[Mapping[str, Mapping[str, Sequence[str]]]] = None,
) -> str:
    """Human/LLM-readable schema text: tables, typed columns, keys, samples."""
    lines = []
    for entry in slice_.entries:
        table = meta.resolve_table(entry.table)
        lines.append(f"Table: {table.name}")
        by_name = {c.name: c for c in table.columns}
        hints = (value_hints or {}).get(table.name, {})
        for col_name in entry.columns:
            col = by_name[col_name]
            piece = f"  - {col.name} {col.declared_type}".rstrip()
            if col.is_pk:
                piece += " (primary key)"
            examples = hints.get(col.name)
            if examples:
                piece += " -- examples: " + ", ".join(str(v) for v in examples)
            lines.append(piece)
    rel = render_relationships(slice_, meta)
    lines.append("Relationships:")
    lines.append(rel)
    return "\n".join(lines)


def render_relationships(slice_: SchemaSlice, meta: SchemaMeta) -> str:
    """FK lines restricted to pairs whose endpoints are both in the slice."""
    included = {
        meta.resolve_table(e.table).name: {c.lower() for c in e.columns}
        for e in slice_.entries
    }
    lines = []
    for fk in meta.foreign_keys:
        if fk.table not in included or fk.ref_table not in included:
            continue
        if fk.column.lower() not in included[fk.table]:
            continue
        if fk.ref_column.lower() not in included[fk.ref_table]:
            continue
        lines.append(
            f"  - {fk.table}.{fk.column} references {fk.ref_table}.{fk.ref_column}"
        )
    return "\n".join(lines) if lines else "  (none)"


def sample_value_hints(
    db: DatabaseRef, slice_: SchemaSlice, per_column: int = 3
) -> dict[str, dict[str, list[str]]]:
    """Up to ``per_column`` distinct example values per sliced column.

    Sampling is ordered, so the hints are deterministic for a given
    database file.  Long values are elided.
    """
    hints: dict[str, dict[str, list[str]]] = {}
    for entry in slice_.entries:
        per_table: dict[str, list[str]] = {}
        for col in entry.columns:
            out = execute_sql(
                db,
                f'SELECT DISTINCT "{col}" FROM "{entry.table}" '
                f'WHERE "{col}" IS NOT NULL ORDER BY 1 LIMIT {per_column}',
            )
            if not out.ok:
                continue
            values = []
            for row in out.result.rows:
                text = str(row[0].json_cell())
                values.append(text[:37] + "..." if len(text) > 40 else text)
            if values:
                per_table[col] = values
        if per_table:
            hints[entry.table] = per_table
    return hints


def _result_preview(rs: ResultSet, limit: int = 10) -> str:
    lines = canonicalize(rs).serialized.splitlines()[:limit]
    return "\n".join(lines)


def run_tester(
    cs: CandidateSet,
    slice_: SchemaSlice,
    meta: SchemaMeta,
    duel: DuelPair,
    provider: Provider,
    t_max: int = DEFAULT_T_MAX,
    temperature: float = DEFAULT_TEMPERATURE,
    model: str = "",
    sql_timeout_ms: int = DEFAULT_SQL_TIMEOUT_MS,
    value_hints: Optional[Mapping[str, Mapping[str, Sequence[str]]]] = None,
    scratch_dir: Optional[str] = None,
    max_prompt_chars: Optional[int] = None,
) -> tuple[MDDInstance, TesterTrace]:
    """Discriminative-feedback loop; raises TesterFailed after t_max tries."""
    sql_1 = cs.candidates[duel.champion_index]
    sql_2 = cs.candidates[duel.challenger_index]
    bindings = {
        "sliced_schema": render_schema_with_types(slice_, meta, value_hints),
        "question": cs.question,
        "evidence_str": f"Evidence: {cs.evidence}" if cs.evidence else "",
        "sql_1": sql_1,
        "sql_2": sql_2,
    }
    trace = TesterTrace()
    user_turns: list[str] = []
    assistant_turns: list[str] = []
    system = ""
    last_error = ""

    for attempt_no in range(1, t_max + 1):
        if attempt_no == 1:
            system, user = render_prompt("tester", "initial", bindings)
        else:
            _, user = render_prompt("tester", "retry", {"error_message": last_error})
        user_turns.append(user)
        check_context_budget(system, user_turns, max_prompt_chars)
        raw, usage = provider.complete(
            "tester",
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
            data = TestData(tables=parse_tester_result(parsed.result_block, slice_))
            db = materialize_mdd(slice_, meta, data.tables, scratch_dir=scratch_dir)
        except (ParseError, MddError) as exc:
            last_error = str(exc)
            trace.attempts.append(
                TesterAttempt(user, raw, "error", last_error, usage)
            )
            continue

        champ_out = execute_sql(db, sql_1, timeout_ms=sql_timeout_ms)
        chal_out = execute_sql(db, sql_2, timeout_ms=sql_timeout_ms)
        if not champ_out.ok or not chal_out.ok:
            messages = [
                f"SQL {i} failed: {o.error_message}"
                for i, o in ((1, champ_out), (2, chal_out))
                if not o.ok
            ]
            last_error = "; ".join(messages)
            trace.attempts.append(TesterAttempt(user, raw, "error", last_error, usage))
            db.delete_file()
            continue

        if canonicalize(champ_out.result) == canonicalize(chal_out.result):
            last_error = IDENTICAL_RESULTS_FEEDBACK.format(
                result=_result_preview(champ_out.result)
            )
            trace.attempts.append(
                TesterAttempt(user, raw, "identical-results", last_error, usage)
            )
            db.delete_file()
            continue

        instance = MDDInstance(
            db=db,
            slice=slice_,
            data=data,
            champion_result=champ_out.result,
            challenger_result=chal_out.result,
        )
        trace.attempts.append(TesterAttempt(user, raw, "ok", usage=usage))
        trace.final = instance
        return instance, trace

    raise TesterFailed(trace, last_error)
