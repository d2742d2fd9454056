"""Stage 3: produce the imperative reference result for the micro-database.

The solver agent writes a dataframe script; scripts run only against the
synthesized micro-database, never the original one.  Execution is
delegated through the ScriptExecutor interface so the suite can run with
a mock; the real executor is a child process speaking line-delimited JSON
on stdio:

    request:  {"tables": {name: {"columns": [...], "rows": [[...], ...]}},
               "script": "...", "timeout_ms": N}
    response: {"status": "ok", "columns": [...], "rows": [[...], ...]}
            | {"status": "error", "traceback": "..."}

A runtime exception feeds its traceback into the retry prompt; the loop
ends on the first clean run or after t_max attempts.
"""

from __future__ import annotations

import json
import subprocess
import threading
import time
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

from .llm import (
    DEFAULT_TEMPERATURE,
    ChatRequest,
    ParseError,
    Provider,
    Usage,
    check_context_budget,
    parse_solver_result,
    parse_tagged,
    render_prompt,
)
from .results import ResultSet
from .sqlexec import execute_sql, introspect_schema
from .tester import MDDInstance

DEFAULT_T_MAX = 3
DEFAULT_SCRIPT_TIMEOUT_MS = 10_000


@dataclass
class SolverRequest:
    """Everything the solver prompt needs for one duel."""

    question: str
    mdd: MDDInstance
    relationships: str
    table_names: list[str]
    evidence: Optional[str] = None

    def __post_init__(self) -> None:
        if self.table_names != self.mdd.slice.tables():
            raise ValueError("table_names must be exactly the MDD slice tables")


@dataclass
class ScriptOutcome:
    """One script run: a tabular result or a traceback."""

    status: str  # "ok" | "error"
    result: Optional[ResultSet] = None
    traceback: Optional[str] = None
    elapsed_ms: int = 0

    def __post_init__(self) -> None:
        if (self.result is None) == (self.traceback is None):
            raise ValueError("exactly one of result/traceback must be set")

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class SolverAttempt:
    prompt: str
    response: str
    script: str
    outcome: str  # "ok" | "error"
    detail: str = ""
    usage: Usage = field(default_factory=Usage)


@dataclass
class SolverTrace:
    attempts: list[SolverAttempt] = field(default_factory=list)
    final: Optional[ResultSet] = None

    def total_usage(self) -> Usage:
        total = Usage()
        for a in self.attempts:
            total = total + a.usage
        return total


class SolverFailed(Exception):
    def __init__(self, trace: SolverTrace, last_error: str):
        super().__init__(last_error)
        self.trace = trace
        self.last_error = last_error


class ScriptExecutor(Protocol):
    def run(self, payload: str, timeout_ms: int) -> ScriptOutcome:
        """Execute one serialized request and return its outcome."""
        ...


def mdd_tables_payload(mdd: MDDInstance) -> dict:
    """Every MDD table as {"columns": [...], "rows": [[...], ...]}."""
    tables = {}
    for name in mdd.slice.tables():
        out = execute_sql(mdd.db, f'SELECT * FROM "{name}"')
        if not out.ok:
            raise RuntimeError(f"cannot read MDD table {name}: {out.error_message}")
        tables[name] = out.result.to_json_dict()
    return tables


def serialize_mdd_payload(mdd: MDDInstance, script: str = "") -> str:
    """Deterministic executor request body (timeout added by the executor)."""
    return json.dumps(
        {"tables": mdd_tables_payload(mdd), "script": script},
        sort_keys=True,
        ensure_ascii=False,
    )


class MockScriptExecutor:
    """Canned outcomes for the primary test suite; records every payload."""

    def __init__(self, outcomes: Sequence[ScriptOutcome]):
        self.outcomes = list(outcomes)
        self.payloads: list[str] = []

    def run(self, payload: str, timeout_ms: int) -> ScriptOutcome:
        self.payloads.append(payload)
        if not self.outcomes:
            raise AssertionError("mock executor exhausted")
        return self.outcomes.pop(0)


def canned_ok(rows, columns=None) -> ScriptOutcome:
    return ScriptOutcome(status="ok", result=ResultSet.from_raw(rows, columns))


def canned_error(traceback: str) -> ScriptOutcome:
    return ScriptOutcome(status="error", traceback=traceback)


class SubprocessScriptExecutor:
    """Client for a line-delimited JSON runner child process.

    One request is in flight at a time; concurrent callers serialize on an
    internal lock.  A timeout or a dead child kills the process; the next
    request respawns it.
    """

    def __init__(self, cmd: Sequence[str], spawn_timeout_s: float = 30.0):
        self.cmd = list(cmd)
        self.spawn_timeout_s = spawn_timeout_s
        self._lock = threading.Lock()
        self._proc: Optional[subprocess.Popen] = None

    def _ensure_process(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        return self._proc

    def _kill(self) -> None:
        if self._proc is not None:
            self._proc.kill()
            self._proc.wait()
            self._proc = None

    def close(self) -> None:
        self._kill()

    def run(self, payload: str, timeout_ms: int) -> ScriptOutcome:
        with self._lock:
            return self._run_locked(payload, timeout_ms)

    def _run_locked(self, payload: str, timeout_ms: int) -> ScriptOutcome:
        start = time.monotonic()
        request = json.loads(payload)
        request["timeout_ms"] = timeout_ms
        line = json.dumps(request, ensure_ascii=False)
        try:
            proc = self._ensure_process()
            proc.stdin.write(line + "\n")
            proc.stdin.flush()
            response = _read_line_with_deadline(
                proc, deadline=start + (timeout_ms + 2000) / 1000.0
            )
        except (OSError, ValueError, TimeoutError) as exc:
            self._kill()
            message = "timeout" if isinstance(exc, TimeoutError) else str(exc)
            return ScriptOutcome(
                status="error",
                traceback=message,
                elapsed_ms=int((time.monotonic() - start) * 1000),
            )
        elapsed = int((time.monotonic() - start) * 1000)
        try:
            body = json.loads(response)
        except json.JSONDecodeError as exc:
            self._kill()
            return ScriptOutcome(
                status="error", traceback=f"bad runner response: {exc}", elapsed_ms=elapsed
            )
        if body.get("status") == "ok":
            result = ResultSet.from_raw(body.get("rows", []), body.get("columns"))
            return ScriptOutcome(status="ok", result=result, elapsed_ms=elapsed)
        return ScriptOutcome(
            status="error",
            traceback=str(body.get("traceback", "unknown runner error")),
            elapsed_ms=elapsed,
        )


def _read_line_with_deadline(proc: subprocess.Popen, deadline: float) -> str:
    """Read one stdout line, enforcing the deadline from a watcher thread."""
    box: dict = {}

    def reader() -> None:
        try:
            box["line"] = proc.stdout.readline()
        except Exception as exc:  # process killed mid-read
            box["error"] = exc

    t = threading.Thread(target=reader, daemon=True)
    t.start()
    t.join(max(0.0, deadline - time.monotonic()))
    if t.is_alive():
        raise TimeoutError("timeout")
    if "error" in box:
        raise OSError(str(box["error"]))
    line = box.get("line", "")
    if not line:
        raise OSError("runner process closed its stdout")
    return line


def render_test_data_with_types(mdd: MDDInstance) -> str:
    """Textual view of the MDD tables for the solver prompt."""
    meta = introspect_schema(mdd.db)
    blocks = ["### Test Data:"]
    for name in mdd.slice.tables():
        table = meta.resolve_table(name)
        cols = ", ".join(
            f"{c.name} {c.declared_type}".rstrip() for c in table.columns
        )
        out = execute_sql(mdd.db, f'SELECT * FROM "{name}"')
        rows = []
        if out.ok:
            labels = out.result.columns or []
            rows = [
                {label: cell.json_cell() for label, cell in zip(labels, row)}
                for row in out.result.rows
            ]
        blocks.append(f"Table `{table.name}` ({cols}):")
        blocks.append(json.dumps(rows, ensure_ascii=False))
    return "\n".join(blocks)


def run_solver(
    req: SolverRequest,
    provider: Provider,
    executor: ScriptExecutor,
    t_max: int = DEFAULT_T_MAX,
    temperature: float = DEFAULT_TEMPERATURE,
    model: str = "",
    script_timeout_ms: int = DEFAULT_SCRIPT_TIMEOUT_MS,
    max_prompt_chars: Optional[int] = None,
) -> tuple[ResultSet, SolverTrace]:
    """Runtime self-correction loop; raises SolverFailed after t_max tries."""
    bindings = {
        "test_data_with_types": render_test_data_with_types(req.mdd),
        "relationships": req.relationships,
        "df_names": ", ".join(req.table_names),
        "question": req.question,
        "evidence_str": f"Evidence: {req.evidence}" if req.evidence else "",
    }
    trace = SolverTrace()
    user_turns: list[str] = []
    assistant_turns: list[str] = []
    system = ""
    last_error = ""

    for attempt_no in range(1, t_max + 1):
        if attempt_no == 1:
            system, user = render_prompt("solver", "initial", bindings)
        else:
            _, user = render_prompt("solver", "retry", {"error_message": last_error})
        user_turns.append(user)
        check_context_budget(system, user_turns, max_prompt_chars)
        raw, usage = provider.complete(
            "solver",
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
            script = parse_solver_result(parsed.result_block)
        except ParseError as exc:
            last_error = str(exc)
            trace.attempts.append(SolverAttempt(user, raw, "", "error", last_error, usage))
            continue

        outcome = executor.run(serialize_mdd_payload(req.mdd, script), script_timeout_ms)
        if outcome.ok:
            trace.attempts.append(SolverAttempt(user, raw, script, "ok", usage=usage))
            trace.final = outcome.result
            return outcome.result, trace
        last_error = outcome.traceback or "unknown executor error"
        trace.attempts.append(
            SolverAttempt(user, raw, script, "error", last_error, usage)
        )

    raise SolverFailed(trace, last_error)
