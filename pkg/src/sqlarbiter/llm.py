"""Chat-completion provider abstraction, prompt templates, response parsing.

The three agent roles (slicer, tester, solver) share one calling
convention: a fixed system prompt, an initial user prompt, and retry
prompts that carry the previous attempt's error message.  Responses must
wrap their reasoning in ``<thinking>`` tags and the machine-readable part
in ``<result>`` tags; when a tag appears twice the last occurrence wins,
since models tend to restate their final answer.

Providers speak the OpenAI-compatible chat-completions JSON protocol over
HTTPS.  A scripted provider replays canned responses for deterministic
tests; it fails loudly when a test asks for more responses than were
scripted.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Optional, Protocol

import requests

from .sqlexec import SchemaMeta, SchemaSlice

DEFAULT_TEMPERATURE = 0.7

ROLES = ("slicer", "tester", "solver")
KINDS = ("initial", "retry")

# placeholders each user-facing template declares; system templates have none
_PLACEHOLDERS = {
    ("slicer", "initial"): ("full_schema", "candidate_sqls"),
    ("slicer", "retry"): ("error_message",),
    ("tester", "initial"): ("sliced_schema", "question", "evidence_str", "sql_1", "sql_2"),
    ("tester", "retry"): ("error_message",),
    ("solver", "initial"): (
        "test_data_with_types",
        "relationships",
        "df_names",
        "question",
        "evidence_str",
    ),
    ("solver", "retry"): ("error_message",),
}


class PromptError(Exception):
    """Unknown role/kind or a binding missing for a declared placeholder."""


class PromptOverflow(Exception):
    """A rendered conversation exceeds the configured context budget.

    Overflow aborts the duel rather than silently truncating agent input.
    """


def check_context_budget(
    system: str, user_turns: list[str], max_chars: Optional[int]
) -> None:
    if max_chars is None:
        return
    total = len(system) + sum(len(t) for t in user_turns)
    if total > max_chars:
        raise PromptOverflow(
            f"conversation is {total} chars, over the {max_chars}-char budget"
        )


class ParseError(Exception):
    """A provider response could not be turned into the expected structure.

    ``kind`` is one of: missing-result-tag, invalid-json, schema-mismatch,
    slice-mismatch, empty-script.  The message is written to be fed back
    verbatim as the next retry's error details.
    """

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind
        self.message = message


def _load_template(name: str) -> str:
    return (
        resources.files("sqlarbiter.prompts").joinpath(f"{name}.txt").read_text("utf-8")
    )


def template_text(role: str, which: str) -> str:
    """Raw template asset: which is 'system', 'user', or 'retry'."""
    if role not in ROLES or which not in ("system", "user", "retry"):
        raise PromptError(f"unknown template: {role}/{which}")
    return _load_template(f"{role}_{which}")


def render_prompt(
    role: str, kind: str, bindings: dict[str, str]
) -> tuple[str, str]:
    """Substitute bindings into the verbatim templates.

    Returns (system, user).  Substitution is literal string replacement of
    ``{name}`` tokens -- the templates contain JSON braces, so str.format
    is unusable.  A missing binding raises PromptError.
    """
    if role not in ROLES:
        raise PromptError(f"unknown role: {role}")
    if kind not in KINDS:
        raise PromptError(f"unknown prompt kind: {kind}")
    system = template_text(role, "system")
    user = template_text(role, "user" if kind == "initial" else "retry")
    for name in _PLACEHOLDERS[(role, kind)]:
        if name not in bindings:
            raise PromptError(f"missing placeholder binding: {name}")
        user = user.replace("{" + name + "}", bindings[name])
    return system, user


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __add__(self, other: "Usage") -> "Usage":
        return Usage(
            self.prompt_tokens + other.prompt_tokens,
            self.completion_tokens + other.completion_tokens,
        )


@dataclass
class ChatRequest:
    """One call: system prompt plus the user turns accumulated so far.

    ``assistant_turns`` holds the model's previous replies so retries
    resend the whole conversation; it is always one shorter than
    ``user_turns``.
    """

    system: str
    user_turns: list[str]
    temperature: float = DEFAULT_TEMPERATURE
    model: str = ""
    assistant_turns: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be within [0, 2]")
        if not self.user_turns:
            raise ValueError("at least one user turn required")
        if len(self.assistant_turns) != len(self.user_turns) - 1:
            raise ValueError("assistant turns must interleave user turns")

    def messages(self) -> list[dict[str, str]]:
        msgs = [{"role": "system", "content": self.system}]
        for i, user in enumerate(self.user_turns):
            msgs.append({"role": "user", "content": user})
            if i < len(self.assistant_turns):
                msgs.append({"role": "assistant", "content": self.assistant_turns[i]})
        return msgs


@dataclass
class AgentResponse:
    thinking: str
    result_block: str
    raw: str
    usage: Usage


@dataclass
class ProviderConfig:
    """Where and how to reach the chat-completions endpoint.

    The API key is read from the named environment variable at call time
    and never stored or logged.
    """

    endpoint_url: str
    model: str
    api_key_env_var: str = "SQLARBITER_API_KEY"
    max_retries_network: int = 2
    request_timeout_ms: int = 120_000


class ProviderError(Exception):
    """The provider was unreachable or answered with garbage; this is an
    infrastructure failure, not an agent-level one."""


class Provider(Protocol):
    def complete(self, role: str, request: ChatRequest) -> tuple[str, Usage]:
        """Return (raw response text, token usage) for one request."""
        ...


class HttpChatProvider:
    """OpenAI-compatible chat-completions client over HTTPS."""

    def __init__(self, config: ProviderConfig, session: Optional[requests.Session] = None):
        self.config = config
        self.session = session or requests.Session()

    def complete(self, role: str, request: ChatRequest) -> tuple[str, Usage]:
        payload = {
            "model": request.model or self.config.model,
            "messages": request.messages(),
            "temperature": request.temperature,
        }
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env_var, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        last_exc: Optional[Exception] = None
        for attempt in range(self.config.max_retries_network + 1):
            try:
                resp = self.session.post(
                    self.config.endpoint_url,
                    json=payload,
                    headers=headers,
                    timeout=self.config.request_timeout_ms / 1000.0,
                )
                resp.raise_for_status()
                body = resp.json()
                text = body["choices"][0]["message"]["content"]
                usage = body.get("usage", {}) or {}
                return text, Usage(
                    prompt_tokens=int(usage.get("prompt_tokens", 0)),
                    completion_tokens=int(usage.get("completion_tokens", 0)),
                )
            except (requests.RequestException, KeyError, ValueError, TypeError) as exc:
                last_exc = exc
                if attempt < self.config.max_retries_network:
                    time.sleep(0.5 * (attempt + 1))
        raise ProviderError(f"chat completion failed: {last_exc}") from last_exc


class ScriptExhausted(AssertionError):
    """A scripted test asked for more canned responses than it queued."""


class ScriptedProvider:
    """Replays canned response texts per agent role, in order.

    Records every request it served so tests can assert on prompt
    contents and call counts.
    """

    def __init__(self, scripts: dict[str, list[str]]):
        self.scripts = {role: list(texts) for role, texts in scripts.items()}
        self.calls: list[tuple[str, ChatRequest]] = []

    @property
    def call_count(self) -> int:
        return len(self.calls)

    def complete(self, role: str, request: ChatRequest) -> tuple[str, Usage]:
        self.calls.append((role, request))
        queue = self.scripts.get(role)
        if not queue:
            raise ScriptExhausted(f"no scripted response left for role {role!r}")
        text = queue.pop(0)
        prompt_chars = len(request.system) + sum(len(t) for t in request.user_turns)
        return text, Usage(
            prompt_tokens=prompt_chars // 4, completion_tokens=len(text) // 4
        )


_THINKING_RE = re.compile(r"<thinking>(.*?)</thinking>", re.DOTALL)
_RESULT_RE = re.compile(r"<result>(.*?)</result>", re.DOTALL)
_FENCE_RE = re.compile(r"^```[^\n]*\n(.*?)\n?```$", re.DOTALL)


def strip_fences(text: str) -> str:
    stripped = text.strip()
    m = _FENCE_RE.match(stripped)
    return m.group(1) if m else stripped


def parse_tagged(raw: str, usage: Usage = Usage()) -> AgentResponse:
    """Extract the last thinking/result spans from a raw response."""
    results = _RESULT_RE.findall(raw)
    if not results:
        raise ParseError(
            "missing-result-tag",
            "the response does not contain a <result>...</result> block",
        )
    thoughts = _THINKING_RE.findall(raw)
    return AgentResponse(
        thinking=thoughts[-1].strip() if thoughts else "",
        result_block=strip_fences(results[-1]),
        raw=raw,
        usage=usage,
    )


def _load_json_object(block: str, expected_key: str) -> Any:
    try:
        obj = json.loads(block)
    except json.JSONDecodeError as exc:
        raise ParseError(
            "invalid-json", f"the result block is not valid JSON: {exc}"
        ) from exc
    if not isinstance(obj, dict) or expected_key not in obj:
        raise ParseError(
            "invalid-json", f'the result JSON must be an object with a "{expected_key}" key'
        )
    return obj[expected_key]


def parse_slicer_result(block: str, meta: SchemaMeta) -> SchemaSlice:
    """Validate a relevant_schema JSON payload against the real schema.

    Table and column names resolve case-insensitively (SQLite semantics)
    and come back in the schema's canonical casing; duplicate table
    entries merge.  Unknown names raise with a message listing them.
    """
    entries = _load_json_object(block, "relevant_schema")
    if not isinstance(entries, list) or not entries:
        raise ParseError("invalid-json", '"relevant_schema" must be a non-empty list')
    merged: dict[str, list[str]] = {}
    problems: list[str] = []
    for item in entries:
        if not isinstance(item, dict) or "table" not in item or "columns" not in item:
            raise ParseError(
                "invalid-json",
                'each relevant_schema entry must be {"table": ..., "columns": [...]}',
            )
        table = meta.resolve_table(str(item["table"]))
        if table is None:
            problems.append(f"unknown table: {item['table']}")
            continue
        cols = item["columns"]
        if not isinstance(cols, list):
            raise ParseError("invalid-json", f'"columns" for {item["table"]} must be a list')
        known = {c.name.lower(): c.name for c in table.columns}
        bucket = merged.setdefault(table.name, [])
        for col in cols:
            canonical = known.get(str(col).lower())
            if canonical is None:
                problems.append(f"unknown column: {item['table']}.{col}")
            elif canonical not in bucket:
                bucket.append(canonical)
    if problems:
        raise ParseError("schema-mismatch", "; ".join(problems))
    if not merged:
        raise ParseError("schema-mismatch", "the slice names no known tables")
    return SchemaSlice.from_mapping(merged)


def parse_tester_result(block: str, slice_: SchemaSlice) -> dict[str, list[dict[str, Any]]]:
    """Validate a test_data JSON payload against the schema slice."""
    payload = _load_json_object(block, "test_data")
    if not isinstance(payload, dict):
        raise ParseError("invalid-json", '"test_data" must be an object of table -> rows')
    slice_tables = {t.lower(): t for t in slice_.tables()}
    data: dict[str, list[dict[str, Any]]] = {}
    problems: list[str] = []
    total_rows = 0
    for name, rows in payload.items():
        canonical_table = slice_tables.get(str(name).lower())
        if canonical_table is None:
            problems.append(f"table not in slice: {name}")
            continue
        if not isinstance(rows, list):
            raise ParseError("invalid-json", f"rows for table {name} must be a list")
        allowed = {c.lower(): c for c in slice_.columns_for(canonical_table)}
        out_rows = []
        for row in rows:
            if not isinstance(row, dict):
                raise ParseError("invalid-json", f"each row of {name} must be an object")
            converted: dict[str, Any] = {}
            for col, value in row.items():
                canonical_col = allowed.get(str(col).lower())
                if canonical_col is None:
                    problems.append(f"column not in slice: {name}.{col}")
                    continue
                if value is not None and not isinstance(value, (bool, int, float, str)):
                    raise ParseError(
                        "invalid-json", f"cell {name}.{col} must be a JSON scalar"
                    )
                converted[canonical_col] = value
            out_rows.append(converted)
            total_rows += 1
        data[canonical_table] = out_rows
    if problems:
        raise ParseError("slice-mismatch", "; ".join(problems))
    if total_rows == 0:
        raise ParseError("slice-mismatch", "the test data contains no rows at all")
    return data


def parse_solver_result(block: str) -> str:
    """Return the script with markdown fences removed; must be non-empty."""
    script = strip_fences(block)
    if not script.strip():
        raise ParseError("empty-script", "the result block contains no code")
    return script
