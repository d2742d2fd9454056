"""Embedded SQLite execution: candidate queries, schema slices, micro-databases.

Benchmark databases are always opened read-only; synthesized micro-database
instances are fresh temp files that live for one question and are deleted
after the verdict.  All result rows flow through the normalization in
:mod:`sqlarbiter.results`.
"""

from __future__ import annotations

import os
import sqlite3
import tempfile
import time
from dataclasses import dataclass
from typing import Any, Mapping, Optional, Sequence

from .results import ResultSet

DEFAULT_SQL_TIMEOUT_MS = 30_000


class SliceError(Exception):
    """A schema slice names tables/columns that do not exist, or DDL for it
    cannot be built.  The message is suitable as agent feedback."""


class MddError(Exception):
    """Synthesized data could not be inserted (type/constraint violation).
    The message is suitable as agent feedback."""


@dataclass(frozen=True)
class DatabaseRef:
    """Handle to a SQLite database file (or ':memory:')."""

    location: str
    dialect: str = "sqlite"

    def connect(self, readonly: bool = True) -> sqlite3.Connection:
        if self.location == ":memory:":
            return sqlite3.connect(":memory:")
        if readonly:
            return sqlite3.connect(f"file:{self.location}?mode=ro", uri=True)
        return sqlite3.connect(self.location)

    def delete_file(self) -> None:
        """Remove the backing file; used for worker-private MDD instances."""
        if self.location != ":memory:" and os.path.exists(self.location):
            os.unlink(self.location)


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    declared_type: str
    is_pk: bool


@dataclass(frozen=True)
class TableMeta:
    name: str
    columns: tuple[ColumnMeta, ...]

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]


@dataclass(frozen=True)
class ForeignKey:
    table: str
    column: str
    ref_table: str
    ref_column: str


@dataclass(frozen=True)
class SchemaMeta:
    """Complete table/column/foreign-key metadata of one database."""

    tables: tuple[TableMeta, ...]
    foreign_keys: tuple[ForeignKey, ...]

    def table(self, name: str) -> Optional[TableMeta]:
        for t in self.tables:
            if t.name == name:
                return t
        return None

    def resolve_table(self, name: str) -> Optional[TableMeta]:
        """Case-insensitive lookup, matching SQLite identifier semantics."""
        exact = self.table(name)
        if exact is not None:
            return exact
        lowered = name.lower()
        for t in self.tables:
            if t.name.lower() == lowered:
                return t
        return None


@dataclass(frozen=True)
class SliceEntry:
    table: str
    columns: tuple[str, ...]


@dataclass(frozen=True)
class SchemaSlice:
    """The minimal table->columns subgraph needed to run a duel pair."""

    entries: tuple[SliceEntry, ...]

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("schema slice must name at least one table")
        seen = set()
        for e in self.entries:
            if e.table in seen:
                raise ValueError(f"duplicate table in slice: {e.table}")
            seen.add(e.table)
            if len(set(e.columns)) != len(e.columns):
                raise ValueError(f"duplicate column in slice table {e.table}")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Sequence[str]]) -> "SchemaSlice":
        return cls(
            tuple(SliceEntry(t, tuple(cols)) for t, cols in mapping.items())
        )

    @classmethod
    def full(cls, meta: SchemaMeta) -> "SchemaSlice":
        """The whole-schema slice, the fallback when slicing fails."""
        return cls(
            tuple(
                SliceEntry(t.name, tuple(t.column_names())) for t in meta.tables
            )
        )

    def tables(self) -> list[str]:
        return [e.table for e in self.entries]

    def columns_for(self, table: str) -> Optional[tuple[str, ...]]:
        for e in self.entries:
            if e.table == table:
                return e.columns
        return None


@dataclass
class ExecOutcome:
    """One statement execution: a ResultSet or an engine error message."""

    status: str  # "ok" | "error"
    result: Optional[ResultSet] = None
    error_message: Optional[str] = None
    elapsed_ms: int = 0

    def __post_init__(self) -> None:
        if (self.result is None) == (self.error_message is None):
            raise ValueError("exactly one of result/error_message must be set")

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def introspect_schema(db: DatabaseRef) -> SchemaMeta:
    """Read table, column, PK and FK metadata in deterministic order."""
    try:
        conn = db.connect(readonly=True)
    except sqlite3.Error as exc:
        raise SliceError(f"database not readable: {db.location}: {exc}") from exc
    try:
        names = [
            r[0]
            for r in conn.execute(
                "SELECT name FROM sqlite_master WHERE type='table' "
                "AND name NOT LIKE 'sqlite_%' ORDER BY name"
            )
        ]
        tables = []
        fks: list[ForeignKey] = []
        for name in names:
            cols = tuple(
                ColumnMeta(name=r[1], declared_type=r[2] or "", is_pk=bool(r[5]))
                for r in conn.execute(f'PRAGMA table_info("{_q(name)}")')
            )
            tables.append(TableMeta(name=name, columns=cols))
        by_name = {t.name: t for t in tables}
        for name in names:
            for r in conn.execute(f'PRAGMA foreign_key_list("{_q(name)}")'):
                ref_table, col, ref_col = r[2], r[3], r[4]
                if ref_col is None:
                    # implicit reference to the parent's primary key
                    parent = by_name.get(ref_table)
                    pk = [c.name for c in parent.columns if c.is_pk] if parent else []
                    ref_col = pk[0] if pk else ""
                fks.append(ForeignKey(name, col, ref_table, ref_col))
        return SchemaMeta(tables=tuple(tables), foreign_keys=tuple(fks))
    finally:
        conn.close()


def _q(identifier: str) -> str:
    return identifier.replace('"', '""')


def execute_sql(
    db: DatabaseRef, sql: str, timeout_ms: int = DEFAULT_SQL_TIMEOUT_MS
) -> ExecOutcome:
    """Run one read-only statement and capture its normalized result.

    The connection is opened read-only, so writes and benchmark mutation are
    impossible by construction.  A wall-clock timeout interrupts the engine;
    the outcome then carries the message "timeout".
    """
    start = time.monotonic()
    deadline = start + timeout_ms / 1000.0
    timed_out = False

    try:
        conn = db.connect(readonly=True)
    except sqlite3.Error as exc:
        return ExecOutcome(
            status="error", error_message=str(exc), elapsed_ms=_ms_since(start)
        )

    def watchdog() -> int:
        nonlocal timed_out
        if time.monotonic() > deadline:
            timed_out = True
            return 1
        return 0

    conn.set_progress_handler(watchdog, 10_000)
    try:
        cur = conn.execute(sql)
        raw_rows = cur.fetchall()
        columns = (
            [d[0] for d in cur.description] if cur.description is not None else None
        )
        result = ResultSet.from_raw(raw_rows, columns)
        return ExecOutcome(status="ok", result=result, elapsed_ms=_ms_since(start))
    except (sqlite3.Error, sqlite3.Warning) as exc:
        message = "timeout" if timed_out else str(exc)
        return ExecOutcome(
            status="error", error_message=message, elapsed_ms=_ms_since(start)
        )
    finally:
        conn.close()


def _ms_since(start: float) -> int:
    return max(0, int((time.monotonic() - start) * 1000))


def synthesize_ddl(slice_: SchemaSlice, full_meta: SchemaMeta) -> list[str]:
    """CREATE TABLE statements restricted to the sliced columns.

    Declared types are preserved; a PRIMARY KEY clause covers whichever key
    columns made it into the slice; FOREIGN KEY clauses are kept only when
    both endpoints are inside the slice.  Raises SliceError naming any
    unknown table or column.
    """
    resolved: dict[str, tuple[TableMeta, list[ColumnMeta]]] = {}
    problems: list[str] = []
    for entry in slice_.entries:
        table = full_meta.resolve_table(entry.table)
        if table is None:
            problems.append(f"unknown table: {entry.table}")
            continue
        available = {c.name.lower(): c for c in table.columns}
        picked: list[ColumnMeta] = []
        for col in entry.columns:
            meta_col = available.get(col.lower())
            if meta_col is None:
                problems.append(f"unknown column: {entry.table}.{col}")
            else:
                picked.append(meta_col)
        resolved[table.name] = (table, picked)
    if problems:
        raise SliceError("; ".join(problems))

    included: dict[str, set[str]] = {
        name: {c.name for c in cols} for name, (_, cols) in resolved.items()
    }
    statements = []
    # meta order keeps DDL deterministic regardless of slice entry order
    for table in full_meta.tables:
        if table.name not in resolved:
            continue
        _, picked = resolved[table.name]
        # preserve the original column order, not the slice's
        ordered = [c for c in table.columns if c in picked]
        defs = [
            f'"{_q(c.name)}" {c.declared_type}'.rstrip() for c in ordered
        ]
        pk_cols = [c.name for c in ordered if c.is_pk]
        if pk_cols:
            quoted = ", ".join(f'"{_q(c)}"' for c in pk_cols)
            defs.append(f"PRIMARY KEY ({quoted})")
        for fk in full_meta.foreign_keys:
            if fk.table != table.name:
                continue
            if fk.column not in included.get(fk.table, set()):
                continue
            if fk.ref_column not in included.get(fk.ref_table, set()):
                continue
            defs.append(
                f'FOREIGN KEY ("{_q(fk.column)}") '
                f'REFERENCES "{_q(fk.ref_table)}"("{_q(fk.ref_column)}")'
            )
        body = ",\n  ".join(defs)
        statements.append(f'CREATE TABLE "{_q(table.name)}" (\n  {body}\n)')
    return statements


def dry_run(
    slice_: SchemaSlice, full_meta: SchemaMeta, sqls: Sequence[str]
) -> list[ExecOutcome]:
    """Prepare each statement against an empty instance of the sliced schema.

    Uses EXPLAIN, which compiles the statement without running it; an
    outcome is ok iff the statement compiles.  Slice/DDL problems raise
    SliceError.
    """
    ddl = synthesize_ddl(slice_, full_meta)
    conn = sqlite3.connect(":memory:")
    try:
        for stmt in ddl:
            conn.execute(stmt)
        outcomes = []
        for sql in sqls:
            start = time.monotonic()
            try:
                conn.execute(f"EXPLAIN {sql}").fetchall()
                outcomes.append(
                    ExecOutcome(
                        status="ok",
                        result=ResultSet(),
                        elapsed_ms=_ms_since(start),
                    )
                )
            except (sqlite3.Error, sqlite3.Warning) as exc:
                outcomes.append(
                    ExecOutcome(
                        status="error",
                        error_message=str(exc),
                        elapsed_ms=_ms_since(start),
                    )
                )
        return outcomes
    finally:
        conn.close()


def materialize_mdd(
    slice_: SchemaSlice,
    full_meta: SchemaMeta,
    data: Mapping[str, Sequence[Mapping[str, Any]]],
    scratch_dir: Optional[str] = None,
) -> DatabaseRef:
    """Create a fresh micro-database instance and load the synthesized rows.

    Tables are filled parents-first (topological order over the included
    foreign keys); FK checks are deferred to commit so reference cycles
    still load.  Any insertion failure raises MddError with the engine
    message, and the partial instance is removed.
    """
    ddl = synthesize_ddl(slice_, full_meta)
    sliced_tables = {full_meta.resolve_table(t).name for t in slice_.tables()}
    canonical_data: dict[str, Sequence[Mapping[str, Any]]] = {}
    for name, rows in data.items():
        table = full_meta.resolve_table(name)
        if table is None or table.name not in sliced_tables:
            raise MddError(f"unknown table in test data: {name}")
        canonical_data[table.name] = rows

    fd, path = tempfile.mkstemp(prefix="mdd_", suffix=".sqlite", dir=scratch_dir)
    os.close(fd)
    conn = sqlite3.connect(path)
    try:
        conn.execute("PRAGMA foreign_keys = ON")
        for stmt in ddl:
            conn.execute(stmt)
        conn.commit()
        conn.execute("PRAGMA defer_foreign_keys = ON")
        for table_name in _insertion_order(slice_, full_meta):
            for row in canonical_data.get(table_name, ()):  # parents first
                if not row:
                    continue
                cols = list(row.keys())
                quoted = ", ".join(f'"{_q(c)}"' for c in cols)
                marks = ", ".join("?" for _ in cols)
                values = [_as_sql_param(row[c]) for c in cols]
                try:
                    conn.execute(
                        f'INSERT INTO "{_q(table_name)}" ({quoted}) VALUES ({marks})',
                        values,
                    )
                except (sqlite3.Error, sqlite3.Warning, TypeError) as exc:
                    raise MddError(f"insert into {table_name} failed: {exc}") from exc
        try:
            conn.commit()
        except sqlite3.Error as exc:
            raise MddError(f"commit failed: {exc}") from exc
    except MddError:
        conn.close()
        os.unlink(path)
        raise
    conn.close()
    return DatabaseRef(location=path)


def _as_sql_param(value: Any) -> Any:
    if isinstance(value, bool):
        return int(value)
    if value is None or isinstance(value, (int, float, str, bytes)):
        return value
    raise MddError(f"unsupported cell value: {value!r}")


def _insertion_order(slice_: SchemaSlice, full_meta: SchemaMeta) -> list[str]:
    """Sliced tables, FK parents before children; cycles keep meta order."""
    names = [full_meta.resolve_table(t).name for t in slice_.tables()]
    name_set = set(names)
    deps: dict[str, set[str]] = {n: set() for n in names}
    for fk in full_meta.foreign_keys:
        if fk.table in name_set and fk.ref_table in name_set and fk.table != fk.ref_table:
            deps[fk.table].add(fk.ref_table)
    ordered: list[str] = []
    placed: set[str] = set()
    remaining = [t.name for t in full_meta.tables if t.name in name_set]
    while remaining:
        progress = False
        for name in list(remaining):
            if deps[name] <= placed:
                ordered.append(name)
                placed.add(name)
                remaining.remove(name)
                progress = True
        if not progress:  # FK cycle; deferred constraints handle it
            ordered.extend(remaining)
            break
    return ordered
