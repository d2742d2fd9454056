"""Canonical representation of execution results.

Every comparison in this package -- clustering candidates by execution
result, checking that two queries diverge on a synthesized database, and
scoring a SQL result against an imperative reference -- goes through the
same normalized value model defined here.  The normalization rules:

* decimals and floats are rounded half-away-from-zero to 4 decimal places
  (non-finite floats do not survive; NaN and +/-Inf become null),
* datetimes and timestamps become ISO ``YYYY-MM-DD`` date strings (time
  components are truncated),
* engine NULL, NaN, and the literal text ``"null"`` (case-insensitive,
  after stripping) unify to a single null value,
* text is stripped of surrounding whitespace and compared case-sensitively,
* integers stay integers but compare equal to a float of the same value.

A normalized date compares and serializes as its ISO string, so a date
equals plain text carrying the same string; that is what lets a SQL text
column match a dataframe timestamp column.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal, localcontext
from typing import Any, Iterable, Optional, Sequence

NULL_KIND = "null"
INT_KIND = "int"
FLOAT_KIND = "float"
TEXT_KIND = "text"
DATE_KIND = "date"

_DATE_RE = re.compile(
    r"^(\d{4}-\d{2}-\d{2})([T ]\d{2}:\d{2}(:\d{2}(\.\d+)?)?)?$"
)


@dataclass(frozen=True)
class AtomicValue:
    """One typed cell: null, int, float, text, or an ISO date string."""

    kind: str
    value: Optional[int | float | str] = None

    def key(self) -> tuple:
        """Equivalence key: equal keys <=> values_equal.

        Ints and floats share a numeric key; dates and text share a
        string key.
        """
        if self.kind == NULL_KIND:
            return (NULL_KIND,)
        if self.kind in (INT_KIND, FLOAT_KIND):
            v = self.value
            if isinstance(v, float) and v.is_integer():
                v = int(v)
            return ("num", v)
        return ("str", self.value)

    def json_cell(self) -> Any:
        """Cell in the shared JSON encoding: null / number / string."""
        return self.value

    def canonical_token(self) -> Any:
        """JSON-encodable token with int/float and date/text unified."""
        k = self.key()
        return None if k[0] == NULL_KIND else k[1]


NULL = AtomicValue(NULL_KIND, None)

Row = tuple[AtomicValue, ...]


def _round4(x: float) -> float:
    # decimal ROUND_HALF_UP is half-away-from-zero; repr() avoids binary
    # representation noise like Decimal(0.1) -> 0.1000000000000000055...
    # prec must cover the widest finite float64 plus 4 fractional digits.
    with localcontext() as ctx:
        ctx.prec = 330
        q = Decimal(repr(x)).quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP)
    return float(q)


def normalize_value(raw: Any) -> AtomicValue:
    """Map any cell a SQL engine or script runner can produce to an AtomicValue.

    Total: every input maps to some value.  Idempotent: feeding an
    AtomicValue (or its JSON projection) back through is a no-op.
    """
    if isinstance(raw, AtomicValue):
        return normalize_value(raw.json_cell())
    if raw is None:
        return NULL
    if isinstance(raw, bool):
        return AtomicValue(INT_KIND, int(raw))
    if isinstance(raw, int):
        return AtomicValue(INT_KIND, raw)
    if isinstance(raw, float):
        if not math.isfinite(raw):
            return NULL
        return AtomicValue(FLOAT_KIND, _round4(raw))
    if isinstance(raw, Decimal):
        if not raw.is_finite():
            return NULL
        return AtomicValue(FLOAT_KIND, _round4(float(raw)))
    if isinstance(raw, _dt.datetime):
        return AtomicValue(DATE_KIND, raw.date().isoformat())
    if isinstance(raw, _dt.date):
        return AtomicValue(DATE_KIND, raw.isoformat())
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8", errors="replace")
    if isinstance(raw, str):
        text = raw.strip()
        if text.lower() == "null":
            return NULL
        m = _DATE_RE.match(text)
        if m:
            try:
                _dt.date.fromisoformat(m.group(1))
            except ValueError:
                return AtomicValue(TEXT_KIND, text)
            return AtomicValue(DATE_KIND, m.group(1))
        return AtomicValue(TEXT_KIND, text)
    # Anything exotic degrades to its stripped text form.
    return AtomicValue(TEXT_KIND, str(raw).strip())


def values_equal(a: AtomicValue, b: AtomicValue) -> bool:
    """Equality on normalized values; an equivalence relation."""
    return a.key() == b.key()


def normalize_row(cells: Iterable[Any]) -> Row:
    return tuple(normalize_value(c) for c in cells)


@dataclass
class ResultSet:
    """Ordered rows of typed cells, with optional column labels.

    When ``columns`` is present every row must have exactly that many
    cells; row order is whatever the executor produced.
    """

    rows: list[Row] = field(default_factory=list)
    columns: Optional[list[str]] = None

    def __post_init__(self) -> None:
        if self.columns is not None:
            width = len(self.columns)
            for i, row in enumerate(self.rows):
                if len(row) != width:
                    raise ValueError(
                        f"row {i} has {len(row)} cells, expected {width}"
                    )

    @classmethod
    def from_raw(
        cls,
        rows: Iterable[Sequence[Any]],
        columns: Optional[Sequence[str]] = None,
    ) -> "ResultSet":
        """Build a ResultSet, normalizing every cell."""
        return cls(
            rows=[normalize_row(r) for r in rows],
            columns=list(columns) if columns is not None else None,
        )

    def to_json_dict(self) -> dict:
        """Shared wire format: {"columns": [...]|null, "rows": [[cell,...]]}."""
        return {
            "columns": self.columns,
            "rows": [[c.json_cell() for c in row] for row in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), ensure_ascii=False)

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ResultSet":
        if not isinstance(obj, dict) or "rows" not in obj:
            raise ValueError("expected an object with a 'rows' key")
        return cls.from_raw(obj["rows"], obj.get("columns"))

    @classmethod
    def from_json(cls, text: str) -> "ResultSet":
        return cls.from_json_dict(json.loads(text))

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class CanonicalForm:
    """Deterministic serialization of a normalized, row-sorted ResultSet.

    Two ResultSets whose normalized rows form equal multisets produce the
    same CanonicalForm; in-row cell order still matters.  Column labels
    are excluded.
    """

    serialized: str


_EMPTY_MARKER = "<empty-result-set>"


def _row_key(row: Row) -> str:
    return json.dumps(
        [c.canonical_token() for c in row],
        separators=(",", ":"),
        ensure_ascii=False,
    )


def canonicalize(rs: ResultSet) -> CanonicalForm:
    """Normalize cells, sort rows by their serialization, concatenate."""
    keys = sorted(_row_key(normalize_row(row)) for row in rs.rows)
    if not keys:
        return CanonicalForm(_EMPTY_MARKER)
    return CanonicalForm("\n".join(keys))
