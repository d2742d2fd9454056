"""Bipartite soft-F1 scoring of one result set against a reference.

Strict result-set identity is the wrong tool when a SQL result is checked
against an imperative script's output: the two paradigms disagree on value
representation (DECIMAL vs float, NULL vs NaN) and on row order.  This
module instead normalizes both sides, finds the globally optimal row
pairing by solving a minimum-cost assignment over per-row overlap, and
aggregates partial credit into an F1 score:

* each assigned pair with overlap m contributes TP += m and FP, FN += 1-m,
* every unassigned row counts as one FP (candidate side) or FN (reference
  side),
* precision = TP/(TP+FP), recall = TP/(TP+FN), f1 their harmonic mean.

Two empty result sets score 1.0 by definition; any rows with zero total
overlap score 0.0.  Cells match as whole units after normalization; there
is no partial string credit.  Column labels are ignored -- rows are
matched on cell content only.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .results import ResultSet, Row, normalize_row


@dataclass(frozen=True)
class CostMatrix:
    """Pairing costs, entries in [0,1]: cost = 1 - row overlap ratio."""

    entries: np.ndarray  # shape (n_rows, n_cols)

    @property
    def n_rows(self) -> int:
        return int(self.entries.shape[0])

    @property
    def n_cols(self) -> int:
        return int(self.entries.shape[1])


@dataclass(frozen=True)
class Assignment:
    """Cost-minimal pairing; i and j each appear at most once."""

    pairs: tuple[tuple[int, int], ...]
    total_cost: float


@dataclass(frozen=True)
class BsF1Score:
    tp: float
    fp: float
    fn: float
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def overlap_ratio(a: Row, b: Row) -> float:
    """Fraction of cells the two rows share as multisets, over max length.

    Cells count as matching when they are equal after normalization; the
    ratio divides by the longer row so extra cells dilute the score.  Two
    empty rows overlap fully.
    """
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    counts_a = Counter(c.key() for c in a)
    counts_b = Counter(c.key() for c in b)
    shared = sum((counts_a & counts_b).values())
    return shared / max(len(a), len(b))


def build_cost_matrix(rows_a: Sequence[Row], rows_b: Sequence[Row]) -> CostMatrix:
    entries = np.ones((len(rows_a), len(rows_b)), dtype=float)
    for i, ra in enumerate(rows_a):
        for j, rb in enumerate(rows_b):
            entries[i, j] = 1.0 - overlap_ratio(ra, rb)
    return CostMatrix(entries=entries)


def hungarian(c: CostMatrix) -> Assignment:
    """Minimum-cost assignment of size min(N, M).

    Rectangular matrices are padded square with cost 1.0 and the padding
    pairs dropped from the output, so the returned total is the minimum
    over all injective pairings of the smaller side into the larger.  The
    scan always walks indices in ascending order, so among equally cheap
    choices the lower (i, j) wins; output pairs are sorted by (i, j).
    """
    n, m = c.n_rows, c.n_cols
    if n == 0 or m == 0:
        return Assignment(pairs=(), total_cost=0.0)
    size = max(n, m)
    padded = np.ones((size, size), dtype=float)
    padded[:n, :m] = c.entries

    col_of_row = _solve_square(padded)
    pairs = sorted(
        (i, col_of_row[i])
        for i in range(size)
        if i < n and col_of_row[i] < m
    )
    total = float(sum(c.entries[i, j] for i, j in pairs))
    return Assignment(pairs=tuple(pairs), total_cost=total)


def _solve_square(cost: np.ndarray) -> list[int]:
    """O(n^3) shortest-augmenting-path assignment with dual potentials.

    Column 0 of the internal arrays is a virtual column; indices shift by
    one so ``way``/``links`` stay 1-based, the classical formulation.
    """
    n = cost.shape[0]
    INF = float("inf")
    u = [0.0] * (n + 1)  # row potentials
    v = [0.0] * (n + 1)  # column potentials
    row_of_col = [0] * (n + 1)  # 1-based; 0 = unassigned
    way = [0] * (n + 1)

    for i in range(1, n + 1):
        row_of_col[0] = i
        j0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = row_of_col[j0]
            delta = INF
            j1 = -1
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1][j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[row_of_col[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if row_of_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of_col[j0] = row_of_col[j1]
            j0 = j1

    col_of_row = [0] * n
    for j in range(1, n + 1):
        if row_of_col[j]:
            col_of_row[row_of_col[j] - 1] = j - 1
    return col_of_row


def bsf1(candidate: ResultSet, reference: ResultSet) -> BsF1Score:
    """Score a candidate result against the reference result."""
    rows_sql = [normalize_row(r) for r in candidate.rows]
    rows_py = [normalize_row(r) for r in reference.rows]
    n, m = len(rows_sql), len(rows_py)
    if n == 0 and m == 0:
        return BsF1Score(tp=0.0, fp=0.0, fn=0.0, precision=1.0, recall=1.0, f1=1.0)

    assignment = hungarian(build_cost_matrix(rows_sql, rows_py))
    tp = fp = fn = 0.0
    for i, j in assignment.pairs:
        overlap = overlap_ratio(rows_sql[i], rows_py[j])
        tp += overlap
        fp += 1.0 - overlap
        fn += 1.0 - overlap
    fp += n - len(assignment.pairs)  # unmatched candidate rows
    fn += m - len(assignment.pairs)  # unmatched reference rows

    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return BsF1Score(tp=tp, fp=fp, fn=fn, precision=precision, recall=recall, f1=f1)


@dataclass(frozen=True)
class DuelDecision:
    """Outcome of comparing both duelists against the reference anchor."""

    winner_index: int
    reason: str  # duel_won_champion | duel_won_challenger | tie_fallback_majority
    s_champ: BsF1Score
    s_chal: BsF1Score


def verdict(
    champion_index: int,
    challenger_index: int,
    champion_result: ResultSet,
    challenger_result: ResultSet,
    reference_result: ResultSet,
) -> DuelDecision:
    """Pick the duelist whose result better matches the reference.

    An exact score tie keeps the champion -- the majority-vote prior --
    with a reason that says so.
    """
    s_champ = bsf1(champion_result, reference_result)
    s_chal = bsf1(challenger_result, reference_result)
    if s_chal.f1 > s_champ.f1:
        return DuelDecision(challenger_index, "duel_won_challenger", s_champ, s_chal)
    if s_champ.f1 > s_chal.f1:
        return DuelDecision(champion_index, "duel_won_champion", s_champ, s_chal)
    return DuelDecision(champion_index, "tie_fallback_majority", s_champ, s_chal)
