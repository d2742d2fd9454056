"""Stage 1: group candidates by execution result, pick the duel pair.

Two candidates land in the same cluster iff their results on the original
database agree as normalized row multisets; every candidate that fails to
execute goes into a single error cluster.  The duel is fought between the
representatives of the two largest non-error clusters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .results import CanonicalForm, canonicalize
from .sqlexec import DEFAULT_SQL_TIMEOUT_MS, DatabaseRef, execute_sql


@dataclass
class CandidateSet:
    """One question and its K candidate SQL strings (index = generation order)."""

    question_id: str
    question: str
    candidates: list[str]
    db: DatabaseRef
    evidence: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError("candidate set must contain at least one SQL")


@dataclass
class Cluster:
    member_indices: list[int]
    canonical: Optional[CanonicalForm]  # None for the error cluster
    representative_index: int
    is_error_cluster: bool = False

    @property
    def size(self) -> int:
        return len(self.member_indices)


@dataclass(frozen=True)
class DuelPair:
    champion_index: int
    challenger_index: int
    champion_cluster_size: int
    challenger_cluster_size: int


@dataclass(frozen=True)
class ChampionOnly:
    champion_index: int
    cluster_size: int


@dataclass(frozen=True)
class AllFailed:
    fallback_index: int = 0


Duel = Union[DuelPair, ChampionOnly, AllFailed]


def cluster_candidates(
    cs: CandidateSet, timeout_ms: int = DEFAULT_SQL_TIMEOUT_MS
) -> list[Cluster]:
    """Execute every candidate once and partition by canonical result.

    Execution failures are data, not errors: they collect into one error
    cluster appended after the non-error clusters, which are sorted by
    (size desc, representative asc).
    """
    by_form: dict[CanonicalForm, list[int]] = {}
    failed: list[int] = []
    for idx, sql in enumerate(cs.candidates):
        outcome = execute_sql(cs.db, sql, timeout_ms=timeout_ms)
        if outcome.ok:
            by_form.setdefault(canonicalize(outcome.result), []).append(idx)
        else:
            failed.append(idx)

    clusters = [
        Cluster(
            member_indices=members,
            canonical=form,
            representative_index=min(members),
        )
        for form, members in by_form.items()
    ]
    clusters.sort(key=lambda c: (-c.size, c.representative_index))
    if failed:
        clusters.append(
            Cluster(
                member_indices=failed,
                canonical=None,
                representative_index=min(failed),
                is_error_cluster=True,
            )
        )
    return clusters


def select_duel(clusters: list[Cluster]) -> Duel:
    """Champion/challenger from the two largest non-error clusters.

    Equal sizes tie-break toward the smaller representative index, which
    cluster_candidates' ordering already provides.
    """
    live = [c for c in clusters if not c.is_error_cluster]
    if not live:
        return AllFailed()
    if len(live) == 1:
        return ChampionOnly(
            champion_index=live[0].representative_index, cluster_size=live[0].size
        )
    champ, chal = live[0], live[1]
    return DuelPair(
        champion_index=champ.representative_index,
        challenger_index=chal.representative_index,
        champion_cluster_size=champ.size,
        challenger_cluster_size=chal.size,
    )
