"""Walkthrough: execution-consistency clustering and the duel pair.

Run with: python3 demos/clustering_and_baselines.py
"""

import sqlite3
import tempfile

from sqlarbiter import (
    CandidateSet,
    DatabaseRef,
    baseline_select,
    cluster_candidates,
    select_duel,
)

with tempfile.NamedTemporaryFile(suffix=".sqlite") as tmp:
    conn = sqlite3.connect(tmp.name)
    conn.executescript(
        "CREATE TABLE sales (region TEXT, amount INTEGER);"
        "INSERT INTO sales VALUES ('north', 10), ('south', 20), ('north', 5);"
    )
    conn.commit()
    conn.close()

    cs = CandidateSet(
        question_id="demo-1",
        question="Total sales per region?",
        candidates=[
            "SELECT region, SUM(amount) FROM sales GROUP BY region",
            "SELECT region, SUM(amount) AS total FROM sales GROUP BY region",
            "SELECT sales.region, SUM(sales.amount) FROM sales GROUP BY 1",
            "SELECT region, COUNT(*) FROM sales GROUP BY region",
            "SELECT region, SUM(amount) FROM sale GROUP BY region",  # typo: errors
        ],
        db=DatabaseRef(location=tmp.name),
    )

    print("== Clusters (candidates grouped by canonical execution result) ==")
    clusters = cluster_candidates(cs)
    for c in clusters:
        kind = "errors" if c.is_error_cluster else "result group"
        print(f"  {kind}: members={c.member_indices} representative={c.representative_index}")

    print()
    print("== The duel ==")
    duel = select_duel(clusters)
    print(f"  champion   = candidate {duel.champion_index} "
          f"(cluster of {duel.champion_cluster_size})")
    print(f"  challenger = candidate {duel.challenger_index} "
          f"(cluster of {duel.challenger_cluster_size})")

    print()
    print("== Training-free baselines on the same pool ==")
    for kind in ("self_consistency", "execution_guided", "random"):
        idx = baseline_select(kind, cs, seed=7)
        print(f"  {kind:>18} picks candidate {idx}")
