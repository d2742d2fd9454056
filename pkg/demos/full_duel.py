"""Walkthrough: the full pipeline overturning a wrong majority vote.

Five candidates answer one question.  Three of them (the majority) skip a
join through the monthly-consumption table; two include it.  A scripted
provider plays the three agent roles so the demo runs offline, and a
canned executor stands in for the script runner.

Run with: python3 demos/full_duel.py
"""

import json
import sqlite3
import tempfile

from sqlarbiter import (
    CandidateSet,
    DatabaseRef,
    MockScriptExecutor,
    PipelineConfig,
    ScriptedProvider,
    baseline_select,
    select_one,
)
from sqlarbiter.solver import canned_ok

MAJORITY_SQL = (
    "SELECT p.Description FROM transactions_1k t "
    "JOIN products p ON t.ProductID = p.ProductID "
    "WHERE t.Date LIKE '201309%'"
)
MINORITY_SQL = (
    "SELECT p.Description FROM transactions_1k t "
    "JOIN products p ON t.ProductID = p.ProductID "
    "JOIN yearmonth ym ON t.CustomerID = ym.CustomerID "
    "WHERE ym.Date LIKE '201309%'"
)

SLICE = {
    "transactions_1k": ["CustomerID", "Date", "ProductID"],
    "products": ["ProductID", "Description"],
    "yearmonth": ["CustomerID", "Date"],
}
# The trap: a September transaction for customer 100, but no yearmonth row
# for customer 100 -- the two query shapes must disagree here.
TRAP_DATA = {
    "transactions_1k": [{"CustomerID": 100, "Date": "20130915", "ProductID": 2}],
    "products": [{"ProductID": 2, "Description": "LPG"}],
    "yearmonth": [{"CustomerID": 200, "Date": "201309"}],
}
SOLVER_SCRIPT = (
    "ym = yearmonth[yearmonth['Date'].astype(str).str.startswith('201309')]\n"
    "tx = ym.merge(transactions_1k, on='CustomerID')\n"
    "result = tx.merge(products, on='ProductID')[['Description']]\n"
)


def tagged(payload: str) -> str:
    return f"<thinking>...</thinking>\n<result>\n{payload}\n</result>"


with tempfile.NamedTemporaryFile(suffix=".sqlite") as tmp:
    conn = sqlite3.connect(tmp.name)
    conn.executescript(
        """
        CREATE TABLE products (ProductID INTEGER PRIMARY KEY, Description TEXT);
        CREATE TABLE transactions_1k (CustomerID INTEGER, Date TEXT, ProductID INTEGER);
        CREATE TABLE yearmonth (CustomerID INTEGER, Date TEXT);
        INSERT INTO products VALUES (2, 'LPG'), (5, 'Nafta');
        INSERT INTO transactions_1k VALUES (100, '20130915', 2), (200, '20130920', 5);
        INSERT INTO yearmonth VALUES (200, '201309');
        """
    )
    conn.commit()
    conn.close()

    cs = CandidateSet(
        question_id="demo-duel",
        question="Please list the product description of the products consumed in September, 2013.",
        candidates=[MAJORITY_SQL, MAJORITY_SQL + " ", MINORITY_SQL,
                    MAJORITY_SQL.replace("p.Description", "p.`Description`"),
                    MINORITY_SQL + " "],
        db=DatabaseRef(location=tmp.name),
    )

    provider = ScriptedProvider(
        {
            "slicer": [tagged(json.dumps({"relevant_schema": [
                {"table": t, "columns": c} for t, c in SLICE.items()]}))],
            "tester": [tagged(json.dumps({"test_data": TRAP_DATA}))],
            "solver": [tagged(f"```python\n{SOLVER_SCRIPT}```")],
        }
    )
    # the reference script finds no September consumers -> empty reference
    executor = MockScriptExecutor([canned_ok([], columns=["Description"])])

    sc_pick = baseline_select("self_consistency", cs)
    print(f"majority vote keeps candidate {sc_pick} (the join-free query)")

    verdict = select_one(cs, PipelineConfig(), provider, executor)
    print(f"pipeline verdict: candidate {verdict.selected_index} ({verdict.reason})")
    print(f"  champion soft-F1   = {verdict.scores.s_champ}")
    print(f"  challenger soft-F1 = {verdict.scores.s_chal}")
    print(f"  agent calls made   = {provider.call_count}")
    print()
    print("The synthesized trap row exposed the missing join: on that data the")
    print("majority query returns ['LPG'] while the challenger and the")
    print("imperative reference both return nothing, so the challenger wins.")
