"""Shared builders for scripted-provider tests."""

from __future__ import annotations

import json
import sqlite3

from sqlarbiter.sqlexec import DatabaseRef

# The miniature retail scenario used across the suite: a customer whose
# September transaction exists but who has no yearmonth row, so a query
# that joins yearmonth and one that skips it disagree.
CHAMPION_SQL = (
    "SELECT p.Description FROM transactions_1k t "
    "JOIN products p ON t.ProductID = p.ProductID "
    "WHERE t.Date LIKE '201309%'"
)
CHALLENGER_SQL = (
    "SELECT p.Description FROM transactions_1k t "
    "JOIN products p ON t.ProductID = p.ProductID "
    "JOIN yearmonth ym ON t.CustomerID = ym.CustomerID "
    "WHERE ym.Date LIKE '201309%'"
)

RETAIL_SLICE = {
    "transactions_1k": ["CustomerID", "Date", "ProductID"],
    "products": ["ProductID", "Description"],
    "yearmonth": ["CustomerID", "Date"],
}

# Adversarial rows: the transaction for customer 100 exists, but customer
# 100 is missing from yearmonth, so the champion returns ['LPG'] and the
# challenger returns nothing.
TRAP_TEST_DATA = {
    "transactions_1k": [{"CustomerID": 100, "Date": "20130915", "ProductID": 2}],
    "products": [{"ProductID": 2, "Description": "LPG"}],
    "yearmonth": [
        {"CustomerID": 200, "Date": "201309"},
        {"CustomerID": 300, "Date": "201309"},
    ],
}

# Non-discriminative rows: no September transactions at all, both queries
# return empty.
BLAND_TEST_DATA = {
    "transactions_1k": [{"CustomerID": 1, "Date": "20120101", "ProductID": 2}],
    "products": [{"ProductID": 2, "Description": "LPG"}],
    "yearmonth": [{"CustomerID": 1, "Date": "201201"}],
}

REFERENCE_SCRIPT = """\
mask = yearmonth['Date'].astype(str).str.startswith('201309')
filtered_ym = yearmonth[mask]
merged_tx = filtered_ym.merge(transactions_1k, on='CustomerID')
result = merged_tx.merge(products, on='ProductID')[['Description']]
"""


def build_retail_db(path) -> DatabaseRef:
    conn = sqlite3.connect(path)
    conn.executescript(
        """
        CREATE TABLE products (
            ProductID INTEGER PRIMARY KEY,
            Description TEXT
        );
        CREATE TABLE transactions_1k (
            TransactionID INTEGER PRIMARY KEY,
            CustomerID INTEGER,
            Date TEXT,
            ProductID INTEGER,
            FOREIGN KEY (ProductID) REFERENCES products(ProductID)
        );
        CREATE TABLE yearmonth (
            CustomerID INTEGER,
            Date TEXT,
            Consumption REAL,
            PRIMARY KEY (CustomerID, Date)
        );
        INSERT INTO products VALUES (2, 'LPG'), (5, 'Nafta');
        INSERT INTO transactions_1k VALUES
            (1, 100, '20130915', 2),
            (2, 200, '20130920', 5);
        INSERT INTO yearmonth VALUES (200, '201309', 52.3);
        """
    )
    conn.commit()
    conn.close()
    return DatabaseRef(location=str(path))


def build_numbers_db(path) -> DatabaseRef:
    conn = sqlite3.connect(path)
    conn.executescript(
        "CREATE TABLE nums (n INTEGER); INSERT INTO nums VALUES (1),(2),(3),(4),(5);"
    )
    conn.commit()
    conn.close()
    return DatabaseRef(location=str(path))


def write_mini_benchmark(dir_path, n_items: int = 10, gold_hit_rate: float = 1.0):
    """A small gold-bearing benchmark over one numbers database.

    Item i asks for numbers <= i+1; a ``gold_hit_rate`` fraction of items
    include the gold query among their candidates.
    """
    db_root = dir_path / "dbs"
    db_root.mkdir(exist_ok=True)
    build_numbers_db(db_root / "mini.sqlite")
    lines = []
    for i in range(n_items):
        limit = (i % 5) + 1
        gold = f"SELECT n FROM nums WHERE n <= {limit}"
        wrong = f"SELECT n + 100 FROM nums WHERE n <= {limit}"
        has_gold = i < int(round(gold_hit_rate * n_items))
        candidates = [wrong, gold, gold] if has_gold else [wrong, wrong]
        lines.append(
            {
                "question_id": f"q{i}",
                "question": f"numbers up to {limit}",
                "db_id": "mini",
                "candidates": candidates,
                "gold_sql": gold,
            }
        )
    path = dir_path / "bench.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(json.dumps(line) + "\n")
    return path, db_root


def make_slicer_reply(mapping: dict, thinking: str = "trace the SQL references") -> str:
    payload = {
        "relevant_schema": [
            {"table": t, "columns": list(cols)} for t, cols in mapping.items()
        ]
    }
    return f"<thinking>{thinking}</thinking>\n<result>\n{json.dumps(payload)}\n</result>"


def make_tester_reply(data: dict, thinking: str = "build a trap row") -> str:
    return (
        f"<thinking>{thinking}</thinking>\n"
        f"<result>\n{json.dumps({'test_data': data})}\n</result>"
    )


def make_solver_reply(code: str, thinking: str = "merge and filter") -> str:
    return (
        f"<thinking>{thinking}</thinking>\n"
        f"<result>\n```python\n{code}\n```\n</result>"
    )
