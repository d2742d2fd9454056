"""Walkthrough: value normalization and bipartite soft-F1 scoring.

Run with: python3 demos/bsf1_scoring.py
"""

from sqlarbiter import ResultSet, bsf1, normalize_value

print("== Why raw equality fails across paradigms ==")
print("SQL engines and dataframe scripts disagree on representation:")
for raw in [3.14159265, "  null ", "2019-09-09T00:00:00", "  LPG "]:
    print(f"  {raw!r:>28} normalizes to {normalize_value(raw)}")

print()
print("== Scoring a SQL result against a reference result ==")
sql_result = ResultSet.from_raw(
    [[1, "LPG", 2.50004999], [2, "Nafta", 3.1]], columns=["id", "desc", "price"]
)
reference = ResultSet.from_raw(
    [[2.0, "Nafta", 3.1], [1.0, "LPG", 2.5]], columns=["ID", "DESC", "PRICE"]
)
score = bsf1(sql_result, reference)
print("same rows, different row order, int vs float ids, 9-digit floats:")
print(f"  f1={score.f1:.4f}  precision={score.precision:.4f}  recall={score.recall:.4f}")

print()
print("== Partial credit ==")
partial = bsf1(
    ResultSet.from_raw([[1, "LPG"], [9, "Diesel"]]),
    ResultSet.from_raw([[1, "LPG"]]),
)
print("two candidate rows, one reference row, one exact match:")
print(f"  tp={partial.tp}  fp={partial.fp}  fn={partial.fn}  f1={partial.f1:.4f}")

print()
print("== The empty-result corner ==")
print(f"  empty vs empty  -> {bsf1(ResultSet(), ResultSet()).f1}")
print(f"  empty vs 1 row  -> {bsf1(ResultSet(), ResultSet.from_raw([[1]])).f1}")
