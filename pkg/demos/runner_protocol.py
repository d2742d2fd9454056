"""Walkthrough: the script-runner wire protocol.

Requires the companion runner package (see runner/ in this repository):
    pip install -e runner/ --no-build-isolation

Run with: python3 demos/runner_protocol.py
"""

import sys

from sqlarbiter import SubprocessScriptExecutor

PAYLOAD = """\
{"tables": {"sales": {"columns": ["region", "amount"],
                      "rows": [["north", 10], ["south", 20], ["north", 5]]}},
 "script": "result = sales.groupby('region', as_index=False)['amount'].sum()"}
"""

executor = SubprocessScriptExecutor([sys.executable, "-m", "dfsandbox"])
try:
    print("request payload (one JSON line over the child's stdin):")
    print(" ", PAYLOAD.replace("\n", "\n  "))
    outcome = executor.run(PAYLOAD, timeout_ms=15_000)
    if outcome.ok:
        print("response rows:")
        for row in outcome.result.rows:
            print("  ", [cell.json_cell() for cell in row])
    else:
        print("runner error:", outcome.traceback)
        print("(is the dfsandbox package installed?)")

    print()
    print("a crashing script comes back as a traceback, not a dead service:")
    bad = PAYLOAD.replace("result = sales", "result = missing_table")
    outcome = executor.run(bad, timeout_ms=15_000)
    print("  status:", outcome.status)
    print("  last traceback line:", outcome.traceback.strip().splitlines()[-1])
finally:
    executor.close()
