"""Pandas script runner behind a line-delimited JSON stdio protocol.

Each request binds the given tables as DataFrame variables named exactly
after the tables, executes the script in a fresh namespace (plus ``pd``
and ``np``), and returns whatever the script left in ``result``:

    request:  {"tables": {name: {"columns": [...], "rows": [[...], ...]}},
               "script": "...", "timeout_ms": N}
    response: {"status": "ok", "columns": [...], "rows": [[...], ...]}
            | {"status": "error", "traceback": "..."}

Result cells serialize as JSON null/number/string: NaN/NaT become null,
timestamps become YYYY-MM-DD strings.  Scripts execute inside a worker
subprocess; a script that overruns its timeout gets its worker killed and
a fresh one is spawned for the next request, so one runaway script cannot
wedge the service.  This is an operational boundary, not a security one.
"""

from __future__ import annotations

import datetime
import json
import math
import multiprocessing
import traceback as tb_module
from dataclasses import dataclass
from typing import Any, Optional, TextIO

DEFAULT_TIMEOUT_MS = 10_000


@dataclass
class RunnerRequest:
    tables: dict[str, dict]
    script: str
    timeout_ms: int = DEFAULT_TIMEOUT_MS

    @classmethod
    def from_json_dict(cls, obj: Any) -> "RunnerRequest":
        if not isinstance(obj, dict):
            raise ValueError("request must be a JSON object")
        tables = obj.get("tables")
        script = obj.get("script")
        if not isinstance(tables, dict):
            raise ValueError('request needs a "tables" object')
        if not isinstance(script, str):
            raise ValueError('request needs a "script" string')
        for name, table in tables.items():
            if not str(name).isidentifier():
                raise ValueError(f"table name is not a valid identifier: {name}")
            if not isinstance(table, dict) or "columns" not in table or "rows" not in table:
                raise ValueError(f"table {name} needs columns and rows")
        timeout_ms = obj.get("timeout_ms", DEFAULT_TIMEOUT_MS)
        if not isinstance(timeout_ms, int) or timeout_ms <= 0:
            raise ValueError("timeout_ms must be a positive integer")
        return cls(tables=tables, script=script, timeout_ms=timeout_ms)


def _json_cell(value: Any) -> Any:
    """Project one result cell onto JSON null/number/string/bool."""
    import numpy as np
    import pandas as pd

    if value is None or value is pd.NaT:
        return None
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, np.floating):
        v = float(value)
        return None if math.isnan(v) else v
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, pd.Timestamp):
        return value.date().isoformat()
    if isinstance(value, datetime.datetime):
        return value.date().isoformat()
    if isinstance(value, datetime.date):
        return value.isoformat()
    if isinstance(value, (bool, int, float, str)):
        return value
    try:
        if pd.isna(value):
            return None
    except (TypeError, ValueError):
        pass
    return str(value)


def run_script_in_namespace(tables: dict[str, dict], script: str) -> dict:
    """Execute one script over freshly built DataFrames; no timeout here."""
    import numpy as np
    import pandas as pd

    namespace: dict[str, Any] = {"pd": pd, "np": np}
    try:
        for name, table in tables.items():
            namespace[name] = pd.DataFrame(
                table["rows"], columns=[str(c) for c in table["columns"]]
            )
        exec(script, namespace)  # noqa: S102 - executing scripts is the service
    except BaseException:
        return {"status": "error", "traceback": tb_module.format_exc()}
    if "result" not in namespace:
        return {
            "status": "error",
            "traceback": "the script must store its answer in a variable named 'result'",
        }
    result = namespace["result"]
    if not isinstance(result, pd.DataFrame):
        return {"status": "error", "traceback": "result is not a DataFrame"}
    return {
        "status": "ok",
        "columns": [str(c) for c in result.columns],
        "rows": [[_json_cell(v) for v in row] for row in result.itertuples(index=False)],
    }


def _worker_main(conn) -> None:
    while True:
        try:
            job = conn.recv()
        except EOFError:
            return
        if job is None:
            return
        tables, script = job
        conn.send(run_script_in_namespace(tables, script))


class WorkerHost:
    """Owns the worker subprocess; kills and respawns it on timeout.

    With ``process_per_script`` every request gets a brand-new worker;
    the default reuses one worker, giving each script a fresh namespace
    inside a warm process.
    """

    def __init__(self, process_per_script: bool = False):
        self.process_per_script = process_per_script
        self._proc: Optional[multiprocessing.Process] = None
        self._conn = None

    def _spawn(self) -> None:
        parent, child = multiprocessing.Pipe()
        proc = multiprocessing.Process(target=_worker_main, args=(child,), daemon=True)
        proc.start()
        child.close()
        self._proc, self._conn = proc, parent

    def _kill(self) -> None:
        if self._proc is not None:
            self._proc.terminate()
            self._proc.join(timeout=2.0)
            if self._proc.is_alive():
                self._proc.kill()
                self._proc.join()
        if self._conn is not None:
            self._conn.close()
        self._proc, self._conn = None, None

    def close(self) -> None:
        self._kill()

    def execute(self, request: RunnerRequest) -> dict:
        if self._proc is None or not self._proc.is_alive():
            self._spawn()
        try:
            self._conn.send((request.tables, request.script))
            if not self._conn.poll(request.timeout_ms / 1000.0):
                self._kill()
                return {
                    "status": "error",
                    "traceback": f"timeout: script exceeded {request.timeout_ms} ms "
                    "and its worker was killed",
                }
            response = self._conn.recv()
        except (EOFError, OSError, BrokenPipeError) as exc:
            self._kill()
            return {"status": "error", "traceback": f"worker died: {exc}"}
        if self.process_per_script:
            self._kill()
        return response


def execute_script(req: RunnerRequest, host: Optional[WorkerHost] = None) -> dict:
    """One-shot entry point; manages a private worker when none is given."""
    own = host is None
    host = host or WorkerHost()
    try:
        return host.execute(req)
    finally:
        if own:
            host.close()


def serve_loop(stdin: TextIO, stdout: TextIO, process_per_script: bool = False) -> None:
    """One JSON request per line in, one JSON response per line out.

    A malformed line gets an error response and the loop continues; EOF
    on stdin ends the loop cleanly.
    """
    host = WorkerHost(process_per_script=process_per_script)
    try:
        for line in stdin:
            if not line.strip():
                continue
            try:
                request = RunnerRequest.from_json_dict(json.loads(line))
            except (json.JSONDecodeError, ValueError) as exc:
                response = {"status": "error", "traceback": f"malformed request: {exc}"}
            else:
                response = host.execute(request)
            stdout.write(json.dumps(response, ensure_ascii=False) + "\n")
            stdout.flush()
    finally:
        host.close()
