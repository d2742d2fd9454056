"""Line-delimited JSON stdio service that runs pandas scripts over tables."""

from .runner import (
    RunnerRequest,
    WorkerHost,
    execute_script,
    run_script_in_namespace,
    serve_loop,
)

__version__ = "0.1.0"
