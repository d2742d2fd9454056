import argparse
import sys

from .runner import serve_loop


def main() -> int:
    parser = argparse.ArgumentParser(
        prog="dfsandbox",
        description="Serve pandas script execution over line-delimited JSON stdio.",
    )
    parser.add_argument(
        "--process-per-script",
        action="store_true",
        help="spawn a fresh worker process for every request",
    )
    args = parser.parse_args()
    serve_loop(sys.stdin, sys.stdout, process_per_script=args.process_per_script)
    return 0


if __name__ == "__main__":
    sys.exit(main())
