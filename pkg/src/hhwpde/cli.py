"""Console entry point for the benchmark CLI."""

from __future__ import annotations

import sys

from .harness import run_experiment


def main(argv=None) -> int:
    return run_experiment(argv)


if __name__ == "__main__":
    sys.exit(main())
