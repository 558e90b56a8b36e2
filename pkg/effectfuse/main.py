from __future__ import annotations

import sys

from effectfuse.app import run_cli


def main() -> int:
    """Module entrypoint for `python -m effectfuse` and the `effectfuse` console script."""
    return run_cli(sys.argv[1:])


if __name__ == "__main__":
    raise SystemExit(main())
