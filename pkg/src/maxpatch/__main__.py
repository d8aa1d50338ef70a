"""``python -m maxpatch``; ``MAXPATCH_THREADS`` caps BLAS/OpenMP threads."""

import os
import sys

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def main(argv=None) -> int:
    n = os.environ.get("MAXPATCH_THREADS")
    if n:
        if not n.isdigit() or int(n) < 1:
            print(f"error: MAXPATCH_THREADS must be a positive integer, got {n!r}", file=sys.stderr)
            return 2
        for var in THREAD_VARS:
            os.environ[var] = n
    from .cli import main as cli_main
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
