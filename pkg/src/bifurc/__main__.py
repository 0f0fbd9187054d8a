"""Module entry point: ``python -m bifurc`` behaves like the ``bifurc`` script."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
