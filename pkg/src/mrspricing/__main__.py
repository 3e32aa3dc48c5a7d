"""Module entry point: ``python -m mrspricing``."""

import sys

from .cli import main

sys.exit(main())
