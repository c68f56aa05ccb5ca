"""``python3 -m iacforge``."""
import sys

from .cli import main

sys.exit(main())
