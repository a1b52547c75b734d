#!/usr/bin/env python3
"""
qsdc command-line script
Usage: python qsdc.py session --config configs/default.ini --out results/run1
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from app.main import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
