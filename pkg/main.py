#!/usr/bin/env python3
"""
CountCluster command line

Run with:
    python main.py run --k 4 --seed 0 --out out/
    python main.py benchmark --counts 2..10 --seeds 0..9 --variants guided,baseline
    python -m countcluster ablate --workers 8
"""

import sys

from countcluster import main

if __name__ == "__main__":
    sys.exit(main())
