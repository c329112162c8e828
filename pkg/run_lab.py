#!/usr/bin/env python3
"""
run_lab.py

Entry script for the lab; every subcommand writes a JSON report and CSV/xlsx side tables.

Run:
  python run_lab.py check-hormander --model kolmogorov
  python run_lab.py max-principle --model kolmogorov --trials 20 --out runs/maxp.json
  python run_lab.py schauder --model kolmogorov --omega-f "log" --levels 6 --out runs/log.json
"""

import sys

from hormander_lab.cli import main

if __name__ == "__main__":
    sys.exit(main())
