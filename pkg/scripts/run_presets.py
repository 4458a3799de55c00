"""Run every bundled experiment preset and write artifacts under results/.

Usage: python3 scripts/run_presets.py [--out results] [--only crisis basins ...]
"""

import argparse
import sys
from pathlib import Path

from contagion_lab import cli
from contagion_lab.config import preset_names

# subcommands that make sense for each preset
PLAN = {
    "loss-interaction": ["equilibria", "losses"],
    "loss-mixture": ["equilibria", "losses"],
    "separatrix-sweep": ["equilibria", "phase"],
    "basins": ["phase"],
    "crisis": ["cov", "simulate"],
    "crisis-losses": ["cov", "losses"],
    "crisis-strength": ["cov"],
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--only", nargs="*", choices=sorted(PLAN))
    args = ap.parse_args(argv)
    worst = 0
    for name in args.only or sorted(PLAN):
        assert name in preset_names(), name
        for cmd in PLAN[name]:
            out = Path(args.out) / name / cmd
            code = cli.main([cmd, "--preset", name, "--out", str(out)])
            print(f"{name:18s} {cmd:10s} exit {code} -> {out}")
            worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
