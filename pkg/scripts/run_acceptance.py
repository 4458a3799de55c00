"""Run the acceptance criteria and print one PASS/FAIL line per criterion.

Usage: python3 scripts/run_acceptance.py [NAME ...]   (exit 1 if any fails)
"""

import sys

from contagion_lab import acceptance

if __name__ == "__main__":
    results = acceptance.run(sys.argv[1:] or None)
    failed = [c.name for c in results if not c.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    sys.exit(1 if failed else 0)
