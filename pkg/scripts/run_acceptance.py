#!/usr/bin/env python3
"""Run every acceptance criterion at full resolution and print the results.

Same checks as tests/test_acceptance.py; pass --fast for the reduced
resolutions used by the CLI selftest.

Usage: python scripts/run_acceptance.py [--fast]
"""

import sys
import time

from fastdiff_lab import selftest


def main():
    fast = "--fast" in sys.argv[1:]
    t0 = time.time()
    failed = 0
    for runner in selftest.ALL_CRITERIA:
        results = runner(fast=fast)
        ok = all(r.passed for r in results)
        failed += 0 if ok else 1
        print(f"[{'PASS' if ok else 'FAIL'}] {results[0].criterion} "
              f"({sum(r.passed for r in results)}/{len(results)} checks)")
        for r in results:
            if not r.passed:
                print(f"    FAIL {r.detail}: {r.value:.6g} (bound {r.bound})")
    print(f"\n{len(selftest.ALL_CRITERIA) - failed}/{len(selftest.ALL_CRITERIA)} "
          f"criteria passed in {time.time() - t0:.1f}s")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
