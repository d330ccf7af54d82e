"""Check the three exact identities on seeded random games and time each sweep."""

import argparse
import time

import numpy as np

from mdselect.game_core import (
    GameOracle,
    verify_expected_shapley,
    verify_matching,
    verify_ordering_representation,
)

SWEEPS = (
    ("matching", verify_matching, range(2, 11), 100),
    ("expected_shapley", verify_expected_shapley, range(2, 9), 20),
    ("ordering", verify_ordering_representation, range(2, 8), 20),
)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tol", type=float, default=1e-10)
    args = ap.parse_args(argv)

    ok = True
    for name, check, sizes, count in SWEEPS:
        start = time.perf_counter()
        worst = 0.0
        for n in sizes:
            rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(n,)))
            for _ in range(count):
                g = GameOracle.from_table(rng.uniform(size=1 << n))
                worst = max(worst, abs(check(g)))
        ok &= worst < args.tol
        print(f"{name:<18} n={sizes.start}..{sizes.stop - 1:<3} games/n={count:<4} "
              f"max|residual|={worst:.2e}  {time.perf_counter() - start:.2f}s")
    print("ok" if ok else "FAILED")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
