"""Compare the trellis detectors against exhaustive search on random small blocks."""
import argparse
import sys

from symdet.bench import run_oracles


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    reports = run_oracles(args.instances, args.seed)
    for r in reports:
        print(f"{r.check:<26} instances={r.instances} max_error={r.max_error:.2e} "
              f"{'PASS' if r.passed else 'FAIL'}")
    return 0 if all(r.passed for r in reports) else 1


if __name__ == "__main__":
    sys.exit(main())
