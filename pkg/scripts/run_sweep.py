"""Run a sweep from a spec file and print the SER table grouped by detector.

Example:
    python scripts/run_sweep.py configs/isi_perfect_csi.json --out results.csv
"""
import argparse
import sys

from symdet.bench import emit_results, load_spec, run_sweep, write_metadata


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("spec")
    p.add_argument("--out", help="CSV path (a .meta.json sidecar is written next to it)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=None)
    args = p.parse_args(argv)
    spec = load_spec(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    records = run_sweep(spec, args.workers)
    print(f"{'detector':<12} {'snr_db':>7} {'sigma_e2':>8} {'gamma':>6} {'ser':>10} {'symbols':>9} {'time_s':>7}")
    for r in records:
        gamma = "-" if r.gamma is None else f"{r.gamma:g}"
        print(f"{r.detector:<12} {r.snr_db:>7g} {r.sigma_e2:>8g} {gamma:>6} {r.ser:>10.3e} {r.symbols:>9} "
              f"{r.wall_time_s:>7.1f}" + (f"  ERROR {r.error}" if r.error else ""))
    if args.out:
        emit_results(records, args.out)
        write_metadata(args.out + ".meta.json", spec, records)
    return 3 if any(r.error for r in records) else 0


if __name__ == "__main__":
    sys.exit(main())
