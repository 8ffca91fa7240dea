"""Run the acceptance suite and print one PASS/FAIL line per criterion."""
import argparse
import re
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("-k", help="pytest -k expression to select criteria, e.g. '01 or 10'")
    args = p.parse_args(argv)
    cmd = [sys.executable, "-m", "pytest", str(ROOT / "tests" / "test_acceptance.py"), "-q", "-s"]
    if args.k:
        cmd += ["-k", args.k]
    proc = subprocess.run(cmd, cwd=ROOT, capture_output=True, text=True)
    lines = [l for l in proc.stdout.splitlines() if l.startswith("ACCEPTANCE")]
    print("\n".join(lines))
    failed = sum(" FAIL" in l for l in lines)
    print(f"{len(lines) - failed}/{len(lines)} criteria passed")
    if not lines:
        print(re.sub(r"\n{3,}", "\n\n", proc.stdout[-4000:]), file=sys.stderr)
    return proc.returncode


if __name__ == "__main__":
    sys.exit(main())
