"""Command line interface: ``symdet <command> [options]``.

Commands that need a channel use the first point of each grid in the spec
file. Errors are reported on stderr as one JSON line and a nonzero exit.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..channels import BPSK, export_dataset_csv
from ..hybrid import load_model, save_model
from ..neural.checkpoint import CheckpointError
from ..numkit import rng_stream
from .engine import (LEARNED, cell_seed, fit_model, learned_detector, model_based_detector,
                     model_key, ser_eval, eval_rng, training_data, run_sweep)
from .oracle import run_oracles
from .results import emit_results, write_metadata
from .spec import ExperimentSpec, ResultRecord, SpecError, load_spec

# detector name -> checkpoint kind
CHECKPOINT_KIND = {"viterbinet": "viterbinet", "bcjrnet": "bcjrnet", "sbrnn": "sbrnn",
                   "sbrnn_block": "sbrnn", "deepsic": "deepsic", "deepsic_e2e": "deepsic",
                   "detnet": "detnet"}


class CliError(Exception):
    pass


def _spec(args) -> ExperimentSpec:
    if not args.spec:
        raise CliError("--spec is required for this command")
    spec = load_spec(args.spec)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    return spec


def _detector(args, spec: ExperimentSpec | None = None) -> str:
    if args.detector:
        return args.detector
    if spec is not None and len(spec.detectors) == 1:
        return spec.detectors[0]
    raise CliError("--detector is required")


def _write_text(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _rows_to_jsonl(csv_text: str) -> str:
    return "".join(json.dumps(r) + "\n" for r in csv.DictReader(io.StringIO(csv_text)))


def cmd_gen_data(args):
    spec = _spec(args)
    ch = spec.build_channel(spec.snr_db[0], spec.gamma_grid()[0])
    ds = training_data(spec, ch, spec.sigma_e2[0], rng_stream(cell_seed(spec, "train", 0, 0, 0, 0)))
    buf = io.StringIO()
    export_dataset_csv(ds, buf)
    text = buf.getvalue()
    _write_text(args.out, text if args.format == "csv" else _rows_to_jsonl(text))


def _train(spec: ExperimentSpec, det: str):
    ch = spec.build_channel(spec.snr_db[0], spec.gamma_grid()[0])
    sigma = spec.sigma_e2[0]
    ds = training_data(spec, ch, sigma, rng_stream(cell_seed(spec, "train", 0, 0, 0, 0)))
    key = model_key(det, spec.options(det))
    seed = cell_seed(spec, "init", 0, 0, 0, 0, key) % 2 ** 32
    return fit_model(det, spec, ch, ds, sigma, seed, rng_stream(cell_seed(spec, "model-csi", 0, 0, 0, 0)))


def cmd_train(args):
    spec = _spec(args)
    det = _detector(args, spec)
    if det not in LEARNED:
        raise CliError(f"detector {det!r} has no trainable parameters")
    if not args.checkpoint:
        raise CliError("--checkpoint is required")
    model = _train(spec, det)
    save_model(model, args.checkpoint)
    print(json.dumps({"status": "ok", "detector": det, "checkpoint": args.checkpoint,
                      "final_loss": model.trace[-1] if model.trace else None}))


def _load(args, det):
    if not args.checkpoint:
        raise CliError("--checkpoint is required")
    return load_model(args.checkpoint, expect_kind=CHECKPOINT_KIND[det])


def _read_observations(path):
    """Observations grouped by the ``block`` column when present."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise CliError(f"no observations in {path}")
    cols = ["y"] if "y" in rows[0] else sorted((c for c in rows[0] if c.startswith("y_")),
                                                 key=lambda c: int(c[2:]))
    if not cols:
        raise CliError(f"{path} has no y or y_1.. columns")
    blocks = {}
    for r in rows:
        blocks.setdefault(r.get("block", "0"), []).append([float(r[c]) for c in cols])
    return [(b, np.array(v)) for b, v in blocks.items()]


def cmd_detect(args):
    if not args.input:
        raise CliError("--input is required")
    det = args.detector
    if det not in CHECKPOINT_KIND:
        raise CliError(f"--detector must be one of {', '.join(CHECKPOINT_KIND)}")
    model = _load(args, det)
    const = getattr(model, "constellation", BPSK)
    fn = learned_detector(det, model, const)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    header_done = False
    for b, Y in _read_observations(args.input):
        mimo = det in ("deepsic", "deepsic_e2e", "detnet")
        dec = np.asarray(fn(Y if mimo else Y[:, 0]))
        vals = const.values[dec]
        if not header_done:
            w.writerow(["block", "i"] + ([f"s_{k + 1}" for k in range(vals.shape[1])] if mimo else ["s"]))
            header_done = True
        for i, v in enumerate(vals):
            w.writerow([b, i + 1] + [repr(float(x)) for x in np.atleast_1d(v)])
    text = out.getvalue()
    _write_text(args.out, text if args.format == "csv" else _rows_to_jsonl(text))


def cmd_eval(args):
    spec = _spec(args)
    det = _detector(args, spec)
    ch = spec.build_channel(spec.snr_db[0], spec.gamma_grid()[0])
    sigma = spec.sigma_e2[0]
    t0 = time.perf_counter()
    if det in LEARNED:
        model = _load(args, det) if args.checkpoint else _train(spec, det)
        fn = learned_detector(det, model, ch.constellation)
    else:
        fn = model_based_detector(det, ch, sigma, rng_stream(cell_seed(spec, "csi", 0, 0, 0, 0)),
                                  spec.options(det))
    e, n, _ = ser_eval(fn, ch, spec.n_test, eval_rng(spec, 0, 0, 0, 0), spec.test_blocklen)
    rec = ResultRecord(spec.experiment, det, spec.snr_db[0], sigma, spec.gamma_grid()[0], n, e,
                       time.perf_counter() - t0, int(spec.seed))
    emit_results([rec], args.out or "-", args.format)


def cmd_sweep(args):
    spec = _spec(args)
    if args.detector:
        spec = replace(spec, detectors=[args.detector])
    records = run_sweep(spec, args.workers)
    out = args.out or "-"
    emit_results(records, out, args.format)
    if out != "-":
        write_metadata(str(out) + ".meta.json", spec, records)
    failed = [r for r in records if r.error]
    if failed:
        for r in failed:
            sys.stderr.write(json.dumps({"status": "error", "error": "CellFailed", "detector": r.detector,
                                         "snr_db": r.snr_db, "sigma_e2": r.sigma_e2, "gamma": r.gamma,
                                         "message": r.error}) + "\n")
        return 3
    return 0


def cmd_oracle(args):
    reports = run_oracles(args.instances, 0 if args.seed is None else args.seed)
    lines = [json.dumps({"check": r.check, "instances": r.instances, "max_error": r.max_error,
                         "failures": r.failures, "passed": r.passed}) for r in reports]
    if args.format == "csv":
        text = "check,instances,max_error,failures,passed\n" + "".join(
            f"{r.check},{r.instances},{r.max_error:.17g},{r.failures},{r.passed}\n" for r in reports)
    else:
        text = "\n".join(lines) + "\n"
    _write_text(args.out, text)
    return 0 if all(r.passed for r in reports) else 4


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "detect": cmd_detect, "eval": cmd_eval,
            "sweep": cmd_sweep, "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="symdet", description="Symbol detection benchmark harness.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--spec", help="experiment spec (JSON)")
        sp.add_argument("--seed", type=int, help="master seed, overrides the spec")
        sp.add_argument("--out", help="output path (default: stdout)")
        sp.add_argument("--format", choices=("csv", "jsonl"), default="csv")
        sp.add_argument("--checkpoint", help="model checkpoint path")
        sp.add_argument("--detector", help="detector name")
        if name == "detect":
            sp.add_argument("--input", help="CSV with y or y_1..y_N columns")
        if name == "sweep":
            sp.add_argument("--workers", type=int, default=None)
        if name == "oracle":
            sp.add_argument("--instances", type=int, default=200)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        return _fail("SpecError", "seed must be an unsigned 64-bit integer")
    try:
        return COMMANDS[args.command](args) or 0
    except (CliError, SpecError, CheckpointError, ValueError, OSError, KeyError) as exc:
        return _fail(type(exc).__name__, str(exc))


def _fail(kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"status": "error", "error": kind, "message": message}) + "\n")
    return 2


if __name__ == "__main__":
    sys.exit(main())
