"""Experiment engine, result files and the command line interface."""
from .engine import model_based_detector, run_cell, run_sweep, ser_eval
from .oracle import run_oracles
from .results import emit_results, format_results, read_results, write_metadata
from .spec import ExperimentSpec, ResultRecord, SpecError, load_spec, spec_from_dict

__all__ = [
    "model_based_detector", "run_cell", "run_sweep", "ser_eval", "run_oracles", "emit_results",
    "format_results", "read_results", "write_metadata", "ExperimentSpec", "ResultRecord",
    "SpecError", "load_spec", "spec_from_dict",
]
