"""
Plot-ready CSV files with fixed column orders.

Numbers are written without locale: integers as digits, floats in their shortest
round-trip form, missing values as empty fields.
"""

import csv
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

from right_reasons.errors.harness import DriverError

HISTORY_COLUMNS = (
    "epoch", "total", "right_answers", "right_reasons", "regular", "raw_right_reasons", "train_accuracy", "test_accuracy",
)
BENCH_COLUMNS = ("method", "dataset", "D", "samples", "mean_s", "std_s")
SAMPLE_SWEEP_COLUMNS = ("samples", "mean_s", "fitted_s")
EXPLAIN_SUMMARY_COLUMNS = ("target", "cutoff", "examples", "mean_selected_fraction", "corner_share", "top_middle_share")
SURROGATE_COLUMNS = ("example", "method", "rank", "unit", "weight")
FIDELITY_COLUMNS = ("example", "predicted_class", "joint_features", "sign_agreement", "surrogate_score", "degenerate")
STABILITY_COLUMNS = ("method", "runs", "units", "samples", "mean_jaccard")
FAE_COLUMNS = (
    "iteration", "lambda1", "train_accuracy", "test_accuracy", "mask_fraction", "new_mask_fraction", "annotated_fraction",
    "corner_share", "top_middle_share",
)
LAMBDA_SWEEP_COLUMNS = (
    "lambda1", "initial_right_answers", "initial_right_reasons", "initial_ratio", "final_right_answers", "final_right_reasons",
    "final_raw_right_reasons", "final_ratio", "train_accuracy", "test_accuracy",
)
DATA_EFFICIENCY_COLUMNS = ("variant", "n", "lambda1", "lambda1_fallback", "train_accuracy", "test_accuracy")
BOUNDARY_FIELD_COLUMNS = (
    "x1", "x2", "predicted_class", "prob_grad_x1", "prob_grad_x2", "logprob_grad_x1", "logprob_grad_x2",
)
CONFOUND_COLUMNS = ("variant", "seed", "train_accuracy", "test_accuracy", "test_accuracy_without_confound")
CONFOUND_SUMMARY_COLUMNS = ("variant", "metric", "mean", "std", "runs")
RULE_TRANSITION_COLUMNS = (
    "lambda1", "annotated", "pinned", "corner_share", "top_middle_share", "train_accuracy", "test_accuracy",
)


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(float(value))
    if hasattr(value, "item"):
        return format_value(value.item())
    return str(value)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    """
    Writes rows keyed by column name in the given column order.

    Raises:
        DriverError: If a row lacks a column or carries an unknown one.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if set(row) != set(columns):
                msg = f"Row keys {sorted(row)} do not match the columns of {path.name}: {list(columns)}"
                raise DriverError(msg)
            writer.writerow([format_value(row[column]) for column in columns])
    return path


def read_csv(path: Path) -> list[dict[str, str]]:
    with path.open(newline="") as f:
        return list(csv.DictReader(f))
