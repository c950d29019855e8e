"""Dataset and state file formats.

Two interchangeable dataset formats are supported:

* structured JSON: {"k": 2, "counts": {"xz": {"++": 137, "+-": 12, ...}, ...}}
* tabular CSV with header setting,outcome,count, settings as k-letter strings
  over xyz and outcomes as k-letter strings over +-.

The tabular form is authoritative for interchange.  Loading validates the
dataset invariants; per-setting repetition counts are inferred from row sums.
Incomplete datasets (missing settings) load with the incomplete flag set.
"""

from __future__ import annotations

import csv
import io as _io
import json
from pathlib import Path

import numpy as np

from .pauli import CountsDataset, all_outcomes, all_settings, outcome_index, validate_setting
from .states import DensityMatrix


class ValidationError(ValueError):
    """A file violated the dataset format or the dataset invariants."""


def _validate_outcome(outcome: str, k: int) -> None:
    if len(outcome) != k or any(ch not in "+-" for ch in outcome):
        raise ValidationError(f"invalid outcome {outcome!r} for k={k}")


def _build_dataset(k: int, cells: dict[str, dict[str, int]]) -> CountsDataset:
    counts = {}
    for setting, row in cells.items():
        try:
            validate_setting(setting, k)
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
        vec = np.zeros(2**k, dtype=np.int64)
        for outcome, value in row.items():
            _validate_outcome(outcome, k)
            if not float(value).is_integer() or value < 0:
                raise ValidationError(
                    f"count for ({setting}, {outcome}) must be a non-negative integer, got {value!r}"
                )
            vec[outcome_index(outcome)] = int(value)
        counts[setting] = vec
    try:
        return CountsDataset(k=k, counts=counts)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def _load_json_dataset(text: str) -> CountsDataset:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON dataset: {exc}") from exc
    if not isinstance(doc, dict) or "k" not in doc or "counts" not in doc:
        raise ValidationError('JSON dataset must have "k" and "counts" fields')
    k = doc["k"]
    if not isinstance(k, int) or k < 1:
        raise ValidationError(f'"k" must be a positive integer, got {k!r}')
    if not isinstance(doc["counts"], dict):
        raise ValidationError('"counts" must be an object mapping settings to outcome counts')
    return _build_dataset(k, doc["counts"])


def _load_csv_dataset(text: str) -> CountsDataset:
    reader = csv.reader(_io.StringIO(text))
    rows = [row for row in reader if row and any(field.strip() for field in row)]
    if not rows:
        raise ValidationError("empty dataset file")
    header = [field.strip().lower() for field in rows[0]]
    if header != ["setting", "outcome", "count"]:
        raise ValidationError(f"expected header setting,outcome,count, got {rows[0]!r}")
    cells: dict[str, dict[str, int]] = {}
    k = None
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise ValidationError(f"line {line_no}: expected 3 fields, got {len(row)}")
        setting, outcome, raw = (field.strip() for field in row)
        if k is None:
            k = len(setting)
        if len(setting) != k or len(outcome) != k:
            raise ValidationError(f"line {line_no}: inconsistent qubit count")
        try:
            value = int(raw)
        except ValueError as exc:
            raise ValidationError(f"line {line_no}: count {raw!r} is not an integer") from exc
        per_setting = cells.setdefault(setting, {})
        if outcome in per_setting:
            raise ValidationError(f"line {line_no}: duplicate cell ({setting}, {outcome})")
        per_setting[outcome] = value
    assert k is not None
    return _build_dataset(k, cells)


def load_dataset(path) -> CountsDataset:
    """Load a dataset from either format, sniffing JSON by a leading brace."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if not stripped:
        raise ValidationError(f"{path}: empty file")
    if stripped[0] == "{":
        return _load_json_dataset(text)
    return _load_csv_dataset(text)


def save_dataset(data: CountsDataset, path, fmt: str | None = None) -> None:
    """Write a dataset; fmt is "json" or "csv", default by file extension
    (.json gives JSON, anything else the tabular form)."""
    path = Path(path)
    if fmt is None:
        fmt = "json" if path.suffix.lower() == ".json" else "csv"
    outcomes = all_outcomes(data.k)
    settings = [d for d in all_settings(data.k) if d in data.counts]
    if fmt == "json":
        doc = {
            "k": data.k,
            "counts": {
                d: {o: int(c) for o, c in zip(outcomes, data.counts[d])} for d in settings
            },
        }
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    elif fmt == "csv":
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["setting", "outcome", "count"])
            for d in settings:
                for o, c in zip(outcomes, data.counts[d]):
                    writer.writerow([d, o, int(c)])
    else:
        raise ValueError(f"unknown format {fmt!r}")


def save_state(state: DensityMatrix, path) -> None:
    """Write a density matrix as JSON with separate real and imaginary parts."""
    doc = {
        "dim": state.dim,
        "real": state.matrix.real.tolist(),
        "imag": state.matrix.imag.tolist(),
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_state(path) -> DensityMatrix:
    try:
        doc = json.loads(Path(path).read_text())
        mat = np.array(doc["real"], dtype=float) + 1j * np.array(doc["imag"], dtype=float)
        return DensityMatrix(mat)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: not a valid state file ({exc})") from exc
