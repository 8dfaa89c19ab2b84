"""CSV ingestion and the bundled real-data fixtures.

Row indices are 0-based inside the package; user-facing commands add 1.

Bundled fixtures (classical public datasets, transcribed from the R
distribution's ``datasets`` and ``MASS``/``robustbase`` tables):

* ``stackloss`` -- Brownlee's stack loss plant data, 21 runs, three
  predictors (air flow, water temperature, acid concentration).
* ``star`` -- Hertzsprung-Russell data for the star cluster CYG OB1, 47
  stars, log surface temperature vs log light intensity.
* ``brain-body`` -- average body (kg) and brain (g) weights of 28 animals
  (MASS ``Animals``), fitted on the log10-log10 scale.
* ``ar2000`` -- the 60 x 3 artificial data set of Atkinson and Riani
  (2000).  It is not redistributed here; place it at
  ``<package>/data/ar2000.csv`` (columns X1, X2, X3, y) or pass a path.
"""

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import DomainError
from .linalg import RegressionProblem


class DatasetParseError(ValueError):
    """A CSV cell or header could not be parsed; carries its location."""

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class DatasetFile:
    """Which columns of a CSV form the regression, and whether to add 1s."""

    path: str
    response_column: str
    feature_columns: tuple
    intercept: bool = True
    label_column: Optional[str] = None
    transform: Optional[Callable] = field(default=None, compare=False)


@dataclass
class LoadedDataset:
    problem: RegressionProblem
    labels: list
    feature_names: list
    source: DatasetFile


def read_table(path):
    """Read a headed UTF-8 CSV into (header, rows of strings)."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DatasetParseError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetParseError(f"{path} is empty; a header row is required") from None
        header = [h.strip() for h in header]
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetParseError(
                    f"expected {len(header)} fields, found {len(row)}", row=line_no)
            rows.append((line_no, row))
    return header, rows


def _column(header, name):
    try:
        return header.index(name)
    except ValueError:
        raise DatasetParseError(f"no column named {name!r}; header is {header}") from None


def load_dataset(spec):
    """Parse ``spec.path`` into a RegressionProblem.

    Every selected cell must parse as a float; the error names the CSV
    line number (header is line 1) and the column.
    """
    header, rows = read_table(spec.path)
    cols = [_column(header, c) for c in spec.feature_columns]
    ycol = _column(header, spec.response_column)
    lcol = _column(header, spec.label_column) if spec.label_column else None
    X = np.empty((len(rows), len(cols)))
    y = np.empty(len(rows))
    labels = []
    for r, (line_no, row) in enumerate(rows):
        for j, c in enumerate(cols + [ycol]):
            cell = row[c].strip()
            try:
                val = float(cell)
            except ValueError:
                raise DatasetParseError(f"cannot parse {cell!r} as a number",
                                        row=line_no, column=header[c]) from None
            if not math.isfinite(val):
                raise DatasetParseError(f"non-finite value {cell!r}", row=line_no,
                                        column=header[c])
            if j < len(cols):
                X[r, j] = val
            else:
                y[r] = val
        labels.append(row[lcol].strip() if lcol is not None else str(r + 1))
    if spec.transform is not None:
        X, y = spec.transform(X, y)
    names = list(spec.feature_columns)
    if spec.intercept:
        X = np.column_stack([np.ones(len(y)), X])
        names = ["(intercept)"] + names
    if X.shape[0] < X.shape[1] + 1:
        raise DomainError(f"{X.shape[0]} rows is too few for {X.shape[1]} columns")
    return LoadedDataset(RegressionProblem(y, X), labels, names, spec)


def write_problem_csv(path, problem, feature_names=None, response_name="y"):
    """Write y and X with 17 significant digits (exact float round trip)."""
    p = problem.p
    names = list(feature_names) if feature_names else [f"x{j + 1}" for j in range(p)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names + [response_name])
        for i in range(problem.n):
            w.writerow([f"{v:.17g}" for v in problem.X[i]] + [f"{problem.y[i]:.17g}"])
    return DatasetFile(str(path), response_name, tuple(names), intercept=False)


def _log10_both(X, y):
    if np.any(X <= 0) or np.any(y <= 0):
        raise DomainError("log-log transform needs positive values")
    return np.log10(X), np.log10(y)


def _data_path(filename):
    return str(resources.files("rrtgard") / "data" / filename)


@dataclass(frozen=True)
class BuiltinDataset:
    name: str
    filename: str
    response: str
    features: tuple
    intercept: bool
    label_column: Optional[str] = None
    transform: Optional[Callable] = field(default=None, compare=False)
    note: str = ""

    def file_spec(self, path=None, intercept=None):
        return DatasetFile(
            path or _data_path(self.filename), self.response, self.features,
            self.intercept if intercept is None else intercept,
            self.label_column, self.transform)


BUILTIN = {
    "stackloss": BuiltinDataset(
        "stackloss", "stackloss.csv", "stack_loss", ("air_flow", "water_temp", "acid_conc"),
        intercept=True, note="21 x 3, fitted with an intercept"),
    "star": BuiltinDataset(
        "star", "stars_cyg.csv", "log_light", ("log_te",), intercept=False,
        note="47 x 1, fitted through the origin by default"),
    "brain-body": BuiltinDataset(
        "brain-body", "brain_body.csv", "brain", ("body",), intercept=True,
        label_column="animal", transform=_log10_both,
        note="28 animals, log10(brain) on log10(body) with an intercept"),
    "ar2000": BuiltinDataset(
        "ar2000", "ar2000.csv", "y", ("X1", "X2", "X3"), intercept=False,
        note="60 x 3, user supplied"),
}


def load_builtin(name, path=None, intercept=None):
    """Load a bundled dataset by name; ``intercept=None`` keeps its default."""
    try:
        ds = BUILTIN[name]
    except KeyError:
        raise DomainError(f"unknown dataset {name!r}; choose from {sorted(BUILTIN)}") from None
    spec = ds.file_spec(path, intercept)
    if not Path(spec.path).exists():
        raise FileNotFoundError(
            f"dataset {name!r} is not bundled; supply it at {spec.path} or pass a path")
    return load_dataset(spec)
