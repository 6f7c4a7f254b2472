"""Survival data frames: loading, type inference, missingness and grouping.

A :class:`Frame` stores every predictor as a column of ``float64`` with NaN
marking a missing cell. Categorical and boolean columns hold the integer
index of their level, so the whole predictor block is one numeric matrix
that the tree kernels can consume directly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, ParseError, ValidationError

CONTINUOUS = "continuous"
ORDERED = "ordered-categorical"
UNORDERED = "unordered-categorical"
BOOLEAN = "boolean"
KINDS = (CONTINUOUS, ORDERED, UNORDERED, BOOLEAN)

_TRUE_TOKENS = {"TRUE", "True", "true", "T", "1"}
_FALSE_TOKENS = {"FALSE", "False", "false", "F", "0"}

# offset applied to the lowest quantile break so the minimum lands in group 0
LOWEST_BREAK_EPS = 1e-7


@dataclass(frozen=True)
class VariableSpec:
    name: str
    kind: str = CONTINUOUS
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown variable kind {self.kind!r} for {self.name!r}")
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
        if self.is_categorical and not self.levels:
            raise ValidationError(f"categorical variable {self.name!r} needs levels")
        if not self.is_categorical and self.levels:
            raise ValidationError(f"continuous variable {self.name!r} cannot carry levels")
        if len(set(self.levels)) != len(self.levels):
            raise ValidationError(f"duplicate levels for {self.name!r}")

    @property
    def is_categorical(self) -> bool:
        return self.kind != CONTINUOUS

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.levels:
            d["levels"] = list(self.levels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VariableSpec":
        return cls(d["name"], d.get("kind", CONTINUOUS), tuple(d.get("levels", ())))


@dataclass(frozen=True, eq=False)
class Frame:
    """Immutable survival dataset.

    Attributes
    ----------
    variables : tuple of VariableSpec
        Predictor metadata, in column order.
    x : ndarray, shape (n, p)
        Predictor values; NaN marks a missing cell, categorical cells hold
        level indices.
    time, status : ndarray, shape (n,)
        Follow-up time and event indicator. Never missing.
    """

    variables: tuple[VariableSpec, ...]
    x: np.ndarray
    time: np.ndarray
    status: np.ndarray
    time_name: str = "time"
    status_name: str = "status"
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64, copy=True)
        if x.ndim == 1 and len(self.variables) == 0:
            x = x.reshape(len(x), 0)
        time = np.array(self.time, dtype=np.float64, copy=True)
        status = np.array(self.status, dtype=bool, copy=True)
        n = len(time)
        if x.shape != (n, len(self.variables)):
            raise ValidationError(
                f"predictor block has shape {x.shape}, expected {(n, len(self.variables))}")
        if len(status) != n:
            raise ValidationError("time and status lengths differ")
        if np.isnan(time).any():
            raise ValidationError("response time has missing cells")
        if (time < 0).any():
            raise ValidationError("response time must be non-negative")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValidationError("variable names must be unique")
        if {self.time_name, self.status_name} & set(names):
            raise ValidationError("response columns cannot also be predictors")
        for j, spec in enumerate(self.variables):
            if spec.is_categorical:
                col = x[:, j]
                ok = np.isnan(col) | ((col >= 0) & (col < len(spec.levels)) & (col == np.floor(col)))
                if not ok.all():
                    raise ValidationError(f"invalid level index in column {spec.name!r}")
        for a in (x, time, status):
            a.setflags(write=False)
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "status", status)
        object.__setattr__(self, "_index", {nm: j for j, nm in enumerate(names)})

    @property
    def n(self) -> int:
        return len(self.time)

    @property
    def p(self) -> int:
        return len(self.variables)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.x)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ValidationError(
                f"unknown variable {name!r}; known variables: {', '.join(self.names)}") from None

    def spec(self, name: str) -> VariableSpec:
        return self.variables[self.index(name)]

    def column(self, name: str) -> np.ndarray:
        return self.x[:, self.index(name)]

    def labels(self, name: str) -> list:
        """Column values decoded to labels (categorical) or floats; None if missing."""
        spec = self.spec(name)
        col = self.column(name)
        if spec.is_categorical:
            return [None if np.isnan(v) else spec.levels[int(v)] for v in col]
        return [None if np.isnan(v) else float(v) for v in col]

    def subset(self, rows) -> "Frame":
        rows = np.asarray(rows)
        return Frame(self.variables, self.x[rows], self.time[rows], self.status[rows],
                     self.time_name, self.status_name)

    def with_values(self, name: str, values) -> "Frame":
        """Copy of the frame with one predictor column replaced."""
        x = self.x.copy()
        x[:, self.index(name)] = values
        return Frame(self.variables, x, self.time, self.status, self.time_name, self.status_name)

    def equals(self, other: "Frame") -> bool:
        return (self.variables == other.variables
                and self.time_name == other.time_name
                and self.status_name == other.status_name
                and np.array_equal(self.x, other.x, equal_nan=True)
                and np.array_equal(self.time, other.time)
                and np.array_equal(self.status, other.status))


@dataclass(frozen=True, eq=False)
class GroupAssignment:
    """Partition of rows into labeled groups; ``membership`` is -1 for rows in no group."""

    variable: str
    labels: tuple[str, ...]
    membership: np.ndarray
    breaks: tuple[float, ...] | None = None
    levels: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        m = np.asarray(self.membership, dtype=np.int64)
        if len(self.labels) < 2:
            raise DomainError("a grouping needs at least two groups")
        if ((m < -1) | (m >= len(self.labels))).any():
            raise ValidationError("group membership index out of range")
        if self.breaks is not None and np.any(np.diff(self.breaks) <= 0):
            raise DomainError("breaks must be strictly ascending")
        m.setflags(write=False)
        object.__setattr__(self, "membership", m)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n_groups(self) -> int:
        return len(self.labels)

    def rows(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.membership == g)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.membership[self.membership >= 0], minlength=self.n_groups)

    def label_of(self) -> list:
        return [None if g < 0 else self.labels[g] for g in self.membership]


# ---------------------------------------------------------------- loading

def _parse_bool(token: str, line: int, name: str) -> float:
    if token in _TRUE_TOKENS:
        return 1.0
    if token in _FALSE_TOKENS:
        return 0.0
    raise ParseError(f"cannot parse {token!r} as boolean in column {name!r}", line)


def _is_float(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _infer_spec(name: str, cells: list[str | None]) -> VariableSpec:
    present = [c for c in cells if c is not None]
    if all(_is_float(c) for c in present):
        return VariableSpec(name, CONTINUOUS)
    levels = list(dict.fromkeys(present))
    if len(levels) == 2:
        if set(levels) <= (_TRUE_TOKENS | _FALSE_TOKENS) and not set(levels) <= {"0", "1"}:
            false = next(lv for lv in levels if lv in _FALSE_TOKENS)
            true = next(lv for lv in levels if lv in _TRUE_TOKENS)
            return VariableSpec(name, BOOLEAN, (false, true))
        return VariableSpec(name, BOOLEAN, tuple(levels))
    return VariableSpec(name, UNORDERED, tuple(levels))


def _encode(spec: VariableSpec, cells: list[str | None], lines: list[int]) -> np.ndarray:
    out = np.full(len(cells), np.nan)
    if spec.kind == CONTINUOUS:
        for i, c in enumerate(cells):
            if c is None:
                continue
            try:
                out[i] = float(c)
            except ValueError:
                raise ParseError(f"non-numeric value {c!r} in numeric column {spec.name!r}",
                                 lines[i]) from None
        return out
    lookup = {lv: k for k, lv in enumerate(spec.levels)}
    if spec.kind == BOOLEAN and set(spec.levels) == {"FALSE", "TRUE"}:
        for tok in _TRUE_TOKENS:
            lookup.setdefault(tok, spec.levels.index("TRUE"))
        for tok in _FALSE_TOKENS:
            lookup.setdefault(tok, spec.levels.index("FALSE"))
    for i, c in enumerate(cells):
        if c is None:
            continue
        if c not in lookup:
            raise ParseError(f"unknown level {c!r} for column {spec.name!r}", lines[i])
        out[i] = lookup[c]
    return out


def read_frame(text: str | io.TextIOBase, *, schema: Sequence[VariableSpec] | None = None,
               time_col: str = "time", status_col: str = "status", na_token: str = "NA",
               delimiter: str = ",", predictors: Sequence[str] | None = None) -> Frame:
    """Parse delimited text into a :class:`Frame` (see :func:`load_frame`)."""
    stream = io.StringIO(text) if isinstance(text, str) else text
    reader = csv.reader(stream, delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("missing header row", 1) from None
    header = [h.strip() for h in header]
    width = len(header)
    for col in (time_col, status_col):
        if col not in header:
            raise ValidationError(f"response column {col!r} not found in header")

    rows, lines = [], []
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != width:
            raise ParseError(f"expected {width} fields, found {len(row)}", line)
        rows.append(row)
        lines.append(line)

    columns = {h: [None if c == na_token else c for c in (r[j] for r in rows)]
               for j, h in enumerate(header)}

    if schema is not None:
        specs = list(schema)
        unknown = [s.name for s in specs if s.name not in header]
        if unknown:
            raise ValidationError(f"schema names not in header: {', '.join(unknown)}")
    else:
        names = predictors if predictors is not None else [
            h for h in header if h not in (time_col, status_col)]
        for nm in names:
            if nm not in header:
                raise ValidationError(f"unknown column {nm!r}")
        specs = [_infer_spec(nm, columns[nm]) for nm in names]

    n = len(rows)
    x = np.empty((n, len(specs)))
    for j, spec in enumerate(specs):
        x[:, j] = _encode(spec, columns[spec.name], lines)

    time = np.empty(n)
    status = np.empty(n, dtype=bool)
    for i in range(n):
        t, s = columns[time_col][i], columns[status_col][i]
        if t is None:
            raise ValidationError(f"line {lines[i]}: missing response time")
        if s is None:
            raise ValidationError(f"line {lines[i]}: missing response status")
        try:
            time[i] = float(t)
        except ValueError:
            raise ParseError(f"non-numeric time {t!r}", lines[i]) from None
        if time[i] < 0 or math.isnan(time[i]):
            raise ValidationError(f"line {lines[i]}: response time must be non-negative")
        status[i] = _parse_bool(s, lines[i], status_col) == 1.0
    return Frame(tuple(specs), x, time, status, time_col, status_col)


def load_frame(path: str | Path, schema: Sequence[VariableSpec] | None = None,
               na_token: str = "NA", *, time_col: str = "time", status_col: str = "status",
               delimiter: str = ",") -> Frame:
    """Load a delimited survival file.

    Parameters
    ----------
    path : path-like
        File with a header row.
    schema : sequence of VariableSpec, optional
        Predictor types. When omitted, every non-response column is a
        predictor and its type is inferred: numeric if every present cell
        parses as a number, boolean if it has exactly two distinct labels,
        otherwise unordered-categorical with levels in order of first
        appearance.
    na_token : str
        Cell text that marks a missing value.
    time_col, status_col : str
        Names of the response columns.

    Raises
    ------
    ParseError
        Malformed row or unparseable value; the message names the line.
    ValidationError
        Missing response cell or schema/header mismatch.
    """
    with open(path, newline="") as fh:
        return read_frame(fh, schema=schema, time_col=time_col, status_col=status_col,
                          na_token=na_token, delimiter=delimiter)


def write_frame(frame: Frame, path_or_buf, *, na_token: str = "NA", delimiter: str = ","):
    """Write a frame so that :func:`load_frame` with the same schema reproduces it."""
    own = isinstance(path_or_buf, (str, Path))
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow([frame.time_name, frame.status_name] + frame.names)
        for i in range(frame.n):
            row = [repr(float(frame.time[i])), "TRUE" if frame.status[i] else "FALSE"]
            for j, spec in enumerate(frame.variables):
                v = frame.x[i, j]
                if np.isnan(v):
                    row.append(na_token)
                elif spec.is_categorical:
                    row.append(spec.levels[int(v)])
                else:
                    row.append(repr(float(v)))
            w.writerow(row)
    finally:
        if own:
            fh.close()


def read_schema(path: str | Path) -> dict:
    """Read a JSON schema document: ``{time, status, na_token, variables: [...]}``."""
    with open(path) as fh:
        doc = json.load(fh)
    doc["variables"] = [VariableSpec.from_dict(d) for d in doc["variables"]]
    return doc


# ---------------------------------------------------------------- bundled data

def load_pbc() -> Frame:
    """The bundled 418-row PBC data (times in years, treatment as DPCA/placebo)."""
    base = resources.files("survforest") / "data"
    with resources.as_file(base / "pbc_schema.json") as sp:
        doc = read_schema(sp)
    with resources.as_file(base / "pbc.csv") as dp:
        return load_frame(dp, doc["variables"], doc.get("na_token", "NA"),
                          time_col=doc["time"], status_col=doc["status"])


def split_trial(frame: Frame, variable: str = "treatment") -> tuple[Frame, Frame]:
    """Split into (trial, test): trial rows are those with ``variable`` present."""
    present = ~np.isnan(frame.column(variable))
    return frame.subset(np.flatnonzero(present)), frame.subset(np.flatnonzero(~present))


# ---------------------------------------------------------------- summaries

def missing_census(frame: Frame) -> list[tuple[str, int]]:
    """Variables with at least one missing cell, by descending count then column order."""
    counts = frame.missing.sum(axis=0)
    order = sorted((j for j in range(frame.p) if counts[j] > 0), key=lambda j: (-counts[j], j))
    return [(frame.variables[j].name, int(counts[j])) for j in order]


def quantile(values, probs) -> np.ndarray:
    """Type-7 (linear interpolation) empirical quantiles."""
    v = np.sort(np.asarray(values, dtype=float))
    h = (len(v) - 1) * np.asarray(probs, dtype=float)
    lo = np.floor(h).astype(int)
    hi = np.minimum(lo + 1, len(v) - 1)
    return v[lo] + (h - lo) * (v[hi] - v[lo])


def _interval_label(a: float, b: float) -> str:
    return f"({a:.4g},{b:.4g}]"


def cut_with_breaks(values: Iterable[float], breaks: Sequence[float],
                    variable: str = "") -> GroupAssignment:
    """Assign values to left-open, right-closed intervals ``(b[k], b[k+1]]``.

    Values outside ``(breaks[0], breaks[-1]]`` and missing values get
    membership -1.
    """
    b = np.asarray(breaks, dtype=float)
    if len(b) < 3:
        raise DomainError("need at least three breaks for two groups")
    if np.any(np.diff(b) <= 0):
        raise DomainError("breaks must be strictly ascending")
    v = np.asarray(values, dtype=float)
    g = np.searchsorted(b, v, side="left") - 1
    out = np.isnan(v) | (v <= b[0]) | (v > b[-1])
    g[out] = -1
    labels = tuple(_interval_label(b[k], b[k + 1]) for k in range(len(b) - 1))
    return GroupAssignment(variable, labels, g, breaks=tuple(float(x) for x in b))


def quantile_cuts(values: Iterable[float], groups: int, variable: str = "") -> GroupAssignment:
    """Cut values into ``groups`` intervals of roughly equal population.

    Breaks are type-7 quantiles at ``0, 1/groups, ..., 1`` of the present
    values, with the lowest break lowered by ``LOWEST_BREAK_EPS`` so the
    minimum is included in the first interval.
    """
    if groups < 2:
        raise DomainError("groups must be at least 2")
    v = np.asarray(values, dtype=float)
    present = v[~np.isnan(v)]
    if len(np.unique(present)) < groups:
        raise DomainError(
            f"{len(np.unique(present))} distinct values cannot fill {groups} groups")
    # type-7 positions (m - 1) k / groups, split into exact integer and fractional parts
    v_sorted = np.sort(present)
    m = len(v_sorted)
    k = np.arange(groups + 1)
    lo = (m - 1) * k // groups
    frac = ((m - 1) * k % groups) / groups
    hi = np.minimum(lo + 1, m - 1)
    b = v_sorted[lo] + frac * (v_sorted[hi] - v_sorted[lo])
    b[0] -= LOWEST_BREAK_EPS
    b = np.unique(b)
    if len(b) - 1 < groups:
        warnings.warn(f"tied quantiles reduced {groups} groups to {len(b) - 1}", stacklevel=2)
    return cut_with_breaks(v, b, variable)


def group_by_levels(frame: Frame, name: str) -> GroupAssignment:
    """One group per level of a categorical variable."""
    spec = frame.spec(name)
    if not spec.is_categorical:
        raise ValidationError(f"{name!r} is not categorical; use breaks or quantile cuts")
    col = frame.column(name)
    m = np.where(np.isnan(col), -1, np.nan_to_num(col, nan=-1)).astype(np.int64)
    return GroupAssignment(name, spec.levels, m, levels=tuple((lv,) for lv in spec.levels))
