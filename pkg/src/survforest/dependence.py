"""Variable dependence, partial dependence, surfaces and conditional (coplot) grids.

All outputs are long-format tables with columns ``kind, xvar, x, level,
time, time_label, group, yhat, row_id, status``. Variable dependence uses
OOB predictions for the observed rows; partial dependence overwrites the
variable in every row and averages full-ensemble predictions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .dataset import Frame, GroupAssignment
from .errors import DomainError, ValidationError
from .forest import Forest
from .forest import _kernels as K
from .inference import encode_for, predict_oob

COLUMNS = ["kind", "xvar", "x", "level", "time", "time_label", "group", "yhat", "row_id",
           "status"]


@dataclass(frozen=True, eq=False)
class DependenceGrid:
    records: pd.DataFrame
    boxes: pd.DataFrame | None = None

    def __len__(self):
        return len(self.records)


def time_label(t: float) -> str:
    """Display label for a time slice: ``1 Year``, ``3 Years``, ``0.5 Years``."""
    return f"{t:g} Year" if t == 1 else f"{t:g} Years"


def time_positions(event_times: np.ndarray, times) -> np.ndarray:
    """Grid index of the largest event time not exceeding each request (-1 before the first).

    Requests beyond the last event time are clamped to it with a warning.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if (times <= 0).any():
        raise DomainError("times must be positive")
    if (times > event_times[-1]).any():
        warnings.warn(f"times beyond the last event time {event_times[-1]:g} were clamped",
                      stacklevel=3)
    return np.searchsorted(event_times, times, side="right") - 1


def grid_points(values, npts: int) -> np.ndarray:
    """``npts`` points spread evenly over the sorted distinct non-missing values.

    Point ``k`` is the distinct value at index ``floor(k (m - 1) / (npts - 1))``
    for ``m`` distinct values; when ``npts`` exceeds ``m`` every value is used.
    """
    if npts < 2:
        raise DomainError("npts must be at least 2")
    v = np.asarray(values, dtype=float)
    u = np.unique(v[~np.isnan(v)])
    if len(u) == 0:
        raise DomainError("variable has no observed values")
    if npts > len(u):
        warnings.warn(f"npts={npts} exceeds the {len(u)} distinct values; using all of them",
                      stacklevel=3)
        return u
    return u[np.unique(np.floor(np.linspace(0, len(u) - 1, npts)).astype(int))]


def _level_info(forest: Forest, xvar: str):
    names = [v.name for v in forest.variables]
    if xvar not in names:
        raise ValidationError(f"unknown variable {xvar!r}; known: {', '.join(names)}")
    j = names.index(xvar)
    return j, forest.variables[j]


def _x_columns(spec, x):
    if spec.is_categorical:
        x = np.asarray(x)
        return x.astype(float), [spec.levels[int(i)] if not np.isnan(i) else None for i in x]
    return np.asarray(x, dtype=float), [None] * len(x)


def variable_dependence(forest: Forest, frame: Frame | None = None, xvars=None,
                        times=(1.0,)) -> DependenceGrid:
    """OOB survival of every row at each time slice, paired with the row's variable value."""
    frame = forest.train if frame is None else frame
    xvars = [xvars] if isinstance(xvars, str) else list(xvars or frame.names)
    specs = [_level_info(forest, xv) for xv in xvars]
    pos = time_positions(forest.event_times, times)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ens = predict_oob(forest, frame)
    rows = np.flatnonzero(ens.has_curve)
    yhat = np.where(pos[None, :] >= 0, ens.curves[:, np.maximum(pos, 0)], 1.0)
    parts = []
    for xv, (j, spec) in zip(xvars, specs):
        x, level = _x_columns(spec, frame.x[rows, j])
        for c, t in enumerate(np.atleast_1d(times)):
            parts.append(pd.DataFrame({
                "kind": "variable", "xvar": xv, "x": x, "level": level, "time": float(t),
                "time_label": time_label(float(t)), "group": None, "yhat": yhat[rows, c],
                "row_id": rows, "status": frame.status[rows].astype(int)}))
    return DependenceGrid(pd.concat(parts, ignore_index=True)[COLUMNS])


def variable_coplot_data(forest: Forest, frame: Frame | None, xvar: str,
                         groups: GroupAssignment, times=(1.0,)) -> DependenceGrid:
    """Variable dependence records tagged with each row's group label."""
    frame = forest.train if frame is None else frame
    if len(groups.membership) != frame.n:
        raise ValidationError("grouping length does not match the frame")
    grid = variable_dependence(forest, frame, [xvar], times)
    rec = grid.records
    labels = groups.label_of()
    rec["group"] = [labels[i] for i in rec["row_id"]]
    return DependenceGrid(rec)


def _partial(forest: Forest, x: np.ndarray, rows: np.ndarray, over_vars, over_vals, pos):
    """Per-row ensemble survival, shape points x rows x times."""
    sel = np.maximum(pos, 0).astype(np.int64)
    out = K.partial_predictions(*forest.kernel_args(), sel, np.ascontiguousarray(x[rows]),
                                rows.astype(np.int64), np.asarray(over_vars, dtype=np.int64),
                                np.ascontiguousarray(over_vals, dtype=float),
                                forest.config.seed)
    out[:, :, pos < 0] = 1.0
    return out


def _population(forest: Forest, frame: Frame, js, rows=None):
    x, _ = encode_for(forest, frame)
    present = ~np.isnan(x[:, js]).any(axis=1)
    if rows is not None:
        keep = np.zeros(frame.n, dtype=bool)
        keep[rows] = True
        present &= keep
    rows = np.flatnonzero(present)
    if len(rows) == 0:
        raise DomainError("no rows with the variable observed")
    return x, rows


def _points(forest, frame, j, spec, npts, points):
    if points is not None:
        return np.asarray(points, dtype=float)
    if spec.is_categorical:
        return np.arange(len(spec.levels), dtype=float)
    x, _ = encode_for(forest, frame)
    return grid_points(x[:, j], npts)


def _five_numbers(per_row, xs, level, times, xvar, group=None):
    recs = []
    for g in range(per_row.shape[0]):
        for c, t in enumerate(times):
            q = np.quantile(per_row[g, :, c], [0.0, 0.25, 0.5, 0.75, 1.0])
            recs.append({"xvar": xvar, "x": xs[g], "level": level[g], "time": float(t),
                         "time_label": time_label(float(t)), "group": group, "min": q[0],
                         "q1": q[1], "median": q[2], "q3": q[3], "max": q[4]})
    return recs


def partial_dependence(forest: Forest, frame: Frame | None = None, xvar: str = "",
                       times=(1.0,), npts: int = 25, points=None, rows=None,
                       group: str | None = None) -> DependenceGrid:
    """Population-averaged survival with ``xvar`` set to each grid value.

    For every grid value ``x`` the variable is overwritten in each row and
    the full-ensemble survival at each time is averaged over the rows
    (rows missing ``xvar`` are left out). Categorical variables use one
    point per level and also return five-number summaries of the per-row
    predictions.
    """
    frame = forest.train if frame is None else frame
    j, spec = _level_info(forest, xvar)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    pos = time_positions(forest.event_times, times)
    pts = _points(forest, frame, j, spec, npts, points)
    x, rows = _population(forest, frame, [j], rows)
    per_row = _partial(forest, x, rows, [j], pts[:, None], pos)
    yhat = per_row.mean(axis=1)
    xs, level = _x_columns(spec, pts)
    recs = pd.DataFrame({
        "kind": "partial", "xvar": xvar, "x": np.repeat(xs, len(times)),
        "level": np.repeat(np.array(level, dtype=object), len(times)),
        "time": np.tile(times, len(pts)),
        "time_label": [time_label(t) for t in np.tile(times, len(pts))],
        "group": group, "yhat": yhat.ravel(), "row_id": None, "status": None})
    boxes = None
    if spec.is_categorical:
        boxes = pd.DataFrame(_five_numbers(per_row, xs, level, times, xvar, group))
    return DependenceGrid(recs[COLUMNS], boxes)


def partial_coplot(forest: Forest, frame: Frame | None, xvar: str, groups: GroupAssignment,
                   time: float = 1.0, npts: int = 25) -> DependenceGrid:
    """Partial dependence computed separately within each group of rows.

    All groups share the x grid of the full frame; empty groups are skipped.
    """
    frame = forest.train if frame is None else frame
    if len(groups.membership) != frame.n:
        raise ValidationError("grouping length does not match the frame")
    j, spec = _level_info(forest, xvar)
    pts = _points(forest, frame, j, spec, npts, None)
    recs, boxes = [], []
    for g, label in enumerate(groups.labels):
        member = groups.rows(g)
        member = member[~np.isnan(frame.x[member, frame.index(xvar)])]
        if len(member) == 0:
            warnings.warn(f"group {label!r} is empty and was omitted", stacklevel=2)
            continue
        grid = partial_dependence(forest, frame, xvar, [time], points=pts, rows=member,
                                  group=label)
        recs.append(grid.records)
        if grid.boxes is not None:
            boxes.append(grid.boxes)
    if not recs:
        raise DomainError("every group is empty")
    return DependenceGrid(pd.concat(recs, ignore_index=True),
                          pd.concat(boxes, ignore_index=True) if boxes else None)


def surface_times(event_times: np.ndarray, n: int = 50, anchors=()) -> np.ndarray:
    """``n`` event times picked like partial-dependence points, with anchors snapped in.

    Each anchor resolves to the largest event time not exceeding it; if that
    time was not picked it replaces the nearest picked time, so slices at the
    anchors line up with separately computed curves.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        picked = grid_points(event_times, n)
    picked = picked.copy()
    snapped = set()
    for a in anchors:
        i = np.searchsorted(event_times, a, side="right") - 1
        if i < 0:
            continue
        t = event_times[i]
        if t in picked:
            snapped.add(float(t))
            continue
        free = [k for k in range(len(picked)) if float(picked[k]) not in snapped]
        k = min(free, key=lambda k: (abs(picked[k] - t), k))
        picked[k] = t
        snapped.add(float(t))
        picked.sort()
    return picked


def partial_surface(forest: Forest, frame: Frame | None = None, xvar: str = "",
                    axis2: str = "time", npts: int = 50, n_axis2: int = 50,
                    times=(1.0,), anchors=()) -> DependenceGrid:
    """Partial dependence over a two-dimensional grid.

    With ``axis2="time"`` the second axis is ``n_axis2`` event times chosen
    by :func:`surface_times`; otherwise ``axis2`` names a second variable that
    is overwritten jointly with ``xvar`` and the surface is reported at each
    of ``times``. Bivariate records carry the second variable in ``xvar2``
    and ``x2``.
    """
    frame = forest.train if frame is None else frame
    j, spec = _level_info(forest, xvar)
    pts = _points(forest, frame, j, spec, npts, None)
    if axis2 == "time":
        ts = surface_times(forest.event_times, n_axis2, anchors)
        return partial_dependence(forest, frame, xvar, ts, points=pts)
    if axis2 == xvar:
        raise ValidationError("surface axes must be different variables")
    j2, spec2 = _level_info(forest, axis2)
    pts2 = _points(forest, frame, j2, spec2, n_axis2, None)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    pos = time_positions(forest.event_times, times)
    x, rows = _population(forest, frame, [j, j2])
    mesh = np.array([(a, b) for a in pts for b in pts2])
    yhat = _partial(forest, x, rows, [j, j2], mesh, pos).mean(axis=1)
    xs, level = _x_columns(spec, mesh[:, 0])
    x2, level2 = _x_columns(spec2, mesh[:, 1])
    rep = lambda a: np.repeat(np.asarray(a, dtype=object if isinstance(a, list) else None),
                              len(times))
    recs = pd.DataFrame({
        "kind": "partial", "xvar": xvar, "x": rep(xs), "level": rep(level),
        "time": np.tile(times, len(mesh)),
        "time_label": [time_label(t) for t in np.tile(times, len(mesh))],
        "group": None, "yhat": yhat.ravel(), "row_id": None, "status": None,
        "xvar2": axis2, "x2": rep(x2), "level2": rep(level2)})
    return DependenceGrid(recs)
