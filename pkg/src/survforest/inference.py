"""Ensemble predictions, concordance error and grouped survival summaries."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from numba import njit

from .dataset import Frame, GroupAssignment
from .errors import DomainError, ValidationError
from .forest import Forest
from .forest import _kernels as K
from .km import StepCurve


@dataclass(frozen=True, eq=False)
class EnsembleSurvival:
    """Per-row ensemble survival on the forest's event-time grid.

    Rows that received no tree (OOB in zero trees) have NaN curves and
    mortality; ``n_trees`` counts the trees averaged for each row.
    """

    event_times: np.ndarray
    curves: np.ndarray
    mortality: np.ndarray
    n_trees: np.ndarray
    oob: bool
    time: np.ndarray
    status: np.ndarray
    row_mortality: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.curves.shape[0]

    @property
    def has_curve(self) -> np.ndarray:
        return self.n_trees > 0

    def at(self, t) -> np.ndarray:
        """Survival of every row at time(s) ``t`` by right-continuous step lookup."""
        idx = np.searchsorted(self.event_times, np.atleast_1d(np.asarray(t, dtype=float)),
                              side="right") - 1
        out = np.where(idx >= 0, self.curves[:, np.maximum(idx, 0)], 1.0)
        out[~self.has_curve] = np.nan
        return out

    def table(self) -> pd.DataFrame:
        k = len(self.event_times)
        return pd.DataFrame({
            "row_id": np.repeat(np.arange(self.n), k),
            "time": np.tile(self.event_times, self.n),
            "survival": self.curves.ravel(),
            "oob": self.oob,
            "status": np.repeat(self.status.astype(int), k),
        })


@dataclass(frozen=True, eq=False)
class ErrorCurve:
    tree_counts: np.ndarray
    error: np.ndarray

    def table(self) -> pd.DataFrame:
        return pd.DataFrame({"ntree": self.tree_counts, "error": self.error})


@njit(cache=True)
def _mean_over_trees(mort):
    # same accumulation order as the prefix error curve, so endpoints agree bit for bit
    nt, n = mort.shape
    total = np.zeros(n)
    count = np.zeros(n, dtype=np.int64)
    for t in range(nt):
        for i in range(n):
            if not np.isnan(mort[t, i]):
                total[i] += mort[t, i]
                count[i] += 1
    out = np.full(n, np.nan)
    for i in range(n):
        if count[i] > 0:
            out[i] = total[i] / count[i]
    return out, count


def encode_for(forest: Forest, newdata: Frame) -> tuple[np.ndarray, int]:
    """Predictor matrix of ``newdata`` in the forest's column order and level coding.

    Levels unseen in training are coded -1; returns the matrix and how many
    such cells were found.
    """
    x = np.empty((newdata.n, len(forest.variables)))
    unknown = 0
    for j, spec in enumerate(forest.variables):
        try:
            k = newdata.index(spec.name)
        except ValidationError:
            raise ValidationError(f"newdata lacks variable {spec.name!r}") from None
        col = newdata.x[:, k]
        other = newdata.variables[k]
        if spec.is_categorical != other.is_categorical:
            raise ValidationError(f"variable {spec.name!r} changed type")
        if spec.is_categorical and other.levels != spec.levels:
            lookup = {lv: i for i, lv in enumerate(spec.levels)}
            remap = np.array([lookup.get(lv, -1) for lv in other.levels], dtype=float)
            present = ~np.isnan(col)
            col = col.copy()
            col[present] = remap[col[present].astype(int)]
            unknown += int((col[present] < 0).sum())
        x[:, j] = col
    return x, unknown


def _run(forest: Forest, x, use, *, impute=True, want_surv=True, row_ids=None, trees=None):
    sel = np.arange(len(forest.event_times), dtype=np.int64)
    if trees is None:
        trees = np.arange(forest.ntree, dtype=np.int64)
    if row_ids is None:
        row_ids = np.arange(x.shape[0], dtype=np.int64)
    return K.tree_predictions(*forest.kernel_args(), sel, np.ascontiguousarray(x), row_ids,
                              use, forest.config.seed, impute, trees, want_surv)


def _ensemble(forest, x, use, oob, time, status, impute=True) -> EnsembleSurvival:
    surv_sum, mort, bad = _run(forest, x, use, impute=impute)
    if (bad < 0).any():
        raise ValidationError(
            f"{int((bad < 0).sum())} rows have missing split values; predict with impute=True")
    mortality, count = _mean_over_trees(mort)
    with np.errstate(invalid="ignore", divide="ignore"):
        curves = surv_sum / count[:, None]
    curves[count == 0] = np.nan
    return EnsembleSurvival(forest.event_times, curves, mortality, count, oob,
                            np.asarray(time), np.asarray(status), mort)


def _check_training(forest: Forest, frame: Frame):
    if frame.n != forest.n or frame.names != [v.name for v in forest.variables]:
        raise ValidationError("frame does not match the forest's training data")


def predict_oob(forest: Forest, frame: Frame | None = None) -> EnsembleSurvival:
    """Out-of-bag ensemble: row i averages only trees whose bootstrap excluded it."""
    frame = forest.train if frame is None else frame
    _check_training(forest, frame)
    use = forest.inbag == 0
    ens = _ensemble(forest, frame.x, use, True, frame.time, frame.status)
    missing = int((~ens.has_curve).sum())
    if missing:
        warnings.warn(f"{missing} rows are in-bag for every tree and have no OOB curve",
                      stacklevel=2)
    return ens


def predict_inbag(forest: Forest, frame: Frame | None = None) -> EnsembleSurvival:
    """Full-ensemble prediction for the training rows (every tree, no OOB restriction)."""
    frame = forest.train if frame is None else frame
    _check_training(forest, frame)
    use = np.ones((forest.ntree, frame.n), dtype=bool)
    return _ensemble(forest, frame.x, use, False, frame.time, frame.status)


def predict_test(forest: Forest, newdata: Frame, impute: bool = True) -> EnsembleSurvival:
    """Drop new rows down every tree and average the terminal estimates.

    Missing split values are filled from in-node training donors when
    ``impute`` is true; otherwise a missing split value is an error.
    """
    x, unknown = encode_for(forest, newdata)
    if unknown:
        warnings.warn(f"{unknown} cells carry levels unseen in training; "
                      "they were routed to a random daughter", stacklevel=2)
    use = np.ones((forest.ntree, newdata.n), dtype=bool)
    return _ensemble(forest, x, use, False, newdata.time, newdata.status, impute=impute)


def concordance_error(mortality, time, status) -> float:
    """``1 - C`` for Harrell's concordance of mortality scores.

    Pairs (i, j) are permissible when row i died and ``time[i] < time[j]``;
    a pair is concordant when the row that died first has the higher score,
    and tied scores count one half. Rows with NaN scores are ignored.
    """
    m = np.asarray(mortality, dtype=float)
    t = np.asarray(time, dtype=float)
    s = np.asarray(status, dtype=bool)
    if not len(m) == len(t) == len(s):
        raise ValidationError("score, time and status lengths differ")
    num, den = K.concordance(m, t, s, ~np.isnan(m))
    if den == 0:
        raise DomainError("no permissible pairs; concordance is undefined")
    return 1.0 - num / den


def error_curve(forest: Forest, frame: Frame | None = None) -> ErrorCurve:
    """OOB concordance error using the first b trees, for b = 1..ntree."""
    frame = forest.train if frame is None else frame
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ens = predict_oob(forest, frame)
    err = K.prefix_errors(ens.row_mortality, frame.time, frame.status)
    return ErrorCurve(np.arange(1, forest.ntree + 1), err)


def _percentile(a, q, axis):
    return np.quantile(a, q, axis=axis, method="linear")


def grouped_survival(ens: EnsembleSurvival, by: GroupAssignment, conf_level: float = 0.95,
                     bs_samples: int | None = None, seed: int = 0) -> list[StepCurve]:
    """Per-group median survival with a bootstrap percentile band.

    Each of ``bs_samples`` replicates (default: the group size) resamples the
    group's rows with replacement and takes the median curve; the band is
    the ``conf_level`` percentile interval of those medians.
    """
    if len(by.membership) != ens.n:
        raise ValidationError("grouping length does not match the predictions")
    rng = np.random.default_rng(seed)
    lo_q, hi_q = (1 - conf_level) / 2, 1 - (1 - conf_level) / 2
    out = []
    for g, label in enumerate(by.labels):
        rows = by.rows(g)
        rows = rows[ens.has_curve[rows]]
        if len(rows) == 0:
            warnings.warn(f"group {label!r} is empty and was omitted", stacklevel=2)
            continue
        curves = ens.curves[rows]
        med = np.median(curves, axis=0)
        lo = hi = None
        if len(rows) < 2:
            warnings.warn(f"group {label!r} has fewer than 2 rows; band omitted", stacklevel=2)
        else:
            b = len(rows) if bs_samples is None else bs_samples
            idx = rng.integers(0, len(rows), size=(b, len(rows)))
            boot = np.median(curves[idx], axis=1)
            lo = np.minimum(_percentile(boot, lo_q, 0), med)
            hi = np.maximum(_percentile(boot, hi_q, 0), med)
        k = len(ens.event_times)
        out.append(StepCurve(ens.event_times, med, np.full(k, np.nan),
                             np.full(k, len(rows)), np.zeros(k, dtype=int), lo, hi, label))
    if not out:
        raise DomainError(f"every {by.variable!r} group is empty")
    return out


def grouped_table(curves: list[StepCurve]) -> pd.DataFrame:
    parts = [pd.DataFrame({"group": c.group, "time": c.times, "median": c.survival,
                           "lo": c.band_lo if c.band_lo is not None else np.nan,
                           "hi": c.band_hi if c.band_hi is not None else np.nan})
             for c in curves]
    return pd.concat(parts, ignore_index=True)
