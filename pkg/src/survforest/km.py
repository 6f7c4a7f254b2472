"""Product-limit survival and Nelson-Aalen cumulative hazard estimates."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np
import pandas as pd

from .dataset import Frame, GroupAssignment
from .errors import DomainError


@dataclass(frozen=True, eq=False)
class StepCurve:
    """Right-continuous step estimates reported at the distinct event times."""

    times: np.ndarray
    survival: np.ndarray
    cum_hazard: np.ndarray
    n_risk: np.ndarray
    n_event: np.ndarray
    band_lo: np.ndarray | None = None
    band_hi: np.ndarray | None = None
    group: str | None = None

    def __len__(self):
        return len(self.times)

    def at(self, t, which: str = "survival"):
        """Evaluate the step function at ``t`` (value before the first time is 1 or 0)."""
        values = getattr(self, which)
        start = 0.0 if which == "cum_hazard" else 1.0
        t = np.asarray(t, dtype=float)
        if not len(values):
            return np.full(t.shape, start)
        idx = np.searchsorted(self.times, t, side="right") - 1
        return np.where(idx >= 0, values[np.maximum(idx, 0)], start)


def _risk_table(time: np.ndarray, status: np.ndarray):
    """Distinct event times with numbers at risk and numbers of events.

    At a tied time events and censorings are both still at risk, so events
    are counted before censorings leave the risk set.
    """
    time = np.asarray(time, dtype=float)
    status = np.asarray(status, dtype=bool)
    ev = np.unique(time[status])
    sorted_t = np.sort(time)
    n_risk = len(time) - np.searchsorted(sorted_t, ev, side="left")
    n_event = np.searchsorted(np.sort(time[status]), ev, side="right") - np.searchsorted(
        np.sort(time[status]), ev, side="left")
    return ev, n_risk.astype(np.int64), n_event.astype(np.int64)


def estimate(time, status, conf_level: float | None = 0.95, group: str | None = None) -> StepCurve:
    """Kaplan-Meier and Nelson-Aalen estimates from raw arrays.

    Bands use Greenwood's variance on the log scale,
    ``S * exp(+-z * sqrt(sum d / (n (n - d))))``, clipped to [0, 1].
    """
    if len(time) == 0:
        raise DomainError("cannot estimate survival from an empty sample")
    ev, n, d = _risk_table(time, status)
    surv = np.cumprod(1.0 - d / n)
    cumhaz = np.cumsum(d / n)
    lo = hi = None
    if conf_level is not None:
        if not 0.0 < conf_level < 1.0:
            raise DomainError("conf_level must lie in (0, 1)")
        z = NormalDist().inv_cdf(0.5 + conf_level / 2.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            gw = np.cumsum(np.where(n > d, d / (n * (n - d)), np.inf))
            se = np.sqrt(gw)
            lo = np.clip(surv * np.exp(-z * se), 0.0, 1.0)
            hi = np.clip(surv * np.exp(z * se), 0.0, 1.0)
        dead = surv == 0.0
        lo[dead] = 0.0
        hi[dead] = 0.0
    return StepCurve(ev, surv, cumhaz, n, d, lo, hi, group)


def _by_group(frame: Frame, by: GroupAssignment | None, conf_level):
    if by is None:
        return [estimate(frame.time, frame.status, conf_level)]
    if len(by.membership) != frame.n:
        raise DomainError("grouping length does not match the frame")
    curves = []
    for g, label in enumerate(by.labels):
        rows = by.rows(g)
        if len(rows) == 0:
            warnings.warn(f"group {label!r} is empty and was omitted", stacklevel=3)
            continue
        curves.append(estimate(frame.time[rows], frame.status[rows], conf_level, label))
    return curves


def kaplan_meier(frame: Frame, by: GroupAssignment | None = None,
                 conf_level: float = 0.95) -> list[StepCurve]:
    """Product-limit curves with confidence bands, one per group (or one overall)."""
    return _by_group(frame, by, conf_level)


def nelson_aalen(frame: Frame, by: GroupAssignment | None = None) -> list[StepCurve]:
    """Cumulative hazard ``H(t) = sum_{t_i <= t} d_i / n_i``, one curve per group."""
    return _by_group(frame, by, None)


def curves_table(curves: list[StepCurve]) -> pd.DataFrame:
    parts = []
    for c in curves:
        k = len(c)
        parts.append(pd.DataFrame({
            "group": [c.group] * k,
            "time": c.times,
            "n_risk": c.n_risk,
            "n_event": c.n_event,
            "survival": c.survival,
            "cum_hazard": c.cum_hazard,
            "band_lo": c.band_lo if c.band_lo is not None else np.full(k, np.nan),
            "band_hi": c.band_hi if c.band_hi is not None else np.full(k, np.nan),
        }))
    cols = ["group", "time", "n_risk", "n_event", "survival", "cum_hazard", "band_lo", "band_hi"]
    return pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(columns=cols)
