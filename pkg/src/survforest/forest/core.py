"""Random survival forest growth.

Each tree is grown on a with-replacement bootstrap of the training rows.
At every node ``mtry`` candidate variables are drawn; for each candidate up
to ``nsplit`` split points are drawn from its distinct in-node values and
scored with the standardized log-rank statistic, computed on the members
whose value is present. The best (variable, split) divides the node; members
missing the split variable are routed with a value drawn from the node's
present values. Nodes with at most ``nodesize`` members or no deaths are
terminal and carry a Kaplan-Meier estimate on the forest's event-time grid.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from functools import cached_property

import numpy as np

from ..dataset import BOOLEAN, CONTINUOUS, ORDERED, UNORDERED, Frame, VariableSpec
from ..errors import ConfigError, DomainError, ValidationError
from . import _kernels as K

_KIND_CODES = {CONTINUOUS: K.CONTINUOUS, ORDERED: K.ORDERED,
               UNORDERED: K.UNORDERED, BOOLEAN: K.BOOLEAN}
MAX_LEVELS = 62


@dataclass(frozen=True)
class GrowConfig:
    ntree: int = 1000
    mtry: int | None = None
    nsplit: int = 10
    nodesize: int = 3
    seed: int = 0
    impute: bool = True

    def resolved(self, p: int) -> "GrowConfig":
        """Fill in the default ``mtry = ceil(sqrt(p))`` and validate against ``p``."""
        cfg = self if self.mtry is not None else replace(self, mtry=max(1, math.ceil(math.sqrt(p))))
        if cfg.ntree < 1:
            raise ConfigError("ntree must be at least 1")
        if cfg.nodesize < 1:
            raise ConfigError("nodesize must be at least 1")
        if cfg.nsplit < 0:
            raise ConfigError("nsplit must be non-negative")
        if not 1 <= cfg.mtry <= p:
            raise ConfigError(f"mtry must lie in [1, {p}], got {cfg.mtry}")
        if not 0 <= cfg.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


def kind_codes(variables) -> np.ndarray:
    return np.array([_KIND_CODES[v.kind] for v in variables], dtype=np.int64)


def event_grid(time, status) -> np.ndarray:
    return np.unique(np.asarray(time, dtype=float)[np.asarray(status, dtype=bool)])


def tree_rngs(seed: int, ntree: int) -> list[np.random.Generator]:
    """Independent per-tree streams: tree ``t`` uses SeedSequence(seed).spawn(...)[t]."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(ntree)]


@dataclass(frozen=True, eq=False)
class Forest:
    """A grown forest. Node arrays of all trees are concatenated;
    tree ``t`` owns rows ``offsets[t]:offsets[t + 1]`` and its node ids are
    local to that slice."""

    config: GrowConfig
    train: Frame
    event_times: np.ndarray
    offsets: np.ndarray
    node_var: np.ndarray
    node_value: np.ndarray
    node_mask: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    node_depth: np.ndarray
    node_start: np.ndarray
    node_end: np.ndarray
    samples: np.ndarray

    @property
    def variables(self) -> tuple[VariableSpec, ...]:
        return self.train.variables

    @property
    def ntree(self) -> int:
        return len(self.offsets) - 1

    @property
    def n(self) -> int:
        return self.train.n

    @cached_property
    def kinds(self) -> np.ndarray:
        return kind_codes(self.variables)

    @cached_property
    def inbag(self) -> np.ndarray:
        """Bootstrap multiplicity, shape (ntree, n)."""
        return np.stack([np.bincount(s, minlength=self.n) for s in self.samples]).astype(np.int64)

    @cached_property
    def tpos(self) -> np.ndarray:
        return (np.searchsorted(self.event_times, self.train.time, side="right") - 1).astype(np.int64)

    def tree_slice(self, t: int) -> slice:
        return slice(int(self.offsets[t]), int(self.offsets[t + 1]))

    def is_terminal(self) -> np.ndarray:
        return self.node_var < 0

    def max_depths(self) -> np.ndarray:
        """Deepest terminal depth of each tree."""
        return np.array([self.node_depth[self.tree_slice(t)].max() for t in range(self.ntree)])

    def terminal_members(self, t: int, k: int) -> np.ndarray:
        g = int(self.offsets[t]) + k
        return self.samples[t, self.node_start[g]:self.node_end[g]]

    def truncated(self, b: int) -> "Forest":
        """The forest made of the first ``b`` trees."""
        if not 1 <= b <= self.ntree:
            raise ValidationError(f"prefix size must lie in [1, {self.ntree}]")
        end = int(self.offsets[b])
        cut = lambda a: a[:end]
        return Forest(replace(self.config, ntree=b), self.train, self.event_times,
                      self.offsets[:b + 1].copy(), cut(self.node_var), cut(self.node_value),
                      cut(self.node_mask), cut(self.node_left), cut(self.node_right),
                      cut(self.node_depth), cut(self.node_start), cut(self.node_end),
                      self.samples[:b])

    def kernel_args(self):
        """Positional arguments shared by every compiled evaluation routine."""
        return (self.offsets, self.node_var, self.node_value, self.node_mask, self.node_left,
                self.node_right, self.node_start, self.node_end, self.kinds, self.samples,
                self.train.x, self.train.status, self.tpos, len(self.event_times))

    def summary(self) -> dict:
        return {"family": "surv", "n": self.n, "events": int(self.train.status.sum()),
                "p": len(self.variables), **self.config.to_dict()}


def _check_frame(frame: Frame, cfg: GrowConfig):
    if frame.n < 2:
        raise DomainError("need at least two rows to grow a forest")
    if not frame.status.any():
        raise DomainError("training data has no events")
    for spec in frame.variables:
        if spec.is_categorical and len(spec.levels) > MAX_LEVELS:
            raise ValidationError(f"{spec.name!r} has more than {MAX_LEVELS} levels")
    if not cfg.impute and frame.missing.any():
        raise ValidationError("training data has missing values; grow with impute=True")


def _grow_one(frame, kinds, cfg, rng):
    n = frame.n
    boot = rng.integers(0, n, size=n)
    order = np.argsort(frame.time[boot], kind="stable")
    samples = boot[order].astype(np.int64)
    size = 2 * n
    arrays = dict(
        node_var=np.empty(size, dtype=np.int64), node_value=np.empty(size),
        node_mask=np.empty(size, dtype=np.int64), node_left=np.empty(size, dtype=np.int64),
        node_right=np.empty(size, dtype=np.int64), node_depth=np.empty(size, dtype=np.int64),
        node_start=np.empty(size, dtype=np.int64), node_end=np.empty(size, dtype=np.int64),
    )
    nn = K.grow_tree(frame.x, kinds, frame.time, frame.status, samples, cfg.mtry, cfg.nsplit,
                     cfg.nodesize, rng, *arrays.values())
    return samples, {k: v[:nn] for k, v in arrays.items()}


def grow(frame: Frame, config: GrowConfig = GrowConfig(), threads: int = 1) -> Forest:
    """Grow a random survival forest.

    ``threads`` only changes wall time: each tree draws from its own seeded
    stream and writes to its own slot, so the result is identical for any
    worker count.
    """
    cfg = config.resolved(frame.p)
    _check_frame(frame, cfg)
    kinds = kind_codes(frame.variables)
    rngs = tree_rngs(cfg.seed, cfg.ntree)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            grown = list(pool.map(lambda r: _grow_one(frame, kinds, cfg, r), rngs))
    else:
        grown = [_grow_one(frame, kinds, cfg, r) for r in rngs]
    return assemble(cfg, frame, [g[0] for g in grown], [g[1] for g in grown])


def assemble(cfg: GrowConfig, frame: Frame, samples: list, trees: list[dict]) -> Forest:
    sizes = [len(t["node_var"]) for t in trees]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    cat = {k: np.concatenate([t[k] for t in trees]) for k in trees[0]}
    for k in ("node_var", "node_mask", "node_left", "node_right", "node_depth",
              "node_start", "node_end"):
        cat[k] = cat[k].astype(np.int64)
    cat["node_value"] = cat["node_value"].astype(np.float64)
    forest = Forest(cfg, frame, event_grid(frame.time, frame.status), offsets,
                    samples=np.stack(samples).astype(np.int64), **cat)
    for a in (forest.offsets, forest.samples, *cat.values()):
        a.setflags(write=False)
    return forest


def logrank_statistic(time, status, left) -> float:
    """Standardized two-sample log-rank statistic for the split ``left`` vs not.

    Positive when the left group has more deaths than expected under no
    difference. Returns 0 when the hypergeometric variance is 0.
    """
    return logrank_components(time, status, left)[0]


def logrank_components(time, status, left) -> tuple[float, float, float]:
    """``(statistic, observed - expected deaths on the left, variance)``."""
    time = np.asarray(time, dtype=float)
    status = np.asarray(status, dtype=bool)
    left = np.asarray(left, dtype=bool)
    if not (len(time) == len(status) == len(left)):
        raise ValidationError("time, status and membership lengths differ")
    if left.all() or not left.any():
        raise DomainError("both sides of the split must be non-empty")
    if not status.any():
        raise DomainError("at least one event is required")
    order = np.argsort(time, kind="stable")
    return K.logrank(time[order], status[order], left[order], len(time))


def impute_at_node(values, rng: np.random.Generator):
    """Fill missing cells with uniform draws from the present in-node values.

    Returns the completed column, or None when every value is missing (the
    candidate variable must then be skipped).
    """
    v = np.array(values, dtype=float)
    miss = np.isnan(v)
    if miss.all():
        return None
    donors = v[~miss]
    v[miss] = donors[rng.integers(0, len(donors), size=int(miss.sum()))]
    return v
