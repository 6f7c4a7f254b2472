"""Variable importance, minimal depth selection and pairwise subtree interactions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from numba import njit

from .dataset import Frame
from .errors import ValidationError
from .forest import Forest
from .forest import _kernels as K
from .inference import _mean_over_trees, _run, concordance_error, _check_training


@dataclass(frozen=True, eq=False)
class VimpTable:
    variables: list[str]
    vimp: np.ndarray
    rank: np.ndarray
    seed: int

    @property
    def positive(self) -> np.ndarray:
        return self.vimp > 0

    def table(self) -> pd.DataFrame:
        df = pd.DataFrame({"variable": self.variables, "vimp": self.vimp,
                           "rank": self.rank, "positive": self.positive})
        return df.sort_values("rank", kind="stable").reset_index(drop=True)


@dataclass(frozen=True, eq=False)
class DepthTable:
    variables: list[str]
    depth: np.ndarray
    rank: np.ndarray
    threshold: float
    per_tree: np.ndarray

    @property
    def selected(self) -> np.ndarray:
        return self.depth <= self.threshold

    @property
    def model_size(self) -> int:
        return int(self.selected.sum())

    def table(self) -> pd.DataFrame:
        df = pd.DataFrame({"variable": self.variables, "depth": self.depth,
                           "rank": self.rank, "selected": self.selected})
        return df.sort_values("rank", kind="stable").reset_index(drop=True)


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    """Row ``i``, column ``j``: normalized depth of ``j``'s first split inside
    the maximal subtrees of ``i``. The diagonal holds ``i``'s own normalized
    minimal depth."""

    variables: list[str]
    values: np.ndarray

    def table(self) -> pd.DataFrame:
        df = pd.DataFrame(self.values, columns=self.variables)
        df.insert(0, "variable", self.variables)
        return df


def _rank_desc(values: np.ndarray) -> np.ndarray:
    order = np.argsort(-values, kind="stable")
    rank = np.empty(len(values), dtype=np.int64)
    rank[order] = np.arange(1, len(values) + 1)
    return rank


def _rank_asc(values: np.ndarray) -> np.ndarray:
    return _rank_desc(-values)


def vimp(forest: Forest, frame: Frame | None = None, seed: int = 0) -> VimpTable:
    """Permutation importance: increase in OOB concordance error after noising up a variable.

    For each variable and tree, that tree's OOB values of the variable are
    permuted among its OOB rows before dropping them down the tree. A tree
    that never splits on the variable gives unchanged predictions, so a
    variable no tree uses has importance exactly 0.
    """
    frame = forest.train if frame is None else frame
    _check_training(forest, frame)
    use = forest.inbag == 0
    _, mort, _ = _run(forest, frame.x, use, want_surv=False)
    base_score, _ = _mean_over_trees(mort)
    base = concordance_error(base_score, frame.time, frame.status)
    out = np.empty(frame.p)
    args = forest.kernel_args()
    ident = np.arange(frame.n, dtype=np.int64)
    for v in range(frame.p):
        rng = np.random.default_rng(np.random.SeedSequence([seed, v]))
        perm = np.tile(ident, (forest.ntree, 1))
        for t in range(forest.ntree):
            rows = np.flatnonzero(use[t])
            perm[t, rows] = rows[rng.permutation(len(rows))]
        pm = K.permuted_mortality(*args, frame.x, use, perm, v, forest.config.seed)
        score, _ = _mean_over_trees(pm)
        out[v] = concordance_error(score, frame.time, frame.status) - base
    return VimpTable(frame.names, out, _rank_desc(out), seed)


@njit(cache=True)
def _tree_scan(offsets, node_var, node_depth, node_left, node_right, p, max_d):
    """Per-tree first-split depths, maximal depths, terminal counts per depth
    and the shallowest depth of each variable inside each variable's maximal
    subtrees (-1 where absent)."""
    nt = offsets.shape[0] - 1
    first = np.full((nt, p), -1, dtype=np.int64)
    deepest = np.zeros(nt, dtype=np.int64)
    leaves = np.zeros((nt, max_d + 1))
    inner = np.full((nt, p, p), -1, dtype=np.int64)
    for t in range(nt):
        off = offsets[t]
        nn = offsets[t + 1] - off
        anc = np.zeros((nn, p), dtype=np.bool_)
        # children always carry larger ids than their parent
        for k in range(nn):
            g = off + k
            v = node_var[g]
            d = node_depth[g]
            if v < 0:
                leaves[t, d] += 1
                if d > deepest[t]:
                    deepest[t] = d
                continue
            if first[t, v] < 0 or d < first[t, v]:
                first[t, v] = d
            for i in range(p):
                if anc[k, i] and (inner[t, i, v] < 0 or d < inner[t, i, v]):
                    inner[t, i, v] = d
            for c in (node_left[g], node_right[g]):
                for i in range(p):
                    anc[c, i] = anc[k, i]
                anc[c, v] = True
    return first, deepest, leaves, inner


def _scan(forest: Forest):
    max_d = int(forest.node_depth.max())
    return _tree_scan(forest.offsets, forest.node_var, forest.node_depth, forest.node_left,
                      forest.node_right, len(forest.variables), max_d)


def null_depth_mean(leaves_per_depth: np.ndarray, p: int) -> float:
    """Mean of the minimal depth distribution of a variable unrelated to survival.

    Each split picks a given variable with probability ``1/p``. With
    ``l_d`` the average number of terminal nodes at depth ``d`` counted on a
    one-based scale (the root is depth 1), a variable first splits at depth
    ``d`` with probability ``(1 - 1/p)^L_d (1 - (1 - 1/p)^l_d)`` where
    ``L_d = l_0 + ... + l_{d-1}``; mass left over past the deepest level sits
    at that level.
    """
    q = 1.0 - 1.0 / p
    ell = np.concatenate([[0.0], np.asarray(leaves_per_depth, dtype=float)])
    cum = np.concatenate([[0.0], np.cumsum(ell)[:-1]])
    prob = q ** cum * (1.0 - q ** ell)
    depths = np.arange(len(ell))
    return float((depths * prob).sum() + (len(ell) - 1) * max(0.0, 1.0 - prob.sum()))


def minimal_depth(forest: Forest) -> DepthTable:
    """Forest-averaged depth of each variable's shallowest split (root = 0).

    A variable that never splits in a tree is charged that tree's maximal
    terminal depth plus one. Variables at or below the null-distribution
    mean are selected.
    """
    first, deepest, leaves, _ = _scan(forest)
    per_tree = np.where(first >= 0, first, (deepest + 1)[:, None]).astype(float)
    depth = per_tree.mean(axis=0)
    thr = null_depth_mean(leaves.mean(axis=0), len(forest.variables))
    names = [v.name for v in forest.variables]
    return DepthTable(names, depth, _rank_asc(depth), thr, per_tree)


def depth_vimp_compare(depth: DepthTable, imp: VimpTable) -> pd.DataFrame:
    """Joined ranks, ordered by minimal depth rank."""
    if sorted(depth.variables) != sorted(imp.variables):
        raise ValidationError("depth and VIMP tables cover different variables")
    vr = dict(zip(imp.variables, imp.rank))
    vv = dict(zip(imp.variables, imp.vimp))
    df = pd.DataFrame({"variable": depth.variables, "depth": depth.depth,
                       "depth_rank": depth.rank,
                       "vimp": [vv[n] for n in depth.variables],
                       "vimp_rank": [vr[n] for n in depth.variables]})
    return df.sort_values("depth_rank", kind="stable").reset_index(drop=True)


def interactions(forest: Forest) -> InteractionMatrix:
    """Pairwise maximal-subtree interaction measures.

    For a tree where ``i`` splits, entry (i, j) is the depth of ``j``'s
    shallowest split lying inside any maximal ``i``-subtree (a subtree rooted
    at an ``i`` split with no ``i`` split above it), divided by the tree's
    maximal depth plus one; 1 when ``j`` never splits there. The diagonal
    uses ``i``'s own minimal depth. Entries average over the trees where
    ``i`` splits; a variable that never splits gets a row of ones.
    """
    first, deepest, _, inner = _scan(forest)
    p = len(forest.variables)
    ceil = (deepest + 1).astype(float)
    rel = np.where(inner >= 0, inner / ceil[:, None, None], 1.0)
    idx = np.arange(p)
    rel[:, idx, idx] = np.where(first >= 0, first / ceil[:, None], 1.0)
    values = np.ones((p, p))
    for i in range(p):
        used = first[:, i] >= 0
        if used.any():
            values[i] = rel[used, i, :].mean(axis=0)
    return InteractionMatrix([v.name for v in forest.variables], values)


def selection_summary(forest: Forest, depth: DepthTable, oob_error: float) -> dict:
    """Printable summary of a minimal-depth selection."""
    cfg = forest.config
    return {"family": "surv", "n": forest.n, "p": len(forest.variables), "ntree": cfg.ntree,
            "mtry": cfg.mtry, "nsplit": cfg.nsplit, "nodesize": cfg.nodesize,
            "threshold": depth.threshold, "model_size": depth.model_size,
            "pe": 100.0 * oob_error,
            "top_variables": [n for n, s, r in sorted(zip(depth.variables, depth.selected,
                                                           depth.rank), key=lambda z: z[2])
                              if s]}
