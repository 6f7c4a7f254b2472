"""Post-growth imputation of the training data's missing cells."""

from __future__ import annotations

import warnings

import numpy as np
from numba import njit

from ..dataset import Frame
from ..errors import ValidationError
from . import _kernels as K
from .core import Forest


@njit(cache=True)
def _donor_draws(offsets, node_var, node_value, node_mask, node_left, node_right, node_start,
                 node_end, kinds, samples, Xtrain, inbag, cell_rows, cell_vars, seed):
    """One donor value per (cell, tree) where the row is in-bag: a hashed pick
    among the OOB rows sharing the row's terminal node with the variable
    observed. NaN when the row is OOB or no such donor exists."""
    nt = offsets.shape[0] - 1
    n = Xtrain.shape[0]
    nc = cell_rows.shape[0]
    out = np.full((nc, nt), np.nan)
    leaf_in = np.empty(n, dtype=np.int64)
    leaf_oob = np.empty(n, dtype=np.int64)
    for t in range(nt):
        off = offsets[t]
        nn = offsets[t + 1] - off
        for k in range(nn):
            g = off + k
            if node_var[g] < 0:
                for q in range(node_start[g], node_end[g]):
                    leaf_in[samples[t, q]] = k
        for i in range(n):
            leaf_oob[i] = -1
            if inbag[t, i] == 0:
                leaf_oob[i] = K.descend(off, node_var, node_value, node_mask, node_left,
                                        node_right, node_start, node_end, kinds, samples[t],
                                        Xtrain, Xtrain[i], i, seed, t, True)
        for c in range(nc):
            i = cell_rows[c]
            v = cell_vars[c]
            if inbag[t, i] == 0:
                continue
            leaf = leaf_in[i]
            cnt = 0
            for j in range(n):
                if leaf_oob[j] == leaf and not np.isnan(Xtrain[j, v]):
                    cnt += 1
            if cnt == 0:
                continue
            pick = np.int64(K.route_key(seed + 2, t, c, i) % np.uint64(cnt))
            for j in range(n):
                if leaf_oob[j] == leaf and not np.isnan(Xtrain[j, v]):
                    if pick == 0:
                        out[c, t] = Xtrain[j, v]
                        break
                    pick -= 1
    return out


def finalize_imputation(forest: Forest, frame: Frame | None = None) -> Frame:
    """A copy of the training frame with missing cells filled from OOB donors.

    For every tree where a row is in-bag, one value is drawn from the OOB
    members of the row's terminal node that have the variable observed.
    Draws are averaged for continuous variables and put to a plurality vote
    (lowest level on ties) for categorical ones. Cells that never meet a
    donor stay missing and are reported with a warning. The input frame is
    not modified.
    """
    frame = forest.train if frame is None else frame
    if frame.n != forest.n or frame.names != [v.name for v in forest.variables]:
        raise ValidationError("frame does not match the forest's training data")
    rows, cols = np.nonzero(frame.missing)
    if len(rows) == 0:
        return frame
    draws = _donor_draws(forest.offsets, forest.node_var, forest.node_value, forest.node_mask,
                         forest.node_left, forest.node_right, forest.node_start,
                         forest.node_end, forest.kinds, forest.samples, frame.x, forest.inbag,
                         rows.astype(np.int64), cols.astype(np.int64), forest.config.seed)
    x = frame.x.copy()
    unfilled = 0
    for c, (i, j) in enumerate(zip(rows, cols)):
        d = draws[c][~np.isnan(draws[c])]
        if len(d) == 0:
            unfilled += 1
            continue
        if frame.variables[j].is_categorical:
            x[i, j] = np.argmax(np.bincount(d.astype(np.int64)))
        else:
            x[i, j] = d.mean()
    if unfilled:
        warnings.warn(f"{unfilled} missing cells had no OOB donor and were left missing",
                      stacklevel=2)
    return Frame(frame.variables, x, frame.time, frame.status, frame.time_name,
                 frame.status_name)
