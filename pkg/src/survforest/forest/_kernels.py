"""Compiled inner loops for growing and evaluating survival trees.

Trees are stored as flat node arrays. Every node owns a contiguous slice
``samples[start:end]`` of its tree's bootstrap sample, and the sample array
is kept sorted by follow-up time (partitioning is stable), so every node
slice is already time-ordered for the log-rank and Kaplan-Meier passes.
"""

import math

import numpy as np
from numba import njit

CONTINUOUS = 0
ORDERED = 1
UNORDERED = 2
BOOLEAN = 3

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MAX_ENUMERATED = 1 << 16


@njit(cache=True)
def _mix(z):
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def route_key(seed, tree, node, row):
    """Stateless draw key so a row's routing never depends on evaluation order."""
    h = _mix(np.uint64(seed))
    h = _mix(h ^ np.uint64(tree))
    h = _mix(h ^ np.uint64(node))
    return _mix(h ^ np.uint64(row))


@njit(cache=True)
def logrank(time, status, left, m):
    """Standardized two-sample log-rank statistic over the first ``m`` entries.

    ``time`` must be ascending. Returns ``(statistic, numerator, variance)``;
    the statistic is 0 when the variance vanishes.
    """
    n = m
    nl = 0
    for i in range(m):
        if left[i]:
            nl += 1
    num = 0.0
    var = 0.0
    i = 0
    while i < m:
        t = time[i]
        j = i
        d = 0
        dl = 0
        cl = 0
        while j < m and time[j] == t:
            if left[j]:
                cl += 1
                if status[j]:
                    dl += 1
            if status[j]:
                d += 1
            j += 1
        if d > 0:
            frac = nl / n
            num += dl - frac * d
            if n > 1:
                var += frac * (1.0 - frac) * (n - d) / (n - 1.0) * d
        n -= j - i
        nl -= cl
        i = j
    if var <= 0.0:
        return 0.0, num, var
    return num / math.sqrt(var), num, var


@njit(cache=True)
def _goes_left(kind, value, mask, xv):
    if kind == UNORDERED or kind == BOOLEAN:
        return ((mask >> np.int64(xv)) & np.int64(1)) == 1
    return xv <= value


@njit(cache=True, nogil=True)
def grow_tree(X, kinds, time, status, samples, mtry, nsplit, nodesize, rng,
              node_var, node_value, node_mask, node_left, node_right, node_depth,
              node_start, node_end):
    """Grow one tree in place; returns the node count.

    Nodes are expanded depth first, left daughter before right, so the
    random stream is consumed in a fixed order.
    """
    N = samples.shape[0]
    p = X.shape[1]
    stack = np.empty(2 * N + 2, dtype=np.int64)
    vals = np.empty(N)
    tb = np.empty(N)
    sb = np.empty(N, dtype=np.bool_)
    lb = np.empty(N, dtype=np.bool_)
    tmp = np.empty(N, dtype=samples.dtype)
    varperm = np.empty(p, dtype=np.int64)
    cand = np.empty(N, dtype=np.int64)

    node_start[0] = 0
    node_end[0] = N
    node_depth[0] = 0
    nn = 1
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        k = stack[sp]
        s = node_start[k]
        e = node_end[k]
        m = e - s
        node_var[k] = -1
        node_left[k] = -1
        node_right[k] = -1
        node_value[k] = np.nan
        node_mask[k] = 0
        events = 0
        for q in range(s, e):
            if status[samples[q]]:
                events += 1
        if m <= nodesize or events == 0:
            continue

        for a in range(p):
            varperm[a] = a
        best = -1.0
        best_var = -1
        best_value = np.nan
        best_mask = np.int64(0)
        for a in range(min(mtry, p)):
            r = a + rng.integers(0, p - a)
            tv = varperm[a]
            varperm[a] = varperm[r]
            varperm[r] = tv
            v = varperm[a]
            cnt = 0
            for q in range(s, e):
                row = samples[q]
                xv = X[row, v]
                if not math.isnan(xv):
                    vals[cnt] = xv
                    tb[cnt] = time[row]
                    sb[cnt] = status[row]
                    cnt += 1
            if cnt < 2:
                continue
            kind = kinds[v]
            if kind == UNORDERED or kind == BOOLEAN:
                present = np.int64(0)
                for q in range(cnt):
                    present |= np.int64(1) << np.int64(vals[q])
                nlev = 0
                lv = np.empty(64, dtype=np.int64)
                for b in range(64):
                    if (present >> np.int64(b)) & np.int64(1):
                        lv[nlev] = b
                        nlev += 1
                if nlev < 2:
                    continue
                n_bip = (np.int64(1) << np.int64(nlev - 1)) - 1
                enumerate_all = n_bip <= _MAX_ENUMERATED and (nsplit == 0 or n_bip <= nsplit)
                ndraw = n_bip if enumerate_all else (nsplit if nsplit > 0 else _MAX_ENUMERATED)
                for c in range(ndraw):
                    code = c if enumerate_all else rng.integers(0, n_bip)
                    mask = np.int64(1) << lv[0]
                    for b in range(nlev - 1):
                        if (code >> b) & 1:
                            mask |= np.int64(1) << lv[b + 1]
                    for q in range(cnt):
                        lb[q] = ((mask >> np.int64(vals[q])) & np.int64(1)) == 1
                    stat, num, var = logrank(tb, sb, lb, cnt)
                    if abs(stat) > best:
                        best = abs(stat)
                        best_var = v
                        best_mask = mask
                        best_value = np.nan
            else:
                u = np.unique(vals[:cnt])
                ncand = u.shape[0] - 1
                if ncand < 1:
                    continue
                for c in range(ncand):
                    cand[c] = c
                ndraw = ncand
                if nsplit > 0 and ncand > nsplit:
                    ndraw = nsplit
                    for c in range(nsplit):
                        r = c + rng.integers(0, ncand - c)
                        tc = cand[c]
                        cand[c] = cand[r]
                        cand[r] = tc
                for c in range(ndraw):
                    split = u[cand[c]]
                    for q in range(cnt):
                        lb[q] = vals[q] <= split
                    stat, num, var = logrank(tb, sb, lb, cnt)
                    if abs(stat) > best:
                        best = abs(stat)
                        best_var = v
                        best_value = split
                        best_mask = np.int64(0)
        if best_var < 0:
            continue

        # donors for routing members whose split value is missing
        kind = kinds[best_var]
        cnt = 0
        for q in range(s, e):
            xv = X[samples[q], best_var]
            if not math.isnan(xv):
                vals[cnt] = xv
                cnt += 1
        nl = 0
        for q in range(s, e):
            xv = X[samples[q], best_var]
            if math.isnan(xv):
                xv = vals[rng.integers(0, cnt)]
            lb[q - s] = _goes_left(kind, best_value, best_mask, xv)
            if lb[q - s]:
                nl += 1
        li = 0
        ri = nl
        for q in range(s, e):
            if lb[q - s]:
                tmp[li] = samples[q]
                li += 1
            else:
                tmp[ri] = samples[q]
                ri += 1
        for q in range(m):
            samples[s + q] = tmp[q]

        node_var[k] = best_var
        node_value[k] = best_value
        node_mask[k] = best_mask
        lc = nn
        rc = nn + 1
        nn += 2
        node_left[k] = lc
        node_right[k] = rc
        node_start[lc] = s
        node_end[lc] = s + nl
        node_start[rc] = s + nl
        node_end[rc] = e
        node_depth[lc] = node_depth[k] + 1
        node_depth[rc] = node_depth[k] + 1
        stack[sp] = rc
        sp += 1
        stack[sp] = lc
        sp += 1
    return nn


@njit(cache=True)
def descend(off, node_var, node_value, node_mask, node_left, node_right, node_start,
            node_end, kinds, samples_t, Xtrain, row, row_id, seed, tree, impute):
    """Route one row down tree ``tree``; returns the local terminal node id.

    A missing split value is replaced by the value of an in-node training
    member chosen by a stateless hash of (seed, tree, node, row). Returns -1
    when a value is missing and ``impute`` is false. Unknown categorical
    levels (coded -1) take a hashed coin flip.
    """
    k = 0
    while node_var[off + k] >= 0:
        g = off + k
        v = node_var[g]
        xv = row[v]
        if math.isnan(xv):
            if not impute:
                return -1
            cnt = 0
            for q in range(node_start[g], node_end[g]):
                if not math.isnan(Xtrain[samples_t[q], v]):
                    cnt += 1
            pick = np.int64(route_key(seed, tree, k, row_id) % np.uint64(cnt))
            for q in range(node_start[g], node_end[g]):
                tv = Xtrain[samples_t[q], v]
                if not math.isnan(tv):
                    if pick == 0:
                        xv = tv
                        break
                    pick -= 1
        kind = kinds[v]
        if (kind == UNORDERED or kind == BOOLEAN) and xv < 0:
            left = (route_key(seed + 1, tree, k, row_id) & np.uint64(1)) == 0
        else:
            left = _goes_left(kind, node_value[g], node_mask[g], xv)
        k = node_left[g] if left else node_right[g]
    return k


@njit(cache=True)
def leaf_curves(off, n_nodes, node_var, node_start, node_end, samples_t, status, tpos, G, sel):
    """Kaplan-Meier survival at grid indices ``sel`` and summed Nelson-Aalen
    hazard over the full grid, for every terminal node of one tree.

    ``tpos[row]`` is the index of the largest grid time not exceeding the
    row's follow-up time (event times sit exactly on the grid).
    """
    out = np.full((n_nodes, sel.shape[0]), np.nan)
    mort = np.full(n_nodes, np.nan)
    surv = np.empty(G)
    haz = np.empty(G)
    for k in range(n_nodes):
        g = off + k
        if node_var[g] >= 0:
            continue
        s = node_start[g]
        e = node_end[g]
        n = e - s
        cur_s = 1.0
        cur_h = 0.0
        filled = 0
        q = s
        while q < e:
            gi = tpos[samples_t[q]]
            d = 0
            j = q
            while j < e and tpos[samples_t[j]] == gi:
                if status[samples_t[j]]:
                    d += 1
                j += 1
            if d > 0:
                while filled < gi:
                    surv[filled] = cur_s
                    haz[filled] = cur_h
                    filled += 1
                cur_s *= 1.0 - d / n
                cur_h += d / n
            n -= j - q
            q = j
        while filled < G:
            surv[filled] = cur_s
            haz[filled] = cur_h
            filled += 1
        for c in range(sel.shape[0]):
            out[k, c] = surv[sel[c]]
        total = 0.0
        for c in range(G):
            total += haz[c]
        mort[k] = total
    return out, mort


@njit(cache=True)
def tree_predictions(offsets, node_var, node_value, node_mask, node_left, node_right,
                     node_start, node_end, kinds, samples, Xtrain, status, tpos, G, sel,
                     X, row_ids, use, seed, impute, trees, want_surv):
    """Per-tree terminal estimates for every (tree, row) pair with ``use`` set.

    Returns ``surv_sum`` (rows x sel), summed over used trees in tree order,
    and ``mort`` (trees x rows) with NaN where a tree is not used; -1 in
    ``bad`` flags a row that hit a missing value with imputation off.
    """
    n = X.shape[0]
    nt = trees.shape[0]
    surv_sum = np.zeros((n, sel.shape[0]))
    mort = np.full((nt, n), np.nan)
    bad = np.zeros(n, dtype=np.int64)
    for a in range(nt):
        t = trees[a]
        off = offsets[t]
        nnode = offsets[t + 1] - off
        curves, lmort = leaf_curves(off, nnode, node_var, node_start, node_end, samples[t],
                                    status, tpos, G, sel if want_surv else sel[:0])
        for i in range(n):
            if not use[a, i]:
                continue
            leaf = descend(off, node_var, node_value, node_mask, node_left, node_right,
                           node_start, node_end, kinds, samples[t], Xtrain, X[i], row_ids[i],
                           seed, t, impute)
            if leaf < 0:
                bad[i] = -1
                continue
            mort[a, i] = lmort[leaf]
            if want_surv:
                for c in range(sel.shape[0]):
                    surv_sum[i, c] += curves[leaf, c]
    return surv_sum, mort, bad


@njit(cache=True)
def permuted_mortality(offsets, node_var, node_value, node_mask, node_left, node_right,
                       node_start, node_end, kinds, samples, Xtrain, status, tpos, G,
                       X, use, perm, v, seed):
    """OOB mortality with column ``v`` of row i replaced by row ``perm[t, i]``'s value."""
    n = X.shape[0]
    nt = offsets.shape[0] - 1
    mort = np.full((nt, n), np.nan)
    row = np.empty(X.shape[1])
    sel = np.zeros(0, dtype=np.int64)
    for t in range(nt):
        off = offsets[t]
        nnode = offsets[t + 1] - off
        uses_v = False
        for k in range(nnode):
            if node_var[off + k] == v:
                uses_v = True
                break
        curves, lmort = leaf_curves(off, nnode, node_var, node_start, node_end, samples[t],
                                    status, tpos, G, sel)
        for i in range(n):
            if not use[t, i]:
                continue
            for c in range(X.shape[1]):
                row[c] = X[i, c]
            if uses_v:
                row[v] = X[perm[t, i], v]
            leaf = descend(off, node_var, node_value, node_mask, node_left, node_right,
                           node_start, node_end, kinds, samples[t], Xtrain, row, i, seed, t,
                           True)
            mort[t, i] = lmort[leaf]
    return mort


@njit(cache=True)
def partial_predictions(offsets, node_var, node_value, node_mask, node_left, node_right,
                        node_start, node_end, kinds, samples, Xtrain, status, tpos, G, sel,
                        X, row_ids, over_vars, over_vals, seed):
    """Survival at ``sel`` for every (grid point, row) with ``over_vars`` set to
    ``over_vals[point]``, averaged over all trees. Shape: points x rows x sel."""
    n = X.shape[0]
    npt = over_vals.shape[0]
    nt = offsets.shape[0] - 1
    out = np.zeros((npt, n, sel.shape[0]))
    row = np.empty(X.shape[1])
    for t in range(nt):
        off = offsets[t]
        nnode = offsets[t + 1] - off
        curves, lmort = leaf_curves(off, nnode, node_var, node_start, node_end, samples[t],
                                    status, tpos, G, sel)
        for i in range(n):
            for c in range(X.shape[1]):
                row[c] = X[i, c]
            for g in range(npt):
                for c in range(over_vars.shape[0]):
                    row[over_vars[c]] = over_vals[g, c]
                leaf = descend(off, node_var, node_value, node_mask, node_left, node_right,
                               node_start, node_end, kinds, samples[t], Xtrain, row,
                               row_ids[i], seed, t, True)
                for c in range(sel.shape[0]):
                    out[g, i, c] += curves[leaf, c]
    return out / nt


@njit(cache=True)
def concordance(score, time, status, valid):
    """Harrell pairs (i event, t_i < t_j): returns (concordant weight, pair count)."""
    n = score.shape[0]
    num = 0.0
    den = 0
    for i in range(n):
        if not valid[i] or not status[i]:
            continue
        for j in range(n):
            if not valid[j] or not time[i] < time[j]:
                continue
            den += 1
            if score[i] > score[j]:
                num += 1.0
            elif score[i] == score[j]:
                num += 0.5
    return num, den


@njit(cache=True)
def prefix_errors(mort, time, status):
    """OOB concordance error after each prefix of trees (NaN when undefined)."""
    nt, n = mort.shape
    total = np.zeros(n)
    count = np.zeros(n, dtype=np.int64)
    score = np.empty(n)
    valid = np.empty(n, dtype=np.bool_)
    out = np.full(nt, np.nan)
    for t in range(nt):
        for i in range(n):
            if not math.isnan(mort[t, i]):
                total[i] += mort[t, i]
                count[i] += 1
        for i in range(n):
            valid[i] = count[i] > 0
            score[i] = total[i] / count[i] if count[i] > 0 else 0.0
        num, den = concordance(score, time, status, valid)
        if den > 0:
            out[t] = 1.0 - num / den
    return out
