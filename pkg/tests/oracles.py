"""Independent reference computations used by the tests.

Written against the public value types only, so they do not share code paths
with the implementations they check.
"""

import numpy as np

from vnfprof.domain import ACTIONS, kpi_flags
from vnfprof.envsim import measure
from vnfprof.rewards import reward_vector


def _moves(idx, shape):
    """Action ids that move (or hold) from idx, with the resulting index."""
    out = []
    for aid, act in enumerate(ACTIONS):
        if act.direction == "hold":
            out.append((aid, idx))
            continue
        pos = ("vcpu", "mem", "lc").index(act.target)
        step = 1 if act.direction == "increase" else -1
        nxt = list(idx)
        nxt[pos] += step
        if 0 <= nxt[pos] < shape[pos]:
            out.append((aid, tuple(nxt)))
    return out


def value_iteration(model, grid, targets, reward_config, input_rate, weights, gamma, tol=1e-13, max_iter=100000):
    """Fixed point of the scalarised-greedy multi-objective Bellman operator.

    Returns {point index triple: (flags, Q array of shape (3, 7))}; entries
    for infeasible actions stay zero.
    """
    w = np.array(weights.as_tuple())
    pts = list(grid.points())
    info = {}
    for idx in pts:
        r = grid.vector(idx)
        kpi = measure(model, r, input_rate)
        info[idx] = (kpi_flags(kpi, input_rate, targets), np.array(reward_vector(r, reward_config, kpi, grid)))
    moves = {idx: _moves(idx, grid.shape) for idx in pts}
    Q = {idx: np.zeros((3, len(ACTIONS))) for idx in pts}

    def greedy(idx):
        best, best_v = None, -np.inf
        for aid, _ in moves[idx]:
            v = float(w @ Q[idx][:, aid])
            if v > best_v:
                best, best_v = aid, v
        return best

    for _ in range(max_iter):
        new = {idx: np.zeros((3, len(ACTIONS))) for idx in pts}
        for idx in pts:
            for aid, nxt in moves[idx]:
                a2 = greedy(nxt)
                new[idx][:, aid] = info[nxt][1] + gamma * Q[nxt][:, a2]
        diff = max(np.abs(new[i] - Q[i]).max() for i in pts)
        Q = new
        if diff < tol:
            break
    return {idx: (info[idx][0], Q[idx]) for idx in pts}


def linear_scan_ir(passes, lo, hi, resolution):
    """Largest rate on the lo + k*resolution lattice (capped at hi) that passes."""
    best = None
    rate = lo
    while rate <= hi + 1e-9:
        if passes(rate):
            best = rate
        rate += resolution
    if passes(hi):
        best = hi
    return best


def quadratic_front(objectives):
    """Indices of rows not dominated by any other row (all objectives minimised)."""
    obj = np.asarray(objectives, dtype=float)
    keep = []
    for i in range(len(obj)):
        dominated = False
        for j in range(len(obj)):
            if j != i and np.all(obj[j] <= obj[i]) and np.any(obj[j] < obj[i]):
                dominated = True
                break
        if not dominated:
            keep.append(i)
    return keep
