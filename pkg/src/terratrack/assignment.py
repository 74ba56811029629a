"""Gated minimum-cost bipartite assignment."""
from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment


def hungarian_assign(cost, gate=np.inf):
    """Solve the gated linear assignment problem.

    Pairs with ``cost > gate`` are infeasible and never matched. Among the
    feasible pairs the result has maximum cardinality and, within that, the
    minimum total cost. ``gate`` may be a scalar, a per-row vector, or a full
    matrix broadcastable to ``cost``.

    Returns ``(matches, unmatched_rows, unmatched_cols)`` where ``matches`` is
    a list of ``(row, col)`` sorted by row.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        cost = cost.reshape(len(cost), -1) if cost.size else np.zeros((len(cost), 0))
    n, m = cost.shape
    if n == 0 or m == 0:
        return [], list(range(n)), list(range(m))
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")

    gate = np.asarray(gate, dtype=float)
    if gate.ndim == 1:
        gate = gate[:, None]
    feasible = cost <= gate
    if not feasible.any():
        return [], list(range(n)), list(range(m))

    # Big-M: any assignment with more feasible pairs beats every one with fewer.
    offset = cost[feasible].min()
    span = cost[feasible].max() - offset
    big = (min(n, m) + 1) * span + 1.0
    work = np.where(feasible, cost - offset, big)
    rows, cols = linear_sum_assignment(work)

    matches = [(int(r), int(c)) for r, c in zip(rows, cols) if feasible[r, c]]
    used_r = {r for r, _ in matches}
    used_c = {c for _, c in matches}
    return (
        matches,
        [r for r in range(n) if r not in used_r],
        [c for c in range(m) if c not in used_c],
    )
