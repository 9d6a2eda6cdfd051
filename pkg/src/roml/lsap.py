"""Exact solvers for the rectangular linear sum assignment problem.

A problem instance is an ``n_src x n_tgt`` cost matrix with
``n_src >= n_tgt >= 1``; a solution assigns every target (column) a
distinct source (row) minimizing the summed cost. Costs may be negative.

``solve_lsap`` dispatches to a compiled kernel when the extension built;
set ``ROML_PURE_PYTHON=1`` before import to force the pure-Python
fallback. Both kernels return identical assignments.
"""

import itertools
import os

import numpy as np

from . import _hungarian_py
from .exceptions import InfeasibleError, OversizeError

BRUTE_FORCE_MAX_SOURCES = 8

if os.environ.get("ROML_PURE_PYTHON"):
    _kernel = _hungarian_py
else:
    try:
        from . import _hungarian as _kernel
    except ImportError:
        _kernel = _hungarian_py


def kernel_name():
    """Return ``"compiled"`` or ``"python"``: the kernel solve_lsap uses."""
    return "python" if _kernel is _hungarian_py else "compiled"


def _check_cost(cost):
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost must be 2-D, got shape %s" % (cost.shape,))
    n_src, n_tgt = cost.shape
    if n_tgt < 1:
        raise ValueError("need at least one target column")
    if n_src < n_tgt:
        raise InfeasibleError(
            "cannot assign %d targets to %d sources injectively"
            % (n_tgt, n_src)
        )
    if not np.isfinite(cost).all():
        raise ValueError("cost contains non-finite entries")
    return cost


def _total(cost, t2s):
    return float(cost[t2s, np.arange(cost.shape[1])].sum())


def solve_lsap(cost):
    """Solve a rectangular assignment problem exactly.

    Parameters
    ----------
    cost : array, shape (n_src, n_tgt), n_src >= n_tgt
        Finite real costs; entry (i, j) is the cost of assigning source i
        to target j.

    Returns
    -------
    target_to_source : intp array, shape (n_tgt,)
        Distinct source indices, one per target, minimizing the summed
        cost. Among equal-cost optima the result is deterministic, with
        ties resolved towards lower source indices.
    total : float
        The minimal summed cost.
    """
    cost = _check_cost(cost)
    # The kernel assigns rows to columns, so hand it targets as rows.
    t2s = np.asarray(_kernel.solve(np.ascontiguousarray(cost.T)), dtype=np.intp)
    return t2s, _total(cost, t2s)


def brute_force_lsap(cost):
    """Exhaustive-enumeration oracle for small assignment problems.

    Requires ``n_src <= BRUTE_FORCE_MAX_SOURCES``. Ties are broken by the
    lexicographically smallest ``target_to_source``.
    """
    cost = _check_cost(cost)
    n_src, n_tgt = cost.shape
    if n_src > BRUTE_FORCE_MAX_SOURCES:
        raise OversizeError(
            "brute force limited to %d sources, got %d"
            % (BRUTE_FORCE_MAX_SOURCES, n_src)
        )
    best = None
    best_total = np.inf
    cols = np.arange(n_tgt)
    for perm in itertools.permutations(range(n_src), n_tgt):
        total = float(cost[perm, cols].sum())
        if total < best_total:
            best_total = total
            best = perm
    return np.asarray(best, dtype=np.intp), best_total
