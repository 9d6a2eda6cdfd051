"""Pure-Python shortest-augmenting-path kernel for rectangular assignment.

Fallback used when the compiled extension (``roml._hungarian``) is missing
or disabled. Both kernels run the same algorithm with the same scan order,
so they return identical assignments, including on tied costs; this one is
a couple of orders of magnitude slower.

The kernel solves min sum_r C[r, assign(r)] over injective assignments of
every row of an nr x nc matrix (nr <= nc) to a distinct column. Rows are
assigned one at a time by growing a shortest augmenting path over the
reduced costs (dual potentials u, v), Dijkstra style.
"""

import numpy as np


def solve(cost):
    """Assign each row of ``cost`` (nr x nc, nr <= nc) a distinct column.

    Returns an intp array ``col4row`` of length nr minimizing the summed
    cost. ``cost`` must be a finite float64 array.
    """
    nr, nc = cost.shape
    u = np.zeros(nr)
    v = np.zeros(nc)
    shortest = np.empty(nc)
    path = np.full(nc, -1, dtype=np.intp)
    col4row = np.full(nr, -1, dtype=np.intp)
    row4col = np.full(nc, -1, dtype=np.intp)
    visited_rows = np.zeros(nr, dtype=bool)
    remaining = np.empty(nc, dtype=np.intp)

    for cur_row in range(nr):
        num_remaining = nc
        for jp in range(nc):
            # Scan columns high-to-low so equal-cost ties land on the
            # lowest column index (same order as the compiled kernel).
            remaining[jp] = nc - jp - 1
        visited_rows[:] = False
        visited_cols = []
        shortest[:] = np.inf
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            visited_rows[i] = True
            rem = remaining[:num_remaining]
            r = min_val + cost[i, rem] - u[i] - v[rem]
            improved = r < shortest[rem]
            idx = rem[improved]
            path[idx] = i
            shortest[idx] = r[improved]

            vals = shortest[rem]
            lowest = vals.min()
            if lowest == np.inf:  # unreachable with finite costs
                raise ValueError("cost matrix is infeasible")
            ties = np.nonzero(vals == lowest)[0]
            unassigned = ties[row4col[rem[ties]] == -1]
            # Mirror the sequential scan: the last tied unassigned column
            # wins, otherwise the first tied one.
            index = int(unassigned[-1]) if unassigned.size else int(ties[0])
            min_val = lowest
            j = int(remaining[index])
            if row4col[j] == -1:
                sink = j
            else:
                i = int(row4col[j])
            visited_cols.append(j)
            num_remaining -= 1
            remaining[index] = remaining[num_remaining]

        # Update dual potentials for the visited rows and columns.
        u[cur_row] += min_val
        other = visited_rows.copy()
        other[cur_row] = False
        u[other] += min_val - shortest[col4row[other]]
        vc = np.asarray(visited_cols, dtype=np.intp)
        v[vc] -= min_val - shortest[vc]

        # Augment along the recorded path back to cur_row.
        j = sink
        while True:
            i = int(path[j])
            row4col[j] = i
            col4row[i], j = j, col4row[i]
            if i == cur_row:
                break

    return col4row
