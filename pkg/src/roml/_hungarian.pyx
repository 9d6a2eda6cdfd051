# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled shortest-augmenting-path kernel for rectangular assignment.

Same algorithm, scan order and tie handling as ``roml._hungarian_py``;
see that module for the description. Runs without the GIL so concurrent
solves from worker threads actually overlap.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def solve(cost):
    """Assign each row of ``cost`` (nr x nc, nr <= nc) a distinct column.

    Returns an intp array ``col4row`` of length nr minimizing the summed
    cost. ``cost`` must be a C-contiguous finite float64 array.
    """
    cdef double[:, ::1] c = cost
    cdef Py_ssize_t nr = c.shape[0]
    cdef Py_ssize_t nc = c.shape[1]

    u_arr = np.zeros(nr)
    v_arr = np.zeros(nc)
    shortest_arr = np.empty(nc)
    path_arr = np.full(nc, -1, dtype=np.intp)
    col4row_arr = np.full(nr, -1, dtype=np.intp)
    row4col_arr = np.full(nc, -1, dtype=np.intp)
    visited_rows_arr = np.zeros(nr, dtype=np.uint8)
    visited_cols_arr = np.zeros(nc, dtype=np.uint8)
    remaining_arr = np.empty(nc, dtype=np.intp)

    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    cdef double[::1] shortest = shortest_arr
    cdef Py_ssize_t[::1] path = path_arr
    cdef Py_ssize_t[::1] col4row = col4row_arr
    cdef Py_ssize_t[::1] row4col = row4col_arr
    cdef unsigned char[::1] visited_rows = visited_rows_arr
    cdef unsigned char[::1] visited_cols = visited_cols_arr
    cdef Py_ssize_t[::1] remaining = remaining_arr

    cdef Py_ssize_t cur_row, i, j, it, jp, index, num_remaining, sink
    cdef double min_val, lowest, r
    cdef bint infeasible = 0

    with nogil:
        for cur_row in range(nr):
            num_remaining = nc
            for jp in range(nc):
                # high-to-low so ties land on the lowest column index
                remaining[jp] = nc - jp - 1
                shortest[jp] = INFINITY
                visited_cols[jp] = 0
            for jp in range(nr):
                visited_rows[jp] = 0
            min_val = 0.0
            i = cur_row
            sink = -1
            while sink == -1:
                visited_rows[i] = 1
                index = -1
                lowest = INFINITY
                for it in range(num_remaining):
                    j = remaining[it]
                    r = min_val + c[i, j] - u[i] - v[j]
                    if r < shortest[j]:
                        path[j] = i
                        shortest[j] = r
                    if shortest[j] < lowest or (
                        shortest[j] == lowest and row4col[j] == -1
                    ):
                        lowest = shortest[j]
                        index = it
                min_val = lowest
                if min_val == INFINITY:
                    infeasible = 1
                    break
                j = remaining[index]
                if row4col[j] == -1:
                    sink = j
                else:
                    i = row4col[j]
                visited_cols[j] = 1
                num_remaining -= 1
                remaining[index] = remaining[num_remaining]
            if infeasible:
                break

            u[cur_row] += min_val
            for it in range(nr):
                if visited_rows[it] and it != cur_row:
                    u[it] += min_val - shortest[col4row[it]]
            for jp in range(nc):
                if visited_cols[jp]:
                    v[jp] -= min_val - shortest[jp]

            j = sink
            while True:
                i = path[j]
                row4col[j] = i
                it = col4row[i]
                col4row[i] = j
                j = it
                if i == cur_row:
                    break

    if infeasible:
        raise ValueError("cost matrix is infeasible")
    return col4row_arr
