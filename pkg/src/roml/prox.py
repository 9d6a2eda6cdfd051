"""Proximal operators and matrix norms used by the solvers.

All routines take dense 2-D arrays, compute in 64-bit floating point and
return newly allocated outputs (row-major, the numpy default).
"""

import numpy as np

from .exceptions import NumericalError

# Singular values at or below this level are treated as round-off, not rank.
RANK_EPS = 1e-12


def _as_matrix(m, name="matrix"):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("%s must be 2-D, got shape %s" % (name, (m.shape,)))
    if not np.isfinite(m).all():
        raise ValueError("%s contains non-finite entries" % name)
    return m


def _check_tau(tau):
    tau = float(tau)
    if not (tau >= 0.0):
        raise ValueError("threshold must be nonnegative, got %r" % tau)
    return tau


def soft_threshold(m, tau):
    """Shrink every entry of ``m`` towards zero by ``tau``.

    Computes ``sign(x) * max(|x| - tau, 0)`` element-wise, the proximal map
    of ``tau * ||.||_1``.
    """
    m = _as_matrix(m)
    tau = _check_tau(tau)
    return np.sign(m) * np.maximum(np.abs(m) - tau, 0.0)


def _thin_svd(m, compute_uv=True):
    try:
        return np.linalg.svd(m, full_matrices=False, compute_uv=compute_uv)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "SVD failed to converge on a %dx%d matrix: %s" % (m.shape + (exc,))
        ) from exc


def svt_values(m, tau):
    """Singular value thresholding, also returning the shrunk spectrum.

    Returns ``(l, values)`` where ``l = U * max(S - tau, 0) * V^T`` for a
    thin SVD of ``m`` and ``values`` are the shrunk singular values, so
    ``values.sum()`` is the nuclear norm of ``l``.
    """
    m = _as_matrix(m)
    tau = _check_tau(tau)
    u, s, vt = _thin_svd(m)
    shrunk = np.maximum(s - tau, 0.0)
    return (u * shrunk) @ vt, shrunk


def svt(m, tau):
    """Proximal map of ``tau * ||.||_*`` (nuclear norm).

    Returns ``(l, effective_rank)`` where ``l`` minimizes
    ``tau * ||l||_* + 0.5 * ||l - m||_F^2`` and ``effective_rank`` counts the
    singular values of ``m`` strictly above ``tau`` (values below
    ``RANK_EPS`` count as zero).
    """
    m = _as_matrix(m)
    tau = _check_tau(tau)
    u, s, vt = _thin_svd(m)
    shrunk = np.maximum(s - tau, 0.0)
    effective_rank = int(np.count_nonzero(s > max(tau, RANK_EPS)))
    return (u * shrunk) @ vt, effective_rank


def nuclear_norm(m):
    """Sum of the singular values of ``m``."""
    m = _as_matrix(m)
    return float(_thin_svd(m, compute_uv=False).sum())
