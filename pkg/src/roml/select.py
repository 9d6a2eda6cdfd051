"""Model selection on top of the matching solver.

Two schemes: estimating the unknown slot count n by watching the maximal
per-slot nuclear norm jump as n grows past the number of shared features,
and detecting which of the selected features are true inliers by
decomposing the final data matrix and thresholding per-feature error
blocks.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import prox
from .core import solve_roml
from .exceptions import NumericalError
from .rpca import RpcaConfig, solve_rpca

DELTA_DEFAULT = 0.05
XI_DEFAULT = 4.0


@dataclass
class CorrespondenceNuclear:
    """Per-slot nuclear norms of a dn x K data matrix.

    ``per_slot[j]`` is the nuclear norm of slot j's d x K block;
    ``gamma_n`` is their maximum. ``gamma_bar`` is the running mean over a
    series of solves with growing n, filled in by
    ``estimate_inlier_count``.
    """

    per_slot: np.ndarray
    gamma_n: float
    gamma_bar: float = None


@dataclass
class InlierCountEstimate:
    """Estimated slot count plus the series of gamma values inspected."""

    n_hat: int
    gamma_series: list
    found: bool


@dataclass
class InlierMask:
    """Detection grid over the n x K selected features.

    ``detected[j, k]`` is True exactly when ``error_l1[j, k]`` (the l1
    norm of feature (j, k)'s error block) is below the threshold used.
    """

    detected: np.ndarray
    error_l1: np.ndarray
    rpca_converged: bool = True


def _slot_blocks(d_matrix, d, n):
    d_matrix = prox._as_matrix(d_matrix, "d_matrix")
    if d_matrix.shape[0] != d * n:
        raise ValueError(
            "expected %d rows (%d slots of dimension %d), got %d"
            % (d * n, n, d, d_matrix.shape[0])
        )
    return [d_matrix[j * d : (j + 1) * d, :] for j in range(n)]


def per_correspondence_nuclear(d_matrix, d, n):
    """Nuclear norm of each slot's d x K block of ``d_matrix`` (dn x K)."""
    per_slot = np.array(
        [prox.nuclear_norm(block) for block in _slot_blocks(d_matrix, d, n)]
    )
    return CorrespondenceNuclear(per_slot, float(per_slot.max()))


def estimate_inlier_count(sets, base_config, delta=DELTA_DEFAULT, n_max=None):
    """Estimate the shared-feature count by re-solving with growing n.

    Solves the matching problem for n = 1, 2, ... and records
    gamma_n = max per-slot nuclear norm of the resulting data matrix. The
    estimate is the first n whose successor jumps:
    ``(gamma_{n+1} - mean(gamma_1..gamma_n)) / mean(...) > delta``.
    Each solve restarts from scratch; permutations for one n are useless
    as warm starts for another.

    Returns an InlierCountEstimate; if no jump occurs up to ``n_max``
    (default: the smallest set size), ``n_hat = n_max`` with
    ``found=False``.
    """
    if not delta > 0.0:
        raise ValueError("delta must be positive, got %r" % delta)
    sets = list(sets)
    smallest = min(fs.size for fs in sets)
    if n_max is None:
        n_max = smallest
    if not 1 <= n_max <= smallest:
        raise ValueError(
            "n_max must be in [1, %d], got %d" % (smallest, n_max)
        )
    d = sets[0].dim

    gamma_series = []
    for m in range(1, n_max + 1):
        config = replace(base_config, n=m)
        try:
            report = solve_roml(sets, config)
        except Exception as exc:
            raise NumericalError(
                "inlier-count estimation failed while solving at n=%d: %s"
                % (m, exc)
            ) from exc
        if config.mode == "descriptor":
            summary = per_correspondence_nuclear(report.D, d, m)
        else:
            # Coordinate stacking keeps slots in columns; regroup each
            # slot's K 2-vectors into a 2 x K block first.
            slot_major = np.vstack(
                [report.D[:, j].reshape(-1, 2).T for j in range(m)]
            )
            summary = per_correspondence_nuclear(slot_major, 2, m)
        gamma_series.append(summary.gamma_n)
        if m >= 2:
            gamma_bar = float(np.mean(gamma_series[: m - 1]))
            if (gamma_series[-1] - gamma_bar) / gamma_bar > delta:
                return InlierCountEstimate(m - 1, gamma_series, True)
    return InlierCountEstimate(n_max, gamma_series, False)


def detect_true_inliers(d_matrix, d, n, xi=XI_DEFAULT, config=None):
    """Flag the selected features whose error blocks are small.

    Decomposes ``d_matrix`` (dn x K, built from unit-norm features) into
    low-rank plus sparse parts with lam = 1/sqrt(dn), then marks feature
    (j, k) as a true inlier when the l1 norm of its d-entry error block
    stays below ``xi``. If the decomposition hits its iteration cap the
    mask is still computed from the final iterate and flagged via
    ``rpca_converged``.
    """
    if not xi > 0.0:
        raise ValueError("xi must be positive, got %r" % xi)
    _slot_blocks(d_matrix, d, n)  # shape check
    if config is None:
        config = RpcaConfig()
    result = solve_rpca(d_matrix, config)
    error_l1 = np.empty((n, d_matrix.shape[1]))
    for j in range(n):
        error_l1[j, :] = np.abs(result.E[j * d : (j + 1) * d, :]).sum(axis=0)
    return InlierMask(error_l1 < xi, error_l1, result.converged)
