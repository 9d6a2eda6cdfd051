"""Synthetic benchmarks, evaluation metrics and exact small oracles.

Data generation follows one recipe throughout: shared inlier columns
drawn i.i.d. normal, per-set outlier columns drawn the same way, optional
replacement of some inliers by fresh outliers (missing inliers), sparse
corruption of a fixed fraction of each column's entries, and final
normalization to unit column norm. All randomness flows through numpy's
``default_rng`` (PCG64) from the seed in the spec, so runs are bit
reproducible.
"""

import dataclasses
import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import prox
from .core import (
    DESCRIPTOR,
    FeatureSet,
    PartialPermutation,
    assemble_d,
    canonicalize,
    solve_roml,
)
from .exceptions import OversizeError

BRUTE_FORCE_MAX_TUPLES = 1_000_000


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape and corruption levels of one synthetic matching problem."""

    K: int
    n: int
    n_k: int
    d: int
    sparse_error_ratio: float = 0.0
    missing_inlier_ratio: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.K < 2 or self.n < 1 or self.d < 1:
            raise ValueError("need K >= 2, n >= 1, d >= 1")
        if self.n_k < self.n:
            raise ValueError("n_k must be at least n")
        for name in ("sparse_error_ratio", "missing_inlier_ratio"):
            r = getattr(self, name)
            if not 0.0 <= r <= 1.0:
                raise ValueError("%s must lie in [0, 1]" % name)


@dataclass
class GroundTruth:
    """True permutations and, per set, which slots hold true inliers."""

    ppms: list
    inlier_flags: list


def _corrupt(columns, ratio, rng):
    """Add large sparse errors to floor(ratio*d) entries of every column.

    The error range for a column is +-2 max|entry| of its clean values.
    """
    d = columns.shape[0]
    n_corrupt = int(math.floor(ratio * d))
    if n_corrupt == 0:
        return
    for c in range(columns.shape[1]):
        clean_peak = np.abs(columns[:, c]).max()
        idx = rng.choice(d, size=n_corrupt, replace=False)
        columns[idx, c] += rng.uniform(
            -2.0 * clean_peak, 2.0 * clean_peak, size=n_corrupt
        )


def generate(spec):
    """Build one synthetic problem; returns ``(sets, truth)``.

    The same n inlier columns appear in every set at seeded-random
    positions; remaining columns are per-set outliers. With a missing
    ratio r, floor(r*n) slots per set are replaced by fresh outliers and
    flagged False in the truth. Columns end up unit-norm
    (``norm_constant=1``).
    """
    rng = np.random.default_rng(spec.seed)
    inliers = rng.standard_normal((spec.d, spec.n))
    n_missing = int(math.floor(spec.missing_inlier_ratio * spec.n))

    sets = []
    ppms = []
    flags = []
    for k in range(spec.K):
        outliers = rng.standard_normal((spec.d, spec.n_k - spec.n))
        stacked = np.hstack([inliers, outliers])
        order = rng.permutation(spec.n_k)
        columns = np.empty_like(stacked)
        columns[:, order] = stacked
        t2s = order[: spec.n].copy()

        inlier_ok = np.ones(spec.n, dtype=bool)
        if n_missing:
            gone = rng.choice(spec.n, size=n_missing, replace=False)
            for j in gone:
                columns[:, t2s[j]] = rng.standard_normal(spec.d)
            inlier_ok[gone] = False

        _corrupt(columns, spec.sparse_error_ratio, rng)
        columns /= np.linalg.norm(columns, axis=0)
        sets.append(FeatureSet(columns, image_id=k, norm_constant=1.0))
        ppms.append(PartialPermutation(spec.n_k, t2s))
        flags.append(inlier_ok)
    return sets, GroundTruth(ppms, flags)


def _check_same_shape(found, truth_ppms):
    if len(found) != len(truth_ppms):
        raise ValueError(
            "%d found vs %d true permutations" % (len(found), len(truth_ppms))
        )
    for f, t in zip(found, truth_ppms):
        if f.n_targets != t.n_targets or f.n_sources != t.n_sources:
            raise ValueError("found and true permutations differ in shape")


def recovery_rate(found, truth):
    """Fraction of true selections reproduced entry-for-entry.

    Both solutions are put in canonical slot order first, then matching
    (source, slot) entries are counted against the K*n true ones.
    """
    truth_ppms = truth.ppms if isinstance(truth, GroundTruth) else truth
    _check_same_shape(found, truth_ppms)
    found = canonicalize(found)
    truth_ppms = canonicalize(truth_ppms)
    hits = sum(
        int(np.sum(f.target_to_source == t.target_to_source))
        for f, t in zip(found, truth_ppms)
    )
    total = sum(t.n_targets for t in truth_ppms)
    return hits / total


def _pair_set(ppm_a, ppm_b, keep=None):
    pairs = zip(ppm_a.target_to_source, ppm_b.target_to_source)
    if keep is None:
        return {(int(a), int(b)) for a, b in pairs}
    return {(int(a), int(b)) for (a, b), ok in zip(pairs, keep) if ok}


def match_identification_ratios(found, truth):
    """Pairwise correspondence precision/recall over all set pairs.

    For every pair of sets, a found slot counts when its (source, source)
    pair coincides with a true pair whose both endpoints are true inliers.
    Match ratio divides the hit count by the number of found pairs,
    identification ratio by the number of true pairs.
    """
    truth_ppms = truth.ppms
    K = len(truth_ppms)
    if len(found) != K:
        raise ValueError("%d found vs %d true permutations" % (len(found), K))
    hit = 0
    n_found = 0
    n_true = 0
    for p, q in itertools.combinations(range(K), 2):
        both = truth.inlier_flags[p] & truth.inlier_flags[q]
        true_pairs = _pair_set(truth_ppms[p], truth_ppms[q], both)
        found_pairs = _pair_set(found[p], found[q])
        hit += len(found_pairs & true_pairs)
        n_found += len(found_pairs)
        n_true += len(true_pairs)
    match = hit / n_found if n_found else 0.0
    ident = hit / n_true if n_true else 0.0
    return match, ident


def _true_inlier_columns(truth, k):
    keep = truth.inlier_flags[k]
    return set(
        int(s) for s, ok in zip(truth.ppms[k].target_to_source, keep) if ok
    )


def detection_precision_recall(mask, truth, found):
    """Precision/recall of an inlier-detection mask.

    Precision is detected-true-inliers over all detections; recall is
    detected-true-inliers over all true inliers present in the sets. An
    empty detection set scores precision 1.0 by convention (nothing
    claimed, nothing wrong) with recall 0.
    """
    n, K = mask.detected.shape
    if len(found) != K or found[0].n_targets != n:
        raise ValueError("mask shape does not match the found permutations")
    detected = 0
    detected_true = 0
    total_true = 0
    for k in range(K):
        true_cols = _true_inlier_columns(truth, k)
        total_true += len(true_cols)
        for j in range(n):
            if mask.detected[j, k]:
                detected += 1
                if int(found[k].target_to_source[j]) in true_cols:
                    detected_true += 1
    precision = detected_true / detected if detected else 1.0
    recall = detected_true / total_true if total_true else 0.0
    return precision, recall


def _feasible_count(sizes, n):
    first = math.comb(sizes[0], n)
    rest = 1
    for n_k in sizes[1:]:
        rest *= math.perm(n_k, n)
    return first * rest


def brute_force_miap(sets, n, mode=DESCRIPTOR):
    """Exhaustive oracle: the selection tuple of minimal nuclear norm.

    Enumerates every feasible permutation tuple modulo the common slot
    reordering (the first set's selection is kept sorted) and returns the
    tuple minimizing the nuclear norm of the assembled data matrix, plus
    that minimum. Ties go to the lexicographically smallest tuple in
    enumeration order. Guarded: the feasible count must not exceed
    ``BRUTE_FORCE_MAX_TUPLES``.
    """
    sets = list(sets)
    sizes = [fs.size for fs in sets]
    if n < 1 or n > min(sizes):
        raise ValueError("n must be in [1, %d], got %d" % (min(sizes), n))
    count = _feasible_count(sizes, n)
    if count > BRUTE_FORCE_MAX_TUPLES:
        raise OversizeError(
            "%d feasible selection tuples exceed the enumeration guard (%d)"
            % (count, BRUTE_FORCE_MAX_TUPLES)
        )

    first_choices = itertools.combinations(range(sizes[0]), n)
    best = None
    best_value = np.inf
    for first in first_choices:
        for rest in itertools.product(
            *[itertools.permutations(range(n_k), n) for n_k in sizes[1:]]
        ):
            ppms = [PartialPermutation(sizes[0], first)]
            ppms.extend(
                PartialPermutation(n_k, t2s)
                for n_k, t2s in zip(sizes[1:], rest)
            )
            value = prox.nuclear_norm(assemble_d(sets, ppms, mode))
            if value < best_value:
                best_value = value
                best = ppms
    return best, float(best_value)


def _rotation(axis, angle):
    axis = axis / np.linalg.norm(axis)
    skew = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + np.sin(angle) * skew + (1 - np.cos(angle)) * (skew @ skew)


def generate_rank4_coords(K, n, n_outliers, noise_sd, seed=0):
    """Rigid-motion point tracks: coordinate sets whose true stacking is
    low-rank.

    A random 3-D point cloud is viewed along a random smooth camera path
    (a random incremental rotation between consecutive views, like frames
    sampled from a video) with per-view 2-D translations under
    orthographic projection, so the correctly aligned 2K x n coordinate
    matrix has rank at most 4 at zero noise. Decoy points are appended in
    an annulus well outside each view's pattern, columns are shuffled per
    view, and Gaussian noise of scale ``noise_sd`` is added to everything.
    """
    if n < 4:
        raise ValueError("need n >= 4 for a meaningful rigid shape")
    if K < 2 or n_outliers < 0 or noise_sd < 0:
        raise ValueError("bad generator arguments")
    rng = np.random.default_rng(seed)
    shape3d = rng.standard_normal((3, n)) * 30.0
    pose = _rotation(rng.standard_normal(3), rng.uniform(0.0, np.pi))

    sets = []
    ppms = []
    flags = []
    n_k = n + n_outliers
    for k in range(K):
        t = rng.uniform(-50.0, 50.0, size=2)
        proj = (pose @ shape3d)[:2, :] + t[:, None]
        center = proj.mean(axis=1, keepdims=True)
        radius = np.linalg.norm(proj - center, axis=0).max()
        angles = rng.uniform(0.0, 2.0 * np.pi, n_outliers)
        radii = radius * rng.uniform(1.3, 2.5, n_outliers)
        outliers = center + np.vstack(
            [radii * np.cos(angles), radii * np.sin(angles)]
        )
        stacked = np.hstack([proj, outliers])
        if noise_sd > 0:
            stacked = stacked + rng.normal(0.0, noise_sd, size=stacked.shape)
        order = rng.permutation(n_k)
        columns = np.empty_like(stacked)
        columns[:, order] = stacked
        sets.append(FeatureSet(columns, image_id=k))
        ppms.append(PartialPermutation(n_k, order[:n].copy()))
        flags.append(np.ones(n, dtype=bool))
        pose = _rotation(rng.standard_normal(3), rng.uniform(0.05, 0.18)) @ pose
    return sets, GroundTruth(ppms, flags)


def simulate_trials(spec, make_config, trials=5):
    """Generate + solve ``trials`` times; returns ``(report, truth, rate)``
    triples.

    Trial t draws data with seed ``spec.seed + t`` and solves with
    ``make_config(spec.seed + t)``, so runs are reproducible yet distinct.
    """
    results = []
    for t in range(trials):
        trial_spec = dataclasses.replace(spec, seed=spec.seed + t)
        sets, truth = generate(trial_spec)
        report = solve_roml(sets, make_config(trial_spec.seed))
        results.append((report, truth, recovery_rate(report.ppms, truth)))
    return results
