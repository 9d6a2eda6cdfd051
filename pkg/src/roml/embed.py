"""Laplacian-embedding feature learner.

Combines within-image spatial proximity and across-image descriptor
similarity into one affinity matrix over all points, then embeds every
point into d dimensions via the bottom nontrivial generalized
eigenvectors of the graph Laplacian. Points that are spatially close in
an image, or look alike across images, land close in the embedded space,
which makes the embedded vectors usable as matching features.
"""

from dataclasses import dataclass

import numpy as np

from .core import FeatureSet
from .exceptions import NumericalError

# Eigenvalues below this fraction of the largest are the trivial
# (per-connected-component) ones and are skipped.
TRIVIAL_EIGENVALUE_RATIO = 1e-9

RESIDUAL_TOL = 1e-6


@dataclass(frozen=True)
class PointSet:
    """Image points: 2 x n_k coordinates plus d_raw x n_k descriptors."""

    coords: np.ndarray
    descriptors: np.ndarray
    image_id: object = None

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64)
        f = np.asarray(self.descriptors, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != 2:
            raise ValueError("coords must be 2 x n_k, got %s" % (c.shape,))
        if f.ndim != 2 or f.shape[1] != c.shape[1]:
            raise ValueError(
                "descriptors must be d_raw x n_k with the same n_k as "
                "coords, got %s vs %s" % (f.shape, c.shape)
            )
        if not (np.isfinite(c).all() and np.isfinite(f).all()):
            raise ValueError("point set contains non-finite entries")
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "descriptors", f)

    @property
    def size(self):
        return self.coords.shape[1]


def _sq_dists(a, b):
    """Pairwise squared euclidean distances between columns of a and b."""
    diff = a[:, :, None] - b[:, None, :]
    return np.einsum("dij,dij->ij", diff, diff)


def _check_sigma(sigma, name):
    if not sigma > 0.0:
        raise ValueError("%s must be positive, got %r" % (name, sigma))
    return float(sigma)


def spatial_affinity(ps, sigma_spa):
    """Gaussian kernel on image-coordinate distances within one set."""
    sigma_spa = _check_sigma(sigma_spa, "sigma_spa")
    return np.exp(-_sq_dists(ps.coords, ps.coords) / (2.0 * sigma_spa**2))


def descriptor_affinity(p, q, sigma_des):
    """Gaussian kernel on descriptor distances between two sets."""
    sigma_des = _check_sigma(sigma_des, "sigma_des")
    if p.descriptors.shape[0] != q.descriptors.shape[0]:
        raise ValueError(
            "descriptor dimensions differ: %d vs %d"
            % (p.descriptors.shape[0], q.descriptors.shape[0])
        )
    return np.exp(
        -_sq_dists(p.descriptors, q.descriptors) / (2.0 * sigma_des**2)
    )


@dataclass(frozen=True)
class AffinityMatrix:
    """Symmetric nonnegative affinity over all points of all sets.

    ``offsets[k]`` is the first row/column of set k's block;
    ``offsets[-1]`` equals the total point count.
    """

    matrix: np.ndarray
    offsets: tuple

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("affinity must be square, got %s" % (a.shape,))
        if not np.isfinite(a).all():
            raise ValueError("affinity contains non-finite entries")
        if np.abs(a - a.T).max() > 1e-12:
            raise ValueError("affinity must be symmetric within 1e-12")
        if a.min() < 0:
            raise ValueError("affinity entries must be nonnegative")
        offsets = tuple(int(o) for o in self.offsets)
        if offsets[0] != 0 or offsets[-1] != a.shape[0] or sorted(offsets) != list(offsets):
            raise ValueError("offsets do not partition the affinity matrix")
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "offsets", offsets)


def build_affinity(point_sets, sigma_spa, sigma_des):
    """Assemble the block affinity: spatial kernels on the diagonal
    blocks, descriptor kernels off-diagonal."""
    point_sets = list(point_sets)
    if not point_sets:
        raise ValueError("need at least one point set")
    sizes = [ps.size for ps in point_sets]
    offsets = tuple(np.concatenate([[0], np.cumsum(sizes)]).tolist())
    total = offsets[-1]
    a = np.empty((total, total))
    for p, ps_p in enumerate(point_sets):
        rows = slice(offsets[p], offsets[p + 1])
        a[rows, rows] = spatial_affinity(ps_p, sigma_spa)
        for q in range(p + 1, len(point_sets)):
            cols = slice(offsets[q], offsets[q + 1])
            block = descriptor_affinity(ps_p, point_sets[q], sigma_des)
            a[rows, cols] = block
            a[cols, rows] = block.T
    return AffinityMatrix(a, offsets)


def laplacian_embed(affinity, d, image_ids=None):
    """Embed all points into d dimensions; returns one FeatureSet per set.

    Solves the generalized eigenproblem L v = beta Deg v for the graph
    Laplacian L = Deg - A (Deg the diagonal degree matrix) through the
    symmetric normalization Deg^{-1/2} L Deg^{-1/2}, takes the d smallest
    nontrivial eigenvectors in ascending eigenvalue order and splits their
    rows back per set. The result satisfies F^T Deg F = I; each
    eigenvector's largest-magnitude entry is made positive so output signs
    are deterministic.
    """
    if d < 1:
        raise ValueError("embedding dimension must be at least 1")
    a = affinity.matrix
    offsets = affinity.offsets
    degrees = a.sum(axis=1)
    isolated = np.nonzero(degrees <= 0.0)[0]
    if isolated.size:
        raise ValueError(
            "point %d is isolated (zero affinity row)" % isolated[0]
        )

    inv_sqrt = 1.0 / np.sqrt(degrees)
    sym = a * inv_sqrt[:, None] * inv_sqrt[None, :]
    lap_sym = np.eye(a.shape[0]) - sym
    lap_sym = 0.5 * (lap_sym + lap_sym.T)
    try:
        values, vectors = np.linalg.eigh(lap_sym)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("eigendecomposition failed: %s" % exc) from exc

    beta_max = values[-1]
    nontrivial = np.nonzero(values > TRIVIAL_EIGENVALUE_RATIO * beta_max)[0]
    if nontrivial.size < d:
        raise ValueError(
            "only %d nontrivial eigenvalues available, need %d"
            % (nontrivial.size, d)
        )
    chosen = nontrivial[:d]
    embedded = inv_sqrt[:, None] * vectors[:, chosen]
    betas = values[chosen]

    for c in range(d):
        col = embedded[:, c]
        if col[np.argmax(np.abs(col))] < 0:
            embedded[:, c] = -col

    # Verify the generalized eigenpair residuals before handing out.
    lap = np.diag(degrees) - a
    for c in range(d):
        v = embedded[:, c]
        dv = degrees * v
        if np.linalg.norm(lap @ v - betas[c] * dv) > RESIDUAL_TOL * np.linalg.norm(dv):
            raise NumericalError(
                "generalized eigenpair %d exceeds the residual tolerance" % c
            )

    out = []
    for k in range(len(offsets) - 1):
        block = embedded[offsets[k] : offsets[k + 1], :].T.copy()
        image_id = image_ids[k] if image_ids is not None else k
        out.append(FeatureSet(block, image_id=image_id))
    return out
