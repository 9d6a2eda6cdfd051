"""Alternating solver for joint inlier selection and matching.

Given K feature sets, the solver optimizes one partial permutation per
set so that the selected, slot-aligned features stack into a data matrix
D that splits into a low-rank part L plus a sparse part E. Each iteration
alternates a singular-value shrinkage step for L, an entry-wise shrinkage
step for E, K independent rectangular assignment problems for the
permutations, and a dual ascent step on the consensus constraint
L + E = D, while the penalty rho grows geometrically.

Two stacking modes are supported:

* ``descriptor``: D is dn x K; column k is the slot-major concatenation
  of the n selected d-dimensional features of set k. Exactness of the
  assignment linearization requires equal column norms within each set
  whenever that set has more features than slots.
* ``coordinate``: features are 2-D image coordinates and D is 2K x n,
  stacking the selected 2 x n blocks vertically; inputs are mean-centered
  per set before solving.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import prox
from .exceptions import NumericalError
from .lsap import solve_lsap

DESCRIPTOR = "descriptor"
COORDINATE = "coordinate"

# rho is capped so the 1/rho shrinkage thresholds never underflow.
RHO_CAP = 1e10

# The permutations must survive unchanged this many consecutive iterations
# (on top of the primal tolerance) before the solver declares convergence.
PPM_STABLE_ITERS = 50

_NORM_HELP = (
    "all columns of a set must share one l2-norm (set norm_constant, e.g. "
    "via normalize_features) whenever the set has more features than "
    "target slots; the assignment linearization is exact only then"
)


@dataclass(frozen=True)
class FeatureSet:
    """A d x n_k block of per-image feature columns.

    ``norm_constant``, when set, asserts that every column has that
    l2-norm (within 1e-9); ``normalize_features`` produces such sets.
    """

    features: np.ndarray
    image_id: object = None
    norm_constant: float = None

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
            raise ValueError(
                "features must be a d x n_k matrix with d, n_k >= 1, got "
                "shape %s" % (f.shape,)
            )
        if not np.isfinite(f).all():
            raise ValueError("features contain non-finite entries")
        object.__setattr__(self, "features", f)
        if self.norm_constant is not None:
            c = float(self.norm_constant)
            if not c > 0.0:
                raise ValueError("norm_constant must be positive, got %r" % c)
            norms = np.linalg.norm(f, axis=0)
            off = np.abs(norms - c).max()
            if off > 1e-9:
                raise ValueError(
                    "columns do not all have l2-norm %g (worst deviation "
                    "%.3g)" % (c, off)
                )
            object.__setattr__(self, "norm_constant", c)

    @property
    def dim(self):
        return self.features.shape[0]

    @property
    def size(self):
        return self.features.shape[1]


@dataclass(frozen=True, eq=False)
class PartialPermutation:
    """Injective map of n target slots onto distinct source columns.

    Dense encoding of an n_sources x n binary selection matrix whose
    columns sum to 1 and rows sum to at most 1; ``target_to_source[j]``
    is the source column selected for slot j.
    """

    n_sources: int
    target_to_source: np.ndarray

    def __post_init__(self):
        t2s = np.asarray(self.target_to_source, dtype=np.intp)
        if t2s.ndim != 1 or t2s.size < 1:
            raise ValueError("target_to_source must be a nonempty 1-D list")
        if self.n_sources < t2s.size:
            raise ValueError(
                "cannot select %d slots from %d sources"
                % (t2s.size, self.n_sources)
            )
        if t2s.min() < 0 or t2s.max() >= self.n_sources:
            raise ValueError("source indices out of range [0, %d)" % self.n_sources)
        if np.unique(t2s).size != t2s.size:
            raise ValueError("source indices must be distinct")
        object.__setattr__(self, "target_to_source", t2s)

    @property
    def n_targets(self):
        return self.target_to_source.size

    def as_matrix(self):
        """Dense n_sources x n_targets binary selection matrix."""
        p = np.zeros((self.n_sources, self.n_targets))
        p[self.target_to_source, np.arange(self.n_targets)] = 1.0
        return p

    def __eq__(self, other):
        if not isinstance(other, PartialPermutation):
            return NotImplemented
        return self.n_sources == other.n_sources and np.array_equal(
            self.target_to_source, other.target_to_source
        )


@dataclass(frozen=True)
class RomlConfig:
    """Solver settings; ``None`` fields are resolved from the data.

    ``lam`` defaults to 5/sqrt(d*n) in descriptor mode and 5/sqrt(2K) in
    coordinate mode. ``rho0`` defaults to 1.25 over the spectral scale of
    the assembled data, so the shrinkage thresholds start where they act
    regardless of the feature norm; ``rho_factor`` defaults to 1.001.
    ``fixed_first`` pins the first set's permutation (tracking);
    ``emphasis_factor`` is the norm boost ``emphasize_first`` applies to
    the first set in that scenario.
    """

    n: int
    lam: float = None
    rho0: float = None
    rho_factor: float = None
    max_iters: int = 5000
    primal_tol: float = 1e-7
    mode: str = DESCRIPTOR
    seed: int = 0
    fixed_first: PartialPermutation = None
    emphasis_factor: float = 2.0
    parallel: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.mode not in (DESCRIPTOR, COORDINATE):
            raise ValueError("mode must be %r or %r" % (DESCRIPTOR, COORDINATE))
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.primal_tol > 0.0:
            raise ValueError("primal_tol must be positive")
        for name in ("lam", "rho0"):
            value = getattr(self, name)
            if value is not None and not value > 0.0:
                raise ValueError("%s must be positive" % name)
        if self.rho_factor is not None and not self.rho_factor > 1.0:
            raise ValueError("rho_factor must exceed 1")
        if self.parallel < 1:
            raise ValueError("parallel must be at least 1")
        if self.fixed_first is not None and self.fixed_first.n_targets != self.n:
            raise ValueError(
                "fixed_first selects %d slots but n=%d"
                % (self.fixed_first.n_targets, self.n)
            )

    def resolved(self, d, n_images, scale=1.0):
        """Return (lam, rho0, rho_factor) with mode defaults filled in.

        The default rho0 is data-scaled: the shrinkage thresholds 1/rho
        and lam/rho start at the spectral scale of the assembled data
        matrix (``scale``), so the anneal spends its iterations in the
        regime where the thresholds act. A fixed numeric rho0 only suits
        one particular feature scale; pass ``rho0`` explicitly to pin it.
        """
        if self.mode == DESCRIPTOR:
            lam = 5.0 / np.sqrt(d * self.n)
        else:
            lam = 5.0 / np.sqrt(2.0 * n_images)
        return (
            self.lam if self.lam is not None else lam,
            self.rho0 if self.rho0 is not None else 1.25 / scale,
            self.rho_factor if self.rho_factor is not None else 1.001,
        )


@dataclass
class SolverState:
    """One iterate of the alternating solver.

    All four matrices share one shape (dn x K or 2K x n); ``rho`` is the
    penalty the iterate was computed with.
    """

    L: np.ndarray
    E: np.ndarray
    Y: np.ndarray
    D: np.ndarray
    rho: float
    iteration: int
    ppms: list


@dataclass
class MatchReport:
    """Solver output: permutations, decomposition and iteration history."""

    ppms: list
    L: np.ndarray
    E: np.ndarray
    D: np.ndarray
    residual_history: list
    objective_history: list
    converged: bool
    iterations_used: int
    lambda_used: float
    rho_final: float
    mode: str


def normalize_features(fs, c):
    """Rescale every column of ``fs`` to l2-norm ``c``."""
    if not c > 0.0:
        raise ValueError("target norm must be positive, got %r" % c)
    norms = np.linalg.norm(fs.features, axis=0)
    dead = np.nonzero(norms == 0.0)[0]
    if dead.size:
        raise ValueError(
            "column %d of feature set %r has zero norm and cannot be "
            "normalized" % (dead[0], fs.image_id)
        )
    return FeatureSet(fs.features * (c / norms), fs.image_id, float(c))


def emphasize_first(sets, factor, base_norm=1.0):
    """Renormalize so set 1 has column norm ``factor * base_norm``.

    Used in the tracking scenario with a pinned first-set permutation:
    boosting the labelled set's norms biases the low-rank fit towards its
    slots. All other sets get column norm ``base_norm``.
    """
    if not factor >= 1.0:
        raise ValueError("emphasis factor must be >= 1, got %r" % factor)
    out = [normalize_features(sets[0], factor * base_norm)]
    out.extend(normalize_features(fs, base_norm) for fs in sets[1:])
    return out


def _check_sets_ppms(sets, ppms):
    if len(sets) != len(ppms):
        raise ValueError(
            "%d feature sets but %d permutations" % (len(sets), len(ppms))
        )
    n = ppms[0].n_targets
    for k, (fs, p) in enumerate(zip(sets, ppms)):
        if p.n_sources != fs.size:
            raise ValueError(
                "permutation %d addresses %d sources but set %r has %d "
                "columns" % (k, p.n_sources, fs.image_id, fs.size)
            )
        if p.n_targets != n:
            raise ValueError("permutations disagree on the slot count")
    return n


def assemble_d(sets, ppms, mode=DESCRIPTOR):
    """Stack the selected features into the consensus data matrix.

    Descriptor mode returns dn x K: column k concatenates the n selected
    columns of set k in slot order (slot j occupies rows j*d .. j*d+d-1).
    Coordinate mode returns 2K x n: the selected 2 x n blocks stacked
    vertically.
    """
    n = _check_sets_ppms(sets, ppms)
    dims = {fs.dim for fs in sets}
    if mode == DESCRIPTOR:
        if len(dims) != 1:
            raise ValueError(
                "descriptor mode needs one feature dimension, got %s"
                % sorted(dims)
            )
        d = sets[0].dim
        out = np.empty((d * n, len(sets)))
        for k, (fs, p) in enumerate(zip(sets, ppms)):
            out[:, k] = fs.features[:, p.target_to_source].ravel(order="F")
        return out
    if mode == COORDINATE:
        if dims != {2}:
            raise ValueError("coordinate mode needs 2-D features")
        return np.vstack(
            [fs.features[:, p.target_to_source] for fs, p in zip(sets, ppms)]
        )
    raise ValueError("unknown mode %r" % mode)


def update_l(state):
    """Low-rank step: shrink the singular values of D - E - Y/rho by 1/rho."""
    l, _ = prox.svt(state.D - state.E - state.Y / state.rho, 1.0 / state.rho)
    return l


def update_e(state, lam):
    """Sparse step: entry-wise shrinkage of D - L - Y/rho at lam/rho."""
    return prox.soft_threshold(
        state.D - state.L - state.Y / state.rho, lam / state.rho
    )


def _slot_targets(m, k, n, mode):
    """Slot vectors of image k in ``m = Y + rho (L + E)``, as an n x d array."""
    if mode == DESCRIPTOR:
        d = m.shape[0] // n
        return m[:, k].reshape(n, d)
    return m[2 * k : 2 * k + 2, :].T


def _ppm_cost_from(m, k, fs, n, mode, rho):
    # cost[i, j] = rho/2 ||f_i||^2 - <v_j, f_i>: the exact per-assignment
    # decomposition of the quadratic subproblem. Under a common column
    # norm the first term is a constant shift (the equal-norm reduction);
    # for raw coordinates it must stay.
    v = _slot_targets(m, k, n, mode)
    cost = -(v @ fs.features).T
    if fs.norm_constant is None:
        cost += 0.5 * rho * np.einsum(
            "di,di->i", fs.features, fs.features
        )[:, None]
    return cost


def build_ppm_cost(k, state, fs):
    """Assignment costs of image k's subproblem at the current state.

    Descriptor mode: ``cost[i, j] = -<v_j, f_i>`` where ``v_j`` is slot
    j's d-block of column k of ``Y + rho (L + E)``; minimizing the summed
    cost over injective assignments is the permutation subproblem after
    dropping its constant quadratic term.
    """
    n = state.ppms[k].n_targets
    if state.D.shape[0] != fs.dim * n:
        raise ValueError("build_ppm_cost expects a descriptor-mode state")
    m = state.Y + state.rho * (state.L + state.E)
    return _ppm_cost_from(m, k, fs, n, DESCRIPTOR, state.rho)


def _require_equal_norms(sets, n, mode):
    if mode != DESCRIPTOR:
        return
    for fs in sets:
        if fs.size > n and fs.norm_constant is None:
            raise ValueError(
                "feature set %r: %s" % (fs.image_id, _NORM_HELP)
            )


def update_ppms(state, sets, config):
    """Solve the K independent assignment subproblems at the current state.

    With ``config.fixed_first`` set, the first permutation is returned
    unchanged and only the remaining K-1 are optimized.
    """
    n = config.n
    _require_equal_norms(sets, n, config.mode)
    m = state.Y + state.rho * (state.L + state.E)

    def solve_one(k):
        cost = _ppm_cost_from(m, k, sets[k], n, config.mode, state.rho)
        t2s, _ = solve_lsap(cost)
        return PartialPermutation(sets[k].size, t2s)

    first = 1 if config.fixed_first is not None else 0
    todo = range(first, len(sets))
    if config.parallel > 1:
        with ThreadPoolExecutor(max_workers=config.parallel) as pool:
            solved = list(pool.map(solve_one, todo))
    else:
        solved = [solve_one(k) for k in todo]
    if first:
        return [config.fixed_first] + solved
    return solved


def update_y(state):
    """Dual ascent on the consensus constraint L + E = D."""
    return state.Y + state.rho * (state.L + state.E - state.D)


def residuals(prev, curr):
    """Frobenius norms of the primal and the two dual residual matrices.

    The primal residual is L + E - D at ``curr``; the dual residuals are
    rho (E_prev + D_prev - E - D) and rho (D_prev - D), with rho the
    penalty ``curr`` was computed under.
    """
    primal = np.linalg.norm(curr.L + curr.E - curr.D)
    dual_l = curr.rho * np.linalg.norm(prev.E + prev.D - curr.E - curr.D)
    dual_e = curr.rho * np.linalg.norm(prev.D - curr.D)
    return primal, dual_l, dual_e


def canonicalize(ppms):
    """Reorder all slots by one shared permutation: set 1 ascending.

    Any solution is equivalent up to a common reordering of the target
    slots; this picks the representative whose first-set source indices
    are ascending. Idempotent, and pairwise correspondences are unchanged.
    """
    order = np.argsort(ppms[0].target_to_source)
    return [
        PartialPermutation(p.n_sources, p.target_to_source[order]) for p in ppms
    ]


def _canonical_order(ppms):
    return np.argsort(ppms[0].target_to_source)


def _random_ppms(sets, n, rng):
    return [
        PartialPermutation(fs.size, rng.permutation(fs.size)[:n]) for fs in sets
    ]


def _center_columns(sets):
    out = []
    for fs in sets:
        centered = fs.features - fs.features.mean(axis=1, keepdims=True)
        out.append(FeatureSet(centered, fs.image_id, None))
    return out


def _proximity_init(sets, n, fixed_first=None, sweeps=8):
    """Coordinate-mode warm start: nearest-point consensus.

    Seeds the slot prototypes from the first set (its pinned selection, or
    the n points nearest its centroid), then alternates matching every set
    to the prototypes by squared euclidean distance and re-averaging the
    prototypes. Purely geometric and deterministic.
    """
    first = sets[0].features
    if fixed_first is not None:
        seed_cols = fixed_first.target_to_source
    else:
        seed_cols = np.sort(np.argsort(np.linalg.norm(first, axis=0))[:n])
    proto = first[:, seed_cols].copy()

    def align(proto):
        out = []
        for fs in sets:
            sq = np.einsum("di,di->i", fs.features, fs.features)
            cost = sq[:, None] - 2.0 * (fs.features.T @ proto)
            t2s, _ = solve_lsap(cost)
            out.append(PartialPermutation(fs.size, t2s))
        return out

    ppms = align(proto)
    for _ in range(sweeps):
        if fixed_first is not None:
            ppms[0] = fixed_first
        proto = np.mean(
            [fs.features[:, p.target_to_source] for fs, p in zip(sets, ppms)],
            axis=0,
        )
        ppms = align(proto)
    if fixed_first is not None:
        ppms[0] = fixed_first
    return ppms


def solve_roml(sets, config):
    """Jointly select and align features across ``sets``.

    Parameters
    ----------
    sets : sequence of FeatureSet
        K >= 2 feature sets. Descriptor mode requires a shared feature
        dimension and, for any set holding more than ``config.n`` columns,
        a common per-set column norm. Coordinate mode requires d = 2 and
        mean-centers each set internally.
    config : RomlConfig
        ``config.n`` slots are filled per set; must not exceed the
        smallest set.

    Returns
    -------
    MatchReport
        Final permutations in canonical slot order (unless
        ``config.fixed_first`` pins the order), the L/E/D matrices in the
        same slot order, per-iteration residual and objective histories,
        and convergence information.
    """
    sets = list(sets)
    n_images = len(sets)
    if n_images < 2:
        raise ValueError("need at least 2 feature sets, got %d" % n_images)
    n = config.n
    smallest = min(fs.size for fs in sets)
    if n > smallest:
        raise ValueError(
            "n=%d exceeds the smallest feature set (%d columns)"
            % (n, smallest)
        )
    dims = {fs.dim for fs in sets}
    if config.mode == DESCRIPTOR:
        if len(dims) != 1:
            raise ValueError(
                "descriptor mode needs one feature dimension, got %s"
                % sorted(dims)
            )
        _require_equal_norms(sets, n, config.mode)
    else:
        if dims != {2}:
            raise ValueError("coordinate mode needs 2-D features")
        sets = _center_columns(sets)
    if config.fixed_first is not None:
        if config.fixed_first.n_sources != sets[0].size:
            raise ValueError(
                "fixed_first addresses %d sources but set 1 has %d columns"
                % (config.fixed_first.n_sources, sets[0].size)
            )

    d = sets[0].dim
    rng = np.random.default_rng(config.seed)

    if config.mode == DESCRIPTOR:
        ppms = _random_ppms(sets, n, rng)
        if config.fixed_first is not None:
            ppms[0] = config.fixed_first
        D = assemble_d(sets, ppms, config.mode)
        # Anchor the thresholds at the spectral scale of an aligned
        # solution: equal-norm columns of norm c stack to sqrt(nK) c.
        norms = [
            fs.norm_constant
            if fs.norm_constant is not None
            else float(np.linalg.norm(fs.features, axis=0).mean())
            for fs in sets
        ]
        scale = float(np.mean(norms)) * np.sqrt(n * n_images)
    else:
        ppms = _proximity_init(sets, n, config.fixed_first)
        D = assemble_d(sets, ppms, config.mode)
        # A centered rigid scene spans three row directions; anchoring at
        # the third singular value keeps the whole geometry through the
        # shrinkage so the warm start is refined, not collapsed.
        sv = np.linalg.svd(D, compute_uv=False)
        scale = float(sv[min(2, sv.size - 1)])
        if scale <= 0.0:
            scale = float(sv[0]) if sv[0] > 0 else 1.0
    lam, rho, rho_factor = config.resolved(d, n_images, scale)
    L = np.zeros_like(D)
    E = np.zeros_like(D)
    Y = np.zeros_like(D)

    residual_history = []
    objective_history = []
    converged = False
    iterations = 0
    stable = 0

    state = SolverState(L, E, Y, D, rho, 0, ppms)
    for t in range(config.max_iters):
        state.rho = rho
        state.iteration = t
        prev_D, prev_E = state.D, state.E

        arg = state.D - state.E - state.Y / rho
        L, spectrum = prox.svt_values(arg, 1.0 / rho)
        state.L = L
        state.E = prox.soft_threshold(
            state.D - L - state.Y / rho, lam / rho
        )
        new_ppms = update_ppms(state, sets, config)
        stable = stable + 1 if new_ppms == state.ppms else 0
        state.ppms = new_ppms
        state.D = assemble_d(sets, new_ppms, config.mode)
        state.Y = state.Y + rho * (state.L + state.E - state.D)

        primal = np.linalg.norm(state.L + state.E - state.D)
        dual_l = rho * np.linalg.norm(prev_E + prev_D - state.E - state.D)
        dual_e = rho * np.linalg.norm(prev_D - state.D)
        objective = float(spectrum.sum() + lam * np.abs(state.E).sum())
        if not (np.isfinite(objective) and np.isfinite(primal)):
            raise NumericalError(
                "solver produced non-finite values", iteration=t
            )
        residual_history.append((primal, dual_l, dual_e))
        objective_history.append(objective)
        iterations = t + 1

        d_norm = np.linalg.norm(state.D)
        relative = primal / d_norm if d_norm > 0 else primal
        if relative < config.primal_tol and stable >= PPM_STABLE_ITERS:
            converged = True
            break
        rho = min(rho * rho_factor, RHO_CAP)

    ppms, L, E, D = state.ppms, state.L, state.E, state.D
    if config.fixed_first is None:
        # Re-express the report in canonical slot order (the labelled
        # first set defines the order in tracking mode, so skip there).
        order = _canonical_order(ppms)
        ppms = [
            PartialPermutation(p.n_sources, p.target_to_source[order])
            for p in ppms
        ]
        if config.mode == DESCRIPTOR:
            rows = (order[:, None] * d + np.arange(d)).ravel()
            L, E, D = L[rows, :], E[rows, :], D[rows, :]
        else:
            L, E, D = L[:, order], E[:, order], D[:, order]

    return MatchReport(
        ppms=ppms,
        L=L,
        E=E,
        D=D,
        residual_history=residual_history,
        objective_history=objective_history,
        converged=converged,
        iterations_used=iterations,
        lambda_used=lam,
        rho_final=state.rho,
        mode=config.mode,
    )
