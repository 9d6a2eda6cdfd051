"""Convex low-rank plus sparse decomposition of a fixed matrix.

Solves min ||L||_* + lam ||E||_1 subject to D = L + E by the same
alternating scheme as the matching solver, but with D constant the
problem is convex and a faster penalty growth is safe.
"""

from dataclasses import dataclass

import numpy as np

from . import prox
from .core import RHO_CAP


@dataclass(frozen=True)
class RpcaConfig:
    """Decomposition settings; ``lam=None`` resolves to 1/sqrt(rows)."""

    lam: float = None
    rho0: float = 1e-4
    rho_factor: float = 1.05
    max_iters: int = 5000
    tol: float = 1e-7

    def __post_init__(self):
        if self.lam is not None and not self.lam > 0.0:
            raise ValueError("lam must be positive")
        if not self.rho0 > 0.0:
            raise ValueError("rho0 must be positive")
        if not self.rho_factor > 1.0:
            raise ValueError("rho_factor must exceed 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")


@dataclass
class RpcaResult:
    """Decomposition ``D ~ L + E`` plus iteration and convergence info."""

    L: np.ndarray
    E: np.ndarray
    iterations: int
    converged: bool


def solve_rpca(d, config=None):
    """Split ``d`` into a low-rank part L and a sparse part E.

    Iterates singular-value shrinkage for L, entry-wise shrinkage for E
    and dual ascent until ``||d - L - E||_F / ||d||_F`` drops below
    ``config.tol`` or ``config.max_iters`` is hit; non-convergence is
    reported through ``RpcaResult.converged``, not raised.
    """
    d = prox._as_matrix(d, "d")
    if config is None:
        config = RpcaConfig()
    lam = config.lam if config.lam is not None else 1.0 / np.sqrt(d.shape[0])

    d_norm = np.linalg.norm(d)
    L = np.zeros_like(d)
    E = np.zeros_like(d)
    if d_norm == 0.0:
        return RpcaResult(L, E, 0, True)

    Y = np.zeros_like(d)
    rho = config.rho0
    iterations = 0
    converged = False
    for t in range(config.max_iters):
        L, _ = prox.svt_values(d - E - Y / rho, 1.0 / rho)
        E = prox.soft_threshold(d - L - Y / rho, lam / rho)
        Y = Y + rho * (L + E - d)
        iterations = t + 1
        if np.linalg.norm(d - L - E) / d_norm < config.tol:
            converged = True
            break
        rho = min(rho * config.rho_factor, RHO_CAP)
    return RpcaResult(L, E, iterations, converged)
