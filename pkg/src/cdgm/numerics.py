"""Dense linear algebra and seeded sampling primitives.

Matrices are plain float64 numpy arrays in row-major order. Randomness is
routed exclusively through :class:`SeededRng` so that every draw in the
package is a pure function of ``(seed, stream)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NotPositiveDefinite, ShapeMismatch

PIVOT_FLOOR = 1e-12


@dataclass
class SeededRng:
    """Deterministic random stream identified by (seed, stream).

    The same pair always yields the same sequence, across runs and
    platforms. A value is single-owner while draws are in flight; create
    child streams via :meth:`child` instead of sharing one generator.
    """

    seed: int
    stream: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def child(self, stream: int) -> "SeededRng":
        """Independent stream derived from the same master seed."""
        return SeededRng(self.seed, stream)


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ShapeMismatch("matrix contains non-finite entries")
    return a


def cholesky(m) -> np.ndarray:
    """Lower-triangular L with L L^T = m.

    Raises NotPositiveDefinite when any pivot falls at or below 1e-12,
    which signals an invalid precision mix upstream.
    """
    a = as_matrix(m)
    n, k = a.shape
    if n != k:
        raise ShapeMismatch(f"cholesky needs a square matrix, got {a.shape}")
    if not np.allclose(a, a.T, atol=1e-10, rtol=0.0):
        raise ShapeMismatch("cholesky needs a symmetric matrix")
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("matrix is not positive definite") from None
    # LAPACK succeeds on barely-positive pivots; enforce the stated floor.
    if np.min(np.diag(low)) ** 2 <= PIVOT_FLOOR:
        raise NotPositiveDefinite(
            f"pivot {np.min(np.diag(low))**2:.3e} at or below {PIVOT_FLOOR:.0e}"
        )
    return low


def invert_spd(m) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via Cholesky solves.

    Desk-scale oracle helper (p <= a few hundred); not a general inverse.
    """
    low = cholesky(m)
    eye = np.eye(low.shape[0])
    y = solve_triangular(low, eye, lower=True)
    return solve_triangular(low.T, y, lower=False)


def sample_from_precision(theta, count: int, rng: SeededRng) -> np.ndarray:
    """Draw ``count`` i.i.d. rows from N(0, theta^{-1}).

    Uses x = L^{-T} u with theta = L L^T and u standard normal, so the
    cost per draw is one triangular solve.
    """
    low = cholesky(theta)
    p = low.shape[0]
    u = rng.generator.standard_normal((count, p))
    # Solve L^T x^T = u^T  =>  x = u L^{-1} stacked row-wise.
    return solve_triangular(low.T, u.T, lower=False).T
