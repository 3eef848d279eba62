"""
Numerics Block - shared kernels used by every other block.
FFT/IFFT, SPD solves, row pseudo-inverse, finite-difference oracles, seeded randomness.
"""

import hashlib
import logging
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from ..core.exceptions import (
    DegenerateGeometryError,
    InvalidArgumentError,
    NonFiniteEvaluationError,
    SingularMatrixError,
)

logger = logging.getLogger("Numerics")

SPD_TOLERANCE = 1e-12

ArrayLike = Union[Sequence[float], np.ndarray]


def _name_words(name: str) -> list:
    """Stable 32-bit words derived from a stream name (independent of PYTHONHASHSEED)."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


class Rng:
    """
    Counter-based seeded generator (Philox) with named substreams.

    Two Rngs built from the same (seed, name) produce identical draws.
    A substream never shares state with its parent or its siblings.
    """

    def __init__(self, seed: int, name: str = "root"):
        if seed < 0 or seed >= 2**64:
            raise InvalidArgumentError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.name = name
        entropy = [self.seed & 0xFFFFFFFF, self.seed >> 32] + _name_words(name)
        self.generator = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

    def substream(self, name: str) -> "Rng":
        return Rng(self.seed, f"{self.name}/{name}")

    def normal(self, mean=0.0, sd=1.0, size=None):
        return self.generator.normal(mean, sd, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def multivariate_normal(self, cov: np.ndarray) -> np.ndarray:
        cov = np.asarray(cov, dtype=float)
        return self.generator.multivariate_normal(np.zeros(cov.shape[0]), cov, method="eigh")

    def __repr__(self):
        return f"Rng(seed={self.seed}, name={self.name!r})"


def gauss(rng: Rng, mean: float, sd: float) -> float:
    """One normal draw; sd = 0 returns mean exactly."""
    if sd < 0:
        raise InvalidArgumentError(f"sd must be non-negative, got {sd}")
    if sd == 0:
        return float(mean)
    return float(rng.normal(mean, sd))


def dft(seq: ArrayLike, inverse: bool = False, axis: int = -1) -> np.ndarray:
    """
    Unscaled discrete Fourier transform along one axis.

    Forward kernel e^{-j2πkn/N}; inverse kernel e^{+j2πkn/N} with no 1/N factor.
    """
    arr = np.asarray(seq, dtype=complex)
    if arr.size == 0 or arr.shape[axis] == 0:
        raise InvalidArgumentError("dft of an empty sequence")
    if inverse:
        return np.fft.ifft(arr, axis=axis) * arr.shape[axis]
    return np.fft.fft(arr, axis=axis)


def solve_spd(a: ArrayLike, b: ArrayLike) -> np.ndarray:
    """
    Solve a·x = b for symmetric positive definite a via Cholesky.

    Singularity is judged scale-free: a squared Cholesky pivot that falls below
    SPD_TOLERANCE times its diagonal entry means the matrix is singular.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"solve_spd needs a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise SingularMatrixError("matrix has non-finite entries")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if scale == 0.0:
        raise SingularMatrixError("zero matrix")
    if np.max(np.abs(a - a.T)) > 1e-9 * scale:
        raise SingularMatrixError("matrix is not symmetric")

    diag = np.diag(a)
    if np.any(diag <= 0):
        raise SingularMatrixError("matrix has non-positive diagonal")
    try:
        factor, lower = cho_factor(a, lower=True)
    except LinAlgError as e:
        raise SingularMatrixError(f"Cholesky failed: {e}") from e

    pivots = np.diag(factor) ** 2
    if np.min(pivots / diag) <= SPD_TOLERANCE:
        raise SingularMatrixError("matrix is singular within tolerance")
    return cho_solve((factor, lower), b)


def inv_spd(a: ArrayLike) -> np.ndarray:
    """Inverse of an SPD matrix, symmetrized."""
    a = np.asarray(a, dtype=float)
    inv = solve_spd(a, np.eye(a.shape[0]))
    return 0.5 * (inv + inv.T)


def pinv_row(j: ArrayLike) -> np.ndarray:
    """Pseudo-inverse of a single row: jᵀ(j·jᵀ)⁻¹."""
    j = np.asarray(j, dtype=float).ravel()
    norm_sq = float(j @ j)
    if not norm_sq > 0.0:
        raise DegenerateGeometryError("pseudo-inverse of a zero row")
    return j / norm_sq


def clip_norm(v: ArrayLike, limit: float) -> np.ndarray:
    """Scale v down to Euclidean norm `limit` if it exceeds it."""
    v = np.asarray(v, dtype=float)
    norm = float(np.linalg.norm(v))
    if norm > limit:
        return v * (limit / norm)
    return v.copy()


def _check_finite(value: float, x: np.ndarray) -> float:
    if not np.isfinite(value):
        raise NonFiniteEvaluationError(f"non-finite function value at {x}")
    return value


def finite_diff_grad(
    f: Callable[[np.ndarray], float], x: ArrayLike, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient (f(x+h·eᵢ) − f(x−h·eᵢ)) / 2h."""
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        step = np.zeros_like(flat)
        step[i] = h
        plus = _check_finite(float(f((flat + step).reshape(x.shape))), flat + step)
        minus = _check_finite(float(f((flat - step).reshape(x.shape))), flat - step)
        grad[i] = (plus - minus) / (2.0 * h)
    return grad.reshape(x.shape)


def finite_diff_hessian(
    f: Callable[[np.ndarray], float],
    x: ArrayLike,
    h: Optional[Union[float, ArrayLike]] = 1e-5,
) -> np.ndarray:
    """Central-difference Hessian; h may be a per-coordinate step vector."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    steps = np.broadcast_to(np.asarray(h, dtype=float), (n,))
    hess = np.zeros((n, n))

    def at(di, dj, i, j):
        point = x.copy()
        point[i] += di * steps[i]
        point[j] += dj * steps[j]
        return _check_finite(float(f(point)), point)

    for i in range(n):
        for j in range(i, n):
            value = (at(1, 1, i, j) - at(1, -1, i, j) - at(-1, 1, i, j) + at(-1, -1, i, j)) / (
                4.0 * steps[i] * steps[j]
            )
            hess[i, j] = hess[j, i] = value
    return hess
