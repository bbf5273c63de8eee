"""Effect-algebra primitives on a finite-dimensional complex Hilbert space.

An effect is a Hermitian operator with spectrum in [0, 1]; projections are
the sharp effects. States are PSD trace-one operators, and ``trace_pair``
is the probability pairing tr(E D). The strength of an effect along a ray
is the largest weak-atom coefficient below it.
"""

from __future__ import annotations

import numpy as np

from . import linalg
from .errors import DimensionMismatch
from .linalg import RandomSource, hermitize

# Classification thresholds. Sharpness must be *decided*, not just bounded,
# so its tolerance sits well above eigensolver noise; the range-membership
# test for rank-deficient strength is equally forgiving and the bisection
# oracle stays the arbiter in tests.
SHARP_TOL = 1e-7
RANGE_TOL = 1e-7
RAY_EQ_TOL = 1e-9


class Effect:
    """Hermitian operator with spectrum in [0, 1].

    The spectrum is clamped to [0, 1] at construction (inputs may stick out
    by at most ``spectrum_tol``), so downstream order tests never see
    out-of-range eigenvalues beyond roundoff. The eigendecomposition is
    computed once and cached.
    """

    def __init__(self, matrix: np.ndarray, spectrum_tol: float = 1e-8):
        dec = linalg.eig_hermitian(matrix)
        w = dec.eigenvalues
        if w.min() < -spectrum_tol or w.max() > 1.0 + spectrum_tol:
            raise ValueError(
                f"spectrum [{w.min():.3e}, {w.max():.3e}] outside [0,1] beyond tolerance"
            )
        self.eigenvalues = np.clip(w, 0.0, 1.0)
        self.eigenvectors = dec.eigenvectors
        self.matrix = hermitize((self.eigenvectors * self.eigenvalues) @ self.eigenvectors.conj().T)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "Effect":
        return cls(np.eye(dim, dtype=complex))

    @classmethod
    def zero(cls, dim: int) -> "Effect":
        return cls(np.zeros((dim, dim), dtype=complex))

    @classmethod
    def random(cls, dim: int, rng: RandomSource) -> "Effect":
        return cls(linalg.random_effect(dim, rng))

    def rank(self) -> int:
        return int(np.count_nonzero(self.eigenvalues > linalg.rank_tol(self.eigenvalues)))

    def is_sharp(self, tol: float = SHARP_TOL) -> bool:
        w = self.eigenvalues
        return bool(np.all((np.abs(w) <= tol) | (np.abs(w - 1.0) <= tol)))


class State:
    """PSD Hermitian operator with trace one."""

    def __init__(self, matrix: np.ndarray):
        matrix = hermitize(np.asarray(matrix, dtype=complex))
        dec = linalg.eig_hermitian(matrix)
        if dec.eigenvalues.min() < -1e-12:
            raise ValueError(f"state has negative eigenvalue {dec.eigenvalues.min():.3e}")
        tr = float(np.trace(matrix).real)
        if abs(tr - 1.0) > 1e-12:
            raise ValueError(f"state trace {tr!r} differs from 1 beyond 1e-12")
        self.matrix = matrix
        self.eigenvalues = dec.eigenvalues
        self.eigenvectors = dec.eigenvectors

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def maximally_mixed(cls, dim: int) -> "State":
        return cls(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def random(cls, dim: int, rng: RandomSource) -> "State":
        return cls(linalg.random_state(dim, rng))

    def is_scalar(self, tol: float = 1e-10) -> bool:
        w = self.eigenvalues
        return bool(w.max() - w.min() <= tol * max(1.0, w.max()))


class Ray:
    """Unit vector modulo phase."""

    def __init__(self, vector: np.ndarray):
        v = np.asarray(vector, dtype=complex).reshape(-1)
        n = float(np.linalg.norm(v))
        if n == 0.0:
            raise ValueError("zero vector does not define a ray")
        self.vector = v / n

    @property
    def dim(self) -> int:
        return self.vector.shape[0]

    @classmethod
    def basis(cls, dim: int, index: int) -> "Ray":
        v = np.zeros(dim, dtype=complex)
        v[index] = 1.0
        return cls(v)

    @classmethod
    def random(cls, dim: int, rng: RandomSource) -> "Ray":
        return cls(linalg.random_ray_vector(dim, rng))

    def projection(self) -> np.ndarray:
        return np.outer(self.vector, self.vector.conj())

    def overlap(self, other: "Ray") -> float:
        """|<u, v>|; equals 1 iff the rays coincide."""
        return float(abs(np.vdot(self.vector, other.vector)))

    def same_ray(self, other: "Ray", tol: float = RAY_EQ_TOL) -> bool:
        if self.dim != other.dim:
            raise DimensionMismatch(f"ray dims {self.dim} vs {other.dim}")
        return self.overlap(other) >= 1.0 - tol

    def canonical(self) -> "Ray":
        """Representative with the first significant component real positive."""
        v = self.vector
        idx = int(np.argmax(np.abs(v)))
        phase = v[idx] / abs(v[idx])
        return Ray(v / phase)


class WeakAtom:
    """Effect of the form c * |r><r| with c in [0, 1]."""

    def __init__(self, coefficient: float, ray: Ray):
        if not 0.0 <= coefficient <= 1.0:
            raise ValueError(f"weak-atom coefficient {coefficient} outside [0, 1]")
        self.coefficient = float(coefficient)
        self.ray = ray

    @property
    def matrix(self) -> np.ndarray:
        return self.coefficient * self.ray.projection()

    def as_effect(self) -> Effect:
        return Effect(self.matrix)


def orthocomplement(E: Effect) -> Effect:
    """I - E. Involutive up to one ulp per entry (1 - (1 - x) can round)."""
    return Effect(np.eye(E.dim, dtype=complex) - E.matrix)


def trace_pair(E: Effect, D: State) -> float:
    """Probability pairing tr(E D), a real number in [0, 1]."""
    if E.dim != D.dim:
        raise DimensionMismatch(f"effect dim {E.dim} vs state dim {D.dim}")
    raw = complex(np.trace(E.matrix @ D.matrix))
    if abs(raw.imag) > 1e-10:
        raise ValueError(f"trace pairing has imaginary part {raw.imag:.3e}")
    return raw.real


def strength(E: Effect, r: Ray, range_tol: float = RANGE_TOL) -> float:
    """Largest t in [0, 1] with t * |r><r| <= E.

    Closed form: 0 when the ray leaves the range of E, else the reciprocal
    Rayleigh quotient of the pseudoinverse, capped at 1.
    """
    if E.dim != r.dim:
        raise DimensionMismatch(f"effect dim {E.dim} vs ray dim {r.dim}")
    w, V = E.eigenvalues, E.eigenvectors
    cut = linalg.rank_tol(w)
    in_range = w > cut
    coeffs = V.conj().T @ r.vector
    out_norm = float(np.linalg.norm(coeffs[~in_range]))
    if out_norm > range_tol:
        return 0.0
    if not np.any(in_range):
        return 0.0
    quad = float(np.sum(np.abs(coeffs[in_range]) ** 2 / w[in_range]))
    if quad <= 0.0:
        return 0.0
    return min(1.0, 1.0 / quad)


def strength_bisection(E: Effect, r: Ray, steps: int = 60, psd_tol: float = linalg.PSD_TOL) -> float:
    """Reference value for :func:`strength` by bisection on the PSD test
    E - t|r><r| >= 0. Independent of the closed form; used as the arbiter
    in tests."""
    if E.dim != r.dim:
        raise DimensionMismatch(f"effect dim {E.dim} vs ray dim {r.dim}")
    P = r.projection()
    if not linalg.loewner_leq(np.zeros_like(P), E.matrix, psd_tol):
        return 0.0
    lo, hi = 0.0, 1.0
    if linalg.loewner_leq(P, E.matrix, psd_tol):
        return 1.0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if linalg.loewner_leq(mid * P, E.matrix, psd_tol):
            lo = mid
        else:
            hi = mid
    return lo
