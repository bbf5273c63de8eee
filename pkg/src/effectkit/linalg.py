"""Dense complex Hermitian linear algebra kernel.

Everything downstream (effects, order maps, reconstruction, lattice
harnesses) builds on the routines here: Hermitian eigendecomposition,
spectral matrix functions, the positive-semidefinite order test, and
seeded random generators for unitaries, effects, states, projections,
rays and invertible operators.

All functions are pure: randomness always flows through an explicit
:class:`RandomSource`, and identical seeds reproduce bit-identical
outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadDimension, DimensionMismatch, NonSquare, NotHermitian, NotPSD, Singular

# Global tolerance policy. Two orders of magnitude above double-precision
# noise at the dimensions this kernel targets (n <= ~32).
HERMITIAN_TOL = 1e-10
EIG_TOL = 1e-9
PSD_TOL = 1e-9
RANK_TOL_FACTOR = 1e-9
UNITARY_TOL = 1e-10

# Seed used by command-line tools and internal probe streams when the
# caller does not supply one. Fixed, never time-based.
DEFAULT_SEED = 20021027


class RandomSource:
    """Deterministic pseudo-random stream (PCG64 behind a SeedSequence).

    Child sources derived via :meth:`child` depend only on ``(seed, path)``,
    so per-trial sub-streams are reproducible regardless of evaluation
    order. That is what lets trial loops run concurrently and still emit
    reports identical to a sequential run.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        self.generator = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self.path))
        )

    def child(self, *indices: int) -> "RandomSource":
        """Independent sub-source addressed by (seed, path + indices)."""
        return RandomSource(self.seed, self.path + tuple(indices))

    def __repr__(self) -> str:  # pragma: no cover
        return f"RandomSource(seed={self.seed}, path={self.path})"


@dataclass
class EigenDecomposition:
    """Spectral decomposition M = V diag(w) V* with w ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.conj().T


def hermitize(M: np.ndarray) -> np.ndarray:
    """Hermitian part (M + M*)/2; cheap way to kill roundoff asymmetry."""
    return 0.5 * (M + M.conj().T)


def hermiticity_defect(M: np.ndarray) -> float:
    """Largest entrywise |M[i,j] - conj(M[j,i])|."""
    return float(np.abs(M - M.conj().T).max()) if M.size else 0.0


def _require_square(M: np.ndarray) -> None:
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {M.shape}")


def _require_same_dim(A: np.ndarray, B: np.ndarray) -> None:
    if A.shape != B.shape:
        raise DimensionMismatch(f"shape mismatch: {A.shape} vs {B.shape}")


def eig_hermitian(M: np.ndarray, tol: float = HERMITIAN_TOL) -> EigenDecomposition:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    Raises NonSquare / NotHermitian when the input does not qualify.
    """
    M = np.asarray(M, dtype=complex)
    _require_square(M)
    defect = hermiticity_defect(M)
    if defect > tol:
        raise NotHermitian(f"hermiticity defect {defect:.3e} exceeds {tol:.3e}")
    w, V = np.linalg.eigh(hermitize(M))
    return EigenDecomposition(eigenvalues=w, eigenvectors=V)


def rank_tol(eigenvalues: np.ndarray) -> float:
    """Threshold below which eigenvalues count as zero."""
    top = float(np.abs(eigenvalues).max()) if eigenvalues.size else 0.0
    return RANK_TOL_FACTOR * max(1.0, top)


def loewner_leq(A: np.ndarray, B: np.ndarray, tol: float = PSD_TOL) -> bool:
    """Positive-semidefinite order test: A <= B iff B - A is PSD.

    The difference counts as PSD when its smallest eigenvalue is at least
    ``-tol * max(1, ||B - A||_F)``.
    """
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    _require_same_dim(A, B)
    diff = hermitize(B - A)
    lo = float(np.linalg.eigvalsh(diff).min())
    return lo >= -tol * max(1.0, float(np.linalg.norm(diff)))


_MATRIX_FUNCTIONS = ("sqrt", "inv_sqrt", "pinv", "inv")


def matrix_function(M: np.ndarray, kind: str, psd_tol: float = PSD_TOL) -> np.ndarray:
    """Spectral function of a PSD Hermitian matrix.

    ``sqrt`` / ``inv_sqrt`` / ``pinv`` send eigenvalues below the rank
    threshold to 0 (Moore-Penrose convention); ``inv`` requires all
    eigenvalues above the threshold.
    """
    if kind not in _MATRIX_FUNCTIONS:
        raise ValueError(f"unknown matrix function {kind!r}")
    dec = eig_hermitian(M)
    w, V = dec.eigenvalues, dec.eigenvectors
    top = float(w.max()) if w.size else 0.0
    if w.size and float(w.min()) < -psd_tol * max(1.0, top):
        raise NotPSD(f"smallest eigenvalue {w.min():.3e} below PSD tolerance")
    cut = rank_tol(w)
    wc = np.clip(w, 0.0, None)
    if kind == "inv":
        if w.size == 0 or float(w.min()) <= cut:
            raise Singular("matrix not invertible above the rank threshold")
        fw = 1.0 / wc
    else:
        small = wc <= cut
        safe = np.where(small, 1.0, wc)
        if kind == "sqrt":
            fw = np.sqrt(safe)
        elif kind == "inv_sqrt":
            fw = 1.0 / np.sqrt(safe)
        else:  # pinv
            fw = 1.0 / safe
        fw = np.where(small, 0.0, fw)
    return hermitize((V * fw) @ V.conj().T)


# ---------------------------------------------------------------------------
# Seeded generators
# ---------------------------------------------------------------------------


def _gaussian_complex(dim: int, rng: RandomSource) -> np.ndarray:
    g = rng.generator
    return (g.standard_normal((dim, dim)) + 1j * g.standard_normal((dim, dim))) / np.sqrt(2.0)


def _check_dim(dim: int) -> None:
    if dim < 1:
        raise BadDimension(f"dimension must be >= 1, got {dim}")


def random_unitary(dim: int, rng: RandomSource) -> np.ndarray:
    """Haar-distributed unitary: QR of a complex Gaussian with the
    R-diagonal phases folded back in."""
    _check_dim(dim)
    Q, R = np.linalg.qr(_gaussian_complex(dim, rng))
    d = np.diag(R)
    return Q * (d / np.abs(d))


def random_effect(dim: int, rng: RandomSource, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Hermitian matrix with spectrum drawn uniformly from [lo, hi]."""
    _check_dim(dim)
    U = random_unitary(dim, rng)
    w = rng.generator.uniform(lo, hi, size=dim)
    return hermitize((U * w) @ U.conj().T)


def random_state(dim: int, rng: RandomSource) -> np.ndarray:
    """PSD Hermitian matrix with trace exactly 1 (exponential spectrum)."""
    _check_dim(dim)
    U = random_unitary(dim, rng)
    w = rng.generator.exponential(size=dim)
    w = w / w.sum()
    return hermitize((U * w) @ U.conj().T)


def random_projection(dim: int, rank: int, rng: RandomSource) -> np.ndarray:
    """Orthogonal projection of the given rank, Haar-random range."""
    _check_dim(dim)
    if not 0 <= rank <= dim:
        raise BadDimension(f"rank {rank} out of range for dimension {dim}")
    if rank == 0:
        return np.zeros((dim, dim), dtype=complex)
    V = random_unitary(dim, rng)[:, :rank]
    return hermitize(V @ V.conj().T)


def random_ray_vector(dim: int, rng: RandomSource) -> np.ndarray:
    """Unit vector with Haar-uniform direction."""
    _check_dim(dim)
    g = rng.generator
    v = g.standard_normal(dim) + 1j * g.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_invertible(dim: int, rng: RandomSource, max_cond: float = 1e6) -> np.ndarray:
    """Complex Gaussian matrix, regenerated until well conditioned."""
    _check_dim(dim)
    for _ in range(64):
        M = _gaussian_complex(dim, rng)
        s = np.linalg.svd(M, compute_uv=False)
        if s[0] > 0 and s[0] / s[-1] <= max_cond:
            return M
    raise Singular("could not draw a well-conditioned invertible matrix")


def random_comparable_pair(dim: int, rng: RandomSource) -> tuple[np.ndarray, np.ndarray]:
    """Effects (E, F) with 0 <= E <= F by construction: E = F^{1/2} K F^{1/2}.

    Exact order without clipping artifacts, which makes order-preservation
    trials immune to boundary noise.
    """
    _check_dim(dim)
    U = random_unitary(dim, rng)
    w = rng.generator.uniform(0.0, 1.0, size=dim)
    F = hermitize((U * w) @ U.conj().T)
    Fh = hermitize((U * np.sqrt(w)) @ U.conj().T)
    K = random_effect(dim, rng)
    E = hermitize(Fh @ K @ Fh)
    return E, F


_GENERATE_KINDS = ("haar_unitary", "effect", "state", "projection", "ray", "semilinear")


def generate(kind: str, dim: int, rng: RandomSource, rank: int | None = None):
    """Dispatcher over the seeded generators.

    ``projection`` takes an explicit rank (defaults to 1). ``ray`` returns
    an :class:`effectkit.effects.Ray`; ``semilinear`` returns an
    :class:`effectkit.sharp.SemilinearOperator`; everything else returns a
    complex ndarray.
    """
    if kind not in _GENERATE_KINDS:
        raise ValueError(f"unknown generator kind {kind!r}")
    if kind == "haar_unitary":
        return random_unitary(dim, rng)
    if kind == "effect":
        return random_effect(dim, rng)
    if kind == "state":
        return random_state(dim, rng)
    if kind == "projection":
        return random_projection(dim, 1 if rank is None else rank, rng)
    if kind == "ray":
        from .effects import Ray

        return Ray(random_ray_vector(dim, rng))
    from .sharp import SemilinearOperator

    conjugating = bool(rng.generator.integers(0, 2))
    return SemilinearOperator(random_invertible(dim, rng), conjugating)


# ---------------------------------------------------------------------------
# JSON matrix format
# ---------------------------------------------------------------------------

MATRIX_KINDS = ("effect", "state", "projection", "ray")


def matrix_to_json(M: np.ndarray, kind: str | None = None) -> dict:
    """Bit-exact JSON form: row-major [re, im] pairs of IEEE-754 doubles.

    Column vectors (rays) serialize as single-column matrices. The optional
    ``kind`` tag is carried verbatim and validated on load.
    """
    M = np.asarray(M, dtype=complex)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    rows, cols = M.shape
    flat = M.reshape(-1)
    obj = {
        "rows": int(rows),
        "cols": int(cols),
        "data": [[float(z.real), float(z.imag)] for z in flat],
    }
    if kind is not None:
        if kind not in MATRIX_KINDS:
            raise ValueError(f"unknown matrix kind tag {kind!r}")
        obj["kind"] = kind
    return obj


def matrix_from_json(obj: dict, expect_kind: str | None = None) -> np.ndarray:
    """Inverse of :func:`matrix_to_json`; validates shape and kind tag."""
    try:
        rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed matrix JSON: missing field {exc}") from exc
    if rows < 1 or cols < 1:
        raise BadDimension(f"matrix dimensions must be positive, got {rows}x{cols}")
    if len(data) != rows * cols:
        raise ValueError(f"matrix JSON data length {len(data)} != rows*cols = {rows * cols}")
    if expect_kind is not None:
        tag = obj.get("kind")
        if tag is not None and tag != expect_kind:
            raise ValueError(f"matrix JSON kind {tag!r} does not match expected {expect_kind!r}")
    flat = np.array([complex(re, im) for re, im in data], dtype=complex)
    return flat.reshape(rows, cols)
