"""Symbolic bijective maps on the effect algebra and their checkers.

Map variants: unitary / antiunitary congruences, the resolvent-type
order-preserving bijection built from a fixed invertible effect T (JSON
tag ``mk``) together with its closed-form inverse, and compositions.
The checkers sample order preservation, orthocomplement compatibility and
the probability-pairing condition, and return replayable reports.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .effects import Effect, State
from .errors import DimensionMismatch, NumericalBreakdown
from .linalg import RandomSource, hermitize, matrix_from_json, matrix_to_json

# Smallest admissible eigenvalue of the twist parameter T. Keeps both
# inversions in the map formula comfortably inside double precision.
MK_FLOOR = 1e-3

UNITARY_SPEC_TOL = 1e-9
_BREAKDOWN_NORM = 1e12


def run_trials(n: int, fn, parallel: bool = False) -> list:
    """Evaluate fn(0..n-1), optionally on a thread pool.

    Each trial must derive its randomness from a child source indexed by
    the trial number, so the collected results (returned in trial order)
    are identical to a sequential run.
    """
    if not parallel or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor() as pool:
        return list(pool.map(fn, range(n)))


class EffectMapSpec:
    """Base class for symbolic effect maps. Subclasses set ``dim`` and
    implement ``apply_matrix`` on raw Hermitian arrays."""

    variant = "abstract"
    dim: int

    def apply_matrix(self, M: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply(self, E: Effect) -> Effect:
        if E.dim != self.dim:
            raise DimensionMismatch(f"map dim {self.dim} vs effect dim {E.dim}")
        return Effect(self.apply_matrix(E.matrix))

    def to_json_dict(self) -> dict:
        raise NotImplementedError(f"variant {self.variant!r} has no JSON form")


def _validate_unitary(U: np.ndarray) -> np.ndarray:
    U = np.asarray(U, dtype=complex)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise DimensionMismatch(f"unitary must be square, got {U.shape}")
    defect = float(np.linalg.norm(U.conj().T @ U - np.eye(U.shape[0])))
    if defect > UNITARY_SPEC_TOL:
        raise ValueError(f"matrix is not unitary: ||U*U - I||_F = {defect:.3e}")
    return U


class UnitaryMap(EffectMapSpec):
    """E -> U E U*."""

    variant = "unitary"

    def __init__(self, U: np.ndarray):
        self.U = _validate_unitary(U)
        self.dim = self.U.shape[0]

    def apply_matrix(self, M: np.ndarray) -> np.ndarray:
        return self.U @ M @ self.U.conj().T

    def to_json_dict(self) -> dict:
        return {"variant": "unitary", "matrix": matrix_to_json(self.U), "members": None}


class AntiunitaryMap(EffectMapSpec):
    """E -> U conj(E) U*, conjugation entrywise in the standard basis."""

    variant = "antiunitary"

    def __init__(self, U: np.ndarray):
        self.U = _validate_unitary(U)
        self.dim = self.U.shape[0]

    def apply_matrix(self, M: np.ndarray) -> np.ndarray:
        return self.U @ M.conj() @ self.U.conj().T

    def to_json_dict(self) -> dict:
        return {"variant": "antiunitary", "matrix": matrix_to_json(self.U), "members": None}


class _TwistBase(EffectMapSpec):
    """Shared plumbing for the resolvent map and its inverse: a fixed
    invertible effect T, held in diagonalized form so each application
    costs two basis changes and two small Hermitian inversions."""

    def __init__(self, T: np.ndarray, floor: float = MK_FLOOR):
        dec = linalg.eig_hermitian(T)
        t = dec.eigenvalues
        if t.min() <= floor or t.max() > 1.0 + 1e-10:
            raise ValueError(
                f"twist parameter needs spectrum in ({floor}, 1], got [{t.min():.3e}, {t.max():.3e}]"
            )
        self.T = hermitize(np.asarray(T, dtype=complex))
        self.dim = self.T.shape[0]
        self._Q = dec.eigenvectors
        self._t = np.clip(t, floor, 1.0)
        t2 = self._t**2
        s = t2 / (2.0 - t2)
        self._s_sqrt = np.sqrt(s)
        self._s_inv_sqrt = 1.0 / self._s_sqrt

    def _to_eigenbasis(self, M: np.ndarray) -> np.ndarray:
        return self._Q.conj().T @ M @ self._Q

    def _from_eigenbasis(self, M: np.ndarray) -> np.ndarray:
        return hermitize(self._Q @ M @ self._Q.conj().T)

    @staticmethod
    def _guarded_inv(M: np.ndarray) -> np.ndarray:
        inv = np.linalg.inv(M)
        if not np.all(np.isfinite(inv)) or np.linalg.norm(inv) > _BREAKDOWN_NORM:
            raise NumericalBreakdown("intermediate inversion exceeded conditioning bound")
        return hermitize(inv)


class MKMap(_TwistBase):
    """Order-preserving bijection of the effect algebra driven by a fixed
    invertible effect T:

        E -> S^{-1/2} ((I - T^2 + T (I + E)^{-1} T)^{-1} - I) S^{-1/2},
        S = T^2 (2I - T^2)^{-1}.

    Fixes 0 and I, preserves the order in both directions, and for T != I
    is *not* compatible with the orthocomplement E -> I - E. On an
    eigenvector of T with eigenvalue t, a commuting effect eigenvalue e
    maps to e(2 - t^2) / (1 + e(1 - t^2)).
    """

    variant = "mk"

    def apply_matrix(self, M: np.ndarray) -> np.ndarray:
        E = self._to_eigenbasis(M)
        n = self.dim
        t = self._t
        A_inv = self._guarded_inv(np.eye(n, dtype=complex) + E)
        W = np.diag(1.0 - t**2).astype(complex) + (t[:, None] * t[None, :]) * A_inv
        W_inv = self._guarded_inv(W)
        inner = W_inv - np.eye(n, dtype=complex)
        out = self._s_inv_sqrt[:, None] * inner * self._s_inv_sqrt[None, :]
        return self._from_eigenbasis(out)

    def to_json_dict(self) -> dict:
        return {"variant": "mk", "matrix": matrix_to_json(self.T), "members": None}


class MKInverseMap(_TwistBase):
    """Closed-form inverse of :class:`MKMap` with the same parameter T,
    obtained by unwinding the forward formula factor by factor:

        Y -> (T^{-1} ((S^{1/2} Y S^{1/2} + I)^{-1} - I + T^2) T^{-1})^{-1} - I.
    """

    variant = "mk_inverse"

    def apply_matrix(self, M: np.ndarray) -> np.ndarray:
        Y = self._to_eigenbasis(M)
        n = self.dim
        t = self._t
        B = self._s_sqrt[:, None] * Y * self._s_sqrt[None, :] + np.eye(n, dtype=complex)
        B_inv = self._guarded_inv(B)
        C = B_inv - np.eye(n, dtype=complex) + np.diag(t**2).astype(complex)
        C = (1.0 / t)[:, None] * C * (1.0 / t)[None, :]
        E = self._guarded_inv(C) - np.eye(n, dtype=complex)
        return self._from_eigenbasis(E)

    def to_json_dict(self) -> dict:
        return {"variant": "mk_inverse", "matrix": matrix_to_json(self.T), "members": None}


class ComposeMap(EffectMapSpec):
    """Left-to-right composition: the first member is applied first."""

    variant = "compose"

    def __init__(self, members: list[EffectMapSpec]):
        if not members:
            raise ValueError("compose needs at least one member")
        dims = {m.dim for m in members}
        if len(dims) != 1:
            raise DimensionMismatch(f"compose members disagree on dimension: {sorted(dims)}")
        self.members = list(members)
        self.dim = self.members[0].dim

    def apply_matrix(self, M: np.ndarray) -> np.ndarray:
        for m in self.members:
            M = m.apply_matrix(M)
        return M

    def to_json_dict(self) -> dict:
        return {
            "variant": "compose",
            "matrix": None,
            "members": [m.to_json_dict() for m in self.members],
        }


def apply_map(spec: EffectMapSpec, E: Effect) -> Effect:
    """Apply a symbolic map to an effect; the result is again an effect."""
    return spec.apply(E)


def map_spec_from_json(obj: dict) -> EffectMapSpec:
    """Parse {"variant": ..., "matrix": ..., "members": ...}."""
    try:
        variant = obj["variant"]
    except (KeyError, TypeError) as exc:
        raise ValueError("malformed map spec JSON: missing field 'variant'") from exc
    if variant == "compose":
        members = obj.get("members")
        if not members:
            raise ValueError("malformed map spec JSON: compose needs nonempty 'members'")
        return ComposeMap([map_spec_from_json(m) for m in members])
    matrix = obj.get("matrix")
    if matrix is None:
        raise ValueError(f"malformed map spec JSON: variant {variant!r} needs 'matrix'")
    M = matrix_from_json(matrix)
    if variant == "unitary":
        return UnitaryMap(M)
    if variant == "antiunitary":
        return AntiunitaryMap(M)
    if variant == "mk":
        return MKMap(M)
    if variant == "mk_inverse":
        return MKInverseMap(M)
    raise ValueError(f"malformed map spec JSON: unknown variant {variant!r}")


# ---------------------------------------------------------------------------
# Checkers
# ---------------------------------------------------------------------------


@dataclass
class MapReport:
    """Outcome of a sampled property check. A ``fail`` verdict always
    carries at least one witness that re-triggers the violation when
    replayed."""

    verdict: str
    trials: int
    seed: int
    witnesses: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    worst_residual: float = 0.0

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_json_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "trials": self.trials,
            "seed": self.seed,
            "worst_residual": self.worst_residual,
            "notes": list(self.notes),
            "witnesses": list(self.witnesses),
        }


# Margin used when rejection-sampling strictly incomparable pairs; well
# above the image-side tolerance so the backward check cannot trip on
# boundary noise.
_INCOMPARABLE_MARGIN = 1e-6


def check_order_preservation(
    spec: EffectMapSpec,
    dim: int,
    trials: int,
    rng: RandomSource,
    tol: float = 1e-8,
    parallel: bool = False,
) -> MapReport:
    """Sampled two-sided order-preservation check.

    Forward phase: pairs E <= F built exactly via E = F^{1/2} K F^{1/2};
    images must satisfy phi(E) <= phi(F). Backward phase: strictly
    incomparable pairs (rejection sampled) must stay incomparable in every
    direction that failed. In dimension 1 no incomparable pairs exist and
    the backward phase is skipped with a note.
    """
    if spec.dim != dim:
        raise DimensionMismatch(f"spec dim {spec.dim} vs requested dim {dim}")

    def forward(i: int) -> dict | None:
        sub = rng.child(0, i)
        E, F = linalg.random_comparable_pair(dim, sub)
        phiE = spec.apply_matrix(E)
        phiF = spec.apply_matrix(F)
        gap = float(np.linalg.eigvalsh(hermitize(phiF - phiE)).min())
        if gap >= -tol * max(1.0, float(np.linalg.norm(phiF - phiE))):
            return None
        return {
            "check": "forward",
            "E": matrix_to_json(E),
            "F": matrix_to_json(F),
            "residual": -gap,
        }

    def backward(i: int) -> dict | str | None:
        sub = rng.child(1, i)
        pair = None
        for k in range(1000):
            E = linalg.random_effect(dim, sub.child(k))
            F = linalg.random_effect(dim, sub.child(k, 1))
            w = np.linalg.eigvalsh(hermitize(F - E))
            if w.min() < -_INCOMPARABLE_MARGIN and w.max() > _INCOMPARABLE_MARGIN:
                pair = (E, F)
                break
        if pair is None:
            return "no-incomparable-pair"
        E, F = pair
        phiE = spec.apply_matrix(E)
        phiF = spec.apply_matrix(F)
        for a, b, pa, pb, label in (
            (E, F, phiE, phiF, "E<=F"),
            (F, E, phiF, phiE, "F<=E"),
        ):
            if linalg.loewner_leq(pa, pb, tol):
                return {
                    "check": "backward",
                    "direction": label,
                    "E": matrix_to_json(a),
                    "F": matrix_to_json(b),
                    "residual": float(np.linalg.eigvalsh(hermitize(pb - pa)).min()),
                }
        return None

    witnesses = [w for w in run_trials(trials, forward, parallel) if w is not None]
    notes: list[str] = []
    back = run_trials(trials, backward, parallel)
    if back and back[0] == "no-incomparable-pair":
        notes.append("backward check skipped: no incomparable pairs found")
    else:
        witnesses.extend(w for w in back if isinstance(w, dict))
    worst = max((w["residual"] for w in witnesses), default=0.0)
    verdict = "pass" if not witnesses else "fail"
    return MapReport(verdict, trials, rng.seed, witnesses, notes, float(worst))


def check_ortho_compatibility(
    spec: EffectMapSpec,
    dim: int,
    trials: int,
    rng: RandomSource,
    tol: float = 1e-8,
    parallel: bool = False,
) -> MapReport:
    """Check phi(I - E) = I - phi(E) on sampled effects.

    The first probe is always E = I/2, which maximizes the defect for maps
    that merely reparameterize the spectrum; the rest are random.
    """
    if spec.dim != dim:
        raise DimensionMismatch(f"spec dim {spec.dim} vs requested dim {dim}")
    eye = np.eye(dim, dtype=complex)

    def probe(i: int) -> tuple[float, dict]:
        if i == 0:
            E = 0.5 * eye
        else:
            E = linalg.random_effect(dim, rng.child(i))
        lhs = spec.apply_matrix(eye - E)
        rhs = eye - spec.apply_matrix(E)
        res = float(np.linalg.norm(lhs - rhs))
        return res, {"check": "ortho", "E": matrix_to_json(E), "residual": res}

    results = run_trials(trials, probe, parallel)
    worst_res, worst_wit = max(results, key=lambda t: t[0])
    if worst_res <= tol:
        return MapReport("pass", trials, rng.seed, [], [], worst_res)
    return MapReport("fail", trials, rng.seed, [worst_wit], [], worst_res)


def check_trace_condition(
    spec: EffectMapSpec,
    D: State,
    D_prime: State,
    trials: int,
    rng: RandomSource,
    tol: float = 1e-10,
    parallel: bool = False,
) -> MapReport:
    """Check tr(phi(E) D') = tr(E D) on sampled effects."""
    if D.dim != spec.dim or D_prime.dim != spec.dim:
        raise DimensionMismatch(
            f"state dims {D.dim}, {D_prime.dim} vs map dim {spec.dim}"
        )

    def probe(i: int) -> tuple[float, dict]:
        E = linalg.random_effect(spec.dim, rng.child(i))
        lhs = float(np.trace(spec.apply_matrix(E) @ D_prime.matrix).real)
        rhs = float(np.trace(E @ D.matrix).real)
        res = abs(lhs - rhs)
        return res, {"check": "trace", "E": matrix_to_json(E), "residual": res}

    results = run_trials(trials, probe, parallel)
    worst_res, worst_wit = max(results, key=lambda t: t[0])
    if worst_res <= tol:
        return MapReport("pass", trials, rng.seed, [], [], worst_res)
    return MapReport("fail", trials, rng.seed, [worst_wit], [], worst_res)


def suggest_matching_state(spec: EffectMapSpec, D: State) -> State | None:
    """The unique D' that makes the probability pairing condition hold for
    a congruence: U D U* (unitary) or U conj(D) U* (antiunitary). None for
    any other variant."""
    if isinstance(spec, UnitaryMap):
        return State(spec.U @ D.matrix @ spec.U.conj().T)
    if isinstance(spec, AntiunitaryMap):
        return State(spec.U @ D.matrix.conj() @ spec.U.conj().T)
    return None
