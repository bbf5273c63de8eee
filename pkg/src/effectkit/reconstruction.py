"""Constructive recovery of the unitary/antiunitary behind a ray map, and
the staged pipeline that certifies (or refutes) that a symbolic effect map
is a congruence.

The pipeline samples each obligation in turn: order preservation, the
probability-pairing condition against a fixed pair of states, preservation
of projections and ranks, scalar fixing with homogeneity on weak atoms,
orthogonality of rank-one images, reconstruction of the implementing
operator from basis and superposition probes, and a final global
comparison. Refutations name the first broken stage and carry a
replayable witness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .effects import Effect, Ray, State, strength
from .errors import (
    BadDimension,
    DimensionMismatch,
    KindMismatch,
    OrthogonalityViolated,
    PhaseInconsistent,
    VerificationFailed,
)
from .linalg import DEFAULT_SEED, RandomSource, hermitize, matrix_to_json
from .maps import (
    EffectMapSpec,
    check_order_preservation,
    check_ortho_compatibility,
    check_trace_condition,
    run_trials,
)


@dataclass
class ProjectionMapOracle:
    """Callable contract: a map of rays (ranges of rank-one projections).

    ``mapping`` must be well defined projectively, i.e. phase changes of
    the input representative may not move the output ray; this is sampled
    by :meth:`check_well_defined`, not enforced per call.
    """

    dim: int
    mapping: object  # Callable[[Ray], Ray]

    def __call__(self, r: Ray) -> Ray:
        if r.dim != self.dim:
            raise DimensionMismatch(f"oracle dim {self.dim} vs ray dim {r.dim}")
        out = self.mapping(r)
        if out.dim != self.dim:
            raise DimensionMismatch(f"oracle returned ray of dim {out.dim}")
        return out

    def check_well_defined(self, rng: RandomSource, samples: int = 20, tol: float = 1e-9) -> bool:
        for i in range(samples):
            sub = rng.child(i)
            r = Ray.random(self.dim, sub)
            theta = sub.generator.uniform(0.0, 2.0 * np.pi)
            shifted = Ray(np.exp(1j * theta) * r.vector)
            if not self(r).same_ray(self(shifted), tol):
                return False
        return True


def oracle_from_map_spec(spec: EffectMapSpec) -> ProjectionMapOracle:
    """Restrict a symbolic effect map to rays: image ray = dominant
    eigenvector of the image of the rank-one projection."""

    def mapping(r: Ray) -> Ray:
        M = spec.apply_matrix(r.projection())
        _, V = np.linalg.eigh(hermitize(M))
        return Ray(V[:, -1])

    return ProjectionMapOracle(dim=spec.dim, mapping=mapping)


def projective_distance(U: np.ndarray, V: np.ndarray, kind: str = "linear", kind_other: str | None = None) -> float:
    """Phase-invariant distance 1 - |tr(V* U)| / dim; zero iff V = cU with
    |c| = 1. Antilinear operators are compared through their unitary parts
    (matrix of x -> U conj(x)), like for like."""
    if kind_other is not None and kind_other != kind:
        raise KindMismatch(f"cannot compare {kind} with {kind_other}")
    U = np.asarray(U, dtype=complex)
    V = np.asarray(V, dtype=complex)
    if U.shape != V.shape or U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise DimensionMismatch(f"operands {U.shape} vs {V.shape}")
    n = U.shape[0]
    return float(1.0 - abs(np.trace(V.conj().T @ U)) / n)


@dataclass
class ReconstructionResult:
    """Implementing operator recovered from a ray map."""

    kind: str  # "linear" | "antilinear"
    U: np.ndarray
    max_residual: float

    def model_ray(self, r: Ray) -> Ray:
        v = r.vector.conj() if self.kind == "antilinear" else r.vector
        return Ray(self.U @ v)


_COEFF_TOL = 1e-6


def reconstruct_wigner(
    oracle: ProjectionMapOracle,
    verify_rays: int = 50,
    ortho_tol: float = 1e-8,
    verify_tol: float = 1e-6,
    rng: RandomSource | None = None,
) -> ReconstructionResult:
    """Recover the unitary (or antiunitary) inducing an
    orthogonality-preserving ray map.

    Probes: images of the standard basis rays fix the frame; images of the
    superpositions (e_1 + e_j)/sqrt(2) fix the column phases relative to
    the first; the image of (e_1 + i e_2)/sqrt(2) decides linear versus
    antilinear; finally random rays validate the candidate globally.
    """
    n = oracle.dim
    if n < 2:
        raise BadDimension("reconstruction needs dimension >= 2")
    if rng is None:
        rng = RandomSource(DEFAULT_SEED, path=(97, n))

    frame = [oracle(Ray.basis(n, i)).vector for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            ov = abs(np.vdot(frame[i], frame[j]))
            if ov > ortho_tol:
                raise OrthogonalityViolated(
                    f"images of basis rays {i},{j} overlap by {ov:.3e}"
                )

    cols = [frame[0]]
    for j in range(1, n):
        probe = Ray((Ray.basis(n, 0).vector + Ray.basis(n, j).vector) / np.sqrt(2.0))
        w = oracle(probe).vector
        a = np.vdot(frame[0], w)
        b = np.vdot(frame[j], w)
        if abs(abs(a) - 1 / np.sqrt(2)) > _COEFF_TOL or abs(abs(b) - 1 / np.sqrt(2)) > _COEFF_TOL:
            raise PhaseInconsistent(
                f"superposition probe {j}: coefficient magnitudes ({abs(a):.6f}, {abs(b):.6f}) "
                "deviate from 1/sqrt(2)"
            )
        alpha = b * np.conj(a)
        cols.append((alpha / abs(alpha)) * frame[j])
    U = np.column_stack(cols)
    # Polar correction: absorbs per-probe roundoff so the returned operator
    # is unitary to machine precision.
    U = U @ linalg.matrix_function(U.conj().T @ U, "inv_sqrt")

    probe = Ray((Ray.basis(n, 0).vector + 1j * Ray.basis(n, 1).vector) / np.sqrt(2.0))
    w = oracle(probe).vector
    a = np.vdot(U[:, 0], w)
    c = np.vdot(U[:, 1], w)
    if abs(abs(a) - 1 / np.sqrt(2)) > _COEFF_TOL or abs(abs(c) - 1 / np.sqrt(2)) > _COEFF_TOL:
        raise PhaseInconsistent("chirality probe has non-balanced coefficients")
    ratio = c * np.conj(a)
    ratio /= abs(ratio)
    if abs(ratio.imag) < 0.9:
        raise PhaseInconsistent(f"chirality probe ratio {ratio:.6f} is not close to +/- i")
    kind = "linear" if ratio.imag > 0 else "antilinear"

    result = ReconstructionResult(kind=kind, U=U, max_residual=0.0)
    worst = 0.0
    for k in range(verify_rays):
        r = Ray.random(n, rng.child(k))
        worst = max(worst, 1.0 - oracle(r).overlap(result.model_ray(r)))
    if worst > verify_tol:
        raise VerificationFailed(f"worst projective mismatch {worst:.3e} exceeds {verify_tol:.1e}")
    result.max_residual = worst
    return result


# ---------------------------------------------------------------------------
# Staged classification pipeline
# ---------------------------------------------------------------------------


@dataclass
class ClassifyConfig:
    """Trial counts and tolerances for the certification pipeline.

    "Certified" always means "no violation found at these trial counts";
    the pipeline samples universally quantified hypotheses, it cannot
    exhaust them.
    """

    trials: int = 100
    seed: int = DEFAULT_SEED
    order_tol: float = 1e-8
    trace_tol: float = 1e-10
    scalar_tol: float = 1e-10
    homogeneity_tol: float = 1e-8
    sharp_tol: float = 1e-7
    rank_one_levels: tuple[float, float] = (0.3, 0.9)
    strength_tol: float = 1e-7
    ortho_tol: float = 1e-8
    global_tol: float = 1e-7
    verify_rays: int = 50
    state_overlap_floor: float = 1e-6
    parallel: bool = False


@dataclass
class StageResult:
    name: str
    verdict: str  # "pass" | "fail" | "skipped"
    residual: float = 0.0
    data: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "verdict": self.verdict,
            "residual": self.residual,
            "data": self.data,
        }


@dataclass
class ClassificationReport:
    stages: list[StageResult]
    final: dict
    seed: int

    @property
    def certified(self) -> bool:
        return self.final.get("kind") == "certified"

    @property
    def refuted_stage(self) -> str | None:
        return self.final.get("stage") if self.final.get("kind") == "refuted" else None

    def stage(self, prefix: str) -> StageResult:
        for s in self.stages:
            if s.name.startswith(prefix):
                return s
        raise KeyError(prefix)

    def to_json_dict(self) -> dict:
        return {
            "stages": [s.to_json_dict() for s in self.stages],
            "final": self.final,
            "seed": self.seed,
        }


STAGE_NAMES = (
    "(a) order-hypothesis",
    "(b) trace-hypothesis",
    "(c) projection-rank-preservation",
    "(d) scalar-fixing-and-homogeneity",
    "(e) rank-one-orthogonality",
    "(f) ray-map-reconstruction",
    "(g) global-congruence",
)


def _sample_ray_seen_by(D: State, dim: int, rng: RandomSource, floor: float) -> Ray:
    """Random ray resampled until its projection has nonnegligible pairing
    with D (images of rays orthogonal to the state carry no information)."""
    r = Ray.random(dim, rng.child(0))
    for attempt in range(1, 64):
        if float(np.vdot(r.vector, D.matrix @ r.vector).real) >= floor:
            return r
        r = Ray.random(dim, rng.child(attempt))
    return r


def _orthogonal_ray(r: Ray, rng: RandomSource) -> Ray:
    v = linalg.random_ray_vector(r.dim, rng)
    v = v - np.vdot(r.vector, v) * r.vector
    nrm = float(np.linalg.norm(v))
    if nrm < 1e-8:
        return _orthogonal_ray(r, rng.child(1))
    return Ray(v / nrm)


def _top_ray(M: np.ndarray) -> Ray:
    _, V = np.linalg.eigh(hermitize(M))
    return Ray(V[:, -1])


def classify_effect_map(
    spec: EffectMapSpec,
    D: State,
    D_prime: State,
    dim: int,
    config: ClassifyConfig | None = None,
) -> ClassificationReport:
    """Run the full certification pipeline on a symbolic effect map.

    Stages run in proof order and the pipeline stops at the first failure,
    so a refutation names the earliest broken obligation; the remaining
    stages are reported as skipped. In dimension 2 the global stage also
    requires orthocomplement compatibility, checked before reconstruction.
    """
    if config is None:
        config = ClassifyConfig()
    if dim < 2:
        raise BadDimension("classification needs dimension >= 2 (dimension 1 is trivial)")
    if spec.dim != dim or D.dim != dim or D_prime.dim != dim:
        raise DimensionMismatch(
            f"dims disagree: spec {spec.dim}, D {D.dim}, D' {D_prime.dim}, requested {dim}"
        )

    rng = RandomSource(config.seed)
    stages: list[StageResult] = []

    def finish(failed: StageResult | None, extra: dict | None = None) -> ClassificationReport:
        done = {s.name for s in stages}
        for name in STAGE_NAMES:
            if name not in done:
                stages.append(StageResult(name, "skipped"))
        if failed is None:
            final = {"kind": "certified"}
            final.update(extra or {})
        else:
            final = {"kind": "refuted", "stage": failed.name}
        return ClassificationReport(stages=stages, final=final, seed=config.seed)

    # (a) order hypothesis
    rep = check_order_preservation(spec, dim, config.trials, rng.child(0), config.order_tol, config.parallel)
    st = StageResult(STAGE_NAMES[0], rep.verdict, rep.worst_residual, rep.to_json_dict())
    stages.append(st)
    if not st.passed:
        return finish(st)

    # (b) trace hypothesis
    rep = check_trace_condition(spec, D, D_prime, config.trials, rng.child(1), config.trace_tol, config.parallel)
    st = StageResult(STAGE_NAMES[1], rep.verdict, rep.worst_residual, rep.to_json_dict())
    stages.append(st)
    if not st.passed:
        return finish(st)

    # (c) projections and ranks are preserved
    def rank_trial(i: int) -> tuple[float, dict | None]:
        sub = rng.child(2, i)
        k = 1 + i % (dim - 1) if dim > 1 else 1
        P = linalg.random_projection(dim, k, sub)
        img = spec.apply_matrix(P)
        w = np.linalg.eigvalsh(hermitize(img))
        sharp_dev = float(np.minimum(np.abs(w), np.abs(w - 1.0)).max())
        img_rank = int(np.count_nonzero(w > 0.5))
        if sharp_dev > config.sharp_tol or img_rank != k:
            return sharp_dev, {
                "P": matrix_to_json(P),
                "rank": k,
                "image_rank": img_rank,
                "sharp_deviation": sharp_dev,
            }
        return sharp_dev, None

    results = run_trials(config.trials, rank_trial, config.parallel)
    residual = max(r for r, _ in results)
    witnesses = [w for _, w in results if w is not None]
    st = StageResult(STAGE_NAMES[2], "pass" if not witnesses else "fail", residual, {"witnesses": witnesses[:3]})
    stages.append(st)
    if not st.passed:
        return finish(st)

    # (d) scalars are fixed and weak atoms scale
    levels = (0.0, 0.25, 0.5, 0.75, 1.0)
    eye = np.eye(dim, dtype=complex)
    scalar_res = 0.0
    scalar_wit = None
    for lam in levels:
        res = float(np.linalg.norm(spec.apply_matrix(lam * eye) - lam * eye))
        if res > scalar_res:
            scalar_res, scalar_wit = res, lam
    homog_res = 0.0
    homog_wit = None
    for i in range(config.trials):
        sub = rng.child(3, i)
        lam = levels[i % len(levels)]
        r = _sample_ray_seen_by(D, dim, sub, config.state_overlap_floor)
        P = r.projection()
        res = float(np.linalg.norm(spec.apply_matrix(lam * P) - lam * spec.apply_matrix(P)))
        if res > homog_res:
            homog_res, homog_wit = res, {"lambda": lam, "ray": matrix_to_json(r.vector)}
    ok = scalar_res <= config.scalar_tol and homog_res <= config.homogeneity_tol
    st = StageResult(
        STAGE_NAMES[3],
        "pass" if ok else "fail",
        max(scalar_res, homog_res),
        {"scalar_residual": scalar_res, "worst_lambda": scalar_wit,
         "homogeneity_residual": homog_res, "homogeneity_witness": None if ok else homog_wit},
    )
    stages.append(st)
    if not st.passed:
        return finish(st)

    # (e) orthogonality of rank-one images, probed through two-level effects
    lam, mu = config.rank_one_levels

    def ortho_trial(i: int) -> tuple[float, dict | None]:
        sub = rng.child(4, i)
        r1 = _sample_ray_seen_by(D, dim, sub.child(0), config.state_overlap_floor)
        r2 = _orthogonal_ray(r1, sub.child(1))
        P = r1.projection()
        E = lam * P + mu * (eye - P)
        phiE = Effect(spec.apply_matrix(E))
        u1 = _top_ray(spec.apply_matrix(P))
        u2 = _top_ray(spec.apply_matrix(r2.projection()))
        bound_dev = max(
            float(lam - phiE.eigenvalues.min()), float(phiE.eigenvalues.max() - mu), 0.0
        )
        s1 = strength(phiE, u1)
        s2 = strength(phiE, u2)
        cross = u1.overlap(u2)
        res = max(abs(s1 - lam), abs(s2 - mu), bound_dev, 0.0 if cross <= config.ortho_tol else cross)
        if abs(s1 - lam) > config.strength_tol or abs(s2 - mu) > config.strength_tol \
                or bound_dev > config.strength_tol or cross > config.ortho_tol:
            return res, {
                "ray1": matrix_to_json(r1.vector),
                "ray2": matrix_to_json(r2.vector),
                "strength_low": s1,
                "strength_high": s2,
                "image_overlap": cross,
            }
        return res, None

    results = run_trials(config.trials, ortho_trial, config.parallel)
    residual = max(r for r, _ in results)
    witnesses = [w for _, w in results if w is not None]
    st = StageResult(STAGE_NAMES[4], "pass" if not witnesses else "fail", residual, {"witnesses": witnesses[:3]})
    stages.append(st)
    if not st.passed:
        return finish(st)

    # Dimension 2 carries an extra obligation, checked before reconstruction
    # but reported with the global stage: orthocomplement compatibility.
    dim2_rep = None
    if dim == 2:
        dim2_rep = check_ortho_compatibility(spec, dim, config.trials, rng.child(6), config.ortho_tol, config.parallel)

    # (f) reconstruct the implementing operator from the induced ray map
    oracle = oracle_from_map_spec(spec)
    try:
        recon = reconstruct_wigner(
            oracle,
            verify_rays=config.verify_rays,
            ortho_tol=max(config.ortho_tol, 1e-8),
            rng=rng.child(5),
        )
    except (OrthogonalityViolated, PhaseInconsistent, VerificationFailed) as exc:
        st = StageResult(STAGE_NAMES[5], "fail", float("nan"), {"error": type(exc).__name__, "message": str(exc)})
        stages.append(st)
        return finish(st)
    st = StageResult(
        STAGE_NAMES[5],
        "pass",
        recon.max_residual,
        {"kind": recon.kind, "max_residual": recon.max_residual, "U": matrix_to_json(recon.U)},
    )
    stages.append(st)

    # (g) global congruence against the reconstructed operator
    def global_trial(i: int) -> float:
        E = linalg.random_effect(dim, rng.child(7, i))
        base = E.conj() if recon.kind == "antilinear" else E
        model = recon.U @ base @ recon.U.conj().T
        return float(np.linalg.norm(spec.apply_matrix(E) - model))

    residuals = run_trials(config.trials, global_trial, config.parallel)
    worst = max(residuals)
    data: dict = {"congruence_residual": worst}
    ok = worst <= config.global_tol
    if dim2_rep is not None:
        data["ortho_compatibility"] = dim2_rep.to_json_dict()
        ok = ok and dim2_rep.passed
        worst = max(worst, dim2_rep.worst_residual if not dim2_rep.passed else 0.0)
    st = StageResult(STAGE_NAMES[6], "pass" if ok else "fail", worst, data)
    stages.append(st)
    if not st.passed:
        return finish(st)

    return finish(None, {"map_kind": recon.kind, "U": matrix_to_json(recon.U), "max_residual": recon.max_residual})
