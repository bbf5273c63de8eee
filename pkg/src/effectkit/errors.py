"""Exception types shared across the toolkit."""


class EffectKitError(Exception):
    """Base class for all toolkit errors."""


class NonSquare(EffectKitError):
    """Operation requires a square matrix."""


class NotHermitian(EffectKitError):
    """Hermiticity residual exceeds tolerance."""


class NotPSD(EffectKitError):
    """Matrix is not positive semidefinite within tolerance."""


class Singular(EffectKitError):
    """Matrix is singular (or too close to singular) for the requested operation."""


class DimensionMismatch(EffectKitError):
    """Operands act on spaces of different dimensions."""


class BadDimension(EffectKitError):
    """Requested dimension or rank is out of range."""


class NumericalBreakdown(EffectKitError):
    """An intermediate inversion is too ill-conditioned to trust."""


class KindMismatch(EffectKitError):
    """Linear and antilinear operators compared like-for-unlike."""


class OrthogonalityViolated(EffectKitError):
    """Probe images are not pairwise orthogonal; the ray map is not admissible."""


class PhaseInconsistent(EffectKitError):
    """Superposition probes have vanishing or non-balanced frame coefficients."""


class VerificationFailed(EffectKitError):
    """Reconstructed operator fails to reproduce the ray map on samples."""


class DimensionTooSmall(EffectKitError):
    """The certification path needs a higher-dimensional space."""


class DegenerateState(EffectKitError):
    """State has a degenerate spectrum where distinct eigenvalues are required."""
