"""Exception hierarchy.

Everything raised on purpose by the package derives from :class:`MaxDiscError`.
Input problems are :class:`ValidationError` (CLI exit status 1); failures that
happen while computing are :class:`SimulationError` (exit status 2).
"""


class MaxDiscError(Exception):
    pass


class ValidationError(MaxDiscError, ValueError):
    pass


class SimulationError(MaxDiscError, RuntimeError):
    pass


class AlphaOutOfRange(ValidationError):
    pass


class NonSymmetricCross(ValidationError):
    pass


class NegativeDiagonal(ValidationError):
    pass


class NonPSDLatent(ValidationError):
    def __init__(self, min_eigenvalue, msg=None):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(
            msg or f"latent covariance is not positive semidefinite "
            f"(minimum eigenvalue {self.min_eigenvalue:.6g})"
        )


class SingularLatent(ValidationError):
    def __init__(self, min_eigenvalue):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(
            f"latent covariance is singular (minimum eigenvalue "
            f"{self.min_eigenvalue:.3g}); set allow_singular_latent to accept it"
        )


class HorizonTooSmall(ValidationError):
    pass


class UndecidableRegime(ValidationError):
    pass


class DeltaBelowMesh(ValidationError):
    pass


class MissingConstant(ValidationError):
    pass


class RegimeMismatch(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class InsufficientReplications(ValidationError):
    pass


class EmptySamples(ValidationError):
    pass


class LadderTooShort(ValidationError):
    pass


class MeshTooCoarse(ValidationError):
    pass


class DNotOnMesh(ValidationError):
    pass


class QuadratureUnavailable(ValidationError):
    pass


class ConfigParse(ValidationError):
    pass


class UnknownSubcommand(ValidationError):
    pass


class EmbeddingNotPSD(SimulationError):
    def __init__(self, min_eigenvalue, size):
        self.min_eigenvalue = float(min_eigenvalue)
        self.size = int(size)
        super().__init__(
            f"circulant embedding of size {self.size} has negative eigenvalue "
            f"{self.min_eigenvalue:.6g} after padding escalation"
        )


class NegativeExponent(SimulationError):
    pass
