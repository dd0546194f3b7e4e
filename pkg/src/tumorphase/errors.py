"""Exception hierarchy shared by all modules."""


class TumorPhaseError(Exception):
    """Base class for every error raised by the package."""


class DomainError(TumorPhaseError, ValueError):
    """Argument outside the admissible domain of a stress law."""


class ConstructionError(TumorPhaseError, ValueError):
    """A constitutive pair could not be built (e.g. Phi not increasing)."""


class RangeError(TumorPhaseError, ValueError):
    """Value outside the range of Phi, or exact fields outside physical bounds."""


class DegenerateError(TumorPhaseError, ArithmeticError):
    """A Phi-Lipschitz ratio is numerically unbounded."""


class ConfigError(TumorPhaseError, ValueError):
    """Inconsistent grid or boundary parameters."""


class RegimeError(TumorPhaseError, ValueError):
    """Quantity undefined in the current boundary regime."""


class SolveError(TumorPhaseError, RuntimeError):
    """A linear or nonlinear solve failed."""


class NewtonDivergence(SolveError):
    """Newton iteration failed inside a time step; the caller may retry with a smaller step."""


class NonfiniteField(SolveError):
    """A NaN or infinity appeared in a state field."""


class InsufficientData(TumorPhaseError, ValueError):
    """Not enough samples for a regression."""


class NotFactoredError(TumorPhaseError, ValueError):
    """Operation requires the factored growth structure but the preset is a direct evaluator."""


class ParseError(TumorPhaseError, ValueError):
    """Configuration file is not syntactically valid."""


class ValidationError(TumorPhaseError, ValueError):
    """Configuration failed validation; ``issues`` lists every violation."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(self.issues))


class PositivityWarning(UserWarning):
    """Computed volume ratio fell below the positivity floor although the constraint held."""
