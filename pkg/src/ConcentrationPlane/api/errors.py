"""
Error Hierarchy
Domain, hypothesis and configuration failures raised by the bound calculators
"""


class BoundsError(Exception):
    """Root of every error raised by this package"""


class DomainError(BoundsError, ValueError):
    """An input lies outside the domain of the operation"""


class PreconditionError(DomainError):
    """A stated precondition (centering, nonnegativity, ...) does not hold"""


class HypothesisViolatedError(DomainError):
    """A theorem or lemma hypothesis does not hold for the supplied inputs"""


class NormalizationError(DomainError):
    """The Orlicz function is not normalized as the operation requires"""


class HeavyTailError(DomainError):
    """The moment generating function diverges inside the search range"""


class RangeTooWideError(DomainError):
    """The search range reaches values where exponentials overflow"""

    def __init__(self, message: str, offending_lambda: float):
        super().__init__(message)
        self.offending_lambda = offending_lambda


class DivergenceError(DomainError):
    """An Orlicz norm has no finite value under the configured caps"""


class UnboundedConjugateError(DomainError):
    """The Young-Fenchel supremum diverges on the search range"""


class RefusalError(DomainError):
    """The request is too large for an exhaustive computation"""


class CalibrationError(BoundsError):
    """No constant in the calibration range makes the bound dominate"""


class ConfigError(BoundsError):
    """A campaign configuration or bound specification cannot be resolved"""
