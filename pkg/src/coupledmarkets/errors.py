"""Exception types shared across the package."""


class MarketError(Exception):
    """Base class for every error raised by coupledmarkets."""


class MalformedProgram(MarketError):
    pass


class DisconnectedNetwork(MarketError):
    pass


class InvalidNetwork(MarketError):
    """Network data violates a physical invariant (negative demand, zero diameter...)."""


class InfeasibleDispatch(MarketError):
    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class NewtonDivergence(MarketError):
    pass


class NegativeSquaredPressure(MarketError):
    pass


class SlpStall(MarketError):
    pass


class InfeasibleGasNetwork(MarketError):
    pass


class ProblemTooLarge(MarketError):
    pass


class NonPositiveReference(MarketError):
    pass


class NegativePower(MarketError):
    pass


class ClearingFailed(MarketError):
    pass


class ParseError(MarketError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ValidationError(MarketError):
    """Carries every violation found, each as ``(line, message)``."""

    def __init__(self, violations):
        self.violations = list(violations)
        text = "; ".join(
            f"line {ln}: {msg}" if ln is not None else msg for ln, msg in self.violations
        )
        super().__init__(text)


class MissingSection(MarketError):
    pass


class UnsupportedCaseFeature(MarketError):
    pass
