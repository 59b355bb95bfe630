"""Exception hierarchy.

``DomainError`` subclasses describe a broken model or input file (CLI exit 1);
``InferenceError`` subclasses are raised while running inference (exit 2).
"""


class LogiParticleError(Exception):
    pass


class DomainError(LogiParticleError):
    pass


class InferenceError(LogiParticleError):
    pass


class DomainSyntaxError(DomainError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


class UndeclaredSymbol(DomainSyntaxError):
    pass


class ArityMismatch(DomainSyntaxError):
    pass


class NormalizationError(DomainError):
    pass


class ValidationFailed(DomainError):
    pass


class UnknownConstant(DomainError):
    pass


class EmptyUniverse(DomainError):
    pass


class UniverseTooLarge(InferenceError):
    pass


class CNFTooLarge(InferenceError):
    pass


class PreconditionViolated(InferenceError):
    pass


class NoPartition(InferenceError):
    pass


class MultiplePartitions(InferenceError):
    pass


class ZeroEvidence(InferenceError):
    pass


class DeadParticle(InferenceError):
    pass


class AllParticlesDead(InferenceError):
    pass


class NoApplicableAction(InferenceError):
    pass
