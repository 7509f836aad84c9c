"""Exception types shared across the package."""


class RepsError(Exception):
    """Base class for all package errors."""


class DomainError(RepsError):
    """A value violates a documented domain contract."""


class UnparsableAnswer(RepsError):
    """No final-answer pattern could be extracted from the text."""


class AnswerSpanNotFound(RepsError):
    """The rationale contains no rewritable final-answer span."""


class JudgeUnavailable(RepsError):
    """Judge transport failed after all retries."""


class VerdictUnparsable(RepsError):
    """Judge output carried no usable verdict index."""


class InvalidDistribution(RepsError):
    """Score-token probabilities are not a valid distribution."""


class DegenerateData(RepsError):
    """Training data contains a single class."""


class FeatureExtractionFailure(RepsError):
    """Feature extraction failed (empty rationale)."""


class ConfigError(RepsError):
    """CLI/config validation failed before any work started."""
