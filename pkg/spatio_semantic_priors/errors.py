"""Exceptions raised by spatio_semantic_priors.

Every exception carries an ``exit_code`` used by the command line entry point
to report the class of failure to the calling shell.
"""
import typing


class SpatioSemanticError(Exception):
    """Base class of all errors of this package."""

    exit_code = 1


class ConfigError(SpatioSemanticError):
    """A configuration value is missing or out of its valid range.

    :param str key: name of the offending configuration key
    :param str reason: human readable explanation
    """

    exit_code = 2

    def __init__(self, key: str, reason: str):
        super().__init__(key, reason)
        self.key = key
        self.reason = reason

    def __str__(self):
        return "invalid configuration value for '{}': {}".format(self.key, self.reason)


class InputError(SpatioSemanticError):
    """A file could not be found, read or parsed.

    :param path: the file concerned
    :param str reason: human readable explanation
    """

    exit_code = 3

    def __init__(self, path: typing.Any, reason: str):
        super().__init__(path, reason)
        self.path = path
        self.reason = reason

    def __str__(self):
        return "{}: {}".format(self.path, self.reason)


class SampleSetError(SpatioSemanticError):
    """A set of workspace samples violates its invariants."""

    exit_code = 3


class FloorEstimationError(SpatioSemanticError):
    """No floor plane could be estimated from the given points."""

    exit_code = 5


class PlanningInfeasibleError(SpatioSemanticError):
    """The planning problem has no solution at all (e.g. the start collides in
    every sample, or the support is empty)."""

    exit_code = 4


class OracleError(SpatioSemanticError):
    """The exact prior oracle was queried on a scene it can not evaluate."""


class UnknownLabelError(SpatioSemanticError, KeyError):
    """A semantic label is not part of the vocabulary.

    :param int label: the unknown label id
    :param vocabulary: the ids that would have been accepted
    """

    def __init__(self, label: int, vocabulary: typing.Iterable[int]):
        super().__init__(label)
        self.label = label
        self.vocabulary = sorted(vocabulary)

    def __str__(self):
        return "unknown label {} (vocabulary: {})".format(
            self.label, ",".join(str(v) for v in self.vocabulary)
        )
