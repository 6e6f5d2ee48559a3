"""Exception hierarchy.

Everything raised on bad input or bad state derives from :class:`GLDBError`
so the CLI can map it to exit code 3. Internal invariant breaks raise
:class:`InvariantViolation` (exit code 4).
"""


class GLDBError(Exception):
    """Base class for data, configuration and checkpoint errors."""


class InvariantViolation(RuntimeError):
    """An internal consistency check failed."""


# log model
class SchemaInvalid(GLDBError):
    pass


class ParseError(GLDBError):
    def __init__(self, row, reason):
        super().__init__(f"row {row}: {reason}")
        self.row = row
        self.reason = reason


class TimestampUnparseable(ParseError):
    pass


class EmptySplit(GLDBError):
    pass


# graph store
class StaleSubgraph(GLDBError):
    pass


class DoubleCommit(GLDBError):
    pass


class InsufficientNegatives(GLDBError):
    pass


# embedding
class MissingEmbedding(GLDBError):
    pass


class DimensionMismatch(GLDBError):
    pass


# neural
class MissingRow(GLDBError):
    pass


class EmptyBatch(GLDBError):
    pass


class ShapeMismatch(GLDBError):
    pass


# pipeline / checkpoint
class EmptyTrainSet(GLDBError):
    pass


class CheckpointIncompatible(GLDBError):
    pass


class VersionUnsupported(CheckpointIncompatible):
    pass


class CorruptChecksum(CheckpointIncompatible):
    pass


# evalkit
class NoHistory(GLDBError):
    pass


class InjectionShortfall(GLDBError):
    pass


class TooFewNormals(GLDBError):
    pass


class LengthMismatch(GLDBError):
    pass


class EmptyInput(GLDBError):
    pass


class ConstantSeries(GLDBError):
    pass
