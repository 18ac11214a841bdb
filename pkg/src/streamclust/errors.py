"""Exception hierarchy for streamclust."""


class StreamClustError(Exception):
    """Base class for all streamclust errors."""


class ZeroVector(StreamClustError):
    """Vector has (near-)zero norm and cannot be normalized."""


class DimensionMismatch(StreamClustError):
    """Operands have incompatible dimensionality."""


class DuplicateSample(StreamClustError):
    """Sample id was already ingested."""


class RobustPairFusion(StreamClustError):
    """Attempted to fuse two robust clusters."""


class DuplicateMembership(StreamClustError):
    """Member sets of two clusters intersect; database state is corrupt."""


class UnknownCluster(StreamClustError):
    """Cluster id does not refer to a live cluster."""


class EmptyTrainingSet(StreamClustError):
    """Parameter tuning requires a nonempty labeled training set."""


class MissingTruthLabel(StreamClustError):
    """An evaluated sample id has no ground-truth label."""


class FormatError(StreamClustError):
    """Base class for file format errors."""


class BadMagic(FormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersion(FormatError):
    """File declares a format version this reader does not support."""


class UnsupportedDtype(FormatError):
    """File declares an element dtype this reader does not support."""


class TruncatedFile(FormatError):
    """Actual file size disagrees with the size declared by the header."""


class NonFiniteValue(FormatError):
    """A vector row contains NaN or Inf."""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"non-finite value in row {row}")


class ParseError(FormatError):
    """A text line could not be parsed."""

    def __init__(self, line: int, detail: str = ""):
        self.line = line
        msg = f"parse error at line {line}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class DuplicateId(FormatError):
    """A sample id occurs more than once in a label file."""

    def __init__(self, line: int):
        self.line = line
        super().__init__(f"duplicate sample id at line {line}")


class CorruptSnapshot(FormatError):
    """Snapshot checksum mismatch or malformed snapshot payload."""
