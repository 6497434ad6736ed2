"""Exception hierarchy.

Everything raised on bad *data* derives from :class:`DataError` so the CLI can
map it to exit code 2; programming errors stay as the builtin exceptions.
"""


class FlowguardError(Exception):
    pass


class DataError(FlowguardError):
    pass


# capture ingest
class BadMagic(DataError):
    pass


class TruncatedHeader(DataError):
    pass


class TruncatedRecord(DataError):
    pass


# flow metrics / preprocessing
class EmptySegment(DataError):
    pass


class EmptyMatrix(DataError):
    pass


class NonFiniteInput(DataError):
    pass


class DimensionMismatch(DataError):
    def __init__(self, msg, row=None):
        super().__init__(msg if row is None else f"row {row}: {msg}")
        self.row = row


# clustering
class EmptyInput(DataError):
    pass


class TooFewPoints(DataError):
    pass


class SingleCluster(DataError):
    pass


class DegenerateClustering(DataError):
    pass


class KTooLarge(DataError):
    pass


# detector
class AllNoise(DataError):
    pass


class VersionMismatch(DataError):
    pass


class CorruptFile(DataError):
    pass


# tuning
class AllCandidatesFailed(DataError):
    pass


class CurveTooShort(DataError):
    pass


# evaluation / synthgen
class LengthMismatch(DataError):
    pass


class InvalidScenario(DataError):
    pass


class UnwritablePath(DataError):
    pass
