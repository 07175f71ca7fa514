"""Exception hierarchy.

Every error raised by the package derives from :class:`CtxPriorError`, and
each family carries the CLI exit code it maps to.
"""


class CtxPriorError(Exception):
    exit_code = 1


class ConfigError(CtxPriorError):
    exit_code = 2


class InvalidConfig(ConfigError):
    pass


class DataValidationError(CtxPriorError):
    """Input data violated a schema or type invariant.

    ``row`` and ``field`` locate the offending cell when known.
    """

    exit_code = 3

    def __init__(self, message, *, path=None, row=None, field=None):
        self.path = path
        self.row = row
        self.field = field
        loc = []
        if path is not None:
            loc.append(str(path))
        if row is not None:
            loc.append(f"row {row}")
        if field is not None:
            loc.append(f"field {field!r}")
        super().__init__(f"{': '.join(loc)}: {message}" if loc else message)


class MissingColumn(DataValidationError):
    pass


class DimensionMismatch(DataValidationError):
    pass


class NonFiniteValue(DataValidationError):
    pass


class UnknownSceneReference(DataValidationError):
    pass


class EmptyRatingSet(DataValidationError):
    pass


class MissingChannel(DataValidationError):
    pass


class MissingScore(DataValidationError):
    pass


class MissingGroundTruth(DataValidationError):
    pass


class InsufficientScenes(DataValidationError):
    pass


class TooFewSubjects(DataValidationError):
    pass


class SingleClassInput(DataValidationError):
    pass


class DegenerateFold(DataValidationError):
    pass


class EmptyAnchor(DataValidationError):
    pass


class UnpairedDistributions(DataValidationError):
    pass


class PersistenceError(DataValidationError):
    pass


class CorruptPayload(PersistenceError):
    pass


class VersionMismatch(PersistenceError):
    pass


class NumericalError(CtxPriorError):
    exit_code = 4


class InvalidK(NumericalError, ValueError):
    pass


class InvalidShape(NumericalError, ValueError):
    pass


class SingularSystem(NumericalError):
    pass


class ConstantInput(NumericalError, ValueError):
    pass


class NonConvergence(NumericalError):
    pass
