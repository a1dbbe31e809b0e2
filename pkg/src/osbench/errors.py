"""Exception taxonomy shared across the toolkit.

Every error that callers are expected to catch derives from ``OsbenchError``.
Trial-level estimator failures are *recorded*, not raised, by the harness;
these classes are what gets recorded.
"""

from __future__ import annotations


class OsbenchError(Exception):
    """Base class for all toolkit errors."""


# -- dataset / ingestion -----------------------------------------------------


class MissingColumn(OsbenchError):
    def __init__(self, name: str):
        super().__init__(f"column {name!r} not found in header")
        self.name = name


class TypeParseError(OsbenchError):
    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"cannot parse {value!r} in column {column!r}, row {row}")
        self.row = row
        self.column = column
        self.value = value


class MissingValue(OsbenchError):
    def __init__(self, row: int, column: str):
        super().__init__(f"missing value in column {column!r}, row {row}")
        self.row = row
        self.column = column


class UnmappedLevel(OsbenchError):
    def __init__(self, level: str):
        super().__init__(f"treatment level {level!r} has no 0/1/drop mapping")
        self.level = level


class SampleTooLarge(OsbenchError):
    pass


class EmptyDataset(OsbenchError):
    pass


class InvalidSchema(OsbenchError):
    pass


# -- biasing -----------------------------------------------------------------


class UnknownCovariate(OsbenchError):
    def __init__(self, name: str):
        super().__init__(f"covariate {name!r} not available")
        self.name = name


class ConstantCovariate(OsbenchError):
    def __init__(self, name: str):
        super().__init__(f"covariate {name!r} has fewer than 2 distinct values")
        self.name = name


class MissingCovariateValue(OsbenchError):
    def __init__(self, name: str):
        super().__init__(f"row does not supply covariate {name!r}")
        self.name = name


class CalibrationFailed(OsbenchError):
    pass


# -- sampling ----------------------------------------------------------------


class NotRctTable(OsbenchError):
    pass


class NotApoTable(OsbenchError):
    pass


class NonBinaryTreatment(OsbenchError):
    pass


class DegenerateSample(OsbenchError):
    """Accepted sample has an empty treatment or control arm."""


# -- estimators --------------------------------------------------------------


class SingleClassTreatment(OsbenchError):
    pass


class NonFiniteFeature(OsbenchError):
    pass


class NonConvergence(OsbenchError):
    pass


class SingleArm(OsbenchError):
    pass


class WeightsUnsupported(OsbenchError):
    """Estimator cannot honor unit-level weights (reweighting mode)."""


# -- harness -----------------------------------------------------------------


class DegenerateRange(OsbenchError):
    pass


class InvalidConfig(OsbenchError):
    pass


class MissingPrediction(OsbenchError):
    pass


class WeightOverflow(OsbenchError):
    pass


class MalformedReport(OsbenchError):
    pass


# -- external estimator protocol ----------------------------------------------


class ProtocolError(OsbenchError):
    pass


class SpawnFailure(ProtocolError):
    pass


class HandshakeTimeout(ProtocolError):
    pass


class VersionMismatch(ProtocolError):
    pass


class RequestTimeout(ProtocolError):
    pass


class ChildExited(ProtocolError):
    pass
