"""Exception types shared across the package."""


class FlowsentryError(Exception):
    """Base class for all package errors."""


# -- workflow graph ----------------------------------------------------------

class DuplicateNode(FlowsentryError):
    pass


class UnknownNode(FlowsentryError):
    pass


class CycleDetected(FlowsentryError):
    pass


# -- node runtime ------------------------------------------------------------

class SpawnError(FlowsentryError):
    pass


class Timeout(FlowsentryError):
    pass


class TrackerUnavailable(FlowsentryError):
    pass


# -- tracker / stores --------------------------------------------------------

class NotFound(FlowsentryError):
    pass


# -- data ingestion ----------------------------------------------------------

class FormatError(FlowsentryError):
    pass


class InvalidSpec(FlowsentryError):
    pass


# -- neural nets -------------------------------------------------------------

class ShapeError(FlowsentryError):
    pass


class DomainError(FlowsentryError):
    pass


class InvalidConfig(FlowsentryError):
    pass


class InvalidLabel(FlowsentryError):
    pass


class PairingError(FlowsentryError):
    pass


class TrainingDiverged(FlowsentryError):
    pass


# -- drift checking ----------------------------------------------------------

class EmptyInput(FlowsentryError):
    pass


class InvalidBandwidth(FlowsentryError):
    pass


class EmptyCriticalSet(FlowsentryError):
    pass


# -- feedback service --------------------------------------------------------

class DuplicateBatch(FlowsentryError):
    pass


class Conflict(FlowsentryError):
    pass


class Incomplete(FlowsentryError):
    def __init__(self, message: str, unresolved: int = 0):
        super().__init__(message)
        self.unresolved = unresolved


class NotAnImprovement(FlowsentryError):
    pass


class EmptyFeedback(FlowsentryError):
    pass


# -- scenario harness --------------------------------------------------------

class ConfigMismatch(FlowsentryError):
    pass


class ScenarioFailed(FlowsentryError):
    pass
