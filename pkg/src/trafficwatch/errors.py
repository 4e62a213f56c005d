"""Exception hierarchy shared by every stage of the pipeline."""


class TrafficWatchError(Exception):
    """Base class for all errors raised by this package."""


# ingest
class MalformedRecord(TrafficWatchError):
    """A stream line is not valid JSON or lacks a required field."""


class InvalidValue(TrafficWatchError):
    """A field is present but holds an out-of-range or unknown value."""


class BoxOutOfBounds(TrafficWatchError):
    def __init__(self, index: int, message: str):
        super().__init__(message)
        self.index = index


class StaleFrame(TrafficWatchError):
    """A camera sent a frame older than its last accepted one."""


class UnknownCamera(TrafficWatchError):
    pass


# counting
class EmptyWindow(TrafficWatchError):
    pass


# congestion
class InvalidGeometry(TrafficWatchError):
    pass


class ZeroThreshold(TrafficWatchError):
    pass


class StaleUpdate(TrafficWatchError):
    """A segment update arrived with a non-increasing timestamp."""


# forecast
class NoHistory(TrafficWatchError):
    pass


# routing
class NoPath(TrafficWatchError):
    pass


# display
class EndpointUnavailable(TrafficWatchError):
    pass


# simulator
class CapacityExceeded(TrafficWatchError):
    pass


# metrics
class NoGroundTruth(TrafficWatchError):
    pass


class EmptyDataset(TrafficWatchError):
    pass


# dataset prep
class BadRatios(TrafficWatchError):
    pass


# configuration
class ConfigError(TrafficWatchError):
    """Startup configuration is missing, unparsable or out of range."""
