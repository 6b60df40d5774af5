"""Exception hierarchy shared across the harness."""


class DynbenchError(Exception):
    """Base class for all harness errors."""


class ConfigError(DynbenchError):
    """Invalid configuration value or combination."""


class ParseError(DynbenchError):
    """Malformed input file; message names the offending line."""


class EmptyDatasetError(DynbenchError):
    """Input file contained no usable trajectory data."""


class InsufficientDataError(DynbenchError):
    """Too few samples to perform the requested operation."""


class SequencingError(DynbenchError):
    """Frames were applied out of tick order."""


class NoTrackError(DynbenchError):
    """Requested agent has no live track."""


class ContractError(DynbenchError):
    """A predictor or metric contract invariant was violated."""


class SceneAborted(DynbenchError):
    """A scene run was aborted (predictor crash or internal error)."""


class BridgeError(DynbenchError):
    """Wire-protocol violation or transport failure on a bridge endpoint."""


class BridgePeerError(BridgeError):
    """Peer answered a request with an explicit error message."""


class PredictTimeout(DynbenchError):
    """Raised by predictors that enforce the deadline themselves (bridge)."""
