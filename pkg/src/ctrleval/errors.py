"""Exception hierarchy shared across the package."""


class CtrlEvalError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(CtrlEvalError):
    """Input data violates a documented precondition or invariant."""


class DegenerateWeightsError(ValidationError):
    """All raw weights are zero; no distribution can be formed."""


class CatalogError(ValidationError):
    """A prompt/verbalizer catalog fails its structural checks."""


class TableLoadError(CtrlEvalError):
    """A persisted IWF table could not be read."""

    code = "table_load"


class MalformedHeaderError(TableLoadError):
    code = "malformed header"


class VersionMismatchError(TableLoadError):
    code = "version mismatch"


class TruncatedFileError(TableLoadError):
    code = "truncated file"


class ScoringError(CtrlEvalError):
    """Scoring of one instance failed; carries the offending evaluator id."""

    def __init__(self, message: str, evaluator_id: str | None = None):
        super().__init__(message)
        self.evaluator_id = evaluator_id


class TransportError(CtrlEvalError):
    """The remote scorer backend could not be reached or died mid-request.

    ``retriable`` distinguishes transient faults (timeouts, connection
    resets) from fatal ones (process exited, handshake failed).
    """

    def __init__(self, message: str, retriable: bool = False, request_id: str | None = None):
        super().__init__(message)
        self.retriable = retriable
        self.request_id = request_id


class ProtocolError(CtrlEvalError):
    """The remote backend violated the JSON-lines scorer protocol."""

    def __init__(self, message: str, request_id: str | None = None):
        super().__init__(message)
        self.request_id = request_id
