"""Exception hierarchy shared across the package."""


class QubicForgeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(QubicForgeError):
    """Malformed, schema-violating or invariant-violating configuration.

    ``path`` names the offending JSON location, e.g. ``"qubits.Q0.drive_freq"``.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class EncodingError(QubicForgeError):
    """Field overflow or layout violation in the command codec."""


class EnvelopeError(QubicForgeError):
    """Invalid envelope specification or sample data."""


class CompileError(QubicForgeError):
    """Circuit cannot be lowered to a device program."""


class SimulationError(QubicForgeError):
    """Program/hardware mismatch or simulator resource overflow."""


class TransportError(QubicForgeError):
    """Host-to-device transfer failed after retries.

    ``last_seq`` carries the sequence number of the last unacknowledged
    request, if any.
    """

    def __init__(self, message, last_seq=None):
        self.last_seq = last_seq
        super().__init__(message)


class AnalysisError(QubicForgeError):
    """Invalid input to a QCVV analysis routine."""
