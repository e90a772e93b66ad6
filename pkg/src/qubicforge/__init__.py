"""qubicforge: pulse compiler, gateware-level DSP simulator, UDP device
emulator and characterization harness for an FPGA quantum control stack.
"""

from .errors import (
    AnalysisError,
    CompileError,
    ConfigError,
    EncodingError,
    EnvelopeError,
    QubicForgeError,
    SimulationError,
    TransportError,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisError",
    "CompileError",
    "ConfigError",
    "EncodingError",
    "EnvelopeError",
    "QubicForgeError",
    "SimulationError",
    "TransportError",
    "__version__",
]
