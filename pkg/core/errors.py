"""
Error types for the MB-MelGAN vocoder engine
"""

from typing import Optional


class VocoderError(Exception):
    """Base class for all engine errors"""


class ShapeError(VocoderError, ValueError):
    """Tensor shape does not satisfy an operation's contract"""

    def __init__(self, op: str, dimension: str, expected, actual):
        self.op = op
        self.dimension = dimension
        self.expected = expected
        self.actual = actual
        super().__init__(f"{op}: dimension '{dimension}' expected {expected}, got {actual}")


class ConfigurationError(VocoderError, ValueError):
    """Invalid model, loss, feature or training configuration"""

    def __init__(self, message: str, key: Optional[str] = None, source: Optional[str] = None):
        self.key = key
        self.source = source
        prefix = f"{source}: " if source else ""
        super().__init__(f"{prefix}{message}")


class FormatError(VocoderError):
    """Audio or feature file cannot be read or written"""


class CheckpointError(VocoderError):
    """Checkpoint file is malformed, truncated or of an unsupported version"""


class ChecksumError(CheckpointError):
    """Checkpoint digest does not match its contents"""


class NumericalError(VocoderError, ArithmeticError):
    """Non-finite values produced by a forward or backward pass"""

    def __init__(self, message: str, layer: Optional[int] = None, diagnostics: Optional[dict] = None):
        self.layer = layer
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class GraphError(VocoderError, RuntimeError):
    """Misuse of the reverse-mode compute graph"""
