"""Exception types raised across the simulator."""


class MnemonicError(ValueError):
    """Matrix-instruction mnemonic text does not match the grammar."""


class UnsupportedPairError(ValueError):
    """Output/input numeric-type pairing outside the supported set."""


class GprIdxUnsupported(ValueError):
    """Instruction needs the GPR-indexed addressing mode, which is not modeled."""


class ParseError(ValueError):
    """Assembly text could not be parsed; carries the 1-based source line."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ShapeMismatch(ValueError):
    """Matrix operand dimensions disagree with the instruction shape."""


class TypeMismatch(ValueError):
    """Matrix operand dtype disagrees with the instruction types."""


class UnsupportedOnModel(ValueError):
    """Instruction exists in the ISA but has no latency entry on this GPU model."""


class CapacityError(ValueError):
    """Wavefront placement exceeds a hardware occupancy limit."""


class MissingSamples(ValueError):
    """Trace does not contain the two timer samples needed for extraction."""


class ZeroReference(ValueError):
    """Percentage error is undefined against a nonpositive reference value."""
