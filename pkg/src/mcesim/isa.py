"""Mini assembly dialect for matrix-core timing kernels.

The dialect covers exactly what the timing microbenchmarks need: matrix
fused multiply-add instructions plus the scalar instructions that bracket
them (`s_memtime`, `s_waitcnt`, `s_nop`, `s_endpgm`).

Matrix mnemonics follow the shape grammar

    v_mfma_<out>_<M>x<N>x<K>[_<B>b][_]<in>

where ``<out>``/``<in>`` are numeric type names (both the short ISA
spellings ``f32``/``f64``/``f16`` and the long table spellings
``fp32``/``fp64``/``fp16`` are accepted, plus ``bf16``, ``i32``, ``i8``),
``M``/``N``/``K`` are tile dimensions, and the optional ``<B>b`` field is
a block (batch) count defaulting to 1.  The input type may be fused
directly onto K (``4x4x1f32``) or separated by an underscore
(``32x32x4_bf16``).  The canonical rendering is lowercase with short type
names, block field only when greater than one: ``v_mfma_f32_16x16x4f32``,
``v_mfma_f32_32x32x4_2b_bf16``.

Register operands are written ``v3`` / ``v[0:3]`` / ``a[0:3]`` / ``s[0:1]``.
The ``s`` file is the scalar file; ``v`` and ``a`` are the vector and
accumulator files and are tracked as distinct files for dependence
purposes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import GprIdxUnsupported, MnemonicError, ParseError, UnsupportedPairError


class NumericType(Enum):
    FP64 = "fp64"
    FP32 = "fp32"
    FP16 = "fp16"
    BF16 = "bf16"
    I32 = "i32"
    I8 = "i8"

    @property
    def isa_name(self) -> str:
        """Short spelling used in canonical mnemonics (f32, bf16, i8, ...)."""
        return _ISA_NAMES[self]

    @property
    def width_bytes(self) -> int:
        return _WIDTH_BYTES[self]

    @property
    def is_float(self) -> bool:
        return self in (NumericType.FP64, NumericType.FP32, NumericType.FP16, NumericType.BF16)


_ISA_NAMES = {
    NumericType.FP64: "f64",
    NumericType.FP32: "f32",
    NumericType.FP16: "f16",
    NumericType.BF16: "bf16",
    NumericType.I32: "i32",
    NumericType.I8: "i8",
}

_WIDTH_BYTES = {
    NumericType.FP64: 8,
    NumericType.FP32: 4,
    NumericType.FP16: 2,
    NumericType.BF16: 2,
    NumericType.I32: 4,
    NumericType.I8: 1,
}

# Both spellings of every type name, lowercased.
_TYPE_SPELLINGS = {
    "fp64": NumericType.FP64, "f64": NumericType.FP64,
    "fp32": NumericType.FP32, "f32": NumericType.FP32,
    "fp16": NumericType.FP16, "f16": NumericType.FP16,
    "bf16": NumericType.BF16,
    "i32": NumericType.I32, "int32": NumericType.I32,
    "i8": NumericType.I8, "int8": NumericType.I8,
}

# Output/input pairings with hardware instructions behind them.
SUPPORTED_PAIRS = frozenset([
    (NumericType.FP64, NumericType.FP64),
    (NumericType.FP32, NumericType.FP32),
    (NumericType.FP32, NumericType.FP16),
    (NumericType.FP32, NumericType.BF16),
    (NumericType.I32, NumericType.I8),
])

# Shapes that require the GPR-indexed addressing mode; rejected distinctly
# so callers can report "unsupported addressing mode" instead of a generic
# parse failure.
_GPR_IDX_SHAPES = frozenset([
    (NumericType.FP32, 32, 32, 8, 1, NumericType.FP16),
    (NumericType.FP32, 32, 32, 1, 1, NumericType.FP32),
])


@dataclass(frozen=True)
class MfmaSpec:
    """Decoded shape of one matrix fused multiply-add instruction."""

    out_type: NumericType
    m: int
    n: int
    k: int
    blocks: int = 1
    in_type: NumericType = NumericType.FP32

    def __post_init__(self):
        for name in ("m", "n", "k", "blocks"):
            if getattr(self, name) < 1:
                raise MnemonicError(f"{name} must be >= 1, got {getattr(self, name)}")
        if (self.out_type, self.in_type) not in SUPPORTED_PAIRS:
            raise UnsupportedPairError(
                f"no instruction pairs {self.out_type.value} output with "
                f"{self.in_type.value} input"
            )

    @property
    def mnemonic(self) -> str:
        return render_mnemonic(self)

    def __str__(self) -> str:
        return self.mnemonic


_MNEMONIC_RE = re.compile(
    r"^v_mfma_(?P<out>[a-z]+\d+)_(?P<m>\d+)x(?P<n>\d+)x(?P<k>\d+)"
    r"(?:"
    r"(?P<fused>[a-z][a-z0-9]*)"          # type fused onto K: 4x4x1f32
    r"|_(?:(?P<blocks>\d+)b_?)?(?P<sep>[a-z][a-z0-9]*)"  # _2b_bf16 / _bf16
    r")$"
)


def parse_mfma_mnemonic(text: str) -> MfmaSpec:
    """Decode a matrix-instruction mnemonic into an MfmaSpec.

    Accepts either type spelling (``f32``/``fp32``), an optional block
    field (``_2b_``, normalized away when 1), and the input type fused to
    K or underscore-separated.  Case-insensitive.

    Raises MnemonicError for text outside the grammar, UnsupportedPairError
    for type pairings with no instruction behind them, and GprIdxUnsupported
    for the two shapes that need the GPR-indexed addressing mode.
    """
    lowered = text.strip().lower()
    if not lowered.startswith("v_mfma_"):
        raise MnemonicError(f"not a matrix instruction mnemonic: {text!r}")
    match = _MNEMONIC_RE.match(lowered)
    if match is None:
        raise MnemonicError(f"malformed matrix mnemonic: {text!r}")

    out_name = match.group("out")
    in_name = match.group("fused") or match.group("sep")
    if out_name not in _TYPE_SPELLINGS:
        raise MnemonicError(f"unknown output type {out_name!r} in {text!r}")
    if in_name not in _TYPE_SPELLINGS:
        raise MnemonicError(f"unknown input type {in_name!r} in {text!r}")

    out_type = _TYPE_SPELLINGS[out_name]
    in_type = _TYPE_SPELLINGS[in_name]
    m = int(match.group("m"))
    n = int(match.group("n"))
    k = int(match.group("k"))
    blocks = int(match.group("blocks") or 1)
    if min(m, n, k, blocks) < 1:
        raise MnemonicError(f"dimensions must be >= 1 in {text!r}")

    if (out_type, m, n, k, blocks, in_type) in _GPR_IDX_SHAPES:
        raise GprIdxUnsupported(
            f"{lowered} uses the GPR-indexed addressing mode and is not supported"
        )
    return MfmaSpec(out_type, m, n, k, blocks, in_type)


def render_mnemonic(spec: MfmaSpec) -> str:
    """Canonical lowercase mnemonic; round-trips through parse_mfma_mnemonic."""
    shape = f"{spec.m}x{spec.n}x{spec.k}"
    if spec.blocks == 1:
        return f"v_mfma_{spec.out_type.isa_name}_{shape}{spec.in_type.isa_name}"
    return f"v_mfma_{spec.out_type.isa_name}_{shape}_{spec.blocks}b_{spec.in_type.isa_name}"


class Opcode(Enum):
    MFMA = "mfma"
    S_MEMTIME = "s_memtime"
    S_NOP = "s_nop"
    S_WAITCNT = "s_waitcnt"
    S_ENDPGM = "s_endpgm"


@dataclass(frozen=True)
class RegRange:
    """Inclusive architectural register index range within one file."""

    file: str  # "s", "v", or "a"
    lo: int
    hi: int

    def __post_init__(self):
        if self.file not in ("s", "v", "a"):
            raise ValueError(f"unknown register file {self.file!r}")
        if not 0 <= self.lo <= self.hi:
            raise ValueError(f"bad register range {self.file}[{self.lo}:{self.hi}]")

    def overlaps(self, other: "RegRange") -> bool:
        return self.file == other.file and self.lo <= other.hi and other.lo <= self.hi

    def registers(self):
        """Individual (file, index) keys covered by the range."""
        return ((self.file, i) for i in range(self.lo, self.hi + 1))

    def __str__(self) -> str:
        if self.lo == self.hi:
            return f"{self.file}{self.lo}"
        return f"{self.file}[{self.lo}:{self.hi}]"


@dataclass(frozen=True)
class Instruction:
    """One parsed statement with its operands and byte size."""

    opcode: Opcode
    mfma: MfmaSpec | None = None
    dst_regs: tuple[RegRange, ...] = ()
    src_regs: tuple[RegRange, ...] = ()
    size_bytes: int = 4
    source_line: int = 0

    def __post_init__(self):
        if (self.opcode is Opcode.MFMA) != (self.mfma is not None):
            raise ValueError("mfma field is present exactly for MFMA opcodes")
        if self.size_bytes not in (4, 8):
            raise ValueError(f"size_bytes must be 4 or 8, got {self.size_bytes}")

    def same_statement(self, other: "Instruction") -> bool:
        """Equality ignoring source_line, for dump/parse round-trip checks."""
        return (self.opcode, self.mfma, self.dst_regs, self.src_regs, self.size_bytes) == (
            other.opcode, other.mfma, other.dst_regs, other.src_regs, other.size_bytes)


def encode_size(instr: Instruction) -> int:
    """Byte size of an instruction's encoding.

    The real encodings are not modeled; a fixed 8-byte (MFMA, s_memtime) /
    4-byte (scalar control) split gives the relative layout the fetch-line
    model needs.
    """
    if instr.opcode in (Opcode.MFMA, Opcode.S_MEMTIME):
        return 8
    return 4


@dataclass(frozen=True)
class Program:
    """Ordered instruction stream with byte offsets from a base address."""

    instructions: tuple[Instruction, ...]
    base_address: int = 0
    offsets: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        if not self.instructions:
            raise ValueError("program must contain at least one instruction")
        if self.instructions[-1].opcode is not Opcode.S_ENDPGM:
            raise ValueError("program must end with s_endpgm")
        if self.base_address < 0:
            raise ValueError("base_address must be nonnegative")
        offsets = []
        addr = self.base_address
        for instr in self.instructions:
            offsets.append(addr)
            addr += instr.size_bytes
        object.__setattr__(self, "offsets", tuple(offsets))

    def __len__(self) -> int:
        return len(self.instructions)

    def dump(self) -> str:
        """Render back to dialect text; parse_program(dump()) is equivalent."""
        return "\n".join(_render_statement(i) for i in self.instructions) + "\n"


def _render_statement(instr: Instruction) -> str:
    if instr.opcode is Opcode.MFMA:
        ops = ", ".join(str(r) for r in (instr.dst_regs + instr.src_regs))
        return f"{render_mnemonic(instr.mfma)} {ops}"
    if instr.opcode is Opcode.S_MEMTIME:
        return f"s_memtime {instr.dst_regs[0]}"
    if instr.opcode is Opcode.S_WAITCNT:
        return "s_waitcnt lgkmcnt(0)"
    return instr.opcode.value


_REG_RE = re.compile(r"^([sva])(?:\[(\d+):(\d+)\]|(\d+))$")
_WAITCNT_RE = re.compile(r"^(?:(?:lgkmcnt|vmcnt|expcnt)\(\d+\))(?:\s*[&,]\s*(?:lgkmcnt|vmcnt|expcnt)\(\d+\))*$")


def _parse_reg(token: str, line: int) -> RegRange:
    match = _REG_RE.match(token.strip())
    if match is None:
        raise ParseError(line, f"malformed register operand {token.strip()!r}")
    file = match.group(1)
    if match.group(4) is not None:
        idx = int(match.group(4))
        return RegRange(file, idx, idx)
    lo, hi = int(match.group(2)), int(match.group(3))
    if lo > hi:
        raise ParseError(line, f"descending register range {token.strip()!r}")
    return RegRange(file, lo, hi)


def parse_program(text: str, base_address: int = 0) -> Program:
    """Parse newline-separated dialect text into a Program.

    ``#`` and ``;`` start comments.  Every nonblank line must parse; unknown
    opcodes or malformed operands raise ParseError with the offending line.
    A trailing s_endpgm is appended when absent.  GprIdxUnsupported and
    UnsupportedPairError propagate unchanged from mnemonic decoding so
    callers can distinguish them from plain syntax errors.
    """
    instructions: list[Instruction] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stmt = re.split(r"[#;]", raw, maxsplit=1)[0].strip()
        if not stmt:
            continue
        parts = stmt.split(None, 1)
        opcode_text = parts[0].lower()
        operand_text = parts[1].strip() if len(parts) > 1 else ""
        instructions.append(_parse_statement(opcode_text, operand_text, lineno))

    if not instructions or instructions[-1].opcode is not Opcode.S_ENDPGM:
        last_line = instructions[-1].source_line + 1 if instructions else 1
        instructions.append(Instruction(Opcode.S_ENDPGM, size_bytes=4, source_line=last_line))
    sized = [replace(i, size_bytes=encode_size(i)) for i in instructions]
    return Program(tuple(sized), base_address=base_address)


def _parse_statement(opcode_text: str, operand_text: str, line: int) -> Instruction:
    if opcode_text.startswith("v_mfma_"):
        try:
            spec = parse_mfma_mnemonic(opcode_text)
        except MnemonicError as exc:
            raise ParseError(line, str(exc)) from exc
        operands = [t for t in operand_text.split(",") if t.strip()]
        if len(operands) != 4:
            raise ParseError(line, f"matrix instruction needs 4 operands, got {len(operands)}")
        regs = [_parse_reg(t, line) for t in operands]
        for r in regs:
            if r.file == "s":
                raise ParseError(line, "matrix operands must be vector or accumulator registers")
        dst, src_a, src_b, src_c = regs
        return Instruction(Opcode.MFMA, mfma=spec, dst_regs=(dst,),
                           src_regs=(src_a, src_b, src_c), size_bytes=8, source_line=line)

    if opcode_text == "s_memtime":
        if not operand_text:
            raise ParseError(line, "s_memtime needs a destination register pair")
        dst = _parse_reg(operand_text, line)
        if dst.file != "s":
            raise ParseError(line, "s_memtime destination must be a scalar register range")
        return Instruction(Opcode.S_MEMTIME, dst_regs=(dst,), size_bytes=8, source_line=line)

    if opcode_text == "s_waitcnt":
        # Counters are parsed for syntax only; the timing model waits for all
        # outstanding scalar-memory results regardless of the counts.
        if operand_text and _WAITCNT_RE.match(operand_text) is None:
            raise ParseError(line, f"malformed wait counters {operand_text!r}")
        return Instruction(Opcode.S_WAITCNT, size_bytes=4, source_line=line)

    if opcode_text == "s_nop":
        # The hazard count operand is accepted and ignored: stalls are modeled
        # directly, so only the instruction's bytes matter here.
        if operand_text and not operand_text.isdigit():
            raise ParseError(line, f"s_nop count must be an integer, got {operand_text!r}")
        return Instruction(Opcode.S_NOP, size_bytes=4, source_line=line)

    if opcode_text == "s_endpgm":
        if operand_text:
            raise ParseError(line, "s_endpgm takes no operands")
        return Instruction(Opcode.S_ENDPGM, size_bytes=4, source_line=line)

    raise ParseError(line, f"unknown opcode {opcode_text!r}")


def cacheline_layout(program: Program, line_size: int = 64) -> list[tuple[int, int]]:
    """Map each instruction to the fetch line(s) holding its bytes.

    Returns (instruction_index, line_index) pairs ordered by instruction;
    an instruction whose bytes straddle a boundary contributes one pair per
    line touched.  line_size must be a power of two.
    """
    if line_size <= 0 or line_size & (line_size - 1):
        raise ValueError(f"line_size must be a power of two, got {line_size}")
    pairs: list[tuple[int, int]] = []
    for index, instr in enumerate(program.instructions):
        first = program.offsets[index] // line_size
        last = (program.offsets[index] + instr.size_bytes - 1) // line_size
        for line in range(first, last + 1):
            pairs.append((index, line))
    return pairs
