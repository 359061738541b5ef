"""Deterministic timing model of one compute unit's matrix-core engines.

The unit holds ``num_simd`` SIMD units, each with one matrix engine and up
to ``max_wf_per_simd`` resident wavefronts.  Per cycle, each SIMD issues at
most one instruction, chosen round-robin among its wavefronts whose next
instruction passes the scoreboard:

  a. data dependence: every source and destination register range is ready;
  b. structural hazard: a matrix instruction needs the SIMD's engine free
     (its not-ready window spans the full instruction latency, so matrix
     instructions on one SIMD never overlap, within or across wavefronts);
  c. instruction fetch: the first byte's fetch line must be resident; the
     first touch stalls the wavefront ``l1i_miss_cycles`` once everything
     else is ready, later touches are free;
  d. a previously issued ``s_waitcnt`` stalls the wavefront until all of
     its outstanding ``s_memtime`` results have landed.

``s_memtime`` writes the cycle value ``issue + memtime_cycles`` into its
destination pair and makes it ready at that cycle, modeling the scalar
round trip as a single constant.  Issuing any instruction occupies the
wavefront's issue slot for ``issue_cycles``.

Everything is integer-cycle and free of randomness: identical inputs give
identical traces.
"""

from __future__ import annotations

import configparser
import warnings
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from importlib import resources
from math import floor

from .errors import CapacityError, UnsupportedOnModel
from .isa import Instruction, MfmaSpec, Opcode, Program, RegRange, parse_mfma_mnemonic, render_mnemonic

DEFAULT_MAX_CYCLES = 10_000_000


class GpuModel(Enum):
    MI200 = "mi200"
    MI300 = "mi300"


def round_half_up(value) -> int:
    """Round to the nearest integer, ties away from zero upward."""
    return floor(Fraction(value) + Fraction(1, 2))


@dataclass
class CuConfig:
    """Compute-unit parameters.

    ``clock_mhz`` is informational (cycle counts never cross into seconds
    here), and the data-side cache/memory latencies of the machine this is
    tuned against are deliberately absent: only the instruction-fetch path
    affects these kernels.
    """

    num_simd: int = 4
    max_wf_per_simd: int = 10
    gpu_model: GpuModel = GpuModel.MI200
    mfma_scale: Fraction = Fraction(1)
    fetch_line_bytes: int = 64
    l1i_miss_cycles: int = 40
    memtime_cycles: int = 40
    issue_cycles: int = 4
    clock_mhz: int = 1801
    mce_pipelined: bool = False

    def __post_init__(self):
        if isinstance(self.gpu_model, str):
            self.gpu_model = GpuModel(self.gpu_model.lower())
        self.mfma_scale = Fraction(self.mfma_scale)
        if self.num_simd < 1:
            raise ValueError("num_simd must be >= 1")
        if self.max_wf_per_simd < 1:
            raise ValueError("max_wf_per_simd must be >= 1")
        if self.mfma_scale <= 0:
            raise ValueError("mfma_scale must be positive")
        if self.fetch_line_bytes <= 0 or self.fetch_line_bytes & (self.fetch_line_bytes - 1):
            raise ValueError("fetch_line_bytes must be a power of two")
        for name in ("l1i_miss_cycles", "memtime_cycles"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.issue_cycles < 0:
            raise ValueError("issue_cycles must be >= 0")


# Entries whose cycle count is an estimate rather than a benchmarked value.
_ESTIMATED_ENTRIES = {
    (GpuModel.MI300, "v_mfma_f32_32x32x4_2b_bf16"),
}


@dataclass
class LatencyModel:
    """Per-GPU-model lookup from instruction shape to engine cycles."""

    gpu_model: GpuModel
    entries: dict[str, int]
    scale: Fraction = Fraction(1)

    def __post_init__(self):
        self.scale = Fraction(self.scale)
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def base_cycles(self, spec: MfmaSpec) -> int:
        key = render_mnemonic(spec)
        try:
            base = self.entries[key]
        except KeyError:
            raise UnsupportedOnModel(
                f"{key} is not supported on {self.gpu_model.value}") from None
        if (self.gpu_model, key) in _ESTIMATED_ENTRIES:
            warnings.warn(
                f"{key} cycle count on {self.gpu_model.value} is an estimated value",
                stacklevel=3)
        return base

    def effective_cycles(self, spec: MfmaSpec) -> int:
        """Scaled cycles, rounded half-up to an integer with a floor of 1."""
        return max(1, round_half_up(self.base_cycles(spec) * self.scale))

    def with_scale(self, scale) -> "LatencyModel":
        return replace(self, scale=Fraction(scale))


def mce_latency(model: LatencyModel, spec: MfmaSpec) -> int:
    """Execution cycles of one matrix instruction under the model's scale."""
    return model.effective_cycles(spec)


def parse_latency_table(text: str) -> dict[str, int]:
    """Parse ``mnemonic cycles`` lines (# comments) into a latency table."""
    entries: dict[str, int] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, _, cycles = line.partition(" ")
        if not name.startswith("v_mfma_"):
            name = "v_mfma_" + name
        spec = parse_mfma_mnemonic(name)
        entries[render_mnemonic(spec)] = int(cycles)
    return entries


def builtin_latency_model(gpu_model: GpuModel, scale=Fraction(1)) -> LatencyModel:
    """Load the shipped latency table for one GPU model."""
    if isinstance(gpu_model, str):
        gpu_model = GpuModel(gpu_model.lower())
    text = resources.files("mcesim").joinpath("data", f"{gpu_model.value}.latency").read_text()
    return LatencyModel(gpu_model, parse_latency_table(text), Fraction(scale))


_BOOL_VALUES = {"true": True, "yes": True, "1": True, "on": True,
                "false": False, "no": False, "0": False, "off": False}


def load_config_file(path) -> tuple[CuConfig, LatencyModel]:
    """Read a config file: [cu] parameters plus optional latency sections.

    ``[latency] table = <file>`` replaces the built-in table for the
    configured GPU model; ``[latency.overrides]`` patches individual
    ``mnemonic = cycles`` entries on top of it.
    """
    parser = configparser.ConfigParser()
    with open(path) as handle:
        parser.read_file(handle)

    kwargs = {}
    cu = parser["cu"] if parser.has_section("cu") else {}
    for name, value in dict(cu).items():
        if name not in CuConfig.__dataclass_fields__:
            raise ValueError(f"unknown [cu] option {name!r}")
        if name == "gpu_model":
            kwargs[name] = GpuModel(value.lower())
        elif name == "mfma_scale":
            kwargs[name] = Fraction(value)
        elif name == "mce_pipelined":
            kwargs[name] = _BOOL_VALUES[value.strip().lower()]
        else:
            kwargs[name] = int(value)
    cfg = CuConfig(**kwargs)

    if parser.has_option("latency", "table"):
        with open(parser.get("latency", "table")) as handle:
            entries = parse_latency_table(handle.read())
    else:
        entries = dict(builtin_latency_model(cfg.gpu_model).entries)
    if parser.has_section("latency.overrides"):
        for name, value in parser.items("latency.overrides"):
            if not name.startswith("v_mfma_"):
                name = "v_mfma_" + name
            entries[render_mnemonic(parse_mfma_mnemonic(name))] = int(value)
    return cfg, LatencyModel(cfg.gpu_model, entries, cfg.mfma_scale)


class StallReason(Enum):
    NONE = "none"
    DATA_DEP = "data_dep"
    MCE_BUSY = "mce_busy"
    FETCH = "fetch"
    WAITCNT = "waitcnt"


@dataclass
class WavefrontState:
    """Per-wavefront scheduler state."""

    wf_id: int
    simd_id: int
    program: Program
    pc: int = 0
    next_issue_cycle: int = 0
    stalled_until: int = 0
    done: bool = False
    reg_ready: dict = field(default_factory=dict)       # (file, index) -> cycle
    pending_memtime: list = field(default_factory=list)  # land cycles
    line_ready: dict = field(default_factory=dict)       # line index -> cycle
    last_stall: StallReason | None = None

    def regs_ready_by(self, ranges: tuple[RegRange, ...]) -> int:
        ready = 0
        for rng in ranges:
            for key in rng.registers():
                ready = max(ready, self.reg_ready.get(key, 0))
        return ready

    def mark_ready(self, ranges: tuple[RegRange, ...], cycle: int):
        for rng in ranges:
            for key in rng.registers():
                self.reg_ready[key] = cycle


@dataclass
class SimState:
    """Shared simulator state consulted by the issue scoreboard."""

    cfg: CuConfig
    latency: LatencyModel
    wavefronts: list[WavefrontState]
    mce_busy_until: list[int]
    rr_next: list[int]


def scoreboard_can_issue(state: SimState, wf: WavefrontState, instr: Instruction,
                         now: int) -> tuple[bool, StallReason]:
    """Decide whether a wavefront's next instruction may issue this cycle.

    Pure predicate over the simulator state; ``simulate`` issues exactly the
    instructions this admits.  The fetch check comes last so a line miss is
    charged only once the instruction is otherwise ready.
    """
    if now < wf.stalled_until:
        return False, StallReason.WAITCNT
    if wf.regs_ready_by(instr.src_regs + instr.dst_regs) > now:
        return False, StallReason.DATA_DEP
    if (instr.opcode is Opcode.MFMA and not state.cfg.mce_pipelined
            and state.mce_busy_until[wf.simd_id] > now):
        return False, StallReason.MCE_BUSY
    line = wf.program.offsets[wf.pc] // state.cfg.fetch_line_bytes
    ready = wf.line_ready.get(line)
    if ready is None or ready > now:
        return False, StallReason.FETCH
    return True, StallReason.NONE


@dataclass(frozen=True)
class InstructionRecord:
    wf_id: int
    inst_index: int
    opcode: str
    issue_cycle: int
    complete_cycle: int
    stall_reason: StallReason


@dataclass(frozen=True)
class MemtimeSample:
    wf_id: int
    dst_regs: RegRange
    value: int


@dataclass(frozen=True)
class SimTrace:
    """Issue/complete record per instruction plus the timer samples."""

    records: tuple[InstructionRecord, ...]
    memtime_samples: tuple[MemtimeSample, ...]
    total_cycles: int

    def samples_for(self, wf_id: int) -> list[MemtimeSample]:
        return [s for s in self.memtime_samples if s.wf_id == wf_id]

    def records_for(self, wf_id: int) -> list[InstructionRecord]:
        return [r for r in self.records if r.wf_id == wf_id]

    def to_csv(self) -> str:
        lines = ["wf_id,inst_index,opcode,issue_cycle,complete_cycle,stall_reason"]
        for r in self.records:
            lines.append(f"{r.wf_id},{r.inst_index},{r.opcode},"
                         f"{r.issue_cycle},{r.complete_cycle},{r.stall_reason.value}")
        return "\n".join(lines) + "\n"


def _opcode_label(instr: Instruction) -> str:
    if instr.opcode is Opcode.MFMA:
        return render_mnemonic(instr.mfma)
    return instr.opcode.value


def _round_robin_pick(state: SimState, simd: int, candidates: list[WavefrontState]) -> WavefrontState:
    start = state.rr_next[simd]
    chosen = next((wf for wf in candidates if wf.wf_id >= start), candidates[0])
    state.rr_next[simd] = chosen.wf_id + 1
    return chosen


def simulate(programs: list[tuple[Program, int]], cfg: CuConfig,
             latency_model: LatencyModel | None = None,
             max_cycles: int = DEFAULT_MAX_CYCLES) -> SimTrace:
    """Run wavefronts to completion and return the trace.

    ``programs`` pairs each wavefront's Program with the SIMD it resides on;
    wavefront ids are list positions.  Raises CapacityError when a SIMD is
    over-subscribed and UnsupportedOnModel when any matrix instruction lacks
    a latency entry for the configured GPU model (checked up front).
    """
    latency = latency_model if latency_model is not None else builtin_latency_model(
        cfg.gpu_model, cfg.mfma_scale)

    per_simd = Counter()
    for program, simd in programs:
        if not 0 <= simd < cfg.num_simd:
            raise CapacityError(f"SIMD {simd} does not exist (num_simd={cfg.num_simd})")
        per_simd[simd] += 1
        for instr in program.instructions:
            if instr.opcode is Opcode.MFMA:
                latency.effective_cycles(instr.mfma)
    for simd, count in per_simd.items():
        if count > cfg.max_wf_per_simd:
            raise CapacityError(
                f"{count} wavefronts on SIMD {simd} exceeds max_wf_per_simd="
                f"{cfg.max_wf_per_simd}")

    wavefronts = [WavefrontState(wf_id=i, simd_id=simd, program=program)
                  for i, (program, simd) in enumerate(programs)]
    state = SimState(cfg, latency, wavefronts,
                     mce_busy_until=[0] * cfg.num_simd,
                     rr_next=[0] * cfg.num_simd)
    records: list[InstructionRecord] = []
    samples: list[MemtimeSample] = []
    slot_cycles = max(1, cfg.issue_cycles)

    cycle = 0
    remaining = len(wavefronts)
    while remaining:
        if cycle > max_cycles:
            raise RuntimeError(f"simulation exceeded {max_cycles} cycles")

        ready_by_simd: dict[int, list[WavefrontState]] = {}
        for wf in wavefronts:
            if wf.done or cycle < wf.next_issue_cycle:
                continue
            instr = wf.program.instructions[wf.pc]
            ok, reason = scoreboard_can_issue(state, wf, instr, cycle)
            if ok:
                ready_by_simd.setdefault(wf.simd_id, []).append(wf)
            else:
                wf.last_stall = reason
                if reason is StallReason.FETCH:
                    line = wf.program.offsets[wf.pc] // cfg.fetch_line_bytes
                    if line not in wf.line_ready:
                        wf.line_ready[line] = cycle + cfg.l1i_miss_cycles

        for simd in sorted(ready_by_simd):
            wf = _round_robin_pick(state, simd, ready_by_simd[simd])
            instr = wf.program.instructions[wf.pc]
            stall = wf.last_stall if wf.last_stall is not None else StallReason.NONE
            wf.last_stall = None

            complete = cycle
            if instr.opcode is Opcode.MFMA:
                lat = latency.effective_cycles(instr.mfma)
                complete = cycle + lat
                wf.mark_ready(instr.dst_regs, complete)
                if not cfg.mce_pipelined:
                    state.mce_busy_until[wf.simd_id] = complete
            elif instr.opcode is Opcode.S_MEMTIME:
                value = cycle + cfg.memtime_cycles
                complete = value
                wf.mark_ready(instr.dst_regs, value)
                wf.pending_memtime.append(value)
                samples.append(MemtimeSample(wf.wf_id, instr.dst_regs[0], value))
            elif instr.opcode is Opcode.S_WAITCNT:
                wf.stalled_until = max([cycle] + wf.pending_memtime)
                wf.pending_memtime.clear()
            elif instr.opcode is Opcode.S_ENDPGM:
                wf.done = True
                remaining -= 1

            records.append(InstructionRecord(wf.wf_id, wf.pc, _opcode_label(instr),
                                             cycle, complete, stall))
            wf.pc += 1
            wf.next_issue_cycle = cycle + slot_cycles
        cycle += 1

    total = max((r.complete_cycle for r in records), default=0)
    return SimTrace(tuple(records), tuple(samples), total)
