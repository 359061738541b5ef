"""Timing microbenchmarks: generation, latency extraction, and sweeps.

A benchmark brackets a chain of matrix instructions between two timer
reads::

    s_waitcnt lgkmcnt(0)        ; after optional s_nop padding
    s_memtime s[0:1]
    s_waitcnt lgkmcnt(0)
    v_mfma_...  (n_mfma copies, each reading the D range of the previous)
    s_memtime s[2:3]
    s_waitcnt lgkmcnt(0)
    s_endpgm

The second timer does not wait for the last matrix instruction (no data
dependence), so the sampled window contains the timer round trip, n-1 full
chain latencies, and one issue slot.  Per-instruction latency is recovered
as

    t_mfma = (t_total - t_memtime - t_inst) / (n_mfma - 1)

Chaining reuses the destination range as the next accumulator input; the
functional result of such a chain is not meaningful and is not checked
here, only its timing.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

from .errors import MissingSamples
from .isa import Instruction, MfmaSpec, NumericType, Opcode, Program, RegRange
from .timing import CuConfig, GpuModel, LatencyModel, SimTrace, builtin_latency_model, mce_latency, simulate

# Input types whose benchmarks needed fetch-line padding on real hardware.
PADDING_SENSITIVE_IN_TYPES = frozenset([NumericType.FP16, NumericType.I8])


@dataclass(frozen=True)
class BenchSpec:
    """One benchmark configuration."""

    mfma: MfmaSpec
    n_mfma: int
    pad_nops: int = 0
    align_timed_region: bool = False

    def __post_init__(self):
        if self.n_mfma < 2:
            raise ValueError("n_mfma must be >= 2 (extraction divides by n_mfma - 1)")
        if self.pad_nops < 0:
            raise ValueError("pad_nops must be >= 0")


@dataclass(frozen=True)
class LatencyMeasurement:
    """Window measurement and the latency it implies."""

    t_total: int
    n_mfma: int
    t_memtime: int
    t_inst: int
    t_mfma: Fraction


def _range_regs(elements: int, width_bytes: int) -> int:
    # Nominal register footprint: 64 lanes x 4-byte registers per row.
    return max(1, -(-(elements * width_bytes) // 256))


def _mfma_operands(spec: MfmaSpec) -> tuple[RegRange, RegRange, RegRange, RegRange]:
    """Pick register ranges for D, A, B, C; D and C share one range."""
    d_regs = _range_regs(spec.blocks * spec.m * spec.n, spec.out_type.width_bytes)
    a_regs = _range_regs(spec.blocks * spec.m * spec.k, spec.in_type.width_bytes)
    b_regs = _range_regs(spec.blocks * spec.k * spec.n, spec.in_type.width_bytes)
    d = RegRange("a", 0, d_regs - 1)
    a = RegRange("v", 0, a_regs - 1)
    b = RegRange("v", a_regs, a_regs + b_regs - 1)
    return d, a, b, d


def alignment_pad_nops(base_address: int, line_size: int) -> int:
    """Nops needed so the first timer (after one s_waitcnt) starts a line."""
    if base_address % 4:
        raise ValueError("base_address must be 4-byte aligned to pad exactly")
    return ((-(base_address + 4)) % line_size) // 4


def generate_microbench(spec: BenchSpec, line_size: int = 64,
                        base_address: int = 0) -> Program:
    """Emit the benchmark Program for one configuration.

    With align_timed_region the padding count is computed from the layout
    so the region from the first timer through the second starts on a
    fetch-line boundary (minimizing the lines it spans); otherwise
    spec.pad_nops is used as given.
    """
    pad = spec.pad_nops
    if spec.align_timed_region:
        pad = alignment_pad_nops(base_address, line_size)

    d, a, b, c = _mfma_operands(spec.mfma)
    statements: list[Instruction] = []
    statements += [Instruction(Opcode.S_NOP, size_bytes=4) for _ in range(pad)]
    statements.append(Instruction(Opcode.S_WAITCNT, size_bytes=4))
    statements.append(Instruction(Opcode.S_MEMTIME, dst_regs=(RegRange("s", 0, 1),),
                                  size_bytes=8))
    statements.append(Instruction(Opcode.S_WAITCNT, size_bytes=4))
    for _ in range(spec.n_mfma):
        statements.append(Instruction(Opcode.MFMA, mfma=spec.mfma, dst_regs=(d,),
                                      src_regs=(a, b, c), size_bytes=8))
    statements.append(Instruction(Opcode.S_MEMTIME, dst_regs=(RegRange("s", 2, 3),),
                                  size_bytes=8))
    statements.append(Instruction(Opcode.S_WAITCNT, size_bytes=4))
    statements.append(Instruction(Opcode.S_ENDPGM, size_bytes=4))
    numbered = [replace(instr, source_line=i + 1) for i, instr in enumerate(statements)]
    return Program(tuple(numbered), base_address=base_address)


def extract_latency(trace: SimTrace, n_mfma: int, cfg: CuConfig,
                    wf_id: int | None = None) -> LatencyMeasurement:
    """Recover the per-instruction latency from a benchmark trace.

    The trace must carry exactly two timer samples for the wavefront
    (the only one with samples when wf_id is omitted); otherwise
    MissingSamples is raised.
    """
    if n_mfma < 2:
        raise ValueError("n_mfma must be >= 2")
    if wf_id is None:
        wf_ids = {s.wf_id for s in trace.memtime_samples}
        if len(wf_ids) != 1:
            raise MissingSamples(
                f"trace has timer samples for wavefronts {sorted(wf_ids)}; pass wf_id")
        wf_id = wf_ids.pop()
    samples = trace.samples_for(wf_id)
    if len(samples) != 2:
        raise MissingSamples(
            f"wavefront {wf_id} has {len(samples)} timer samples, need exactly 2")
    t_total = samples[1].value - samples[0].value
    t_mfma = Fraction(t_total - cfg.memtime_cycles - cfg.issue_cycles, n_mfma - 1)
    return LatencyMeasurement(t_total, n_mfma, cfg.memtime_cycles, cfg.issue_cycles, t_mfma)


@dataclass(frozen=True)
class SweepRow:
    gpu_model: GpuModel
    mnemonic: str
    n_mfma: int
    pad_nops: int
    t_total: int
    t_mfma: Fraction
    expected: int
    abs_pct_err: float


def misalign_pad_nops(line_size: int) -> int:
    """Padding that lands the first matrix instruction on a fresh fetch line,
    forcing a miss inside the timed region (for demonstrating the effect)."""
    return max(0, (line_size - 16) // 4)


def _bench_for(spec: MfmaSpec, n: int, mode: str, pad_nops: int,
               line_size: int) -> BenchSpec:
    sensitive = spec.in_type in PADDING_SENSITIVE_IN_TYPES
    if mode == "all":
        return BenchSpec(spec, n, align_timed_region=True)
    if mode == "never":
        return BenchSpec(spec, n, pad_nops=pad_nops)
    if mode == "auto":
        if sensitive:
            return BenchSpec(spec, n, align_timed_region=True)
        return BenchSpec(spec, n, pad_nops=pad_nops)
    if mode == "misalign-sensitive":
        return BenchSpec(spec, n, pad_nops=misalign_pad_nops(line_size) if sensitive else 0)
    raise ValueError(f"unknown align mode {mode!r}")


def run_sweep(model: GpuModel, specs: list[MfmaSpec], n_range,
              cfg: CuConfig, align: str = "auto", pad_nops: int = 0,
              latency_model: LatencyModel | None = None) -> list[SweepRow]:
    """Measure every (spec, n) pair through the generate/simulate/extract
    pipeline on one GPU model.

    align selects which benchmarks get a fetch-aligned timed region: "auto"
    aligns the input types that needed it on hardware, "all" and "never"
    force it globally, and "misalign-sensitive" instead pads those same types so
    their timed region straddles a line (a deliberate failure demo).
    Unaligned benchmarks use pad_nops verbatim.
    """
    run_cfg = replace(cfg, gpu_model=model)
    latency = latency_model if latency_model is not None else builtin_latency_model(
        model, run_cfg.mfma_scale)
    rows = []
    for spec in specs:
        expected = mce_latency(latency, spec)
        for n in n_range:
            bench = _bench_for(spec, n, align, pad_nops, run_cfg.fetch_line_bytes)
            program = generate_microbench(bench, line_size=run_cfg.fetch_line_bytes)
            trace = simulate([(program, 0)], run_cfg, latency_model=latency)
            meas = extract_latency(trace, n, run_cfg, wf_id=0)
            pads = sum(1 for i in program.instructions if i.opcode is Opcode.S_NOP)
            err = abs(float(meas.t_mfma) - expected) / expected * 100.0
            rows.append(SweepRow(model, spec.mnemonic, n, pads, meas.t_total,
                                 meas.t_mfma, expected, err))
    return rows


def format_cycles(value) -> str:
    """Render integral cycle values without a decimal point."""
    frac = Fraction(value)
    if frac.denominator == 1:
        return str(frac.numerator)
    return repr(float(frac))


def sweep_to_csv(rows: list[SweepRow]) -> str:
    lines = ["gpu_model,mnemonic,n_mfma,pad_nops,t_total,t_mfma,expected,abs_pct_err"]
    for r in rows:
        lines.append(f"{r.gpu_model.value},{r.mnemonic},{r.n_mfma},{r.pad_nops},"
                     f"{r.t_total},{format_cycles(r.t_mfma)},{r.expected},"
                     f"{r.abs_pct_err:.6g}")
    return "\n".join(lines) + "\n"
