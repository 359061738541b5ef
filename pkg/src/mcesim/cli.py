"""Command-line harness.

Subcommands:
  sim       run a program file on one wavefront and dump its trace
  bench     generate and measure one benchmark configuration
  sweep     measure every benchmarked instruction for n in 2..5
  validate  sweep and compare against the expected latencies (exit 1 on
            mismatch); also reports the fixture-derived error statistics
  whatif    compare latency-scale factors against the scale-1 baseline

Exit codes: 0 success, 1 validation failure, 2 usage or input errors.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from fractions import Fraction

from . import __version__
from .errors import (CapacityError, GprIdxUnsupported, MissingSamples, MnemonicError,
                     ParseError, UnsupportedOnModel, UnsupportedPairError)
from .isa import parse_mfma_mnemonic, parse_program
from .microbench import (BenchSpec, extract_latency, format_cycles, generate_microbench,
                         run_sweep, sweep_to_csv)
from .timing import (CuConfig, GpuModel, builtin_latency_model, load_config_file,
                     mce_latency, simulate)
from .validate import (SWEEP_N_RANGE, benchmarked_specs, published_statistics,
                       validate_model, whatif_sweep, whatif_to_csv)

_INPUT_ERRORS = (ParseError, MnemonicError, UnsupportedPairError, GprIdxUnsupported,
                 UnsupportedOnModel, CapacityError, MissingSamples, ValueError, OSError)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcesim",
                                     description="Matrix-core timing simulator")
    parser.add_argument("--version", action="version", version=f"mcesim {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--gpu-model", choices=[m.value for m in GpuModel],
                        help="GPU model (overrides the config file)")
    common.add_argument("--mfma-scale", metavar="RATIONAL", default=None,
                        help="latency scale factor, e.g. 2, 0.5, or 3/2")
    common.add_argument("--config", metavar="FILE", default=None,
                        help="config file with [cu] and optional latency sections")
    common.add_argument("--out", metavar="CSV", default=None,
                        help="write the result table to a CSV file")

    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("sim", parents=[common], help="simulate a program file")
    p_sim.add_argument("program", help="mini-assembly file")
    p_sim.add_argument("--base-address", type=int, default=0)
    p_sim.add_argument("--simd", type=int, default=0, help="SIMD unit to place the wavefront on")

    p_bench = sub.add_parser("bench", parents=[common], help="measure one benchmark")
    p_bench.add_argument("--mnemonic", required=True, help="matrix instruction to time")
    p_bench.add_argument("--nmfma", type=int, default=4, help="back-to-back instructions")
    p_bench.add_argument("--pad", type=int, default=0, help="s_nop padding count")
    p_bench.add_argument("--no-align", action="store_true",
                         help="do not align the timed region to a fetch line")

    p_sweep = sub.add_parser("sweep", parents=[common],
                             help="measure all benchmarked instructions, n in 2..5")
    p_sweep.add_argument("--no-align", action="store_true")

    p_val = sub.add_parser("validate", parents=[common],
                           help="check measured latencies against expectations")
    p_val.add_argument("--no-align", action="store_true")

    p_whatif = sub.add_parser("whatif", parents=[common],
                              help="latency scaling sweep (n=2) against scale 1")
    p_whatif.add_argument("--no-align", action="store_true")
    return parser


def _load_setup(args):
    """Effective (CuConfig, LatencyModel) after config file and flag overrides."""
    if args.config:
        cfg, latency = load_config_file(args.config)
        custom_table = latency.entries != builtin_latency_model(cfg.gpu_model).entries
    else:
        cfg, latency, custom_table = CuConfig(), None, False

    if args.gpu_model:
        cfg = replace(cfg, gpu_model=GpuModel(args.gpu_model))
    if args.mfma_scale is not None:
        cfg = replace(cfg, mfma_scale=Fraction(args.mfma_scale))

    if custom_table and latency.gpu_model is cfg.gpu_model:
        latency = replace(latency, scale=cfg.mfma_scale)
    else:
        latency = builtin_latency_model(cfg.gpu_model, cfg.mfma_scale)
    return cfg, latency


def _write_out(args, csv_text: str):
    if args.out:
        with open(args.out, "w", newline="") as handle:
            handle.write(csv_text)
    else:
        sys.stdout.write(csv_text)


def _cmd_sim(args) -> int:
    cfg, latency = _load_setup(args)
    with open(args.program) as handle:
        program = parse_program(handle.read(), base_address=args.base_address)
    trace = simulate([(program, args.simd)], cfg, latency_model=latency)
    print(f"{len(program)} instructions, {trace.total_cycles} cycles "
          f"on {cfg.gpu_model.value}")
    for sample in trace.memtime_samples:
        print(f"  s_memtime {sample.dst_regs} = {sample.value}")
    _write_out(args, trace.to_csv())
    return 0


def _cmd_bench(args) -> int:
    cfg, latency = _load_setup(args)
    spec = parse_mfma_mnemonic(args.mnemonic)
    bench = BenchSpec(spec, args.nmfma, pad_nops=args.pad,
                      align_timed_region=not args.no_align)
    program = generate_microbench(bench, line_size=cfg.fetch_line_bytes)
    trace = simulate([(program, 0)], cfg, latency_model=latency)
    meas = extract_latency(trace, args.nmfma, cfg, wf_id=0)
    expected = mce_latency(latency, spec)
    print(f"{spec.mnemonic} x{args.nmfma} on {cfg.gpu_model.value}: "
          f"t_total={meas.t_total} t_mfma={format_cycles(meas.t_mfma)} "
          f"(expected {expected})")
    if args.out:
        rows = run_sweep(cfg.gpu_model, [spec], (args.nmfma,), cfg,
                         align="never" if args.no_align else "all",
                         latency_model=latency)
        _write_out(args, sweep_to_csv(rows))
    return 0


def _cmd_sweep(args) -> int:
    cfg, latency = _load_setup(args)
    align = "never" if args.no_align else "auto"
    rows = run_sweep(cfg.gpu_model, benchmarked_specs(cfg.gpu_model), SWEEP_N_RANGE,
                     cfg, align=align, latency_model=latency)
    _write_out(args, sweep_to_csv(rows))
    return 0


def _cmd_validate(args) -> int:
    cfg, latency = _load_setup(args)
    align = "never" if args.no_align else "auto"
    report = validate_model(cfg.gpu_model, cfg, align=align, latency_model=latency)

    print(f"validate {cfg.gpu_model.value} (scale {cfg.mfma_scale}):")
    for row in report.rows:
        flag = "" if row.abs_pct_err == 0 else f"  ERR {row.abs_pct_err:.3f}%"
        print(f"  {row.mnemonic:<28} n={row.n_mfma} t_mfma={format_cycles(row.t_mfma):>6} "
              f"expected={row.expected}{flag}")
    per_n = "  ".join(f"n={n}: {v:.3f}%" for n, v in sorted(report.per_n_mape.items()))
    print(f"engine MAPE vs expected: {report.overall_mape:.3f}%  ({per_n})")

    stats = published_statistics()
    print("fixture statistics (prior simulator vs hardware tables):")
    print(f"  mi200 overall {stats['mi200_overall']:.2f}%  "
          f"n=2 {stats['mi200_n2']:.2f}%  n=5 {stats['mi200_n5']:.2f}%")
    print(f"  mi300 overall {stats['mi300_overall']:.2f}%  "
          f"n=2 {stats['mi300_n2']:.2f}%  n=5 {stats['mi300_n5']:.2f}%")
    print(f"  scale-2 table vs ideal doubling {stats['scale_doubling']:.2f}%")

    if args.out:
        _write_out(args, sweep_to_csv(list(report.rows)))
    print("PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


def _cmd_whatif(args) -> int:
    cfg, latency = _load_setup(args)
    scale = cfg.mfma_scale
    scales = [Fraction(1)] if scale == 1 else [Fraction(1), scale]
    align = "never" if args.no_align else "auto"
    rows = whatif_sweep(cfg.gpu_model, scales, replace(cfg, mfma_scale=Fraction(1)),
                        align=align)
    print(f"whatif {cfg.gpu_model.value}, scales {[str(s) for s in scales]}:")
    for row in rows:
        print(f"  {row.mnemonic:<28} scale={format_cycles(row.scale):>4} "
              f"t_mfma={format_cycles(row.t_mfma):>6} "
              f"ratio={format_cycles(row.ratio_to_scale1)}")
    _write_out(args, whatif_to_csv(rows))
    return 0


_COMMANDS = {
    "sim": _cmd_sim,
    "bench": _cmd_bench,
    "sweep": _cmd_sweep,
    "validate": _cmd_validate,
    "whatif": _cmd_whatif,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _INPUT_ERRORS as exc:
        print(f"mcesim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
