"""Cycle-approximate simulator of GPU matrix-core engine timing."""

__version__ = "0.1.0"

from .errors import (CapacityError, GprIdxUnsupported, MissingSamples, MnemonicError,
                     ParseError, ShapeMismatch, TypeMismatch, UnsupportedOnModel,
                     UnsupportedPairError, ZeroReference)
from .isa import (Instruction, MfmaSpec, NumericType, Opcode, Program, RegRange,
                  cacheline_layout, encode_size, parse_mfma_mnemonic, parse_program,
                  render_mnemonic)
from .mfma import BlockedMatrixOperand, mfma_execute, narrow, widen
from .microbench import (BenchSpec, LatencyMeasurement, SweepRow, extract_latency,
                         generate_microbench, run_sweep, sweep_to_csv)
from .timing import (CuConfig, GpuModel, LatencyModel, SimTrace, StallReason,
                     WavefrontState, builtin_latency_model, load_config_file,
                     mce_latency, round_half_up, scoreboard_can_issue, simulate)
from .validate import (ReferenceTable, ScaleTable, ValidationReport, WhatifRow,
                       benchmarked_specs, mape, published_statistics, reference_table,
                       scale_table, validate_model, whatif_sweep)

__all__ = [
    "BenchSpec", "BlockedMatrixOperand", "CapacityError", "CuConfig",
    "GprIdxUnsupported", "GpuModel", "Instruction", "LatencyMeasurement",
    "LatencyModel", "MfmaSpec", "MissingSamples", "MnemonicError", "NumericType",
    "Opcode", "ParseError", "Program", "ReferenceTable", "RegRange", "ScaleTable",
    "ShapeMismatch", "SimTrace", "StallReason", "SweepRow", "TypeMismatch",
    "UnsupportedOnModel", "UnsupportedPairError", "ValidationReport",
    "WavefrontState", "WhatifRow", "ZeroReference", "benchmarked_specs",
    "builtin_latency_model", "cacheline_layout", "encode_size", "extract_latency",
    "generate_microbench", "load_config_file", "mape", "mce_latency", "mfma_execute",
    "narrow", "parse_mfma_mnemonic", "parse_program", "published_statistics",
    "reference_table", "render_mnemonic", "round_half_up", "run_sweep",
    "scale_table", "scoreboard_can_issue", "simulate", "sweep_to_csv",
    "validate_model", "whatif_sweep", "widen",
]
