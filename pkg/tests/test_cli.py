"""Command-line interface tests (driven through main() for speed)."""

import subprocess
import sys

import pytest

from mcesim.cli import main

CHAIN_KERNEL = """\
s_waitcnt lgkmcnt(0) & vmcnt(0)
s_memtime s[0:1]
s_waitcnt lgkmcnt(0)
v_mfma_f32_4x4x1f32 a0, v0, v1, a0
v_mfma_f32_4x4x1f32 a0, v0, v1, a0
v_mfma_f32_4x4x1f32 a0, v0, v1, a0
v_mfma_f32_4x4x1f32 a0, v0, v1, a0
s_memtime s[2:3]
s_waitcnt lgkmcnt(0)
"""


class TestValidateCommand:
    def test_mi200_passes(self, capsys):
        assert main(["validate", "--gpu-model", "mi200"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out
        assert "engine MAPE vs expected: 0.000%" in out
        assert "1.45%" in out  # fixture statistic section

    def test_mi300_passes(self, capsys):
        assert main(["validate", "--gpu-model", "mi300"]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_csv_output(self, tmp_path, capsys):
        out = tmp_path / "cells.csv"
        assert main(["validate", "--gpu-model", "mi200", "--out", str(out)]) == 0
        capsys.readouterr()
        lines = out.read_text().splitlines()
        assert len(lines) == 29  # header + 7 specs x 4 n values

    def test_failure_exits_one(self, capsys):
        # Scaling below the issue slot floors the measurable latency at 4
        # cycles, so the smallest instructions miss their scaled expectation.
        assert main(["validate", "--gpu-model", "mi200", "--mfma-scale", "1/4"]) == 1
        assert "FAIL" in capsys.readouterr().out


class TestSweepCommand:
    def test_grid_and_determinism(self, tmp_path, capsys):
        first = tmp_path / "a.csv"
        second = tmp_path / "b.csv"
        assert main(["sweep", "--gpu-model", "mi300", "--out", str(first)]) == 0
        assert main(["sweep", "--gpu-model", "mi300", "--out", str(second)]) == 0
        capsys.readouterr()
        assert first.read_bytes() == second.read_bytes()
        assert len(first.read_text().splitlines()) == 25

    def test_stdout_when_no_out(self, capsys):
        assert main(["sweep", "--gpu-model", "mi200"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("gpu_model,mnemonic,")


class TestBenchCommand:
    def test_four_chain_configuration(self, capsys):
        assert main(["bench", "--mnemonic", "v_mfma_f32_4x4x1f32", "--nmfma", "4",
                     "--gpu-model", "mi200"]) == 0
        out = capsys.readouterr().out
        assert "t_total=68" in out
        assert "t_mfma=8" in out

    def test_unsupported_on_model_is_input_error(self, capsys):
        assert main(["bench", "--mnemonic", "v_mfma_i32_16x16x16i8",
                     "--gpu-model", "mi300"]) == 2
        assert "not supported" in capsys.readouterr().err

    def test_gpr_idx_reported_distinctly(self, capsys):
        assert main(["bench", "--mnemonic", "v_mfma_f32_32x32x1f32"]) == 2
        assert "addressing mode" in capsys.readouterr().err


class TestSimCommand:
    def test_program_file(self, tmp_path, capsys):
        source = tmp_path / "kernel.s"
        source.write_text(CHAIN_KERNEL)
        trace = tmp_path / "trace.csv"
        assert main(["sim", str(source), "--out", str(trace)]) == 0
        out = capsys.readouterr().out
        assert "10 instructions" in out
        header = trace.read_text().splitlines()[0]
        assert header == "wf_id,inst_index,opcode,issue_cycle,complete_cycle,stall_reason"

    def test_parse_error_exit_code(self, tmp_path, capsys):
        source = tmp_path / "bad.s"
        source.write_text("v_bogus v0\n")
        assert main(["sim", str(source)]) == 2
        assert "line 1" in capsys.readouterr().err

    def test_missing_file(self, capsys):
        assert main(["sim", "/does/not/exist.s"]) == 2
        capsys.readouterr()


class TestWhatifCommand:
    def test_doubling_table(self, tmp_path, capsys):
        out = tmp_path / "whatif.csv"
        assert main(["whatif", "--gpu-model", "mi300", "--mfma-scale", "2",
                     "--out", str(out)]) == 0
        capsys.readouterr()
        lines = out.read_text().splitlines()
        assert lines[0] == "mnemonic,mfma_scale,t_mfma,ratio_to_scale1"
        ratios = {line.split(",")[3] for line in lines[1:] if line.split(",")[1] == "2"}
        assert ratios == {"2"}

    def test_fractional_scale_flag(self, capsys):
        assert main(["whatif", "--gpu-model", "mi300", "--mfma-scale", "1/2"]) == 0
        assert "ratio=0.5" in capsys.readouterr().out

    def test_determinism(self, tmp_path, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (a, b):
            assert main(["whatif", "--gpu-model", "mi300", "--mfma-scale", "2",
                         "--out", str(path)]) == 0
        capsys.readouterr()
        assert a.read_bytes() == b.read_bytes()


class TestConfigFlag:
    def test_config_file_changes_constants(self, tmp_path, capsys):
        cfg = tmp_path / "cu.cfg"
        cfg.write_text("[cu]\nmemtime_cycles = 50\nissue_cycles = 4\n")
        assert main(["bench", "--mnemonic", "v_mfma_f32_4x4x1f32", "--nmfma", "4",
                     "--config", str(cfg)]) == 0
        out = capsys.readouterr().out
        assert "t_total=78" in out  # 3*8 + 50 + 4
        assert "t_mfma=8" in out

    def test_flag_overrides_config_model(self, tmp_path, capsys):
        cfg = tmp_path / "cu.cfg"
        cfg.write_text("[cu]\ngpu_model = mi200\n")
        assert main(["bench", "--mnemonic", "v_mfma_f32_16x16x16f16", "--nmfma", "2",
                     "--config", str(cfg), "--gpu-model", "mi300"]) == 0
        assert "expected 16" in capsys.readouterr().out

    def test_override_table_survives_scale_flag(self, tmp_path, capsys):
        cfg = tmp_path / "cu.cfg"
        cfg.write_text("[cu]\ngpu_model = mi200\n\n[latency.overrides]\n"
                       "fp32_4x4x1fp32 = 10\n")
        assert main(["bench", "--mnemonic", "v_mfma_f32_4x4x1f32", "--nmfma", "2",
                     "--config", str(cfg), "--mfma-scale", "2"]) == 0
        assert "expected 20" in capsys.readouterr().out


class TestUsageErrors:
    def test_missing_subcommand(self, capsys):
        with pytest.raises(SystemExit) as err:
            main([])
        assert err.value.code == 2
        capsys.readouterr()

    def test_bad_gpu_model(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["validate", "--gpu-model", "mi100"])
        assert err.value.code == 2
        capsys.readouterr()


def test_console_entry_point():
    result = subprocess.run([sys.executable, "-m", "mcesim.cli", "--version"],
                            capture_output=True, text=True)
    assert result.returncode == 0
    assert "mcesim" in result.stdout
