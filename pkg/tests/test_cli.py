"""CLI subcommands, exercised through main(argv) in process."""

import subprocess
import sys

import pytest

from hpvcea.cli import main

TINY = """
[simulation]
t_final = 10
dt = 0.1

[fbsm]
relaxation = 0.1

[strategy:A]
rates = w1=0.3, u1=0.1

[strategy:B]
rates = w2=0.3, u2=0.1

[strategy:opt]
mask = S2
optimize = true

[compare]
pairs = A:B
"""


@pytest.fixture()
def tiny_config(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY)
    return str(path)


class TestReproduction:
    def test_controlled_point(self, capsys):
        code = main([
            "reproduction", "--config", "fig2a",
            "--controls", "0.1,0.07,0.05,0.03,0.1",
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "R_e = 0.9479485488" in out
        assert "T_m_f" in out and "T_f_m" in out
        assert "verdict: stable" in out

    def test_uncontrolled_point(self, capsys):
        code = main(["reproduction", "--config", "fig2b", "--controls", "0,0,0,0,0"])
        out = capsys.readouterr().out
        assert code == 0
        assert "R_e = 1.4151469341" in out
        assert "verdict: unstable" in out

    def test_bad_controls_count(self, capsys):
        code = main(["reproduction", "--config", "fig2a", "--controls", "0.1,0.2"])
        assert code == 1
        assert "5 comma-separated values" in capsys.readouterr().err


class TestCalibrate:
    def test_bundled_calibration(self, capsys):
        code = main(["calibrate", "--config", "table3", "--mask", "S2"])
        out = capsys.readouterr().out
        assert code == 0
        assert "w1 = w2 = 0.81" in out
        assert "(target 0.9) after" in out
        r_e = float(out.splitlines()[1].split()[2])
        assert abs(r_e - 0.9) < 1e-6

    def test_target_override(self, capsys):
        code = main([
            "calibrate", "--config", "table3", "--mask", "S2", "--target", "1.1",
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "(target 1.1)" in out

    def test_unknown_calibration(self, capsys):
        code = main(["calibrate", "--config", "table3", "--mask", "S99"])
        assert code == 1
        assert "no calibration named" in capsys.readouterr().err


class TestSimulate:
    def test_baseline_only(self, tmp_path, capsys):
        out_dir = tmp_path / "out"
        code = main([
            "simulate", "--config", "fig2b",
            "--outdir", str(out_dir), "--no-figures",
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "baseline: final infected" in out
        assert (out_dir / "baseline.csv").is_file()
        assert not (out_dir / "figures").exists()

    def test_strategy_with_figures(self, tiny_config, tmp_path, capsys):
        out_dir = tmp_path / "out"
        code = main([
            "simulate", "--config", tiny_config, "--strategy", "A",
            "--outdir", str(out_dir),
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "A: cost=" in out
        header = (out_dir / "A.csv").open().readline()
        assert header.startswith("t,S_f") and "w1" in header
        assert (out_dir / "figures" / "A.png").is_file()

    def test_unknown_strategy(self, tiny_config, tmp_path, capsys):
        code = main([
            "simulate", "--config", tiny_config, "--strategy", "Z",
            "--outdir", str(tmp_path / "out"),
        ])
        assert code == 1
        assert "no strategy named 'Z'" in capsys.readouterr().err

    def test_unknown_bundle(self, tmp_path, capsys):
        code = main([
            "simulate", "--config", "nope", "--outdir", str(tmp_path / "out"),
        ])
        assert code == 1
        assert "no bundled scenario named" in capsys.readouterr().err


class TestRank:
    def test_constant_family(self, tiny_config, tmp_path, capsys):
        out_dir = tmp_path / "out"
        code = main([
            "rank", "--config", tiny_config, "--family", "constant",
            "--outdir", str(out_dir), "--no-figures",
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "strategy  cost" in out
        assert (out_dir / "ranking_constant.csv").is_file()

    def test_optimal_family(self, tiny_config, tmp_path, capsys):
        out_dir = tmp_path / "out"
        code = main([
            "rank", "--config", tiny_config, "--family", "optimal",
            "--outdir", str(out_dir), "--no-figures",
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "opt: converged=True" in out

    def test_no_members(self, tmp_path, capsys):
        path = tmp_path / "c.ini"
        path.write_text("[simulation]\nt_final = 10\ndt = 0.1\n")
        code = main([
            "rank", "--config", str(path), "--family", "constant",
            "--outdir", str(tmp_path / "out"),
        ])
        assert code == 1
        assert "no constant strategies" in capsys.readouterr().err

    def test_bad_family_rejected_by_argparse(self, tiny_config):
        with pytest.raises(SystemExit):
            main(["rank", "--config", tiny_config, "--family", "middling"])


class TestOptimize:
    def test_optimized_strategy(self, tiny_config, tmp_path, capsys):
        out_dir = tmp_path / "out"
        code = main([
            "optimize", "--config", tiny_config, "--mask", "opt",
            "--outdir", str(out_dir), "--no-figures",
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "opt: converged=True" in out
        assert "J=" in out and "residual=" in out
        assert (out_dir / "opt.csv").is_file()

    def test_constant_strategy_rejected(self, tiny_config, tmp_path, capsys):
        code = main([
            "optimize", "--config", tiny_config, "--mask", "A",
            "--outdir", str(tmp_path / "out"),
        ])
        assert code == 1
        assert "constant strategy" in capsys.readouterr().err


class TestCompare:
    def test_pairs_from_config(self, tiny_config, tmp_path, capsys):
        out_dir = tmp_path / "out"
        code = main([
            "compare", "--config", tiny_config,
            "--outdir", str(out_dir), "--no-figures",
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "A vs B: ICER=" in out
        assert (out_dir / "comparisons.csv").is_file()

    def test_explicit_pairs(self, tiny_config, tmp_path, capsys):
        code = main([
            "compare", "--config", tiny_config, "--pairs", "B:A",
            "--outdir", str(tmp_path / "out"), "--no-figures",
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "B vs A: ICER=" in out

    def test_bad_pair_shape(self, tiny_config, tmp_path, capsys):
        code = main([
            "compare", "--config", tiny_config, "--pairs", "AB",
            "--outdir", str(tmp_path / "out"),
        ])
        assert code == 1
        assert "FIRST:SECOND" in capsys.readouterr().err

    def test_unknown_pair_member(self, tiny_config, tmp_path, capsys):
        code = main([
            "compare", "--config", tiny_config, "--pairs", "A:Z",
            "--outdir", str(tmp_path / "out"),
        ])
        assert code == 1
        assert "unknown strategies" in capsys.readouterr().err

    def test_no_pairs_anywhere(self, tmp_path, capsys):
        path = tmp_path / "c.ini"
        path.write_text("[strategy:A]\nrates = w1=0.3\n")
        code = main([
            "compare", "--config", str(path),
            "--outdir", str(tmp_path / "out"),
        ])
        assert code == 1
        assert "no pairs given" in capsys.readouterr().err


class TestEntryPoints:
    def test_subcommand_required(self):
        with pytest.raises(SystemExit):
            main([])

    def test_module_invocation(self):
        proc = subprocess.run(
            [sys.executable, "-m", "hpvcea", "reproduction",
             "--config", "fig2a", "--controls", "0,0,0,0,0"],
            capture_output=True, text=True, timeout=120,
        )
        assert proc.returncode == 0
        assert "R_e = 1.4151469341" in proc.stdout
