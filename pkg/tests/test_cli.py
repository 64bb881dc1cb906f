"""Command-line behavior: exit codes, outputs, and error reporting.

Each failure path must exit 1 with a machine-readable JSON line on
stderr; argparse usage errors exit 2.
"""

import json
import os

import pytest

from ictrack.cli import main


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, fast_config_file):
    """One full CLI run shared by the tests that inspect its outputs."""
    out = tmp_path_factory.mktemp("cli-run")
    assert main(["run", "--config", str(fast_config_file),
                 "--out", str(out)]) == 0
    return out


class TestRun:
    def test_writes_reports_and_traces(self, run_dir, capsys):
        names = ("lqr", "ic", "eic", "mpc", "mpcmb")
        for name in names:
            assert (run_dir / f"trace_{name}.csv").exists()
        assert (run_dir / "report.txt").exists()
        assert (run_dir / "report.json").exists()
        assert (run_dir / "sets.csv").exists()
        assert (run_dir / "path.svg").exists()
        assert (run_dir / "solve_times.svg").exists()

    def test_prints_the_report_table(self, fast_config_file, run_dir,
                                     tmp_path, capsys):
        # cache is warm inside run_dir, so rerun into a fresh directory
        assert main(["run", "--config", str(fast_config_file),
                     "--out", str(tmp_path / "again")]) == 0
        out = capsys.readouterr().out
        assert out.startswith("controller")
        assert "mpcmb" in out


class TestSynth:
    def test_prints_design_summary_from_cache(self, fast_config_file,
                                              run_dir, capsys):
        assert main(["synth", "--config", str(fast_config_file),
                     "--out", str(run_dir)]) == 0
        out = capsys.readouterr().out
        assert "design key" in out
        assert "axis y:" in out and "axis z:" in out
        assert "gain [" in out
        cache = run_dir / "design_cache"
        assert any(p.name.startswith("design-")
                   for p in cache.iterdir())


class TestPlot:
    def test_regenerates_figures(self, fast_config_file, run_dir, capsys):
        for name in ("path.svg", "solve_times.svg"):
            (run_dir / name).unlink()
        assert main(["plot", "--results", str(run_dir)]) == 0
        assert (run_dir / "path.svg").exists()
        assert (run_dir / "solve_times.svg").exists()

    def test_empty_directory_fails_cleanly(self, tmp_path, capsys):
        assert main(["plot", "--results", str(tmp_path)]) == 1
        err = json.loads(capsys.readouterr().err)
        assert "no trace CSVs" in err["error"]


class TestValidate:
    def test_clean_config(self, fast_config_file, capsys):
        assert main(["validate", "--config", str(fast_config_file)]) == 0
        assert "config ok" in capsys.readouterr().out

    def test_violations_are_listed(self, tmp_path, capsys):
        path = tmp_path / "bad.ini"
        path.write_text("[experiment]\nts_inner = 0.005\nduration = -2\n")
        assert main(["validate", "--config", str(path)]) == 1
        captured = capsys.readouterr()
        assert "violation:" in captured.out
        err = json.loads(captured.err)
        assert "validation problem" in err["error"]


class TestBench:
    def test_prints_timing_table_without_files(self, fast_config_file,
                                               tmp_path, monkeypatch,
                                               capsys):
        monkeypatch.chdir(tmp_path)
        assert main(["bench", "--config", str(fast_config_file)]) == 0
        out = capsys.readouterr().out
        assert "total_s" in out
        assert "mpcmb" in out
        assert os.listdir(tmp_path) == []


class TestErrorHandling:
    def test_missing_config_is_machine_readable(self, capsys):
        assert main(["run", "--config", "/nonexistent/x.ini"]) == 1
        err = json.loads(capsys.readouterr().err)
        assert "/nonexistent/x.ini" in err["error"]

    def test_unknown_flag_is_a_usage_error(self, fast_config_file):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--config", str(fast_config_file), "--frobnicate"])
        assert exc.value.code == 2

    def test_unknown_subcommand_is_a_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["explode"])
        assert exc.value.code == 2

    def test_parse_error_in_config(self, tmp_path, capsys):
        path = tmp_path / "mangled.ini"
        path.write_text("[experiment\ncontrollers = mpc\n")
        assert main(["validate", "--config", str(path)]) == 1
        err = json.loads(capsys.readouterr().err)
        assert "cannot parse config" in err["error"]
