import json

import pytest

from autostat import kernels as kl

from autostat.cli import ConfigError, main, parse_args, read_config


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestDescribe:
    def test_prints_one_phrase_per_line(self, capsys):
        code, out, _ = run(capsys, "describe", "PER(1,1,1) * LIN(1,0) * SIG(1700, 1) + WN(1)")
        assert code == 0
        assert out.splitlines() == [
            "uncorrelated noise",
            "a periodic function with linearly varying amplitude which applies until 1700"]

    def test_syntax_error_exits_non_zero(self, capsys):
        code, _, err = run(capsys, "describe", "SE(1")
        assert code == 1 and err.startswith("error:")


class TestSynth:
    def test_stdout(self, capsys):
        code, out, _ = run(capsys, "synth", "linear", "--n", "5")
        lines = out.splitlines()
        assert code == 0 and lines[0] == "x,y" and len(lines) == 6

    def test_file(self, capsys, tmp_path):
        assert run(capsys, "synth", "periodic", "--n", "12", "--out", str(tmp_path / "p.csv"))[0] == 0
        assert len((tmp_path / "p.csv").read_text().splitlines()) == 13


class TestAnalyse:
    def test_writes_report(self, capsys, tmp_path):
        src = tmp_path / "s.csv"
        run(capsys, "synth", "linear", "--n", "30", "--out", str(src))
        code, out, _ = run(capsys, "analyse", "--input", str(src), "--depth", "1",
                           "--restarts", "1", "--out", str(tmp_path / "rep"))
        assert code == 0
        assert out.startswith("Model: ") and "1. " in out
        side = json.loads((tmp_path / "rep" / "model.json").read_text())
        assert side["dataset"]["n"] == 30

    def test_language_se(self, capsys, tmp_path):
        src = tmp_path / "s.csv"
        run(capsys, "synth", "smooth_trend", "--n", "25", "--out", str(src))
        code, _, _ = run(capsys, "analyze", "--input", str(src), "--language", "se",
                         "--restarts", "1", "--out", str(tmp_path / "rep"))
        side = json.loads((tmp_path / "rep" / "model.json").read_text())
        assert code == 0
        assert kl.structure(kl.parse_kernel(side["kernel"])) == "SE + WN"

    def test_bad_csv_reports_line(self, capsys, tmp_path):
        src = tmp_path / "bad.csv"
        src.write_text("x,y\n0,1\n1,2\n2,x\n")
        code, _, err = run(capsys, "analyse", "--input", str(src), "--out", str(tmp_path / "r"))
        assert code == 1 and "line 4" in err

    def test_missing_input(self, capsys, tmp_path):
        code, _, err = run(capsys, "analyse", "--input", str(tmp_path / "none.csv"))
        assert code == 1 and "no such file" in err


class TestBenchmark:
    def test_small_run(self, capsys, tmp_path):
        code, out, _ = run(capsys, "benchmark", "--presets", "LINEAR,SE", "--n", "20",
                           "--split", "extrapolation", "--restarts", "1", "--depth", "1",
                           "--out", str(tmp_path))
        assert code == 0 and "extrapolation: 12/12 cells succeeded" in out
        assert (tmp_path / "extrapolation_standardised_rmse.csv").exists()


class TestConfig:
    def test_file_supplies_defaults_and_flags_win(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# search settings\ndepth = 3\nrestarts=4\n--seed = 9\n")
        args = parse_args(["analyse", "--input", "a.csv", "--config", str(cfg)])
        assert (args.depth, args.restarts, args.seed) == (3, 4, 9)
        args = parse_args(["analyse", "--input", "a.csv", "--config", str(cfg), "--depth", "2"])
        assert args.depth == 2

    def test_interpretable_from_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("interpretable = yes\n")
        assert parse_args(["analyse", "--input", "a", "--config", str(cfg)]).interpretable is True

    def test_bad_lines_and_keys(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("depth\n")
        with pytest.raises(ConfigError, match="run.cfg:1"):
            read_config(cfg)
        cfg.write_text("colour = blue\n")
        code, _, err = run(capsys, "analyse", "--input", "a.csv", "--config", str(cfg))
        assert code == 1 and "unknown keys" in err

    def test_invalid_depth(self, capsys):
        with pytest.raises(SystemExit):
            parse_args(["analyse", "--input", "a", "--depth", "0"])
