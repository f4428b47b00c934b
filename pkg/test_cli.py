import json

import pytest

from cli import build_parser, load_config, main
from models.experiment import RidgeSpeedupConfig
from services.exceptions import ConfigError


@pytest.fixture
def small_speedup_config(tmp_path):
    path = tmp_path / "speedup.json"
    path.write_text(json.dumps({"experiment": "ridge-speedup", "n_grid": [20], "replicates": 20, "lambda": 1.0}))
    return path


def test_parser_knows_every_command():
    parser = build_parser()
    for command in ("ridge-coverage", "ridge-speedup", "lda-speedup", "limit-law"):
        args = parser.parse_args([command, "--seed", "3", "--format", "csv"])
        assert args.seed == 3
        assert args.format == "csv"
    args = parser.parse_args(["analyze", "data.csv", "--K", "4", "--model", "ridge(0.5)"])
    assert (args.csv, args.K, args.model) == ("data.csv", 4, "ridge(0.5)")


def test_load_config_defaults():
    cfg = load_config(None, "ridge-speedup")
    assert isinstance(cfg, RidgeSpeedupConfig)
    assert cfg.replicates == 10_000


def test_load_config_wrong_experiment(small_speedup_config):
    with pytest.raises(ConfigError):
        load_config(str(small_speedup_config), "lda-speedup")


def test_load_config_invalid(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"experiment": "ridge-speedup", "replicates": 1}))
    with pytest.raises(ConfigError) as info:
        load_config(str(path), "ridge-speedup")
    assert info.value.details


def test_experiment_then_verify(small_speedup_config, tmp_path, capsys):
    out = tmp_path / "table.csv"
    code = main(["ridge-speedup", "--config", str(small_speedup_config), "--seed", "9", "--out", str(out), "--format", "csv"])
    assert code == 0
    text = out.read_text(encoding="utf-8")
    assert text.startswith("# experiment=ridge-speedup")
    assert "master_seed=9" in text

    assert main(["verify", "--config", str(small_speedup_config), "--table", str(out), "--seed", "9"]) == 0
    assert capsys.readouterr().out.startswith("OK ")
    assert main(["verify", "--config", str(small_speedup_config), "--table", str(out), "--seed", "10"]) == 2


def test_config_error_exit_code(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["ridge-speedup", "--config", str(path)]) == 2


def test_analyze_command(tmp_path, capsys):
    path = tmp_path / "data.csv"
    path.write_text("x1,y\n" + "\n".join(f"{i * 0.1:.1f},{(i * 7) % 5 * 0.3:.1f}" for i in range(12)) + "\n")
    out = tmp_path / "summary.csv"
    assert main(["analyze", str(path), "--K", "2", "--model", "ridge(1)", "--format", "md", "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "ci_lower" in printed
    assert out.read_text().startswith("n,K,model")


def test_analyze_small_odd_file(tmp_path):
    path = tmp_path / "small.csv"
    path.write_text("x1\n0.5\n1.5\n-0.2\n0.9\n2.2\n")
    assert main(["analyze", str(path), "--K", "2", "--model", "mean"]) == 0


def test_analyze_parse_error(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x1,y\n1,2\n3,oops\n")
    assert main(["analyze", str(path)]) == 2


def test_analyze_unknown_model(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("x1\n1\n2\n3\n4\n")
    assert main(["analyze", str(path), "--K", "2", "--model", "svm"]) == 2


def test_analyze_missing_file(tmp_path):
    assert main(["analyze", str(tmp_path / "absent.csv")]) == 2
