import csv
import json

import pytest
from click.testing import CliRunner

from hetnetcache import cli
from hetnetcache.analytic import apt
from hetnetcache.config import SystemConfig, db_to_linear, default_config_text
from hetnetcache.utils import format_value


@pytest.fixture
def runner(no_user_env):
    return CliRunner()


@pytest.fixture
def config_file(tmp_path):
    def write(extra: str = "") -> str:
        path = tmp_path / "system_config.txt"
        path.write_text(default_config_text() + extra, encoding="utf-8")
        return str(path)
    return write


def _rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_emit_default_config(runner):
    result = runner.invoke(cli.main, ["--emit-default-config"])
    assert result.exit_code == 0
    assert result.output == default_config_text()


def test_init_copies_without_overwriting(runner, tmp_path, monkeypatch):
    target = tmp_path / "home"
    monkeypatch.setattr(cli, "CONFIG_DIR", target)
    first = runner.invoke(cli.main, ["init"])
    assert first.exit_code == 0
    assert (target / ".env").exists()
    assert (target / "system_config.txt").read_text(encoding="utf-8") == default_config_text()

    (target / "system_config.txt").write_text("C_max=10\n", encoding="utf-8")
    second = runner.invoke(cli.main, ["init"])
    assert "already exists" in second.output
    assert (target / "system_config.txt").read_text(encoding="utf-8") == "C_max=10\n"


def test_analyze_matches_library(runner, config_file, tmp_path):
    out = tmp_path / "out"
    result = runner.invoke(cli.main, ["analyze", "--config", config_file(), "--gamma", "10", "--cache", "200",
                                      "--eta", "0.9", "--seed", "3", "--out-dir", str(out), "--workers", "1"])
    assert result.exit_code == 0, result.output

    [row] = _rows(out / "analyze.csv")
    expected = apt(0.9, 200, SystemConfig(), gamma0=db_to_linear(10.0))
    assert row["cov_sbs"] == format_value(expected.cov_sbs)
    assert row["cov_mbs"] == format_value(expected.cov_mbs)
    assert row["cov_bh"] == format_value(expected.cov_bh)
    assert row["apt_total"] == format_value(expected.total)
    assert row["binding_side"] == expected.binding_side.value

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "analyze"
    assert manifest["seed"] == 3
    assert manifest["outputs"] == ["analyze.csv"]
    assert len(manifest["config_hash"]) == 64


def test_seed_from_environment(runner, config_file, tmp_path, monkeypatch):
    monkeypatch.setenv("HETNETCACHE_SEED", "77")
    out = tmp_path / "out"
    result = runner.invoke(cli.main, ["analyze", "--config", config_file(), "--gamma", "5", "--out-dir", str(out)])
    assert result.exit_code == 0, result.output
    assert json.loads((out / "manifest.json").read_text())["seed"] == 77


def test_unknown_config_key(runner, config_file, tmp_path):
    result = runner.invoke(cli.main, ["analyze", "--config", config_file("bogus=1\n"), "--out-dir", str(tmp_path)])
    assert result.exit_code == cli.EXIT_USAGE
    assert "bogus" in result.output


def test_missing_config_file(runner, tmp_path):
    result = runner.invoke(cli.main, ["analyze", "--config", str(tmp_path / "nope.txt"),
                                      "--out-dir", str(tmp_path)])
    assert result.exit_code == cli.EXIT_USAGE


def test_zero_realizations_rejected(runner, config_file, tmp_path):
    result = runner.invoke(cli.main, ["validate", "--config", config_file(), "--n", "0", "--out-dir", str(tmp_path)])
    assert result.exit_code == cli.EXIT_USAGE


def test_empty_sweep_range(runner, config_file, tmp_path):
    result = runner.invoke(cli.main, ["sweep", "--config", config_file(), "--axis", "C", "--values", "",
                                      "--out-dir", str(tmp_path)])
    assert result.exit_code == cli.EXIT_USAGE
    assert "range" in result.output


def test_quadrature_budget_exhausted(runner, config_file, tmp_path):
    path = config_file("numeric.quad_max_intervals=1\nnumeric.quad_rtol=1e-15\n")
    result = runner.invoke(cli.main, ["analyze", "--config", path, "--gamma", "10", "--out-dir", str(tmp_path),
                                      "--workers", "1"])
    assert result.exit_code == cli.EXIT_NUMERIC


def test_sweep_writes_grid(runner, config_file, tmp_path):
    result = runner.invoke(cli.main, ["sweep", "--config", config_file(), "--axis", "eta", "--range", "0", "1",
                                      "0.5", "--cache", "100", "--out-dir", str(tmp_path), "--workers", "2"])
    assert result.exit_code == 0, result.output
    rows = _rows(tmp_path / "sweep_eta.csv")
    assert [float(r["eta"]) for r in rows] == [0.0, 0.5, 1.0]
    assert float(rows[0]["apt_total"]) == 0.0
    assert {r["C"] for r in rows} == {"100"}


def test_validate_passes_with_loose_tolerance(runner, config_file, tmp_path):
    result = runner.invoke(cli.main, ["validate", "--config", config_file(), "--n", "2000", "--gamma", "10",
                                      "--cache", "0", "--tolerance", "1", "--snr-tolerance", "1", "--seed", "5",
                                      "--out-dir", str(tmp_path), "--trace"])
    assert result.exit_code == cli.EXIT_OK, result.output
    rows = _rows(tmp_path / "validate.csv")
    assert rows and all(r["passed"] == "true" for r in rows)
    assert (tmp_path / "mc_trace.csv").exists()


def test_validate_fails_with_zero_tolerance(runner, config_file, tmp_path):
    result = runner.invoke(cli.main, ["validate", "--config", config_file(), "--n", "200", "--gamma", "10",
                                      "--cache", "0", "--tolerance", "0", "--out-dir", str(tmp_path)])
    assert result.exit_code == cli.EXIT_VALIDATION


def test_optimize_is_reproducible(runner, config_file, tmp_path):
    path = config_file("C_max=20\n")
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / name
        result = runner.invoke(cli.main, ["optimize", "--config", path, "--restarts", "1", "--seed", "9",
                                          "--out-dir", str(out), "--workers", "2"])
        assert result.exit_code == 0, result.output
        outputs.append(out)

    for file_name in ("optimize.csv", "optimize_trace.json"):
        assert (outputs[0] / file_name).read_bytes() == (outputs[1] / file_name).read_bytes()
    rows = _rows(outputs[0] / "optimize.csv")
    assert [r["algorithm"] for r in rows] == ["jcspa", "no_cache_dsa", "opt_cache_fsa", "full_cache_dsa",
                                              "uniform_cache_dsa"]
    assert all(0 <= int(r["C_star"]) <= 20 for r in rows)
    assert rows[0]["gain_vs_jcspa"] == format_value(0.0)


def test_cache_above_capacity_rejected(runner, config_file, tmp_path):
    result = runner.invoke(cli.main, ["analyze", "--config", config_file(), "--gamma", "10", "--cache", "801",
                                      "--out-dir", str(tmp_path), "--workers", "1"])
    assert result.exit_code == cli.EXIT_USAGE
    assert "801" in result.output


@pytest.mark.parametrize("kwargs", [{"C": 12.5}, {"axis": "C", "values": [0, 10.5]}])
def test_sweep_flow_rejects_fractional_cache(cfg, tmp_path, kwargs):
    from hetnetcache.config import ConfigError
    from hetnetcache.flows import sweep_flow

    parameters = {"axis": "eta", "values": [0.5], "out_dir": tmp_path, "seed": 1, "workers": 1}
    parameters.update(kwargs)
    with pytest.raises(ConfigError):
        sweep_flow(cfg, **parameters)
    assert not (tmp_path / "manifest.json").exists()
