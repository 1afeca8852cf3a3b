import json
from pathlib import Path

import pytest

from nlphase import cli

ROOT = Path(__file__).resolve().parents[1]
FIXTURE = ROOT / "configs" / "profile_manufactured.yaml"

QUICK_TENSION = """
kernel: {family: gaussian, dim: 2}
potential: {kind: quartic, wells: {kind: constant, a: -1.0, b: 1.0}}
solver: {R: 6.0, dt: 0.0625}
points: [[0.0, 0.0], [0.5, 0.5]]
directions: [[1.0, 0.0], [0.6, 0.8]]
checks:
  - {metric: max_sigma, op: "<", value: 1.0}
"""


def test_missing_section_is_named():
    with pytest.raises(cli.ConfigError, match="missing section 'kernel'"):
        cli.parse_config("potential: {kind: quartic}\n", "profile")


def test_empty_eps_rejected():
    text = "kernel: {family: gaussian, dim: 2}\npotential: {kind: quartic}\nfield: {eps: []}\n"
    with pytest.raises(cli.ConfigError, match="validation error"):
        cli.parse_config(text, "gamma-sweep")


def test_parse_error_has_position():
    with pytest.raises(cli.ConfigError, match=r"line 2, column \d+"):
        cli.parse_config("kernel: {family: gaussian\npotential: [1, 2\n", "profile")


def test_unknown_key_rejected():
    with pytest.raises(cli.ConfigError, match="unknown keys"):
        cli.parse_config("kernel: {family: gaussian, width: 2}\npotential: {kind: quartic}\n", "profile")


def test_overrides():
    text = cli.apply_overrides(QUICK_TENSION, "solver.dt=0.125,checks.0.value=2.0")
    cfg, _ = cli.parse_config(text, "tension")
    assert cfg.solver.dt == 0.125 and cfg.checks[0].value == 2.0
    with pytest.raises(cli.ConfigError):
        cli.apply_overrides(QUICK_TENSION, "solver.dt")


def test_profile_solve_on_fixture(tmp_path):
    m = cli.run("profile", str(FIXTURE), str(tmp_path))
    assert m.passed
    assert m.results["fixture_certificate"] == "pass"
    assert {"profile_descent.csv", "profile_picard.csv", "summary.json"} <= set(m.outputs)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config_hash"] == m.config_hash


def test_runs_are_byte_identical(tmp_path):
    cfg = tmp_path / "t.yaml"
    cfg.write_text(QUICK_TENSION)
    cli.run("tension", str(cfg), str(tmp_path / "a"))
    cli.run("tension", str(cfg), str(tmp_path / "b"), workers=2)
    assert (tmp_path / "a" / "tension.csv").read_bytes() == (tmp_path / "b" / "tension.csv").read_bytes()


def test_tension_cache(tmp_path, monkeypatch):
    cfg = tmp_path / "t.yaml"
    cfg.write_text(QUICK_TENSION)
    monkeypatch.setenv(cli.CACHE_ENV, str(tmp_path / "cache"))
    (tmp_path / "cache").mkdir()
    first = cli.run("tension", str(cfg), str(tmp_path / "a"))
    second = cli.run("tension", str(cfg), str(tmp_path / "b"))
    assert list((tmp_path / "cache").iterdir())
    assert first.results == second.results


def test_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "t.yaml"
    cfg.write_text(QUICK_TENSION)
    assert cli.main(["tension", "--config", str(cfg), "--out", str(tmp_path / "ok")]) == 0
    assert "PASS max_sigma" in capsys.readouterr().out
    assert cli.main(["tension", "--config", str(cfg), "--out", str(tmp_path / "bad"),
                     "--tol-overrides", "checks.0.value=0.1"]) == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("potential: {kind: quartic}\n")
    assert cli.main(["tension", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "missing section" in capsys.readouterr().err


def test_solver_failure_exit_code(tmp_path):
    cfg = tmp_path / "p.yaml"
    cfg.write_text("kernel: {family: gaussian, dim: 1}\n"
                   "potential: {kind: quartic, c: 1.0}\n"
                   "solver: {method: picard, R: 4.0, dt: 0.125}\n")
    assert cli.main(["profile", "solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_oracle_quadrature_subcommand(tmp_path):
    cfg = tmp_path / "q.yaml"
    cfg.write_text("kernel: {family: gaussian, dim: 1}\n"
                   "potential: {kind: quartic}\n"
                   "oracle:\n  kind: quadrature\n  expressions:\n"
                   "    - {expr: first_moment}\n    - {expr: tail_mass, u: 0.5}\n"
                   "checks:\n  - {metric: all_agree, op: '==', value: 1}\n")
    m = cli.run("oracle", str(cfg), str(tmp_path / "o"))
    assert m.results["count"] == 2 and m.passed
