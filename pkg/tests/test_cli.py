import csv
import json
from pathlib import Path

import pytest

from heatmoi.cli import main
from heatmoi.config import ConfigError, load_config, parse_config
from heatmoi.latex import parse
from heatmoi.recursion import local_invariant

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = """
[run]
d = 2
[torus]
N = 8
theta = 0.3
[x]
0,0 = 1.5
1,0 = 0.2
-1,0 = 0.2
"""


def test_parse_config_fields():
    cfg = parse_config(BASE + "\n[a_2]\n0,1 = 0.1+0.05j\n[fit]\norders = 0 2 4\n[tolerances]\nc0_rel = 0.5\n")
    assert cfg.N == 8 and cfg.d == 2
    assert cfg.x.coeffs[(1, 0)] == 0.2
    assert cfg.a_vec[0] is None and cfg.a_vec[1].coeffs[(0, 1)] == 0.1 + 0.05j
    assert cfg.orders == (0, 2, 4)
    assert cfg.tol("c0_rel") == 0.5 and cfg.tol("c1_rel") == 0.05
    assert cfg.theta.entries[0, 1] == 0.3


@pytest.mark.parametrize(
    "extra, message",
    [
        ("[run]\nk = 3\n", "k must be"),
        ("[run]\nd = 1\n", "d >= 2"),
        ("[x]\n1 = 2\n", "must have 2 entries"),
        ("[tolerances]\nbogus = 1\n", "unknown tolerance"),
        ("[wat]\n", "unknown sections"),
        ("[fit]\nt_min = 0.5\nt_max = 0.1\n", "t-grid"),
        ("[torus]\ntheta = 0 1 ; 1 0\n", "antisymmetric"),
    ],
)
def test_invalid_configs(extra, message):
    text = "[run]\nd = 2\n" + extra if not extra.startswith("[run]") else extra
    with pytest.raises(ConfigError, match=message):
        parse_config(text)


def test_example_configs_load():
    paths = sorted(CONFIGS.glob("*.ini"))
    assert paths
    for path in paths:
        load_config(path)


def test_emit_command(capsys):
    assert main(["emit", "--k", "2"]) == 0
    out = capsys.readouterr().out
    assert parse(out) == local_invariant(2)


def test_emit_numeric_dimension(tmp_path):
    out = tmp_path / "i2.tex"
    assert main(["emit", "--k", "2", "--d", "3", "--out", str(out)]) == 0
    assert r"\pi^{-3/2}I_2" in out.read_text()


def test_odd_k_is_a_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["emit", "--k", "3"])
    assert exc.value.code == 2


def test_count_command(capsys):
    assert main(["count", "--k", "2", "--expect", "13"]) == 0
    assert "terms=13" in capsys.readouterr().out


def test_count_mismatch_reports_diff(capsys):
    assert main(["count", "--k", "2", "--expect", "14"]) == 1
    err = capsys.readouterr().err
    assert "count mismatch" in err and "golden" in err


def test_verify_dd_with_report(tmp_path, capsys):
    report = tmp_path / "dd.json"
    assert main(["verify", "dd", "--report", str(report)]) == 0
    data = json.loads(report.read_text())
    assert data["passed"] and data["suite"] == "dd"
    assert all(c["passed"] for c in data["checks"])


def test_verify_failure_exit_code(tmp_path):
    cfg = tmp_path / "strict.ini"
    cfg.write_text("[tolerances]\nsimplex_rel = 0\n")
    assert main(["verify", "moi", "--config", str(cfg)]) == 1


def test_verify_unknown_suite():
    with pytest.raises(SystemExit) as exc:
        main(["verify", "nonsense"])
    assert exc.value.code == 2


def test_verify_heatfit_needs_config(capsys):
    assert main(["verify", "heatfit"]) == 2


def test_config_error_exit_code(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[run]\nd = 1\n")
    assert main(["verify", "symbols", "--config", str(cfg)]) == 2
    assert main(["verify", "dd", "--config", str(tmp_path / "missing.ini")]) == 2


def test_conjugation_without_y_is_config_error(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(BASE)
    assert main(["verify", "conjugation", "--config", str(cfg)]) == 2


def test_heatfit_constant_control(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    assert main(["verify", "heatfit", "--config", str(CONFIGS / "heatfit_constant.ini")]) == 0
    assert main(["heatfit", "--config", str(CONFIGS / "heatfit_constant.ini"), "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 60 and set(rows[0]) == {"t", "re_trace", "im_trace"}


def test_k0d_grid_command(tmp_path):
    out = tmp_path / "k0d.csv"
    assert main(["k0d-grid", "--out", str(out)]) == 0
    assert out.read_text().startswith("d,s,K0d,extrapolated")
