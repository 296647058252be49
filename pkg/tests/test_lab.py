import json
import math

import numpy as np
import pytest

from nonlocal_plap.lab import ConfigError, from_dict, load_config, read_report, run_experiment
from nonlocal_plap.lab.cli import main
from nonlocal_plap.lab.experiments import default_tol_ineq
from nonlocal_plap.lab.report import CSV_HEADER, Report, Row, csv_text, emit_report, fit_order, json_text

HEADER = ",".join(CSV_HEADER) + "\n"


def sweep(**sections):
    return from_dict({"experiment": "ponce_sweep", **sections})


def test_header_matches_spec():
    assert HEADER == "delta,nonlocal,local,gap,sol_err,iters\n"


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        from_dict({"experiment": "ponce_sweep", "grid": {"nodes": 3}})
    with pytest.raises(ConfigError):
        from_dict({"experiment": "ponce_sweep", "colour": "red"})
    with pytest.raises(ConfigError):
        from_dict({"experiment": "bogus"})
    with pytest.raises(ConfigError):
        from_dict({"grid": {}})


def test_deltas_must_decrease():
    with pytest.raises(ConfigError):
        sweep(sweep={"deltas": [0.1, 0.2]})
    with pytest.raises(ConfigError):
        sweep(sweep={"deltas": [0.1, 0.1]})


def test_resolution_guard():
    with pytest.raises(ConfigError):
        run_experiment(sweep(grid={"n": 10}, sweep={"deltas": [0.2]}))


def test_load_config_toml(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text('experiment = "ponce_sweep"\n[grid]\nn = 200\n[kernel]\nfamily = "tquad"\np = 3.0\n'
                    '[sweep]\ndeltas = [0.2, 0.1]\n')
    cfg = load_config(path)
    assert cfg.grid.n == (200,) and cfg.kernel.family == "tquad" and cfg.sweep.deltas == (0.2, 0.1)
    path.write_text('experiment = "ponce_sweep"\n[kernel]\nshape = 1\n')
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_linear_sweep_values():
    r = run_experiment(sweep(grid={"horizon_nodes": 400}, sweep={"deltas": [0.2, 0.1, 0.05]}))
    np.testing.assert_allclose([row.nonlocal_ for row in r.rows], [0.90, 0.95, 0.975], rtol=5e-3)
    assert all(row.local == pytest.approx(1.0) for row in r.rows)
    assert r.verdicts["inequality"]
    assert 0.8 <= r.order <= 1.2


def test_affine_sweep_against_one_and_a_half():
    r = run_experiment(sweep(grid={"horizon_nodes": 200}, coefficient={"spec": "affine:1,1"}))
    assert r.rows[-1].local == pytest.approx(1.5)
    gaps = [abs(row.gap) for row in r.rows]
    assert gaps[0] > gaps[1] > gaps[2]
    assert r.verdicts == {"inequality": True}


def test_zero_field_sweep():
    r = run_experiment(sweep(field={"u": "zero"}))
    assert all(row.nonlocal_ == 0 and row.local == 0 for row in r.rows)
    assert r.order is None and r.passed


def test_verdict_logic_uses_smallest_delta():
    r = run_experiment(sweep(sweep={"deltas": [0.2, 0.1], "tol_ineq": 1e-9}))
    assert r.verdicts["inequality"] is (r.rows[-1].gap >= -1e-9)
    assert not r.passed
    assert default_tol_ineq(0.01, 0.05, 1.0) == pytest.approx(5 * 0.06 * 2)


def test_solve_mode_logs_h1_bound():
    r = run_experiment(sweep(field={"u": "solve"}, grid={"n": 200}))
    assert r.metadata["h1_bound"] == max(r.metadata["h1_energies"]) > 0
    assert all(row.sol_err is not None and row.iters is not None for row in r.rows)


def test_gconv_p2_errors_decrease():
    r = run_experiment(from_dict({"experiment": "gconv", "grid": {"n": 400}}))
    errs = [row.sol_err for row in r.rows]
    assert errs[0] > errs[1] > errs[2]
    assert r.passed


def test_gconv_zero_load():
    r = run_experiment(from_dict({"experiment": "gconv", "grid": {"n": 100}, "load": {"f": "zero"}}))
    assert all(row.sol_err == 0 for row in r.rows)
    assert r.passed


def test_gconv_2d_rejects_p3():
    cfg = from_dict({"experiment": "gconv", "domain": {"lower": [0, 0], "upper": [1, 1]}, "kernel": {"p": 3.0}})
    with pytest.raises(ConfigError):
        run_experiment(cfg)


def test_measurable_checkerboard():
    r = run_experiment(from_dict({"experiment": "measurable_check", "grid": {"horizon_nodes": 200},
                                  "coefficient": {"spec": "checkerboard:1,2,4"}}))
    assert r.rows[-1].local == pytest.approx(1.5, abs=1e-3)
    assert abs(r.rows[-1].gap) < 0.1
    assert r.passed
    with pytest.raises(ConfigError):
        run_experiment(from_dict({"experiment": "measurable_check", "coefficient": {"spec": "const:1"}}))


def test_measurable_zero_field():
    r = run_experiment(from_dict({"experiment": "measurable_check", "field": {"u": "zero"},
                                  "coefficient": {"spec": "checkerboard:1,2,4"}}))
    assert all(row.nonlocal_ == 0 and row.local == 0 for row in r.rows)


def test_simple_check_single_block_equal_sides():
    r = run_experiment(from_dict({"experiment": "simple_check", "coefficient": {"spec": "simple:2@"},
                                  "field": {"u": "random"}, "sweep": {"instances": 3, "deltas": [0.1]}}))
    for c in r.checks:
        assert c["full"] == c["blocks"]
    assert r.passed


def test_simple_check_two_blocks():
    r = run_experiment(from_dict({"experiment": "simple_check", "coefficient": {"spec": "simple:2,3@0.5"},
                                  "field": {"u": "random"}, "sweep": {"instances": 4}}))
    assert all(c["discarded"] >= 0 for c in r.checks)
    assert any(c["discarded"] > 0 for c in r.checks)
    assert r.verdicts == {"block_bound": True, "indicator_identity": True}


def test_simple_check_constant_field():
    r = run_experiment(from_dict({"experiment": "simple_check", "coefficient": {"spec": "simple:2,3@0.5"},
                                  "field": {"u": "one"}}))
    assert all(row.nonlocal_ == 0 and row.local == 0 for row in r.rows)


def test_vitali_check_table():
    r = run_experiment(from_dict({"experiment": "vitali_check", "sweep": {"k": [5, 10]}}))
    assert len(r.checks) == 3 * 3 * 2
    assert r.passed


def test_cn_table():
    r = run_experiment(from_dict({"experiment": "cn_table"}))
    assert r.passed and len(r.checks) == 9


def test_fit_order():
    assert fit_order([0.2, 0.1, 0.05], [0.4, 0.2, 0.1]) == pytest.approx(1.0)
    assert fit_order([0.2, 0.1], [0.04, 0.01]) == pytest.approx(2.0)
    assert fit_order([0.2, 0.1], [0.0, 0.0]) is None


def test_empty_report_header_only(tmp_path):
    assert csv_text(Report("ponce_sweep")) == HEADER
    paths = emit_report(Report("ponce_sweep"), tmp_path, "empty")
    assert (tmp_path / "empty.csv").read_text() == HEADER
    assert {p.name for p in paths} == {"empty.csv", "empty.json", "empty.gap.dat"}


def test_csv_rows_and_gap_column():
    report = Report("ponce_sweep", [Row(0.2, 0.9, 1.0), Row(0.1, 0.95, 1.0, 0.01, 12), Row(0.05, 0.975, 1.0)])
    lines = csv_text(report).splitlines()
    assert len(lines) == 4
    for line, row in zip(lines[1:], report.rows):
        cells = line.split(",")
        assert float(cells[3]) == float(cells[1]) - float(cells[2]) == row.gap
    assert lines[2].endswith(",0.01,12")
    assert lines[1].endswith(",,")


def test_json_round_trip(tmp_path):
    report = run_experiment(sweep(sweep={"deltas": [0.2, 0.1]}))
    report.checks.append({"note": "x", "value": 1.5})
    emit_report(report, tmp_path, "r", formats=("json",), plot=False)
    back = read_report(tmp_path / "r.json")
    assert back == report
    assert json.loads(json_text(report))["passed"] is True


def test_plot_file(tmp_path):
    report = run_experiment(sweep(sweep={"deltas": [0.2, 0.1]}))
    emit_report(report, tmp_path, "r", formats=(), plot=True)
    lines = (tmp_path / "r.gap.dat").read_text().splitlines()
    assert lines[0] == "# delta gap"
    d, gap = map(float, lines[1].split())
    assert d == 0.2 and gap == report.rows[0].gap


def test_csv_deterministic(tmp_path):
    cfg = sweep(coefficient={"spec": "affine:1,1"}, field={"u": "sin"}, kernel={"p": 3.0, "family": "hat"})
    a = emit_report(run_experiment(cfg), tmp_path / "a", "r")[0].read_bytes()
    b = emit_report(run_experiment(cfg), tmp_path / "b", "r")[0].read_bytes()
    assert a == b


def test_cli_cn(capsys):
    assert main(["cn", "--dim", "3", "--p", "2"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(1 / 3, abs=1e-12)


def _write(tmp_path, text):
    path = tmp_path / "exp.toml"
    path.write_text(text)
    return str(path)


def test_cli_sweep_pass_and_outputs(tmp_path, capsys):
    path = _write(tmp_path, 'experiment = "ponce_sweep"\n[sweep]\ndeltas = [0.2, 0.1]\n')
    assert main(["sweep", "--config", path]) == 0
    assert (tmp_path / "exp.csv").read_text().startswith(HEADER)
    assert (tmp_path / "exp.json").exists() and (tmp_path / "exp.gap.dat").exists()
    assert "PASS" in capsys.readouterr().out


def test_cli_verdict_failure_exit_2(tmp_path):
    path = _write(tmp_path, 'experiment = "ponce_sweep"\n[sweep]\ndeltas = [0.2, 0.1]\ntol_ineq = 1e-9\n')
    assert main(["sweep", "--config", path, "--out", str(tmp_path / "out")]) == 2


def test_cli_errors_exit_1(tmp_path, capsys):
    assert main(["sweep", "--config", _write(tmp_path, 'experiment = "ponce_sweep"\n[grid]\nbad = 1\n')]) == 1
    assert main(["gconv", "--config", _write(tmp_path, 'experiment = "ponce_sweep"\n')]) == 1
    assert main(["sweep", "--config", str(tmp_path / "nope.toml")]) == 1
    assert main(["check"]) == 1
    assert "error:" in capsys.readouterr().err


def test_cli_vitali_and_gconv(tmp_path):
    path = _write(tmp_path, 'experiment = "vitali_check"\n[sweep]\nk = [5]\nxi = ["one"]\n'
                  '[output]\nformats = ["json"]\nplot = false\n')
    assert main(["vitali", "--config", path]) == 0
    assert json.loads((tmp_path / "exp.json").read_text())["passed"]
    path = _write(tmp_path, 'experiment = "gconv"\n[grid]\nn = 200\n')
    assert main(["gconv", "--config", path]) == 0


def test_mollified_coefficient_sweep():
    r = run_experiment(sweep(coefficient={"spec": "simple:1,2@0.5", "mollify": 0.04},
                             sweep={"deltas": [0.2, 0.1, 0.05]}, grid={"horizon_nodes": 100}))
    assert r.passed
    assert math.isfinite(r.rows[-1].local)
