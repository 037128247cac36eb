import json

import numpy as np
import pytest
from click.testing import CliRunner
from filelock import FileLock

from bdeg.cli import main
from bdeg.config import RunConfig
from bdeg.field_core import build_grid, load_field


def _run(tmp_path, command, cfg: dict, *extra, out="out"):
    path = tmp_path / f"{command}.json"
    path.write_text(json.dumps(cfg))
    res = CliRunner().invoke(main, [command, "--config", str(path), "--out", str(tmp_path / out), *extra])
    return res, tmp_path / out


def _json(path):
    return json.loads(path.read_text())


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        RunConfig.from_dict({"grid": 5})
    with pytest.raises(ValueError):
        RunConfig.from_dict({"coefficient": {"kind": "spiral"}})
    with pytest.raises(ValueError):
        RunConfig.from_dict({"grid_n": 100})


def test_solve_zero(tmp_path):
    res, out = _run(tmp_path, "solve", {"coefficient": {"kind": "zero"}, "grid_n": 64})
    assert res.exit_code == 0, res.output
    rep = _json(out / "solve_report.json")
    assert rep["residual_l2"] == 0.0
    spec = build_grid(2.0, 64)
    F = load_field(out / "forward.csv", spec)
    assert np.allclose(F.values, spec.nodes(), atol=1e-13)
    man = _json(out / "manifest.json")
    assert man["residual_l2"] == 0.0 and "timings" in man and man["exit_code"] == 0


def test_solve_truncated_example(tmp_path):
    res, out = _run(tmp_path, "solve", {"coefficient": {"kind": "example", "k": 4}}, "--grid-n", "256")
    assert res.exit_code == 0, res.output
    assert _json(out / "manifest.json")["residual_l2"] <= 1e-6


def test_solve_degenerate_is_rejected(tmp_path):
    res, out = _run(tmp_path, "solve", {"coefficient": {"kind": "example"}, "grid_n": 64})
    assert res.exit_code != 0
    assert "degenerate" in res.output


def test_invalid_config_exit(tmp_path):
    res, _ = _run(tmp_path, "solve", {"bogus": 1})
    assert res.exit_code == 2


def test_sweep_zero(tmp_path):
    res, out = _run(tmp_path, "sweep", {"coefficient": {"kind": "zero"}, "grid_n": 64}, "--k-list", "2,4,8")
    assert res.exit_code == 0, res.output
    rep = _json(out / "sweep_report.json")
    assert [r["k"] for r in rep["per_k"]] == [2.0, 4.0, 8.0]
    assert max(rep["diagnostics"]["I1"] + rep["diagnostics"]["cauchy_sup"]) < 1e-12


def test_sweep_analytic_pipeline(tmp_path):
    cfg = {"coefficient": {"kind": "example"}, "pipeline": "analytic", "slack": 1e-9, "grid_n": 256}
    res, out = _run(tmp_path, "sweep", cfg, "--k-list", "4,8,16,32")
    assert res.exit_code == 0, res.output
    rep = _json(out / "sweep_report.json")
    assert all(r["majorant_pass"] for r in rep["per_k"])


def test_sweep_numerical_reports_majorant_failure(tmp_path):
    # the numerical inverse dilatation overshoots Q near the truncation circle
    res, out = _run(tmp_path, "sweep", {"coefficient": {"kind": "example"}, "grid_n": 256}, "--k-list", "2,8")
    assert res.exit_code == 1
    rep = _json(out / "sweep_report.json")
    assert rep["per_k"][0]["majorant_pass"] is True
    assert rep["per_k"][1]["majorant_pass"] is False
    assert "FAIL majorant k=8" in res.output


def test_check_constant_majorant_divergent(tmp_path):
    cfg = {"majorant": {"kind": "constant", "value": 1.0}, "checks": ["divergence", "fmo"],
           "fmo_function": "constant", "expect": {"divergence": "divergent", "fmo": "fmo_consistent"},
           "points": [[0, 0], [0.3, 0.1]]}
    res, out = _run(tmp_path, "check", cfg)
    assert res.exit_code == 0, res.output
    rep = _json(out / "conditions_report.json")
    assert [d["verdict"] for d in rep["divergence"]] == ["divergent", "divergent"]
    assert rep["fmo"][0]["mean_osc"] == [0.0] * 4


def test_check_example(tmp_path):
    cfg = {"coefficient": {"kind": "example"}, "delta": 0.5,
           "checks": ["l1", "divergence", "continuity", "ring"], "expect": {"divergence": "convergent"}}
    res, out = _run(tmp_path, "check", cfg)
    assert res.exit_code == 0, res.output
    rep = _json(out / "conditions_report.json")
    assert abs(rep["divergence"][0]["limit"] - np.log(1.5)) < 1e-3
    assert abs(rep["l1_norm"] - 3 * np.pi) / (3 * np.pi) < 1e-2
    assert len(rep["ring_modulus"]) == 20
    assert all(1 / 3 <= r["r"] < r["R"] <= 1 for r in rep["ring_modulus"])
    assert rep["continuity"]["empirical_C"] > 0


def test_check_expectation_mismatch_fails(tmp_path):
    cfg = {"majorant": {"kind": "constant", "value": 1.0}, "checks": ["divergence"],
           "expect": {"divergence": "convergent"}}
    res, _ = _run(tmp_path, "check", cfg)
    assert res.exit_code == 1


def test_check_thresholds_are_reported(tmp_path):
    cfg = {"majorant": {"kind": "constant", "value": 1.0}, "checks": ["divergence"],
           "thresholds": {"divergence_floor": 0.01}}
    res, out = _run(tmp_path, "check", cfg)
    assert res.exit_code == 0
    assert _json(out / "conditions_report.json")["divergence"][0]["floor"] == 0.01


def test_example_table(tmp_path):
    res, out = _run(tmp_path, "example", {"coefficient": {"kind": "example", "k": 4}}, "--grid-n", "256")
    assert res.exit_code == 0, res.output
    rows = {r["quantity"]: r["value"] for r in _json(out / "example_table.json")["rows"]}
    assert rows["sup map error"] <= 5e-2
    assert rows["composition error"] <= 1e-12
    assert rows["analytic |f_k(0)|"] == 0 and rows["analytic |f_k(1) - 1|"] == 0
    for name in ("fk.csv", "gk.csv", "K_inverse.csv", "Q.csv", "example_table.csv"):
        assert (out / name).exists()


def test_reports_are_deterministic(tmp_path):
    cfg = {"coefficient": {"kind": "example"}, "grid_n": 128, "checks": ["l1", "divergence", "continuity", "ring"]}
    _run(tmp_path, "sweep", cfg, "--k-list", "2,4", out="a")
    _run(tmp_path, "sweep", cfg, "--k-list", "2,4", out="b")
    _run(tmp_path, "check", cfg, out="a")
    _run(tmp_path, "check", cfg, out="b")
    for name in ("sweep_report.json", "conditions_report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_overrides(tmp_path):
    res, out = _run(tmp_path, "sweep", {"coefficient": {"kind": "zero"}}, "--grid-n", "32", "--alpha", "0.5",
                    "--k-list", "2,3")
    assert res.exit_code == 0
    cfg = _json(out / "manifest.json")["config"]
    assert cfg["grid_n"] == 32 and cfg["alpha"] == 0.5 and cfg["k_list"] == [2.0, 3.0]


def test_lockfile_blocks_concurrent_run(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    with FileLock(str(out / ".bdeg.lock")):
        res, _ = _run(tmp_path, "solve", {"coefficient": {"kind": "zero"}, "grid_n": 32})
    assert res.exit_code == 3
    assert not (out / "manifest.json").exists()
