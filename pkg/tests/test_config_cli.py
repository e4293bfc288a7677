from __future__ import annotations

import json

import numpy as np
import pytest

from conftest import read_tree
from pentapulse.cli import apply_override, main, parse_sweep
from pentapulse.config import (
    ConfigError,
    bundled_scenarios,
    config_from_dict,
    dump_config,
    load_bundled,
    parse_config,
)
from pentapulse.core import SchemeKind


def small_eigen_doc() -> dict:
    doc = json.loads(load_bundled("fig2_eigen"))
    doc["grid"].update(tau_min=-10.0, tau_max=10.0, n_tau=401)
    doc.pop("checks")
    return doc


def test_fig6_scenario_matches_caption():
    cfg = parse_config(load_bundled("fig6_adiabaton"))
    assert cfg.experiment == "propagate"
    assert cfg.scheme is SchemeKind.EXTENDED_LAMBDA
    amps = [e.amplitude for e in cfg.pulse_set.envelopes]
    widths = [e.width for e in cfg.pulse_set.envelopes]
    assert amps == [30.0, 0.1, 30.0, 30.0]
    assert widths == [0.2, 5.0, 0.2, 0.2]
    assert list(cfg.detunings) == [100.0, -100.0, -100.0, 100.0]
    assert cfg.x_unit == "L" and list(cfg.x_report) == [1.0, 2.0]
    assert cfg.length_unit() == pytest.approx(900.01)


def test_empty_document_lists_required_keys():
    with pytest.raises(ConfigError) as exc:
        parse_config("{}")
    text = "\n".join(exc.value.errors)
    for key in ("experiment", "scheme", "pulses", "detunings", "grid"):
        assert key in text


def test_all_errors_reported_together():
    doc = small_eigen_doc()
    doc["pulses"][0]["amplitude"] = -1.0
    doc["colour"] = "blue"
    doc["grid"]["n_tau"] = 1
    with pytest.raises(ConfigError) as exc:
        config_from_dict(doc)
    errs = exc.value.errors
    assert len(errs) >= 3
    assert any("amplitude must be" in e and "0" in e for e in errs)
    assert any("colour" in e for e in errs)


def test_medium_required_for_propagation():
    doc = json.loads(load_bundled("fig6_adiabaton"))
    doc.pop("medium")
    with pytest.raises(ConfigError):
        config_from_dict(doc)


@pytest.mark.parametrize("name", bundled_scenarios())
def test_canonical_round_trip(name):
    text = load_bundled(name)
    once = dump_config(parse_config(text))
    assert once == text
    assert dump_config(parse_config(once)) == once


def test_sweep_parsing():
    assert parse_sweep("delta:10:100:4") == ("delta", [10.0, 40.0, 70.0, 100.0])
    assert parse_sweep("grid.n_tau:100,200") == ("grid.n_tau", [100.0, 200.0])
    with pytest.raises(ValueError):
        parse_sweep("delta")


def test_override_keeps_types_and_resonance():
    doc = small_eigen_doc()
    out = apply_override(doc, "grid.n_tau", 801.0)
    assert out["grid"]["n_tau"] == 801 and isinstance(out["grid"]["n_tau"], int)
    assert doc["grid"]["n_tau"] == 401
    assert apply_override(doc, "delta", 50.0)["detunings"] == [50.0, 50.0, 50.0, 50.0]
    assert apply_override(doc, "pulses.1.amplitude", 2.0)["pulses"][1]["amplitude"] == 2.0


def test_cli_success_and_outputs(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(small_eigen_doc()))
    assert main(["eigen", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["metrics"]["max_rel_eig_error"] < 1e-9
    assert (tmp_path / "o" / "eigen.csv").exists()


def test_cli_malformed_config(tmp_path, capsys):
    doc = small_eigen_doc()
    doc["pulses"][0]["amplitude"] = -1.0
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(doc))
    assert main(["eigen", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "amplitude" in capsys.readouterr().err
    assert main(["transfer", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_cli_refuses_coarse_step(tmp_path):
    doc = json.loads(load_bundled("fig4_stirap"))
    doc["grid"]["n_tau"] = 50
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(doc))
    assert main(["transfer", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["required_n_tau"] > 50


def test_cli_check_adiabatic(tmp_path, capsys):
    assert main(["check-adiabatic", "--config", "fig7_fig8_storage", "--out", str(tmp_path / "a")]) in (0, 2)
    report = json.loads(capsys.readouterr().out)
    assert {"single_atom", "medium"} <= set(report["adiabaticity"])
    assert main(["check-adiabatic", "--config", "fig6_adiabaton", "--out", str(tmp_path / "b")]) == 2


def test_cli_sweep_isolated(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(small_eigen_doc()))
    out = tmp_path / "s"
    assert main(["eigen", "--config", str(cfg), "--out", str(out), "--sweep", "delta:10,20", "--workers", "2"]) == 0
    index = json.loads((out / "sweep.json").read_text())
    assert [i["value"] for i in index] == [10.0, 20.0]
    e0 = (out / "sweep_000" / "eigen.csv").read_bytes()
    e1 = (out / "sweep_001" / "eigen.csv").read_bytes()
    assert e0 != e1


@pytest.mark.parametrize("name", bundled_scenarios())
def test_bundled_scenario(bundled_runs, name):
    (d, res), (d2, _) = bundled_runs[name]
    assert res.exit_code == 0, res.errors
    assert read_tree(d) == read_tree(d2)
    s = res.summary
    assert "single_atom" in s["adiabaticity"]
    assert set(s["grid_convergence"]) == {"kind", "value"}
    failed = {k: v["value"] for k, v in s["checks"].items() if not v["pass"]}
    assert not failed, failed
