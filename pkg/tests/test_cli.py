"""Command-line driver: config validation, exit codes, report determinism."""
import csv
import io
import json
import math
import os

import numpy as np
import pytest

from jjlqubit import cli
from jjlqubit.characters import all_anchors
from jjlqubit.cli import ConfigError, load_config, main, run

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
CORRUPTED = os.path.join(FIXTURES, "corrupted_registry.json")

# a reduced identity workload keeps the CLI tests quick
SMALL_IDENTITIES = {"n_samples": 4, "taus": [[0.1, 1.1], [0.0, 1.5]], "variants": False}
SMALL_MONODROMY = {"taus": [[0.1, 1.1]], "n_samples": 2, "deltas": [1e-3]}


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def _strip(doc):
    doc = dict(doc)
    doc.pop("timestamp")
    return doc


# ---------------------------------------------------------------- config


def test_default_config_roundtrip():
    cfg = load_config(None)
    assert cfg.schema == cli.SCHEMA
    assert cfg.precision == "double"
    assert len(cfg.ladder.runs) == 3
    assert isinstance(cfg.ladder.runs[0], cli.LadderRun)
    # the hash ignores output-only settings
    other = load_config({"format": "text", "out": "/nonexistent"})
    assert cli.config_hash(cfg) == cli.config_hash(other)
    assert cli.config_hash(cfg) != cli.config_hash(load_config({"seed": 1}))


@pytest.mark.parametrize("doc", [
    {"bogus": 1},
    {"identities": {"n_sample": 3}},
    {"ladder": {"runs": [{"spec": {"N_plaquettes": 3}, "colour": "red"}]}},
    {"schema": "jjlq-config/0"},
    {"precision": "quad"},
    {"format": "xml"},
    {"seed": -1},
    {"identities": {"taus": [[0.0, -1.0]]}},
    {"monodromy": {"taus": [[0.0]]}},
    {"adiabatic": {"times": []}},
    {"adiabatic": {"double_ramp_protocol": "twice"}},
    {"qubit": {"params": None}},
])
def test_invalid_config_rejected(doc):
    with pytest.raises(ConfigError):
        load_config(doc)


def test_unknown_key_exit_code(tmp_path, capsys):
    path = _write(tmp_path, {"qubit": {"params": {"epsilon": 0, "delta": 1}, "extra": 1}})
    assert main(["qubit", "--config", path]) == 2
    assert "unknown key" in capsys.readouterr().err


def test_missing_config_file_exit_code(tmp_path, capsys):
    assert main(["qubit", "--config", str(tmp_path / "missing.json")]) == 2


def test_malformed_json_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["qubit", "--config", str(p)]) == 2


def test_unknown_ladder_spec_key_exit_code(capsys):
    cfg = load_config({"classical": {"specs": [{"N_plaquettes": 3, "legs": 3}]}})
    rep, code = run("classical-min", cfg)
    assert code == 2 and "unknown key" in rep.error


def test_odd_periodic_alternation_exit_code(tmp_path, capsys):
    path = _write(tmp_path, {"classical": {"specs": [
        {"N_plaquettes": 3, "seam": "periodic", "require_alternation": True}]}})
    assert main(["classical-min", "--config", path]) == 2
    err = capsys.readouterr().err
    assert "mobius_impurity" in err


def test_invalid_physical_parameter_exit_code():
    cfg = load_config({"classical": {"specs": [{"N_plaquettes": 3, "E_C": -1.0}]}})
    rep, code = run("classical-min", cfg)
    assert code == 2 and rep.status == "error"


def test_cli_overrides(tmp_path, capsys):
    out = tmp_path / "o"
    code = main(["qubit", "--seed", "7", "--format", "text", "--out", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    assert "seed 7" in text and text.rstrip().endswith("overall: PASS")
    assert (out / "report.txt").read_text() == text


# ---------------------------------------------------------------- verbs


def test_verify_identities_small():
    cfg = load_config({"identities": SMALL_IDENTITIES, "monodromy": SMALL_MONODROMY})
    rep, code = run("verify-identities", cfg)
    assert code == 0, rep.to_text()
    names = [c.name for c in rep.checks]
    assert sum(n.startswith("K_") for n in names) == 4
    assert sum(n.startswith("T_1/2 K_") for n in names) == 4
    assert sum(n.startswith("chi_") for n in names) == 3
    assert sum(n.startswith("monodromy") for n in names) == 9
    table = rep.data["flux_table"]
    assert table  # serialisable table travels with the report
    json.dumps(rep.to_dict())


def test_monodromy_verb():
    cfg = load_config({"identities": {"n_samples": 3}, "monodromy": SMALL_MONODROMY})
    rep, code = run("monodromy", cfg)
    assert code == 0
    expected = {row["id"]: row["expected"] for row in rep.data["monodromy"]}
    assert expected["P-P:gamma"] == 1
    assert expected["A-P:(0)"] == -1 and expected["A-A:(1)"] == -1
    assert expected["P-A:(0)"] == 1


def test_flux_table_writes_files(tmp_path):
    cfg = load_config({"identities": SMALL_IDENTITIES, "out": str(tmp_path)})
    rep, code = run("flux-table", cfg)
    assert code == 0
    assert sorted(rep.files) == ["flux_table.csv", "flux_table.txt"]
    rows = list(csv.reader(io.StringIO((tmp_path / "flux_table.csv").read_text())))
    assert len(rows) > 9


def test_classical_min_verb(tmp_path):
    cfg = load_config({"out": str(tmp_path)})
    rep, code = run("classical-min", cfg)
    assert code == 0, rep.to_text()
    sums = {item["ladder"]: sorted(m["chirality_sum"] for m in item["minima"])
            for item in rep.data["ladders"]}
    assert sums["N=4 periodic"] == [0, 0]
    assert sums["N=3 mobius_impurity"] == [-1, 1]
    assert (tmp_path / "patterns.csv").exists()


def test_ladder_verb_reference(tmp_path):
    cfg = load_config({"out": str(tmp_path)})
    rep, code = run("ladder", cfg)
    assert code == 0, rep.to_text()
    ed = rep.data["runs"][-1]["ed"]
    assert ed["splitting"] == pytest.approx(cli.REFERENCE_SPLITTING, rel=1e-8)
    assert ed["ratio"] < 0.2
    assert {"patterns.csv", "spectra.csv"} <= set(rep.files)


def test_ladder_verb_golden_mismatch_fails():
    run_ = {"spec": dict(cli.REFERENCE_LADDER), "golden_splitting": 2 * cli.REFERENCE_SPLITTING}
    rep, code = run("ladder", load_config({"ladder": {"runs": [run_]}}))
    assert code == 1 and rep.status == "fail"


def test_adiabatic_verb_short_grid():
    cfg = load_config({"adiabatic": {"times": [5.0, 20.0], "double_ramp_time": 20.0}})
    rep, code = run("adiabatic", cfg)
    assert code == 0, rep.to_text()
    assert rep.data["double_ramp"]["protocol"] == "flip"
    assert len(rep.data["ramps"]) == 3  # sudden + two ramps


# ---------------------------------------------------------------- qubit verb


def test_qubit_full_flip_at_half_rabi_period():
    """eps = 0: after t = pi / Delta all weight has moved to the other state."""
    cfg = load_config({"qubit": {"params": {"epsilon": 0.0, "delta": 0.7},
                                 "t_max": math.pi / 0.7, "n_points": 11}})
    rep, code = run("qubit", cfg)
    assert code == 0
    p0, p1 = rep.data["final"]["populations"]
    assert abs(p0) < 1e-9 and abs(p1 - 1) < 1e-9


def test_qubit_register_product_and_entanglement(tmp_path):
    eps, dlt = [0.3, -0.2], [0.5, 0.4]
    # uncoupled: spectrum is the tensor sum of the single-qubit spectra
    cfg = load_config({"out": str(tmp_path / "a"), "qubit": {
        "register": {"K": 2, "epsilon": eps, "delta": dlt, "t_max": 1.0, "n_points": 5}}})
    rep, code = run("qubit", cfg)
    assert code == 0
    w = [math.hypot(e, d) for e, d in zip(eps, dlt)]
    oracle = sorted(s0 * w[0] + s1 * w[1] for s0 in (-1, 1) for s1 in (-1, 1))
    np.testing.assert_allclose(rep.data["register"]["spectrum"], oracle, atol=1e-12)
    rows = list(csv.DictReader(io.StringIO((tmp_path / "a" / "register_trajectory.csv").read_text())))
    assert max(float(r["entropy_q0"]) for r in rows) < 1e-10

    # ZZ coupling only, from |+>|+>: maximal entanglement at t = pi / 4
    s = 1 / math.sqrt(2)
    cfg = load_config({"out": str(tmp_path / "b"), "qubit": {"register": {
        "K": 2, "epsilon": [0, 0], "delta": [0, 0], "couplings": {"0-1": 1.0},
        "initial": [[s, s], [s, s]], "t_max": math.pi / 4, "n_points": 3}}})
    rep, code = run("qubit", cfg)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "b" / "register_trajectory.csv").read_text())))
    assert float(rows[-1]["entropy_q0"]) == pytest.approx(math.log(2), abs=1e-10)
    assert float(rows[1]["entropy_q0"]) > 0


def test_qubit_from_reference_ladder():
    rep, code = run("qubit", load_config({"qubit": {"from_ladder": dict(cli.REFERENCE_LADDER)}}))
    assert code == 0, rep.to_text()
    assert rep.data["params"]["delta"] ** 2 + rep.data["params"]["epsilon"] ** 2 == pytest.approx(
        cli.REFERENCE_SPLITTING ** 2, rel=1e-7)


def test_qubit_rejected_two_level_fit():
    spec = {"N_plaquettes": 2, "seam": "periodic", "E_C": 5.0}
    rep, code = run("qubit", load_config({"qubit": {"from_ladder": spec}}))
    assert code == 1
    assert "rejected" in rep.error and rep.data["ratio"] >= 0.2


@pytest.mark.parametrize("initial", [[1.0, 1.0], [1.0]])
def test_qubit_bad_initial_state(initial):
    rep, code = run("qubit", load_config({"qubit": {"initial": initial}}))
    assert code == 2


# ---------------------------------------------------------------- reports


def test_reports_are_deterministic(tmp_path, capsys):
    path = _write(tmp_path, {"identities": SMALL_IDENTITIES, "monodromy": SMALL_MONODROMY})
    docs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["verify-identities", "--config", path, "--out", str(out)]) == 0
        docs.append(json.loads((out / "report.json").read_text()))
        capsys.readouterr()
    a, b = (_strip(d) for d in docs)
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert (tmp_path / "run0" / "flux_table.csv").read_bytes() == \
        (tmp_path / "run1" / "flux_table.csv").read_bytes()
    assert set(docs[0]["timestamp"]) == {"started_utc", "wall_time_s"}


def test_every_check_has_a_registered_anchor():
    cfg = load_config({"identities": SMALL_IDENTITIES, "monodromy": SMALL_MONODROMY})
    known = all_anchors()
    for verb in ("verify-identities", "classical-min", "qubit"):
        rep, _ = run(verb, cfg)
        assert rep.checks
        assert {c.anchor for c in rep.checks} <= known


def test_report_renderings():
    rep, _ = run("qubit", load_config(None))
    text = rep.render("text")
    assert text.startswith("jjlq qubit") and "[PASS]" in text
    rows = list(csv.reader(io.StringIO(rep.render("csv"))))
    assert rows[0] == ["name", "anchor", "status", "residual", "samples"]
    assert len(rows) == 1 + len(rep.checks)
    doc = json.loads(rep.render("json"))
    assert doc["artifact"] == "jjlqubit" and doc["status"] == "pass"


def test_nonfinite_residual_is_serialisable():
    c = cli.Check("x", "a", False, float("nan"), 1)
    assert c.to_dict()["residual"] == "nan"


def test_corrupted_registry_fails_loudly(tmp_path, capsys):
    path = _write(tmp_path, {"identities": dict(SMALL_IDENTITIES, registry_path=CORRUPTED),
                             "monodromy": SMALL_MONODROMY})
    code = main(["verify-identities", "--config", path])
    assert code == 1
    doc = json.loads(capsys.readouterr().out)
    assert doc["status"] == "fail"
    assert any(c["status"] == "fail" for c in doc["checks"])


def test_unreadable_registry_is_config_error(tmp_path):
    cfg = load_config({"identities": {"registry_path": str(tmp_path / "none.json")}})
    rep, code = run("flux-table", cfg)
    assert code == 2


def test_extended_precision_is_no_worse():
    base = {"identities": {"n_samples": 3, "taus": [[0.1, 1.1]], "variants": False},
            "monodromy": {"taus": [[0.1, 1.1]], "n_samples": 1, "deltas": [1e-3]}}
    dbl, code_d = run("verify-identities", load_config(base))
    ext, code_e = run("verify-identities", load_config(dict(base, precision="extended")))
    assert code_d == code_e == 0
    d = {c.name: c.residual for c in dbl.checks}
    e = {c.name: c.residual for c in ext.checks}
    assert d.keys() == e.keys()
    for name in d:
        assert e[name] <= max(d[name], 1e-30), name
