import json
import subprocess
import sys

import numpy as np
import pytest

from aml.cli import main
from aml.scenario import (PipelineError, ScenarioError, canonical_json, emit_report, exit_code,
                          load_preset, materialize, parse_scenario, preset_document, preset_names,
                          run_pipeline)

HALF = [[0.5, 0], [0, 0.5]]


def minimal(**extra):
    doc = {"name": "mini", "kind": "pechukas", "d_S": 2, "d_E": 2, "states": {"sigma_E": HALF},
           "search": {"trials": 20}, "dynamics": {"unitaries": 3, "samples": 32}}
    doc.update(extra)
    return doc


def test_minimal_pechukas_valid():
    cfg = parse_scenario(json.dumps(minimal()))
    assert (cfg.kind, cfg.d_S, cfg.d_E, cfg.search.trials) == ("pechukas", 2, 2, 20)
    assert cfg.tolerances.markov_gap == 1e-7 and cfg.tolerances.witness_margin == 1e-3


def test_trace_violation_points_at_entry():
    doc = minimal(states={"sigma_E": [[1.0, 0], [0, 0.5]]})
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(doc)
    assert exc.value.pointer == "/states/sigma_E"
    assert "trace" in str(exc.value)


def test_nested_pointer_for_joint_state():
    bad = [[0.5, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0.6]]
    doc = {"name": "x", "kind": "custom", "d_S": 2, "d_E": 2,
           "states": {"joint_states": [np.eye(4).tolist(), bad]}}
    doc["states"]["joint_states"][0] = (np.eye(4) / 4).tolist()
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(doc)
    assert exc.value.pointer == "/states/joint_states/1"


def test_schema_violation_pointer():
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(minimal(d_S=0))
    assert exc.value.pointer == "/d_S"
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(minimal(search={"trials": "many"}))
    assert exc.value.pointer == "/search/trials"
    with pytest.raises(ScenarioError):
        parse_scenario("{not json")


def test_positivity_violation_named():
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(minimal(states={"sigma_E": [[1.5, 0], [0, -0.5]]}))
    assert "positive" in str(exc.value)


def test_complex_entries_parsed():
    cfg = parse_scenario(minimal(states={"sigma_E": [[0.5, [0, -0.25]], [[0, 0.25], 0.5]]}))
    joint = materialize(cfg).joint_states[0]  # |0><0| (x) sigma_E
    assert np.abs(joint[:2, :2] - np.array([[0.5, -0.25j], [0.25j, 0.5]])).max() == 0
    assert np.abs(joint[2:, 2:]).max() == 0


def test_cq_blocks_roundtrip():
    doc = {"name": "cq", "kind": "cq_blocks", "d_S": 2, "d_E": 2,
           "states": {"sigma_E": [[[0.8, 0.2], [0.2, 0.2]], HALF], "mixtures": [[0.3, 0.7]]}}
    cfg = parse_scenario(doc)
    mat = materialize(cfg)
    assert len(mat.joint_states) == 3 and mat.structure.blocks == ((1, 1), (1, 1))
    again = parse_scenario(json.dumps(cfg.to_dict()))
    assert again == cfg
    assert canonical_json(again.to_dict()) == canonical_json(cfg.to_dict())


def test_cq_mixture_must_be_distribution():
    doc = {"name": "cq", "kind": "cq_blocks", "d_S": 2, "d_E": 2,
           "states": {"sigma_E": [HALF, HALF], "mixtures": [[0.3, 0.3]]}}
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(doc)
    assert exc.value.pointer == "/states/mixtures/0"


def test_generator_entries():
    cfg = parse_scenario(minimal(d_E=3, states={"sigma_E": {"random_density": {"rank": 2, "seed": 3}}}))
    joint = materialize(cfg).joint_states[0]
    assert np.linalg.matrix_rank(joint, tol=1e-10) == 2
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(minimal(states={"sigma_E": {"random_density": {"rank": 5, "seed": 3}}}))
    assert exc.value.pointer == "/states/sigma_E/random_density/rank"


def test_presets_all_parse_and_roundtrip():
    names = preset_names()
    assert {"pechukas", "cq_blocks", "entangled_pair", "generalized_v"} <= set(names)
    for name in names:
        cfg = load_preset(name)
        assert parse_scenario(cfg.to_dict()) == cfg
    with pytest.raises(KeyError):
        preset_document("nope")


def test_pipeline_pechukas():
    rep = run_pipeline(load_preset("pechukas"))
    assert rep.markov["markov"] and rep.assignment["cp"]
    assert all(d["cp"] for d in rep.dynamics) and len(rep.dynamics) == 100
    assert rep.ranks == {"M": 4, "m": 4, "dim_V0": 0, "n_states": 4}
    assert not rep.witness_found and exit_code(rep) == 0


def test_pipeline_entangled_pair():
    rep = run_pipeline(load_preset("entangled_pair"))
    assert not rep.markov["markov"] and rep.markov["gap"] > 0.1
    assert rep.search["witness_found"] and rep.search["witness"]["eigenvalue"] <= -1e-3
    assert exit_code(rep) == 2


def test_pipeline_generalized_v():
    cfg = load_preset("generalized_v")
    rep = run_pipeline(cfg)
    assert rep.ranks["dim_V0"] == 1
    assert rep.search["rejected"] > 0
    assert rep.search["rejected"] + rep.search["accepted"] == cfg.search.trials
    assert any(not d["u_consistent"] for d in rep.dynamics)
    assert run_pipeline(cfg).search["rejected"] == rep.search["rejected"]


def test_pipeline_error_is_tagged():
    bad = {"name": "x", "kind": "custom", "d_S": 2, "d_E": 2,
           "states": {"joint_states": [np.kron(np.diag([1.0, 0]), HALF).tolist()] * 2}}
    cfg = parse_scenario(bad)
    cfg.search.trials = 1
    # duplicated states are fine; a literal that no longer fits the dimensions is not
    rep = run_pipeline(cfg)
    assert rep.ranks["m"] == 1 and rep.ranks["M"] == 1
    cfg.d_E = 3
    with pytest.raises(PipelineError) as exc:
        run_pipeline(cfg)
    assert exc.value.stage == "scenario"


def test_report_deterministic(tmp_path):
    cfg = load_preset("entangled_pair")
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    emit_report(run_pipeline(cfg), a)
    emit_report(run_pipeline(cfg), b)
    assert a.read_bytes() == b.read_bytes()
    back = json.loads(a.read_text())
    assert back["search"]["witness_found"] is True
    assert back["scenario"] == cfg.to_dict()
    assert "timing" not in back
    assert "timing" in json.loads(emit_report(run_pipeline(cfg), timing=True))


def test_canonical_json_format():
    text = canonical_json({"b": 0.1, "a": [float("inf"), float("nan"), -float("inf")], "c": True, "d": None})
    assert text == '{"a":["inf","nan","-inf"],"b":0.10000000000000001,"c":true,"d":null}\n'
    assert float(json.loads(canonical_json({"x": 1 / 3}))["x"]) == 1 / 3


def test_cli_presets_and_validate(tmp_path, capsys):
    assert main(["presets", "list"]) == 0
    assert "pechukas" in capsys.readouterr().out
    assert main(["presets", "show", "cq_blocks"]) == 0
    assert json.loads(capsys.readouterr().out)["kind"] == "cq_blocks"
    path = tmp_path / "s.json"
    path.write_text(json.dumps(minimal()))
    assert main(["validate", "--scenario", str(path)]) == 0
    path.write_text(json.dumps(minimal(states={"sigma_E": [[1.0, 0], [0, 0.5]]})))
    assert main(["validate", "--scenario", str(path)]) == 1
    assert "/states/sigma_E" in capsys.readouterr().err
    assert main(["validate", "--scenario", str(tmp_path / "missing.json")]) == 1
    assert main(["bogus"]) == 1


def test_cli_run_exit_codes(tmp_path):
    out = tmp_path / "r.json"
    assert main(["run", "--scenario", "preset:entangled_pair", "--out", str(out)]) == 2
    assert json.loads(out.read_text())["search"]["witness_found"]
    path = tmp_path / "s.json"
    path.write_text(json.dumps(minimal()))
    assert main(["run", "--scenario", str(path), "--out", str(out), "--trials", "7", "--seed", "3",
                 "--tol-markov", "1e-6", "--domain", "full"]) == 0
    rep = json.loads(out.read_text())
    assert rep["search"]["trials"] == 7 and rep["search"]["seed"] == 3 and rep["search"]["domain"] == "full"
    assert rep["scenario"]["tolerances"]["markov_gap"] == 1e-6


def test_cli_module_entry_and_threads(tmp_path):
    outs = []
    for threads in ("1", "4"):
        out = tmp_path / f"r{threads}.json"
        proc = subprocess.run([sys.executable, "-m", "aml", "run", "--scenario", "preset:entangled_pair",
                               "--out", str(out), "--trials", "60"],
                              env={"AML_THREADS": threads, "PATH": "/usr/bin:/bin"}, capture_output=True)
        assert proc.returncode in (0, 2), proc.stderr
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
