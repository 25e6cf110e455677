import json
from pathlib import Path

import numpy as np

from srex.cli import main
from srex.io import (
    builtin_structure_names,
    load_builtin_structure,
    load_structure_toml,
    save_structure_toml,
)
from srex.structures import engel, free_nilpotent_frame, heisenberg, martinet


def read_outputs(outdir):
    files = {}
    for p in sorted(Path(outdir).iterdir()):
        if p.name == "manifest.json":
            continue
        files[p.name] = p.read_bytes()
    return files


def test_builtin_structures_match_generators():
    expected = {
        "heisenberg": heisenberg(),
        "martinet": martinet(),
        "engel": engel(),
        "free_nilpotent_2": free_nilpotent_frame(2),
        "free_nilpotent_3": free_nilpotent_frame(3),
        "free_nilpotent_4": free_nilpotent_frame(4),
    }
    assert set(builtin_structure_names()) == set(expected)
    for name, S in expected.items():
        loaded = load_builtin_structure(name)
        assert loaded.frame == S.frame
        assert loaded.weights == S.weights


def test_structure_toml_round_trip(tmp_path):
    S = engel()
    path = tmp_path / "engel.toml"
    save_structure_toml(S, path)
    again = load_structure_toml(path)
    assert again.frame == S.frame
    assert again.weights == S.weights


def test_run_martinet_scenario(tmp_path):
    out = tmp_path / "run1"
    rc = main(["run", "martinet-abnormal", "--out", str(out)])
    assert rc == 0
    csv = (out / "01_abnormal_flow.csv").read_text().splitlines()
    header = csv[0].split(",")
    assert header == ["t", "x_1", "x_2", "x_3", "p_1", "p_2", "p_3",
                      "u_1", "u_2", "h_1comp", "h_2comp", "detA", "traceA",
                      "goh_residual"]
    rows = np.array([[float(v) for v in line.split(",")] for line in csv[1:]])
    # u = (0, 1) and Goh residual below 1e-8 throughout
    assert np.allclose(rows[:, 7], 0.0, atol=1e-12)
    assert np.allclose(rows[:, 8], 1.0, atol=1e-12)
    assert rows[:, 13].max() <= 1e-8
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7
    assert "wall_time_s" in manifest


def test_run_determinism(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "martinet-abnormal", "--out", str(out1)]) == 0
    assert main(["run", "martinet-abnormal", "--out", str(out2)]) == 0
    files1, files2 = read_outputs(out1), read_outputs(out2)
    assert files1.keys() == files2.keys()
    for name in files1:
        assert files1[name] == files2[name], f"{name} differs between runs"


def test_run_malformed_toml(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[structure\nbuiltin = 'oops'")
    assert main(["run", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_run_unknown_scenario():
    assert main(["run", "no-such-scenario"]) == 2


def test_run_missing_structure_file(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('name = "x"\n[structure]\npath = "nowhere.toml"\n'
                   '[[stage]]\nkind = "flag"\npoint = [0, 0, 0]\n')
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_run_stage_precondition_failure(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('name = "bad-stage"\n[structure]\nbuiltin = "martinet"\n'
                   '[[stage]]\nkind = "abnormal_flow"\nT = 1.0\n'
                   'p0 = [0.0, 1.0, 0.0]\n')  # h2 != 0: precondition fails
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_run_validates_before_executing(tmp_path):
    # the second stage is invalid; nothing may be written for the first
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('name = "late-bad"\n[structure]\nbuiltin = "martinet"\n'
                   '[[stage]]\nkind = "flag"\npoint = [0, 0, 0]\n'
                   '[[stage]]\nkind = "abnormal_flow"\nT = -1.0\n'
                   'p0 = [0.0, 0.0, 1.0]\n')
    out = tmp_path / "o"
    assert main(["run", str(cfg), "--out", str(out)]) == 3
    assert not (out / "00_flag.json").exists()


def test_run_minimize_stage(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(
        'name = "heis-min"\nseed = 3\n[structure]\nbuiltin = "heisenberg"\n'
        '[[stage]]\nkind = "minimize"\nx1 = [1.0, 0.0, 0.0]\nN = 8\n'
        'init = "straight"\ninit_angle = 0.1\n')
    out = tmp_path / "o"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "00_minimize.json").read_text())
    assert abs(rep["length"] - 1.0) <= 1e-4
    assert rep["endpoint_error"] <= 1e-6
    controls = (out / "00_controls.csv").read_text().splitlines()
    assert controls[0] == "t,u1,u2"


def test_run_detsign_batch_small(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(
        'name = "mini-detsign"\nseed = 5\n[structure]\n'
        'builtin = "free_nilpotent_4"\n'
        '[[stage]]\nkind = "detsign_batch"\nruns = 3\nseed = 11\n')
    out1 = tmp_path / "o1"
    assert main(["run", str(cfg), "--out", str(out1)]) == 0
    rep = json.loads((out1 / "00_detsign.json").read_text())
    assert rep["zero_runs"] >= 3
    assert rep["violations"] == 0
    # a worker pool must merge results identically (seed order)
    out2 = tmp_path / "o2"
    assert main(["run", str(cfg), "--out", str(out2), "--jobs", "2"]) == 0
    assert ((out1 / "00_detsign.json").read_bytes()
            == (out2 / "00_detsign.json").read_bytes())


def test_run_corner_stage(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(
        'name = "heis-corner"\n[structure]\nbuiltin = "heisenberg"\n'
        '[[stage]]\nkind = "corner"\nv_minus = [1.0, 0.0]\n'
        'v_plus = [0.0, 1.0]\neps_leg = 0.5\nN = 16\n')
    out = tmp_path / "o"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "00_corner.json").read_text())
    assert rep["margin"] >= 1e-3


def test_verify_unknown_suite():
    assert main(["verify", "nosuchsuite"]) == 2


def test_verify_dichotomy_suite(tmp_path, capsys):
    rc = main(["verify", "dichotomy", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "PASS dichotomy/cotangent-law" in out
    report = json.loads((tmp_path / "verify_dichotomy.json").read_text())
    assert report["passed"] is True


def test_run_hyperbolic_zero_pipeline(tmp_path):
    # a step-4 eigenline covector steered at a hyperbolic zero drives the
    # full pipeline: classification plus phase analysis with asymptotics
    p = np.zeros(8)
    p[5], p[6], p[7] = 0.3, 0.5, -0.4
    A = np.array([[-p[6], -p[7]], [p[5], p[6]]])
    evals, evecs = np.linalg.eig(A)
    v_minus = evecs[:, int(np.argmin(evals.real))].real
    h_target = 0.8 * v_minus
    p[3], p[4] = h_target[1], -h_target[0]
    h0 = float(np.linalg.norm(h_target))
    a = float(np.sqrt(-np.linalg.det(A)))
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(
        'name = "free4-zero"\n[structure]\nbuiltin = "free_nilpotent_4"\n'
        '[[stage]]\nkind = "abnormal_flow"\n'
        f"T = {1.3 * h0 / a}\nsign = 1\nzero_tol_rel = 1e-7\n"
        f"p0 = [{', '.join(repr(float(v)) for v in p)}]\n"
        '[[stage]]\nkind = "classify_zeros"\n'
        '[[stage]]\nkind = "phase_analysis"\n')
    out = tmp_path / "o"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    zeros = json.loads((out / "01_classification.json").read_text())["zeros"]
    assert len(zeros) == 1
    assert zeros[0]["classification"] == "HyperbolicNegDet"
    phase = json.loads((out / "02_phase.json").read_text())
    assert phase["target_form"] == "hyperbolic"
    assert phase["consistency_residual"] <= 1e-5
    asym = phase["hyperbolic_asymptotics"]
    assert asym["ok"] is True
    assert abs(asym["a"] - a) <= 1e-6


def test_output_schema_validator(tmp_path):
    from srex.cli import _validate_outputs

    good_json = tmp_path / "a.json"
    good_json.write_text('{"x": 1}\n')
    good_csv = tmp_path / "b.csv"
    good_csv.write_text("t,u\n0.0,1.0\n")
    assert _validate_outputs(tmp_path) is None
    bad = tmp_path / "c.csv"
    bad.write_text("t,u\n0.0,1.0,2.0\n")
    assert _validate_outputs(tmp_path) == "c.csv"
    bad.unlink()
    broken = tmp_path / "d.json"
    broken.write_text("{not json")
    assert _validate_outputs(tmp_path) == "d.json"


def test_builtin_detsign_scenario_parses():
    from srex.io import builtin_scenario_path
    import sys
    if sys.version_info >= (3, 11):
        import tomllib as toml
    else:
        import tomli as toml
    path = builtin_scenario_path("free4-detsign")
    assert path is not None
    doc = toml.loads(path.read_text())
    assert doc["structure"]["builtin"] == "free_nilpotent_4"
    assert doc["stage"][0]["kind"] == "detsign_batch"
    assert doc["stage"][0]["runs"] == 100


def test_list_structures(capsys):
    assert main(["list-structures"]) == 0
    out = capsys.readouterr().out
    assert "martinet: dim=3 rank=2" in out
    assert "free_nilpotent_4: dim=8" in out
