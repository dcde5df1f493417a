import json

import pytest

from slitfb.cli import ConfigError, ExperimentConfig, emit_manifest, main


def write(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_exponents_run(tmp_path):
    cfg = write(tmp_path, "c.json", {"experiment": "exponents", "output_dir": "out"})
    assert main(["run", str(cfg)]) == 0
    row = json.loads((tmp_path / "out" / "exponents.json").read_text())
    assert row["beta1"] == pytest.approx(0.5, abs=1e-6)
    assert row["beta2"] == pytest.approx(0.5, abs=1e-6)
    names = [a["path"] for a in manifest(tmp_path / "out")["artifacts"]]
    assert names == ["exponents.csv", "exponents.json"]


def test_solve_run_classifies_origin(tmp_path):
    cfg = write(tmp_path, "c.json", {
        "experiment": "solve", "domain": {"h": 0.015625}, "output_dir": "out",
    })
    assert main(["run", str(cfg)]) == 0
    b = json.loads((tmp_path / "out" / "blowup_report.json").read_text())
    assert b["classification"] == "Regular"
    assert b["profile"]["point"] == [0.0, 0.0]
    rep = json.loads((tmp_path / "out" / "solve_report.json").read_text())
    assert not rep["failed"]


@pytest.mark.parametrize("bad", [
    {"experiment": "solve", "ellipticity": {"lambda": 2, "Lambda": 1}},
    {"experiment": "nope"},
    {"experiment": "solve", "domain": {"h": 0.3}},
    {"experiment": "solve", "colour": "blue"},
    {"experiment": "solve", "boundary": {"kind": "linear", "vector": [1]}},
    {"experiment": "solve", "seed": -1},
    {"experiment": "solve", "tolerances": {"solve": 0}},
])
def test_malformed_config(tmp_path, bad):
    bad = dict(bad, output_dir="out")
    cfg = write(tmp_path, "c.json", bad)
    assert main(["run", str(cfg)]) == 1
    assert main(["validate", str(cfg)]) == 1
    assert not (tmp_path / "out").exists()


def test_validate_ok(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", {"experiment": "harnack", "ellipticity": {"lambda": 1, "Lambda": 1.5}})
    assert main(["validate", str(cfg)]) == 0
    echo = json.loads(capsys.readouterr().out)
    assert echo["ellipticity"] == {"lambda": 1.0, "Lambda": 1.5}


def test_numerical_failure_exit_code(tmp_path):
    cfg = write(tmp_path, "c.json", {
        "experiment": "solve", "domain": {"h": 0.125}, "boundary": {"kind": "linear", "vector": [0, 0]},
        "obstacle": {"kind": "quadratic", "coeffs": {"constant": 1.0}}, "output_dir": "out",
    })
    assert main(["run", str(cfg)]) == 2
    diag = json.loads((tmp_path / "out" / "diagnostics.json").read_text())
    assert "obstacle above" in diag["error"]
    assert manifest(tmp_path / "out")["status"] == "numerical_failure"


def test_determinism_and_schema(tmp_path):
    base = {"experiment": "solve", "domain": {"h": 0.0625}, "seed": 3}
    hashes = []
    for k, h in enumerate((0.0625, 0.0625, 0.125)):
        cfg = write(tmp_path, f"c{k}.json", dict(base, domain={"h": h}, output_dir=f"out{k}"))
        assert main(["run", str(cfg)]) == 0
        m = manifest(tmp_path / f"out{k}")
        hashes.append({a["path"]: a["sha256"] for a in m["artifacts"]})
        assert m["rng"] == {"generator": "numpy.random.Philox", "seed": 3}
    assert hashes[0] == hashes[1]
    assert hashes[0].keys() == hashes[2].keys()
    assert hashes[0]["solution.csv"] != hashes[2]["solution.csv"]


def test_empty_manifest(tmp_path):
    cfg = ExperimentConfig.from_dict({"experiment": "exponents"})
    path = emit_manifest(cfg, [], tmp_path)
    m = json.loads(path.read_text())
    assert m["artifacts"] == [] and m["config"]["experiment"] == "exponents"


def test_config_error_type():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": "solve", "ellipticity": [3, 1]})


def test_exponents_subcommand(capsys):
    assert main(["exponents", "--lambda", "1", "--Lambda", "2"]) == 0
    header, row = capsys.readouterr().out.strip().splitlines()
    vals = dict(zip(header.split(","), map(float, row.split(","))))
    assert vals["beta1"] == pytest.approx(0.2783415526, abs=1e-8)
    assert main(["exponents", "--lambda", "2", "--Lambda", "1"]) == 1
