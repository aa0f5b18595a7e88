import csv
import json

import pytest

from qfflow import cli
from qfflow.errors import ConfigError

FAST = {"level": 2, "words": ["a"], "scale": 0.1, "loop_vertices": 128}


def run(tmp_path, name, command, **cfg):
    raw = dict(FAST)
    raw.update(cfg)
    conf = tmp_path / f"{name}.json"
    conf.write_text(json.dumps(raw))
    out = tmp_path / name
    code = cli.main([command, "--config", str(conf), "--out", str(out)])
    return code, out, json.loads((out / "report.json").read_text()) if (out / "report.json").exists() else None


@pytest.mark.parametrize("bad", [
    {"scale": 1.0},
    {"scale": "x"},
    {"level": -1},
    {"words": ["aq"]},
    {"words": ["aA"]},
    {"tolerances": {"mls": 2.0}},
    {"tolerances": {"nope": 1e-3}},
    {"samples": {"weak_bundle_time": 20}},
    {"seed_coefficients": [[0, 0], [0, 0], [0, 0]]},
    {"formats": ["pdf"]},
    {"unknown": 1},
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        cli.build_config(bad)


def test_config_error_exit_code(tmp_path):
    assert cli.main(["verify", "--scale", "1.5", "--out", str(tmp_path)]) == 2
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert cli.main(["verify", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert cli.main(["nonsense"]) == 2


def test_config_hash_ignores_output():
    a = cli.build_config({"output": "x"})
    b = cli.build_config({"output": "y"})
    c = cli.build_config({"scale": 0.2})
    assert a.hash == b.hash != c.hash


def test_command_line_overrides():
    cfg = cli.build_config(None, level=1, words="a,ab", scale=0.2, rng_seed=5, cutoff=5)
    assert (cfg.level, cfg.words, cfg.scale, cfg.rng_seed, cfg.cutoff) == (1, ["a", "ab"], 0.2, 5, 5)


def test_mls_report_and_exports(tmp_path):
    code, out, rep = run(tmp_path, "one", "mls")
    assert code == 0 and rep["status"] == "pass"
    assert rep["schema_version"] == cli.SCHEMA_VERSION
    assert set(rep["timing"]) >= {"total", "vortex", "qdiff"}
    rec = rep["results"]["mls"][0]
    for k in ("residual_14", "residual_15", "residual_mean", "residual_flip"):
        assert set(rec[k]) == {"value", "tolerance", "pass"}
    for name in ("octagon.svg", "orbits.svg", "zeros.svg", "mls.csv", "mesh_fields.csv"):
        assert (out / name).exists()
    with open(out / "orbit_a_plus.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) - 1 == rep["results"]["files"]["orbit_a_plus.csv"] == rep["results"]["orbits"][0]["samples"]
    assert "<svg" in (out / "octagon.svg").read_text()

    code, out2, rep2 = run(tmp_path, "two", "mls")
    rep.pop("timing"), rep2.pop("timing")
    assert rep == rep2
    for name in rep["results"]["files"]:
        assert (out / name).read_bytes() == (out2 / name).read_bytes()


def test_json_only_export(tmp_path):
    code, out, rep = run(tmp_path, "j", "export", formats=["json"])
    assert code == 0
    assert sorted(p.name for p in out.iterdir()) == ["report.json"]


def test_zero_scale_preserves_volume(tmp_path):
    code, out, rep = run(tmp_path, "z", "mls", scale=0.0, words=["a", "b"])
    assert code == 0
    assert rep["results"]["volume_form_preserved"] is True
    assert all(r[k]["value"] <= 1e-6 for r in rep["results"]["mls"] for k in r if k.startswith("residual"))


def test_verify_and_corrupted_hook(tmp_path):
    light = {"samples": {"bracket": 10, "norm_identity": 100, "weak_bundle": 4, "conjugacy": 10, "h_norm": 100}}
    code, _, rep = run(tmp_path, "v", "verify", **light)
    assert code == 0, {k: v["pass"] for k, v in rep["suites"].items()}
    assert set(rep["suites"]) == {"bracket", "structure", "holomorphy", "weak_bundle", "conjugacy", "wolf",
                                  "gauss_bonnet"}
    code, _, rep = run(tmp_path, "c", "verify", corrupt_rs=True,
                       suites={k: k == "weak_bundle" for k in cli.SUITES}, **light)
    assert code == 1
    assert rep["suites"]["weak_bundle"]["pass"] is False


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    from qfflow.errors import NonConvergence

    def boom(p):
        raise NonConvergence("forced")

    monkeypatch.setitem(cli.COMMAND_FUNCS, "lengths", boom)
    code, _, rep = run(tmp_path, "f", "lengths")
    assert code == 3
    assert rep["status"] == "error" and rep["error"]["type"] == "NonConvergence"
