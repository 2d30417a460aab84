import json

import numpy as np
import pytest

from noisebench import cli, core, gridsim, noisegen
from noisebench.errors import ConfigError, ManifestError, StageError
from noisebench.pipeline import PipelineConfig, run_pipeline


def _real_manifest(d, duration=400, sigma=0.05, seed=5):
    grid = gridsim.GridConfig(duration_s=duration)
    plain = gridsim.simulate(grid)
    spec = noisegen.NoiseSpec("gaussian", sigma=sigma, seed=seed)
    real = noisegen.perturb(plain, {c: spec for c in plain.names}, scales=gridsim.nominal_values(grid), source_tag="real")
    core.write_csv(real, d / "real.csv")
    core.write_manifest(d / "manifest.json", {"real.csv": {"source_tag": "real", "label": "real"}})
    return d / "manifest.json"


def _config(**extra):
    doc = {
        "seed": 3,
        "grid": {"duration_s": 400},
        "forest": {"n_trees": 20},
        "channels": ["V1", "I1"],
    }
    doc.update(extra)
    return doc


def test_zero_noises_plain_only(tmp_path):
    m = _real_manifest(tmp_path)
    res = run_pipeline(PipelineConfig.from_dict(_config()), m, run_dir=tmp_path / "run")
    assert set(res.reports) == {"V1", "I1", "allvalues"}
    for rep in res.reports.values():
        assert rep.ranking == ["plain"]
        assert rep.recall >= 0.95
    run = tmp_path / "run"
    for part in ("config.json", "frames/plain.csv", "residuals/real.csv", "features/V1.csv", "models/V1.json", "reports/V1.json"):
        assert (run / part).exists(), part


def test_small_run_with_dynamic(tmp_path):
    m = _real_manifest(tmp_path)
    cfg = _config(
        noises=[{"preset": "gaussian1"}, {"preset": "gaussian2"}, {"name": "gmm", "fit_from": "real", "k": 2}],
        dynamic_events=[{"at_s": 200, "delta_current": 4}],
    )
    res = run_pipeline(PipelineConfig.from_dict(cfg), m, run_dir=tmp_path / "run")
    rep = res.reports["V1"]
    assert set(rep.ranking) == {"plain", "gaussian1", "gaussian2", "gmm"}
    assert rep.reference.mean_p_real >= rep.per_source["plain"].mean_p_real
    d = res.deltas["V1"]
    assert res.dynamic_reports["V1"].model_fingerprint == rep.model_fingerprint
    assert set(d.deltas) == set(rep.per_source)
    assert (tmp_path / "run" / "dynamic" / "deltas.json").exists()


def test_missing_manifest(tmp_path):
    with pytest.raises(ManifestError):
        run_pipeline(PipelineConfig.from_dict(_config()), tmp_path / "missing.json")


def test_stage_errors_name_the_stage(tmp_path):
    m = _real_manifest(tmp_path)
    (tmp_path / "real.csv").write_text("timestamp,V1\n0,abc\n")
    with pytest.raises(StageError) as exc:
        run_pipeline(PipelineConfig.from_dict(_config()), m)
    assert exc.value.stage == "load"


def test_seed_is_mandatory():
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"noises": []})


def test_config_round_trip():
    cfg = PipelineConfig.from_dict(_config(noises=[{"preset": "pink"}, {"name": "mine", "kind": "laplace", "sigma": 0.02}]))
    again = PipelineConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.fingerprint() == cfg.fingerprint()


def test_cli_chain(tmp_path, capsys):
    def run(*argv):
        assert cli.main([str(a) for a in argv]) == 0
        return capsys.readouterr().out

    plain, real, g2 = tmp_path / "plain.csv", tmp_path / "real.csv", tmp_path / "g2.csv"
    run("simulate", "--out", plain, "--duration", 300)
    run("perturb", "--in", plain, "--noise", "gaussian2", "--seed", 1, "--source-tag", "real", "--out", real)
    run("perturb", "--in", plain, "--noise", "uniform", "--seed", 2, "--source-tag", "uniform", "--out", g2)
    out = json.loads(run("perturb", "--in", plain, "--fit-gmm", real, "--k", 2, "--seed", 3, "--source-tag", "gmm", "--out", tmp_path / "gmm.csv", "--json"))
    assert out["noise"]["V1"]["kind"] == "gmm"
    run("estimate", "--in", g2, "--out", tmp_path / "res.csv")
    assert core.load_csv(tmp_path / "res.csv").names == list(core.CHANNELS)
    core.write_manifest(
        tmp_path / "m.json",
        {"real.csv": {"source_tag": "real", "label": "real"}, "g2.csv": {"source_tag": "uniform", "label": "simulated"}, "gmm.csv": {"source_tag": "gmm", "label": "simulated"}},
    )
    run("extract", "--manifest", tmp_path / "m.json", "--channel", "V1", "--out", tmp_path / "f.csv", "--dump-windows", tmp_path / "win")
    assert (tmp_path / "win" / "real_V1_raw.csv").exists()
    out = json.loads(run("train", "--features", tmp_path / "f.csv", "--out", tmp_path / "model.json", "--test-out", tmp_path / "test.csv", "--trees", 20, "--json"))
    assert 0 <= out["recall"] <= 1
    rep = json.loads(run("rank", "--model", tmp_path / "model.json", "--features", tmp_path / "test.csv", "--out", tmp_path / "rep.json", "--json"))
    assert set(rep["per_source"]) == {"uniform", "gmm"}
    out = json.loads(run("report", "--baseline", tmp_path / "rep.json", "--dynamic", tmp_path / "rep.json", "--json"))
    assert out["argmax_preserved"] and all(v == 0 for v in out["deltas"].values())


def test_cli_run_missing_manifest(tmp_path, capsys):
    assert cli.main(["run", "--manifest", str(tmp_path / "none.json"), "--seed", "1"]) != 0
    assert "manifest" in capsys.readouterr().err


def test_cli_run(tmp_path, capsys):
    m = _real_manifest(tmp_path)
    (tmp_path / "cfg.json").write_text(json.dumps(_config(noises=[{"preset": "gaussian2"}])))
    code = cli.main(["run", "--manifest", str(m), "--config", str(tmp_path / "cfg.json"), "--run-dir", str(tmp_path / "run"), "--json"])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert set(summary) == {"V1", "I1", "allvalues"}
    assert (tmp_path / "run" / "reports" / "summary.txt").exists()
