import filecmp
import json
import os

import numpy as np
import pytest

from pedflock.artifacts import read_assignments, read_bins, read_features, write_bins
from pedflock.binning import prepare_bins
from pedflock.cli import main
from pedflock.ingest import parse_environment, parse_tracking_csv
from pedflock.pairfeat import features_for_bins
from pedflock.pipeline import PipelineConfig, StageError, run_pipeline, stage_seed, synthetic_scenario
from pedflock.synth import GroupSpec, ScenarioSpec, WalkerSpec, default_scenario, generate_synthetic_scenario


def write_scenario(directory, seed=7, **kw):
    os.makedirs(directory, exist_ok=True)
    sc = synthetic_scenario(seed, **kw)
    paths = {k: os.path.join(directory, name) for k, name in
             (("tracking", "tracking.csv"), ("groups", "groups.txt"), ("env", "env.json"))}
    with open(paths["tracking"], "w") as fh:
        fh.write(sc.tracking_csv)
    with open(paths["groups"], "w") as fh:
        fh.write(sc.groups_txt)
    with open(paths["env"], "w") as fh:
        json.dump(sc.geometry, fh)
    return paths, sc


def data_files(root):
    out = []
    for d, _, files in os.walk(root):
        out += [os.path.relpath(os.path.join(d, f), root) for f in files if f != "manifest.json"]
    return sorted(out)


@pytest.fixture(scope="module")
def scenario(tmp_path_factory):
    return write_scenario(tmp_path_factory.mktemp("scenario"))


@pytest.fixture(scope="module")
def first_run(scenario, tmp_path_factory):
    paths, _ = scenario
    out = str(tmp_path_factory.mktemp("run1"))
    cfg = PipelineConfig(tracking=paths["tracking"], env=paths["env"], groups=paths["groups"], out_dir=out, seed=7)
    return cfg, run_pipeline(cfg)


# -- synthetic generator ----------------------------------------------------------


def test_synth_construction(scenario):
    _, sc = scenario
    assert len(sc.annotation_pairs) == 8
    assert len(sc.groups_txt.splitlines()) == 16
    trajs, _ = parse_tracking_csv(sc.tracking_csv.encode())
    assert len(trajs) == 40


def test_synth_deterministic():
    spec = default_scenario(seed=3)
    assert generate_synthetic_scenario(spec, 3).tracking_csv == generate_synthetic_scenario(spec, 3).tracking_csv
    assert generate_synthetic_scenario(spec, 3).tracking_csv != generate_synthetic_scenario(spec, 4).tracking_csv


def test_synth_rejects_overlapping_pids():
    spec = ScenarioSpec(singles=[WalkerSpec(1, 0, 1000, 1, 2000)], groups=[GroupSpec((1, 2), 0, 1000, 1, 3000)])
    with pytest.raises(ValueError):
        generate_synthetic_scenario(spec)


def test_noise_free_pair_is_600mm_apart():
    spec = ScenarioSpec(groups=[GroupSpec((1, 2), 0.0, 1300.0, 1, 2500.0, 600.0)], noise_mm=0.0)
    sc = generate_synthetic_scenario(spec, 0)
    trajs, _ = parse_tracking_csv(sc.tracking_csv.encode())
    (rec,) = features_for_bins(prepare_bins(trajs, 60_000, 60, 3.0))
    assert rec.features.mean_inter_distance_mm == pytest.approx(600.0, abs=1e-9)


# -- artifacts --------------------------------------------------------------------


def test_bins_roundtrip(scenario, tmp_path):
    paths, _ = scenario
    trajs, _ = parse_tracking_csv(paths["tracking"])
    bins = prepare_bins(trajs, 60_000, 60, 3.0)
    write_bins(tmp_path / "b.csv", bins, 60_000, 3.0, 60)
    again, params = read_bins(tmp_path / "b.csv")
    assert again == bins
    assert params == {"interval_ms": 60_000, "origin_ms": bins[0].t_start_ms, "rate_hz": 3.0, "seq_len": 60}


def test_every_csv_has_schema_line(first_run):
    cfg, _ = first_run
    for rel in data_files(cfg.out_dir):
        path = os.path.join(cfg.out_dir, rel)
        if rel.endswith(".csv"):
            with open(path) as fh:
                assert fh.readline().startswith("# pedflock:")
        else:
            with open(path) as fh:
                assert json.load(fh)["schema"].startswith("pedflock-")


# -- pipeline -----------------------------------------------------------------------


def test_run_complete_and_counts(first_run):
    cfg, m = first_run
    assert m.complete and all(s.status == "OK" for s in m.stages)
    c = {s.name: s.counts for s in m.stages}
    assert c["ingest"]["agents"] == 40 and c["ingest"]["annotated_pairs"] == 8
    assert c["bin"]["agents"] == 40
    n = sum(1 for _ in read_features(os.path.join(cfg.out_dir, "features.csv"))[0])
    assert c["features"]["pairs"] == c["features"]["pairs_enumerated"] == c["score"]["scores"] == n
    universe = sum(len(a.members) for a in read_assignments(os.path.join(cfg.out_dir, "assignments.csv")))
    assert universe == c["bin"]["agents"] == c["detect"]["agents"]
    assert all(s.duration_s >= 0 for s in m.stages)
    assert sum(s.duration_s for s in m.stages) <= m.total_s
    assert sum(s.duration_s for s in m.stages) >= 0.95 * m.total_s
    doc = json.load(open(os.path.join(cfg.out_dir, "manifest.json")))
    assert doc["complete"] and doc["config"]["seed"] == 7 and doc["version"]


def test_rerun_byte_identical(first_run, tmp_path):
    cfg, _ = first_run
    cfg2 = PipelineConfig(**{**cfg.__dict__, "out_dir": str(tmp_path)})
    run_pipeline(cfg2)
    files = data_files(cfg.out_dir)
    assert files == data_files(str(tmp_path))
    match, mismatch, errors = filecmp.cmpfiles(cfg.out_dir, str(tmp_path), files, shallow=False)
    assert mismatch == [] and errors == []


def test_missing_tracking_marks_ingest_failed(scenario, tmp_path):
    paths, _ = scenario
    cfg = PipelineConfig(tracking=str(tmp_path / "nope.csv"), env=paths["env"], groups=paths["groups"],
                         out_dir=str(tmp_path / "out"))
    with pytest.raises(StageError) as err:
        run_pipeline(cfg)
    assert err.value.stage == "ingest"
    doc = json.load(open(tmp_path / "out" / "manifest.json"))
    assert not doc["complete"]
    assert [s["status"] for s in doc["stages"]][:2] == ["FAILED", "PENDING"]


def test_external_scores_and_load_model_modes(first_run, tmp_path):
    cfg, _ = first_run
    base = {**cfg.__dict__}
    ext = PipelineConfig(**{**base, "out_dir": str(tmp_path / "ext"), "mode": "external-scores",
                            "external_scores": os.path.join(cfg.out_dir, "scores.csv")})
    run_pipeline(ext)
    lm = PipelineConfig(**{**base, "out_dir": str(tmp_path / "lm"), "mode": "load-model",
                           "model": os.path.join(cfg.out_dir, "model.json")})
    run_pipeline(lm)
    for d in ("ext", "lm"):
        assert filecmp.cmp(tmp_path / d / "assignments.csv", os.path.join(cfg.out_dir, "assignments.csv"), shallow=False)


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(tracking="a", env="b", mode="train").validate()
    with pytest.raises(ValueError):
        PipelineConfig(tracking="a", env="b", groups="c", threshold=1.5).validate()
    PipelineConfig(tracking="a", env="b", groups="c").validate()


def test_config_file_with_override(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"tracking": "t.csv", "env": "e.json", "seq_len": 100, "seed": 1}))
    cfg = PipelineConfig.from_file(path, seed=9, threshold=None)
    assert (cfg.seq_len, cfg.seed, cfg.threshold) == (100, 9, 0.9)
    path.write_text(json.dumps({"tracking": "t.csv", "bogus": 1}))
    with pytest.raises(ValueError):
        PipelineConfig.from_file(path)


def test_stage_seeds_differ():
    assert stage_seed(0, "split") != stage_seed(0, "train")
    assert stage_seed(0, "split") == stage_seed(0, "split")


# -- CLI ----------------------------------------------------------------------------


def test_cli_stepwise_matches_run(first_run, scenario, tmp_path, capsys):
    cfg, _ = first_run
    paths, _ = scenario
    d = str(tmp_path)
    seed = "7"
    steps = [
        ["ingest", "--tracking", paths["tracking"], "--env", paths["env"], "--groups", paths["groups"],
         "--summary-out", f"{d}/summary.json"],
        ["bin", "--tracking", paths["tracking"], "--env", paths["env"], "--out", f"{d}/bins.csv",
         "--stats-out", f"{d}/bin_stats.json"],
        ["features", "--bins", f"{d}/bins.csv", "--out", f"{d}/features.csv"],
        ["train", "--features", f"{d}/features.csv", "--labels-from", paths["groups"], "--seed", seed,
         "--model-out", f"{d}/model.json"],
        ["score", "--features", f"{d}/features.csv", "--model", f"{d}/model.json", "--out", f"{d}/scores.csv"],
        ["detect", "--scores", f"{d}/scores.csv", "--bins", f"{d}/bins.csv", "--threshold", "0.9",
         "--out", f"{d}/assignments.csv"],
        ["analyze", "--bins", f"{d}/bins.csv", "--assignments", f"{d}/assignments.csv", "--env", paths["env"],
         "--seed", seed, "--out-dir", f"{d}/analysis"],
    ]
    for argv in steps:
        assert main(argv) == 0, argv
    for rel in ("bins.csv", "features.csv", "scores.csv", "assignments.csv", "bin_stats.json",
                "analysis/encounters.csv", "analysis/footprints.csv", "analysis/regression.json"):
        assert filecmp.cmp(os.path.join(d, rel), os.path.join(cfg.out_dir, rel), shallow=False), rel


def test_cli_run_and_exit_codes(scenario, tmp_path, capsys):
    paths, _ = scenario
    args = ["--tracking", paths["tracking"], "--env", paths["env"], "--groups", paths["groups"]]
    assert main(["run", *args, "--out-dir", str(tmp_path / "ok")]) == 0
    assert main(["run", "--tracking", paths["tracking"]]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["run", "--tracking", str(tmp_path / "missing.csv"), "--env", paths["env"],
                 "--groups", paths["groups"], "--out-dir", str(tmp_path / "bad")]) == 2
    empty_groups = tmp_path / "none.txt"
    empty_groups.write_text("900 2 901\n")
    assert main(["run", *args[:4], "--groups", str(empty_groups), "--out-dir", str(tmp_path / "fail")]) == 3
    doc = json.load(open(tmp_path / "fail" / "manifest.json"))
    assert {s["name"]: s["status"] for s in doc["stages"]}["score"] == "FAILED"
    assert main(["synth", "--out", str(tmp_path / "syn"), "--seed", "2"]) == 0
    assert main(["detect", "--scores", str(tmp_path / "x.csv"), "--bins", str(tmp_path / "y.csv"),
                 "--out", str(tmp_path / "a.csv")]) == 2


def test_cli_run_from_config_file(scenario, tmp_path):
    paths, _ = scenario
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"tracking": paths["tracking"], "env": paths["env"], "groups": paths["groups"],
                               "out_dir": str(tmp_path / "a"), "seed": 7}))
    assert main(["run", "--config", str(cfg), "--out-dir", str(tmp_path / "b")]) == 0
    assert os.path.exists(tmp_path / "b" / "manifest.json") and not os.path.exists(tmp_path / "a")
