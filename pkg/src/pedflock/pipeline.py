"""
End-to-end run: ingest -> bin -> features -> score -> detect -> analyze.

Every stage writes its artifacts into the output directory, so a run can be
resumed from any stage through the individual CLI subcommands. One seed
drives every random choice; each stage derives its own seed from it with a
fixed label.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import platform
import time
from dataclasses import dataclass, field
from typing import List, Optional

from pedflock import __version__
from pedflock.artifacts import (
    ensure_dir,
    write_assignments,
    write_bins,
    write_features,
    write_json,
    write_scores,
)
from pedflock.binning import bin_stats, prepare_bins
from pedflock.classifier import (
    DEFAULT_LR,
    PairScoreModel,
    build_training_set,
    evaluate,
    feature_metadata,
    import_external_scores,
    score_pairs,
    split_train_test,
    train_logistic,
)
from pedflock.flock import detect_flocks, flock_summary, validate_assignment
from pedflock.ingest import (
    InputError,
    annotation_asymmetries,
    annotation_pair_set,
    filter_to_boundary,
    parse_environment,
    parse_group_annotations,
    parse_tracking_csv,
    summarize_dataset,
)
from pedflock.metrics.report import AnalysisParams, analyze
from pedflock.pairfeat import features_for_bins
from pedflock.synth import default_scenario, generate_synthetic_scenario

log = logging.getLogger(__name__)

MODES = ("train", "load-model", "external-scores")


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def stage_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def synthetic_scenario(seed: int = 0, **layout):
    """Default corridor scenario; layout draws use ``seed``, positional noise its "synth" stage seed."""
    return generate_synthetic_scenario(default_scenario(seed=seed, **layout), seed=stage_seed(seed, "synth"))


@dataclass
class PipelineConfig:
    tracking: str = ""
    env: str = ""
    out_dir: str = "out"
    groups: Optional[str] = None
    interval_s: float = 60.0
    seq_len: int = 60
    rate_hz: float = 3.0
    threshold: float = 0.9
    seed: int = 0
    mode: str = "train"
    model: Optional[str] = None
    external_scores: Optional[str] = None
    lr: float = DEFAULT_LR
    max_epochs: int = 1000
    patience: int = 25
    train_ratio: float = 0.8
    d_enc_mm: float = 1500.0
    hysteresis_mm: float = 250.0
    window: int = 15
    cell_mm: float = 500.0

    def validate(self) -> None:
        problems = []
        if not self.tracking:
            problems.append("tracking path is required")
        if not self.env:
            problems.append("env path is required")
        if self.interval_s <= 0:
            problems.append("interval_s must be > 0")
        if self.seq_len < 2:
            problems.append("seq_len must be >= 2")
        if self.rate_hz <= 0:
            problems.append("rate_hz must be > 0")
        if not 0.0 <= self.threshold <= 1.0:
            problems.append("threshold must lie in [0, 1]")
        if self.mode not in MODES:
            problems.append(f"mode must be one of {MODES}")
        if self.mode == "train" and not self.groups:
            problems.append("mode 'train' needs a groups file")
        if self.mode == "load-model" and not self.model:
            problems.append("mode 'load-model' needs a model path")
        if self.mode == "external-scores" and not self.external_scores:
            problems.append("mode 'external-scores' needs a scores path")
        if not 0.0 < self.train_ratio < 1.0:
            problems.append("train_ratio must lie in (0, 1)")
        if self.lr <= 0 or self.max_epochs < 1 or self.patience < 1:
            problems.append("lr, max_epochs and patience must be positive")
        if self.d_enc_mm <= 0 or self.hysteresis_mm < 0 or self.window < 1 or self.cell_mm <= 0:
            problems.append("metric parameters out of range")
        if problems:
            raise ValueError("; ".join(problems))

    @classmethod
    def from_file(cls, path, **overrides) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known - {"schema"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        doc.pop("schema", None)
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**doc)


@dataclass
class StageRecord:
    name: str
    status: str = "PENDING"
    duration_s: float = 0.0
    counts: dict = field(default_factory=dict)
    error: Optional[str] = None


@dataclass
class RunManifest:
    config: dict
    version: str = __version__
    stages: List[StageRecord] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    complete: bool = False
    total_s: float = 0.0
    started_at: float = 0.0

    def stage(self, name: str) -> StageRecord:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)

    def to_json(self) -> dict:
        return {
            "schema": "pedflock-manifest/1",
            "version": self.version,
            "python": platform.python_version(),
            "config": self.config,
            "complete": self.complete,
            "started_at_unix": self.started_at,
            "total_s": self.total_s,
            "stages": [dataclasses.asdict(s) for s in self.stages],
            "warnings": self.warnings,
        }


STAGES = ("ingest", "bin", "features", "score", "detect", "analyze")


class _WarningCollector(logging.Handler):
    def __init__(self, sink: List[str]):
        super().__init__(logging.WARNING)
        self.sink = sink

    def emit(self, record):
        self.sink.append(f"{record.name}: {record.getMessage()}")


def run_pipeline(config: PipelineConfig) -> RunManifest:
    """Execute every stage in order and write ``manifest.json`` into ``out_dir``.

    On failure the manifest marks the failing stage FAILED, keeps whatever
    earlier stages produced, and :class:`StageError` is raised.
    """
    config.validate()
    out = config.out_dir
    ensure_dir(out)
    manifest = RunManifest(config=dataclasses.asdict(config), started_at=time.time())
    manifest.stages = [StageRecord(n) for n in STAGES]
    collector = _WarningCollector(manifest.warnings)
    pkg_log = logging.getLogger("pedflock")
    pkg_log.addHandler(collector)
    t_run = time.perf_counter()
    state: dict = {}

    def run_stage(name, fn):
        rec = manifest.stage(name)
        rec.status = "RUNNING"
        t0 = time.perf_counter()
        try:
            rec.counts = fn() or {}
        except Exception as exc:
            rec.status = "FAILED"
            rec.error = f"{type(exc).__name__}: {exc}"
            raise StageError(name, exc) from exc
        finally:
            rec.duration_s = time.perf_counter() - t0
        rec.status = "OK"

    def ingest():
        trajectories, pstats = parse_tracking_csv(config.tracking)
        geometry = parse_environment(config.env)
        if not trajectories:
            raise InputError("no valid tracking records")
        trajectories, fstats = filter_to_boundary(trajectories, geometry)
        if not trajectories:
            raise InputError("no tracking records inside the environment boundary")
        summary = summarize_dataset(trajectories)
        write_json(os.path.join(out, "summary.json"), summary.to_json())
        state.update(trajectories=trajectories, geometry=geometry)
        counts = {
            "rows": pstats.rows, "records_parsed": pstats.records, "malformed_rows": pstats.malformed,
            "duplicate_timestamps": pstats.duplicates, "points_outside_boundary": fstats.points_removed,
            "trajectories_outside_boundary": fstats.trajectories_dropped,
            "agents": summary.agents, "records": summary.total_records,
        }
        if config.groups:
            annotations = parse_group_annotations(config.groups)
            asym = annotation_asymmetries(annotations)
            if asym:
                log.warning("%d non-reciprocal group annotations", len(asym))
            state["annotation_pairs"] = annotation_pair_set(annotations)
            counts.update(annotations=len(annotations), annotated_pairs=len(state["annotation_pairs"]))
        return counts

    def binning():
        interval_ms = int(round(config.interval_s * 1000))
        bins = prepare_bins(state["trajectories"], interval_ms, config.seq_len, config.rate_hz)
        stats = bin_stats(bins)
        write_bins(os.path.join(out, "bins.csv"), bins, interval_ms, config.rate_hz, config.seq_len)
        write_json(os.path.join(out, "bin_stats.json"), stats.to_json())
        state.update(bins=bins, interval_ms=interval_ms)
        return {"bins": stats.bins, "nonempty_bins": stats.nonempty_bins, "agents": stats.total_agents}

    def features():
        skipped: list = []
        records = features_for_bins(state["bins"], skipped)
        for b, a, c, why in skipped:
            log.warning("bin %d pair (%d, %d) skipped: %s", b, a, c, why)
        write_features(os.path.join(out, "features.csv"), records,
                       rate_hz=config.rate_hz, seq_len=config.seq_len)
        state["records"] = records
        enumerated = sum(len(b.windows) * (len(b.windows) - 1) // 2 for b in state["bins"])
        return {"pairs_enumerated": enumerated, "pairs": len(records), "pairs_skipped": len(skipped)}

    def score():
        records = state["records"]
        counts = {}
        if config.mode == "external-scores":
            scores = import_external_scores(config.external_scores)
            known = {(r.bin_index, r.pid_a, r.pid_b) for r in records}
            extra = [s for s in scores if (s.bin_index, s.pid_a, s.pid_b) not in known]
            if extra:
                log.warning("%d external scores refer to pairs not enumerated here; ignored", len(extra))
            scores = [s for s in scores if (s.bin_index, s.pid_a, s.pid_b) in known]
        else:
            if config.mode == "train":
                dataset = build_training_set(records, state["annotation_pairs"],
                                             stage_seed(config.seed, "negatives"))
                train, test = split_train_test(dataset, config.train_ratio, stage_seed(config.seed, "split"))
                model = train_logistic(
                    train, lr=config.lr, max_epochs=config.max_epochs, patience=config.patience,
                    seed=stage_seed(config.seed, "train"),
                    metadata=feature_metadata(config.rate_hz, config.seq_len),
                )
                model.save(os.path.join(out, "model.json"))
                report = {"schema": "pedflock-training/1", "samples": len(dataset),
                          "train": len(train), "test": len(test)}
                report["test_metrics"] = evaluate(model, test) if test else None
                report["train_metrics"] = evaluate(model, train)
                write_json(os.path.join(out, "training.json"), report)
                counts.update(samples=len(dataset), train=len(train), test=len(test))
            else:
                model = PairScoreModel.load(config.model)
                want = feature_metadata(config.rate_hz, config.seq_len)
                got = {k: model.metadata.get(k) for k in want}
                if got != want:
                    log.warning("model feature convention %s differs from this run %s", got, want)
            scores = score_pairs(model, records)
        write_scores(os.path.join(out, "scores.csv"), scores)
        state["scores"] = scores
        counts["scores"] = len(scores)
        return counts

    def detect():
        t0 = time.perf_counter()
        members = {b.bin_index: b.pids for b in state["bins"] if b.windows}
        assignments = detect_flocks(members, state["scores"], config.threshold)
        runtime = time.perf_counter() - t0
        write_assignments(os.path.join(out, "assignments.csv"), assignments)
        summary = flock_summary(assignments)
        write_json(os.path.join(out, "flock_summary.json"), {
            k: v for k, v in summary.to_json().items() if k != "runtime_s"
        })
        state["assignments"] = assignments
        counts = {"agents": summary.total_agents, "flock_agents": summary.flock_agents,
                  "flocks": summary.flocks, "flock_percent": summary.flock_percent,
                  "detection_runtime_s": runtime}
        if "annotation_pairs" in state:
            validation = validate_assignment(assignments, state["annotation_pairs"])
            write_json(os.path.join(out, "validation.json"), {"schema": "pedflock-validation/1", **validation})
            counts["pair_f1"] = validation["pair_f1"]
        return counts

    def analysis():
        params = AnalysisParams(config.d_enc_mm, config.hysteresis_mm, config.window, config.cell_mm,
                                stage_seed(config.seed, "sec"))
        return analyze(state["bins"], state["assignments"], state["geometry"],
                       os.path.join(out, "analysis"), params, state["interval_ms"])

    try:
        for name, fn in zip(STAGES, (ingest, binning, features, score, detect, analysis)):
            run_stage(name, fn)
        manifest.complete = True
    finally:
        pkg_log.removeHandler(collector)
        manifest.total_s = time.perf_counter() - t_run
        write_json(os.path.join(out, "manifest.json"), manifest.to_json())
    return manifest
