"""Command-line entry point: ``pedflock <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 input error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

from pedflock import __version__
from pedflock.artifacts import (
    ensure_dir,
    read_assignments,
    read_bins,
    read_features,
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
    write_tracking_csv,
)
from pedflock.metrics.report import AnalysisParams, analyze
from pedflock.pairfeat import features_for_bins
from pedflock.pipeline import PipelineConfig, StageError, run_pipeline, stage_seed, synthetic_scenario

log = logging.getLogger("pedflock.cli")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_STAGE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_groups(path):
    return annotation_pair_set(parse_group_annotations(path))


def cmd_synth(args):
    ensure_dir(args.out)
    sc = synthetic_scenario(args.seed, n_pairs=args.pairs, n_singles=args.singles,
                            offset_mm=args.offset_mm, noise_mm=args.noise_mm)
    with open(os.path.join(args.out, "tracking.csv"), "w", encoding="utf-8") as fh:
        fh.write(sc.tracking_csv)
    with open(os.path.join(args.out, "groups.txt"), "w", encoding="utf-8") as fh:
        fh.write(sc.groups_txt)
    write_json(os.path.join(args.out, "env.json"), sc.geometry)
    print(f"wrote {sc.n_records} records for {args.pairs * 2 + args.singles} agents to {args.out}")


def _parent(path):
    d = os.path.dirname(os.path.abspath(path))
    ensure_dir(d)
    return path


def cmd_ingest(args):
    trajectories, pstats = parse_tracking_csv(args.tracking)
    if args.env:
        trajectories, fstats = filter_to_boundary(trajectories, parse_environment(args.env))
    if not trajectories:
        raise InputError("no valid tracking records")
    summary = summarize_dataset(trajectories)
    doc = summary.to_json()
    doc["malformed_rows"] = pstats.malformed
    doc["duplicate_timestamps"] = pstats.duplicates
    if args.env:
        doc["points_outside_boundary"] = fstats.points_removed
    if args.groups:
        annotations = parse_group_annotations(args.groups)
        doc["annotations"] = len(annotations)
        doc["annotated_pairs"] = len(annotation_pair_set(annotations))
        doc["non_reciprocal_annotations"] = [list(p) for p in annotation_asymmetries(annotations)]
    if args.summary_out:
        write_json(_parent(args.summary_out), doc)
    if args.clean_out:
        with open(_parent(args.clean_out), "w", encoding="utf-8") as fh:
            write_tracking_csv(trajectories, fh)
    print(f"{summary.agents} agents, {summary.total_records} records "
          f"({pstats.malformed} malformed rows, {pstats.duplicates} duplicate timestamps)")


def cmd_bin(args):
    trajectories, _ = parse_tracking_csv(args.tracking)
    if args.env:
        trajectories, _ = filter_to_boundary(trajectories, parse_environment(args.env))
    if not trajectories:
        raise InputError("no valid tracking records")
    interval_ms = int(round(args.interval_s * 1000))
    bins = prepare_bins(trajectories, interval_ms, args.seq_len, args.rate_hz)
    write_bins(_parent(args.out), bins, interval_ms, args.rate_hz, args.seq_len)
    stats = bin_stats(bins)
    if args.stats_out:
        write_json(_parent(args.stats_out), stats.to_json())
    print(f"{stats.total_agents} agent windows in {stats.nonempty_bins}/{stats.bins} bins")


def cmd_features(args):
    bins, params = read_bins(args.bins)
    skipped: list = []
    records = features_for_bins(bins, skipped)
    for b, a, c, why in skipped:
        log.warning("bin %d pair (%d, %d) skipped: %s", b, a, c, why)
    write_features(_parent(args.out), records, rate_hz=params["rate_hz"], seq_len=params["seq_len"])
    print(f"{len(records)} pairs")


def cmd_train(args):
    records, meta = read_features(args.features)
    dataset = build_training_set(records, _load_groups(args.labels_from), stage_seed(args.seed, "negatives"))
    train, test = split_train_test(dataset, args.train_ratio, stage_seed(args.seed, "split"))
    model = train_logistic(train, lr=args.lr, max_epochs=args.max_epochs, patience=args.patience,
                           seed=stage_seed(args.seed, "train"),
                           metadata=feature_metadata(float(meta.get("rate_hz", 3.0)), int(meta.get("seq_len", 60))))
    model.save(_parent(args.model_out))
    report = {"schema": "pedflock-training/1", "samples": len(dataset), "train": len(train), "test": len(test),
              "train_metrics": evaluate(model, train), "test_metrics": evaluate(model, test) if test else None}
    if args.report_out:
        write_json(_parent(args.report_out), report)
    print(json.dumps(report["test_metrics"] or report["train_metrics"], sort_keys=True))


def cmd_score(args):
    records, _ = read_features(args.features)
    if args.external:
        scores = import_external_scores(args.external)
    else:
        scores = score_pairs(PairScoreModel.load(args.model), records)
    write_scores(_parent(args.out), scores)
    print(f"{len(scores)} scores")


def cmd_detect(args):
    bins, _ = read_bins(args.bins)
    scores = import_external_scores(args.scores)
    members = {b.bin_index: b.pids for b in bins if b.windows}
    t0 = time.perf_counter()
    assignments = detect_flocks(members, scores, args.threshold)
    runtime = time.perf_counter() - t0
    write_assignments(_parent(args.out), assignments)
    summary = flock_summary(assignments, runtime)
    if args.summary_out:
        doc = summary.to_json()
        doc.pop("runtime_s")
        write_json(_parent(args.summary_out), doc)
    pct = "n/a" if summary.flock_percent is None else f"{summary.flock_percent:.2f}%"
    line = (f"{summary.flock_agents} of {summary.total_agents} agents in flocks ({pct}), "
            f"{summary.flocks} flocks, {runtime:.3f} s")
    if args.groups:
        validation = validate_assignment(assignments, _load_groups(args.groups))
        if args.validation_out:
            write_json(_parent(args.validation_out), {"schema": "pedflock-validation/1", **validation})
        line += f", pair F1 {validation['pair_f1']:.3f}"
    print(line)


def cmd_analyze(args):
    bins, params = read_bins(args.bins)
    assignments = read_assignments(args.assignments)
    geometry = parse_environment(args.env)
    ap = AnalysisParams(args.d_enc, args.hysteresis, args.window, args.cell_mm, stage_seed(args.seed, "sec"))
    counts = analyze(bins, assignments, geometry, args.out_dir, ap, params["interval_ms"])
    print(f"{counts['events']} encounters")


_RUN_FLAGS = ("tracking", "env", "groups", "out_dir", "interval_s", "seq_len", "rate_hz", "threshold",
              "seed", "mode", "model", "external_scores", "lr", "max_epochs", "patience", "train_ratio",
              "d_enc_mm", "hysteresis_mm", "window", "cell_mm")


def cmd_run(args):
    overrides = {k: getattr(args, k) for k in _RUN_FLAGS}
    if args.config:
        cfg = PipelineConfig.from_file(args.config, **overrides)
    else:
        cfg = PipelineConfig(**{k: v for k, v in overrides.items() if v is not None})
    try:
        cfg.validate()
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    manifest = run_pipeline(cfg)
    for s in manifest.stages:
        print(f"{s.name:<9} {s.status:<6} {s.duration_s:8.3f} s  {json.dumps(s.counts, sort_keys=True)}")


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pedflock", description="Group (flock) detection and interaction metrics for pedestrian trajectories.")
    p.add_argument("--version", action="version", version=f"pedflock {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic corridor scenario")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--pairs", type=int, default=8)
    s.add_argument("--singles", type=int, default=24)
    s.add_argument("--offset-mm", type=float, default=600.0)
    s.add_argument("--noise-mm", type=float, default=50.0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", help="parse, clean and summarize a tracking file")
    s.add_argument("--tracking", required=True)
    s.add_argument("--groups")
    s.add_argument("--env")
    s.add_argument("--summary-out")
    s.add_argument("--clean-out", help="write the parsed, boundary-filtered records as tracking CSV")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("bin", help="resample and split trajectories into time bins")
    s.add_argument("--tracking", required=True)
    s.add_argument("--env")
    s.add_argument("--out", required=True, help="bins CSV")
    s.add_argument("--interval-s", type=float, default=60.0)
    s.add_argument("--seq-len", type=int, default=60)
    s.add_argument("--rate-hz", type=float, default=3.0)
    s.add_argument("--stats-out")
    s.set_defaults(func=cmd_bin)

    s = sub.add_parser("features", help="pair features for every within-bin pair")
    s.add_argument("--bins", required=True)
    s.add_argument("--out", required=True, help="features CSV")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train", help="train the logistic pair scorer")
    s.add_argument("--features", required=True)
    s.add_argument("--labels-from", "--groups", dest="labels_from", required=True)
    s.add_argument("--model-out", required=True)
    s.add_argument("--report-out")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--lr", type=float, default=DEFAULT_LR)
    s.add_argument("--max-epochs", type=int, default=1000)
    s.add_argument("--patience", type=int, default=25)
    s.add_argument("--train-ratio", type=float, default=0.8)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("score", help="score pairs with a saved model or import external scores")
    s.add_argument("--features", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--model")
    g.add_argument("--external")
    s.add_argument("--out", required=True, help="scores CSV")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("detect", help="threshold scores and cluster flocks")
    s.add_argument("--scores", required=True)
    s.add_argument("--bins", required=True, help="bins CSV; defines who is eligible in each bin")
    s.add_argument("--threshold", type=float, default=0.9)
    s.add_argument("--out", required=True, help="assignments CSV")
    s.add_argument("--summary-out")
    s.add_argument("--groups")
    s.add_argument("--validation-out")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("analyze", help="spatial and encounter metrics")
    s.add_argument("--bins", required=True)
    s.add_argument("--assignments", required=True)
    s.add_argument("--env", required=True)
    s.add_argument("--out-dir", "--out", dest="out_dir", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--d-enc", "--d-enc-mm", dest="d_enc", type=float, default=1500.0)
    s.add_argument("--hysteresis", "--hysteresis-mm", dest="hysteresis", type=float, default=250.0)
    s.add_argument("--window", type=int, default=15)
    s.add_argument("--cell-mm", type=float, default=500.0)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("run", help="full pipeline from one configuration")
    s.add_argument("--config", help="JSON file with PipelineConfig fields; flags override it")
    s.add_argument("--tracking")
    s.add_argument("--env")
    s.add_argument("--groups")
    s.add_argument("--out-dir", "--out", dest="out_dir")
    s.add_argument("--interval-s", type=float)
    s.add_argument("--seq-len", type=int)
    s.add_argument("--rate-hz", type=float)
    s.add_argument("--threshold", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--mode", choices=("train", "load-model", "external-scores"))
    s.add_argument("--model")
    s.add_argument("--external-scores")
    s.add_argument("--lr", type=float)
    s.add_argument("--max-epochs", type=int)
    s.add_argument("--patience", type=int)
    s.add_argument("--train-ratio", type=float)
    s.add_argument("--d-enc", "--d-enc-mm", dest="d_enc_mm", type=float)
    s.add_argument("--hysteresis", "--hysteresis-mm", dest="hysteresis_mm", type=float)
    s.add_argument("--window", type=int)
    s.add_argument("--cell-mm", type=float)
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version or a usage error
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except _UsageError as exc:
        print(f"pedflock: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"pedflock: {exc}", file=sys.stderr)
        return EXIT_INPUT if isinstance(exc.cause, (InputError, OSError)) else EXIT_STAGE
    except (InputError, OSError) as exc:
        print(f"pedflock: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # anything else is a failure inside a stage
        print(f"pedflock: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
