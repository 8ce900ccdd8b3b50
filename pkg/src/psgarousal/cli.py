"""Command-line entry point: synth, features, train, predict, score.

Exit codes: 0 success, 1 runtime failure, 2 unscorable pool, 64 usage error.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .classifier import ModelFormatError, SchemaMismatchError, Skipped, SubjectModel, hash64, load_db, save_db
from .config import ConfigError, load_config
from .epoching import segment_train
from .features import FEATURE_NAMES, EpochFeatureExtractor
from .pipeline import Failed, predict_directory, train_directory
from .record import RecordError, list_record_dirs, read_record, write_record
from .scoring import UnscorableError, VecFormatError, gross_score, read_vec
from .synth import SynthParams, synth_record

EXIT_OK, EXIT_FAIL, EXIT_UNSCORABLE, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


# Flags that map onto PipelineConfig keys.
_CONFIG_FLAGS = {
    "epoch_seconds": ("--epoch-seconds", float),
    "test_overlap": ("--test-overlap", float),
    "trees": ("--trees", int),
    "max_depth": ("--max-depth", int),
    "min_leaf": ("--min-leaf", int),
    "seed": ("--seed", int),
    "wamp_threshold_factor": ("--wamp-threshold-factor", float),
    "eog_smooth_window": ("--eog-smooth-window", int),
    "airflow_smooth_window": ("--airflow-smooth-window", int),
    "xcorr_max_lag_s": ("--xcorr-max-lag-s", float),
}


def _threads(raw: str) -> int:
    if raw == "auto":
        return 0
    try:
        value = int(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid thread count {raw!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("thread count must be >= 1 or 'auto'")
    return value


def _add_config_flags(p: argparse.ArgumentParser, keys) -> None:
    p.add_argument("--config", type=Path, help="key=value config file; flags take precedence")
    for key in keys:
        flag, kind = _CONFIG_FLAGS[key]
        p.add_argument(flag, dest=key, type=kind, default=None)
    p.add_argument("--threads", type=_threads, default=None, help="worker count or 'auto'")


def _config(args, keys):
    overrides = {k: getattr(args, k) for k in keys}
    overrides["threads"] = args.threads
    try:
        return load_config(args.config, **overrides)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    if args.subjects < 1:
        raise UsageError("--subjects must be >= 1")
    if args.split is not None and not 0 < args.split < 1:
        raise UsageError("--split must be in (0, 1)")
    out = Path(args.out)
    ids = [f"s{i:04d}" for i in range(1, args.subjects + 1)]
    dest = {sid: out for sid in ids}
    if args.split is not None:
        n_train = int(round(args.split * len(ids)))
        perm = np.random.default_rng(args.seed).permutation(len(ids))
        train_ids = {ids[i] for i in perm[:n_train]}
        dest = {sid: out / ("train" if sid in train_ids else "test") for sid in ids}
    try:
        for sid in ids:
            params = SynthParams(
                duration_s=args.duration,
                arousal_rate=args.arousal_rate,
                arousal_duration_s=args.arousal_duration,
                signature_strength=args.signature_strength,
                undefined_margin_s=args.undefined_margin,
                seed=hash64(args.seed, sid),
            )
            record = synth_record(params, sid)
            write_record(record, dest[sid])
            part = f" {dest[sid].name}" if args.split is not None else ""
            print(f"{sid} duration_s={record.duration_s:g} arousal_samples={int(np.count_nonzero(record.annotations == 1))}{part}")
    except ValueError as exc:
        _err(f"synth: {exc}")
        return EXIT_FAIL
    except OSError as exc:
        _err(f"synth: {exc}")
        return EXIT_FAIL
    return EXIT_OK


_FEATURE_KEYS = ("epoch_seconds", "wamp_threshold_factor", "eog_smooth_window", "airflow_smooth_window", "xcorr_max_lag_s")


def cmd_features(args) -> int:
    cfg = _config(args, _FEATURE_KEYS)
    try:
        record = read_record(args.record)
        spans = segment_train(record.n_samples, record.fs, cfg.epoch_seconds)
        X = EpochFeatureExtractor.from_config(cfg.feature_config, fs=record.fs).transform_record(record, spans)
    except (RecordError, ValueError, OSError) as exc:
        _err(f"features: {exc}")
        return EXIT_FAIL
    try:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("epoch_start_s",) + FEATURE_NAMES)
            for span, row in zip(spans, X):
                w.writerow([repr(span.start / record.fs)] + [repr(float(v)) for v in row])
    except OSError as exc:
        _err(f"features: {exc}")
        return EXIT_FAIL
    return EXIT_OK


_TRAIN_KEYS = ("epoch_seconds", "trees", "max_depth", "min_leaf", "seed", *_FEATURE_KEYS[1:])


def cmd_train(args) -> int:
    cfg = _config(args, _TRAIN_KEYS)
    try:
        if not list_record_dirs(args.data):
            _err(f"train: no records found in {args.data}")
            return EXIT_FAIL
        db, results = train_directory(args.data, cfg)
    except (RecordError, OSError) as exc:
        _err(f"train: {exc}")
        return EXIT_FAIL
    for res in results:
        if isinstance(res, SubjectModel):
            n_neg, n_pos = res.class_counts
            print(f"{res.subject_id} trained epochs={res.n_epochs_train} arousal={n_pos} non_arousal={n_neg}")
        elif isinstance(res, Skipped):
            print(f"{res.subject_id} skipped({res.reason})")
        else:
            _err(f"warning: {res.path}: {res.reason}")
    if len(db) == 0:
        _err("train: no subject had both arousal and non-arousal epochs; nothing written")
        return EXIT_FAIL
    try:
        save_db(db, args.models_out)
    except OSError as exc:
        _err(f"train: {exc}")
        return EXIT_FAIL
    print(f"models={len(db)} written to {args.models_out}")
    return EXIT_OK


_PREDICT_KEYS = ("epoch_seconds", "test_overlap", *_FEATURE_KEYS[1:])


def cmd_predict(args) -> int:
    cfg = _config(args, _PREDICT_KEYS)
    expected = EpochFeatureExtractor.from_config(cfg.feature_config).schema_hash
    try:
        db = load_db(args.models, expected_hash=expected)
    except SchemaMismatchError as exc:
        _err(f"predict: refusing model database: {exc}")
        return EXIT_FAIL
    except (ModelFormatError, OSError) as exc:
        _err(f"predict: cannot load {args.models}: {exc}")
        return EXIT_FAIL
    if len(db) == 0:
        _err("predict: model database is empty")
        return EXIT_FAIL
    try:
        results = predict_directory(args.data, db, args.out, cfg)
    except (RecordError, OSError) as exc:
        _err(f"predict: {exc}")
        return EXIT_FAIL
    written = 0
    for res in results:
        if isinstance(res, Failed):
            _err(f"warning: skipped {res.path}: {res.reason}")
        else:
            written += 1
            print(f"{res[0]} samples={res[1].shape[0]}")
    return EXIT_OK if written else EXIT_FAIL


def cmd_score(args) -> int:
    pairs = []
    try:
        for path in list_record_dirs(args.ref):
            record = read_record(path)
            vec_path = Path(args.pred) / f"{record.subject_id}.vec"
            if not vec_path.is_file():
                _err(f"score: missing prediction {vec_path}")
                return EXIT_FAIL
            probs = read_vec(vec_path)
            if probs.shape[0] != record.n_samples:
                _err(f"score: {vec_path} has {probs.shape[0]} lines, record has {record.n_samples} samples")
                return EXIT_FAIL
            pairs.append((probs, record.annotations))
    except (RecordError, VecFormatError, OSError) as exc:
        _err(f"score: {exc}")
        return EXIT_FAIL
    if not pairs:
        _err(f"score: no records found in {args.ref}")
        return EXIT_FAIL
    try:
        report = gross_score(pairs)
    except UnscorableError as exc:
        _err(f"score: {exc}")
        return EXIT_UNSCORABLE
    print(report.line())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="psgarousal", description="Sleep arousal detection pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic records")
    p.add_argument("--subjects", type=int, required=True)
    p.add_argument("--duration", type=float, default=3600.0, help="seconds per record")
    p.add_argument("--arousal-rate", type=float, default=18.0, help="events per hour")
    p.add_argument("--arousal-duration", type=float, default=20.0, help="mean event length, s")
    p.add_argument("--signature-strength", type=float, default=1.0)
    p.add_argument("--undefined-margin", type=float, default=2.0, help="undefined seconds around events")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", type=float, default=None, help="train fraction; writes OUT/train and OUT/test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="dump per-epoch features as CSV")
    p.add_argument("--record", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p, _FEATURE_KEYS)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train the subject model database")
    p.add_argument("--data", required=True)
    p.add_argument("--models-out", required=True)
    _add_config_flags(p, _TRAIN_KEYS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write sample-wise .vec predictions")
    p.add_argument("--data", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p, _PREDICT_KEYS)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("score", help="gross AUROC/AUPRC of .vec predictions")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.set_defaults(func=cmd_score)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        _err(f"{parser.prog} {args.command}: error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
