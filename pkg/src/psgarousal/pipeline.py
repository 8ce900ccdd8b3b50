"""Directory-level training and prediction with a process pool.

Every record is handled independently and results are gathered in sorted
subject order, so outputs do not depend on the number of workers.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .classifier import ModelDatabase, Skipped, SubjectModel, build_db, train_subject
from .config import PipelineConfig
from .features import EpochFeatureExtractor
from .record import RecordError, list_record_dirs, read_record
from .scoring import predict_record, write_vec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Failed:
    path: str
    reason: str


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _train_one(args) -> SubjectModel | Skipped | Failed:
    path, cfg = args
    try:
        record = read_record(path)
    except (RecordError, OSError) as exc:
        return Failed(str(path), str(exc))
    extractor = EpochFeatureExtractor.from_config(cfg.feature_config, fs=record.fs)
    try:
        return train_subject(record, cfg.train_params, extractor, cfg.epoch_seconds)
    except ValueError as exc:
        return Failed(str(path), str(exc))


def train_directory(data_dir, cfg: PipelineConfig) -> tuple[ModelDatabase, list]:
    """Train one model per qualifying record under `data_dir`."""
    dirs = list_record_dirs(data_dir)
    results = _map(_train_one, [(d, cfg) for d in dirs], cfg.workers)
    extractor = EpochFeatureExtractor.from_config(cfg.feature_config)
    return build_db(results, extractor), results


def _predict_one(args) -> tuple[str, np.ndarray] | Failed:
    path, db, cfg = args
    try:
        record = read_record(path)
    except (RecordError, OSError) as exc:
        return Failed(str(path), str(exc))
    extractor = EpochFeatureExtractor.from_config(cfg.feature_config, fs=record.fs)
    try:
        probs = predict_record(record, db, extractor, cfg.epoch_seconds, cfg.test_overlap)
    except ValueError as exc:
        return Failed(str(path), str(exc))
    return record.subject_id, probs


def predict_directory(data_dir, db: ModelDatabase, out_dir, cfg: PipelineConfig) -> list:
    """Write ``<subject>.vec`` under `out_dir` for every record in `data_dir`."""
    dirs = list_record_dirs(data_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = _map(_predict_one, [(d, db, cfg) for d in dirs], cfg.workers)
    for res in results:
        if isinstance(res, Failed):
            continue
        sid, probs = res
        write_vec(probs, out_dir / f"{sid}.vec")
    return results
