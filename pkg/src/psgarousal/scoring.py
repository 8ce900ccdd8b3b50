"""Sample-wise arousal probabilities, ``.vec`` files and gross AUPRC/AUROC."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .classifier import ModelDatabase
from .epoching import EPOCH_SECONDS, TEST_OVERLAP, segment_test
from .features import EpochFeatureExtractor
from .record import Record


class VecFormatError(ValueError):
    pass


class UnscorableError(ValueError):
    """Pooled labels contain a single class, so the metrics are undefined."""


def fuse_spans(n_samples: int, spans: Sequence, probs: Sequence[float]) -> np.ndarray:
    """Per-sample mean of the probabilities of every span covering the sample.

    Samples whose covering spans all agree get that value exactly.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if len(spans) != probs.shape[0]:
        raise ValueError("one probability per span is required")
    total = np.zeros(n_samples)
    count = np.zeros(n_samples, dtype=np.int64)
    lo = np.full(n_samples, np.inf)
    hi = np.full(n_samples, -np.inf)
    for (s, e), p in zip(spans, probs):
        total[s:e] += p
        count[s:e] += 1
        np.minimum(lo[s:e], p, out=lo[s:e])
        np.maximum(hi[s:e], p, out=hi[s:e])
    if np.any(count == 0):
        raise ValueError("spans leave samples uncovered")
    mean = np.clip(total / count, lo, hi)
    return np.where(lo == hi, lo, mean)


def predict_record(
    record: Record,
    db: ModelDatabase,
    extractor: EpochFeatureExtractor | None = None,
    epoch_s: float = EPOCH_SECONDS,
    overlap: float = TEST_OVERLAP,
) -> np.ndarray:
    """Arousal probability for every sample of `record`, averaged over all models in `db`."""
    if len(db) == 0:
        raise ValueError("model database is empty")
    extractor = extractor or EpochFeatureExtractor(fs=record.fs)
    spans = segment_test(record.n_samples, record.fs, epoch_s, overlap)
    X = extractor.transform_record(record, spans)
    return fuse_spans(record.n_samples, spans, db.predict_proba(X))


# ---------------------------------------------------------------- .vec I/O


def write_vec(probs, path) -> Path:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or not np.all((probs >= 0) & (probs <= 1)):
        raise VecFormatError("probabilities must be a 1-D vector within [0, 1]")
    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        fh.write("".join(f"{p:.3f}\n" for p in probs))
    return path


def read_vec(path) -> np.ndarray:
    path = Path(path)
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            try:
                v = float(text)
            except ValueError:
                raise VecFormatError(f"{path}:{lineno}: malformed probability {text!r}") from None
            if not 0.0 <= v <= 1.0:
                raise VecFormatError(f"{path}:{lineno}: probability {text} outside [0, 1]")
            out.append(v)
    return np.array(out, dtype=np.float64)


# ----------------------------------------------------------------- metrics


def _prepare(probs, labels) -> tuple[np.ndarray, np.ndarray]:
    probs = np.asarray(probs, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if probs.shape != labels.shape:
        raise ValueError(f"length mismatch: {probs.shape[0]} scores vs {labels.shape[0]} labels")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1 (drop undefined samples first)")
    n_pos = int(np.count_nonzero(labels == 1))
    if n_pos == 0 or n_pos == labels.shape[0]:
        raise UnscorableError("metric undefined: labels contain a single class")
    return probs, labels.astype(np.int64)


def _tie_groups(probs: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Positives and negatives per distinct score, scores descending."""
    order = np.argsort(-probs, kind="stable")
    s, y = probs[order], labels[order]
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    pos = np.add.reduceat(y, starts)
    size = np.diff(np.r_[starts, s.shape[0]])
    return pos, size - pos


def auprc(probs, labels) -> float:
    """Average precision: sum over score thresholds of recall gain times precision."""
    probs, labels = _prepare(probs, labels)
    pos, neg = _tie_groups(probs, labels)
    tp = np.cumsum(pos)
    pp = np.cumsum(pos + neg)
    return float(np.sum(pos / tp[-1] * (tp / pp)))


def auroc(probs, labels) -> float:
    """Mann-Whitney AUC: (concordant + 0.5 * tied pairs) / (n_pos * n_neg)."""
    probs, labels = _prepare(probs, labels)
    pos, neg = _tie_groups(probs, labels)
    # negatives strictly below each group, scanning from the lowest score up
    neg_below = np.cumsum(neg[::-1])[::-1] - neg
    concordant = int(np.dot(pos, neg_below))
    tied = int(np.dot(pos, neg))
    n_pos, n_neg = int(pos.sum()), int(neg.sum())
    return (concordant + 0.5 * tied) / (n_pos * n_neg)


@dataclass(frozen=True)
class ScoreReport:
    auprc: float
    auroc: float
    n_scored_samples: int
    n_excluded_samples: int
    prevalence: float

    def line(self) -> str:
        return (
            f"AUROC={self.auroc:.3f} AUPRC={self.auprc:.3f} "
            f"scored={self.n_scored_samples} excluded={self.n_excluded_samples}"
        )


def gross_score(pairs: Iterable[tuple[np.ndarray, np.ndarray]]) -> ScoreReport:
    """Pool all records' samples, drop undefined (-1) ones, score the remainder."""
    scores, labels = [], []
    n_excluded = 0
    for k, (probs, ann) in enumerate(pairs):
        probs = np.asarray(probs, dtype=np.float64)
        ann = np.asarray(ann)
        if probs.shape != ann.shape:
            raise ValueError(f"pair {k}: {probs.shape[0]} probabilities vs {ann.shape[0]} annotations")
        keep = ann != -1
        n_excluded += int(np.count_nonzero(~keep))
        scores.append(probs[keep])
        labels.append(ann[keep])
    s = np.concatenate(scores) if scores else np.empty(0)
    y = np.concatenate(labels) if labels else np.empty(0, dtype=np.int8)
    if s.size == 0:
        raise UnscorableError("no scorable samples")
    return ScoreReport(
        auprc=auprc(s, y),
        auroc=auroc(s, y),
        n_scored_samples=int(s.size),
        n_excluded_samples=n_excluded,
        prevalence=float(np.mean(y == 1)),
    )
