"""30-second epoch segmentation and majority-vote epoch labels."""
from __future__ import annotations

import enum
from typing import NamedTuple

import numpy as np

from .record import Record

EPOCH_SECONDS = 30.0
TEST_OVERLAP = 0.5


class Label(enum.IntEnum):
    EXCLUDED = -1
    NON_AROUSAL = 0
    AROUSAL = 1


class EpochSpan(NamedTuple):
    """Half-open sample interval ``[start, end)``."""

    start: int
    end: int

    def __len__(self) -> int:
        return self.end - self.start

    def slice(self) -> slice:
        return slice(self.start, self.end)


class LabeledEpoch(NamedTuple):
    span: EpochSpan
    label: Label


def epoch_len_samples(fs: float, epoch_s: float = EPOCH_SECONDS) -> int:
    n = int(round(fs * epoch_s))
    if n < 1:
        raise ValueError(f"epoch of {epoch_s} s at {fs} Hz has no samples")
    return n


def _check_len(record_len: int, width: int) -> None:
    if record_len < width:
        raise ValueError(f"record of {record_len} samples is shorter than one epoch ({width} samples)")


def segment_train(record_len: int, fs: float, epoch_s: float = EPOCH_SECONDS) -> list[EpochSpan]:
    """Non-overlapping epochs from sample 0; a trailing partial window is dropped."""
    width = epoch_len_samples(fs, epoch_s)
    _check_len(record_len, width)
    return [EpochSpan(s, s + width) for s in range(0, record_len - width + 1, width)]


def segment_test(
    record_len: int, fs: float, epoch_s: float = EPOCH_SECONDS, overlap: float = TEST_OVERLAP
) -> list[EpochSpan]:
    """Overlapping epochs covering every sample of the record.

    Starts step by ``width * (1 - overlap)``. When the last regular window
    stops short of the record end, one more window anchored at the end is added.
    """
    if not 0.0 <= overlap < 1.0:
        raise ValueError(f"overlap must be in [0, 1), got {overlap}")
    width = epoch_len_samples(fs, epoch_s)
    _check_len(record_len, width)
    step = max(1, int(round(width * (1.0 - overlap))))
    spans = [EpochSpan(s, s + width) for s in range(0, record_len - width + 1, step)]
    if spans[-1].end < record_len:
        spans.append(EpochSpan(record_len - width, record_len))
    return spans


def majority_label(ann, epoch_len: int | None = None) -> Label:
    """Label of one epoch from its sample annotations.

    All-undefined epochs are excluded. Otherwise undefined samples can never
    win: the label is whichever of arousal/non-arousal is more frequent, with
    ties going to arousal.
    """
    ann = np.asarray(ann)
    if ann.ndim != 1 or ann.size == 0:
        raise ValueError("annotation slice must be a non-empty 1-D array")
    if epoch_len is not None and ann.size != epoch_len:
        raise ValueError(f"annotation slice has {ann.size} samples, expected {epoch_len}")
    n_pos = int(np.count_nonzero(ann == 1))
    n_neg = int(np.count_nonzero(ann == 0))
    if n_pos + n_neg == 0:
        return Label.EXCLUDED
    return Label.AROUSAL if n_pos >= n_neg else Label.NON_AROUSAL


def labeled_epochs(record: Record, epoch_s: float = EPOCH_SECONDS) -> list[LabeledEpoch]:
    width = epoch_len_samples(record.fs, epoch_s)
    out = []
    for span in segment_train(record.n_samples, record.fs, epoch_s):
        label = majority_label(record.annotations[span.slice()], width)
        if label is not Label.EXCLUDED:
            out.append(LabeledEpoch(span, label))
    return out
