from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psgarousal.epoching import (
    EpochSpan,
    Label,
    labeled_epochs,
    majority_label,
    segment_test,
    segment_train,
)
from psgarousal.record import Record


def recount_label(ann):
    """Oracle: plain counting, undefined never wins, 1-vs-0 ties to arousal."""
    c = Counter(int(v) for v in ann)
    if c[1] == 0 and c[0] == 0:
        return Label.EXCLUDED
    return Label.AROUSAL if c[1] >= c[0] else Label.NON_AROUSAL


def test_segment_train_exact():
    assert segment_train(18000, 200, 30) == [(0, 6000), (6000, 12000), (12000, 18000)]


def test_segment_train_drops_tail():
    spans = segment_train(20000, 200, 30)
    assert len(spans) == 3 and spans[-1] == EpochSpan(12000, 18000)


def test_segment_train_too_short():
    with pytest.raises(ValueError):
        segment_train(5999, 200, 30)


def test_segment_test_half_overlap():
    spans = segment_test(18000, 200, 30, 0.5)
    assert [s.start for s in spans] == [0, 3000, 6000, 9000, 12000]


def test_segment_test_end_anchor():
    spans = segment_test(19000, 200, 30, 0.5)
    assert len(spans) == 6
    assert spans[-1] == EpochSpan(13000, 19000)


def test_segment_test_single():
    assert segment_test(6000, 200, 30) == [EpochSpan(0, 6000)]
    with pytest.raises(ValueError):
        segment_test(5999, 200, 30)


@given(st.integers(6000, 60000))
@settings(max_examples=60, deadline=None)
def test_segment_test_covers(n):
    cover = np.zeros(n, dtype=int)
    for s in segment_test(n, 200, 30):
        assert len(s) == 6000 and 0 <= s.start < s.end <= n
        cover[s.start : s.end] += 1
    assert cover.min() >= 1


@given(st.integers(6000, 60000))
@settings(max_examples=60, deadline=None)
def test_segment_train_disjoint(n):
    spans = segment_train(n, 200, 30)
    cover = np.zeros(n, dtype=int)
    for s in spans:
        cover[s.start : s.end] += 1
    full = (n // 6000) * 6000
    assert np.all(cover[:full] == 1) and np.all(cover[full:] == 0)


def test_mostly_arousal_rest_undefined():
    ann = np.r_[np.ones(4200), -np.ones(1800)]
    assert majority_label(ann, 6000) is Label.AROUSAL


def test_all_undefined_excluded():
    assert majority_label(-np.ones(6000), 6000) is Label.EXCLUDED


def test_tie_goes_to_arousal():
    assert majority_label(np.r_[np.ones(3000), np.zeros(3000)]) is Label.AROUSAL


def test_undefined_plurality_falls_back():
    ann = np.r_[-np.ones(2400), np.ones(2100), np.zeros(1500)]
    assert majority_label(ann) is Label.AROUSAL
    ann = np.r_[-np.ones(2400), np.ones(1500), np.zeros(2100)]
    assert majority_label(ann) is Label.NON_AROUSAL


def test_wrong_slice_length():
    with pytest.raises(ValueError):
        majority_label(np.zeros(5999), 6000)


@given(st.lists(st.sampled_from([-1, 0, 1]), min_size=1, max_size=50), st.randoms())
def test_permutation_invariant(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert majority_label(np.array(values)) is majority_label(np.array(shuffled))


def _record_with(ann):
    n = len(ann)
    from psgarousal.features import FEATURE_ROLES

    return Record("e", {r: np.zeros(n) for r in FEATURE_ROLES}, ann)


def test_alternating_blocks():
    ann = np.concatenate([np.full(6000, i % 2) for i in range(6)])
    labels = [e.label for e in labeled_epochs(_record_with(ann))]
    assert labels == [Label.NON_AROUSAL, Label.AROUSAL] * 3


def test_one_undefined_epoch_dropped():
    ann = np.zeros(60000, dtype=np.int8)
    ann[24000:30000] = -1
    eps = labeled_epochs(_record_with(ann))
    assert len(eps) == 9
    assert EpochSpan(24000, 30000) not in [e.span for e in eps]


def test_synth_labels_match_recount(short_record):
    eps = labeled_epochs(short_record)
    ann = short_record.annotations
    expected = []
    for start in range(0, len(ann) - 5999, 6000):
        lab = recount_label(ann[start : start + 6000])
        if lab is not Label.EXCLUDED:
            expected.append((start, lab))
    assert [(e.span.start, e.label) for e in eps] == expected
