import numpy as np
import pytest

from psgarousal import dsp
from psgarousal.epoching import Label, labeled_epochs
from psgarousal.record import ChannelRole, validate_record
from psgarousal.synth import SynthParams, synth_record


def _beta_by_class(rec):
    powers = {Label.AROUSAL: [], Label.NON_AROUSAL: []}
    for ep in labeled_epochs(rec):
        spec = dsp.periodogram(rec[ChannelRole.EEG1][ep.span.slice()], rec.fs)
        powers[ep.label].append(dsp.band_power(spec, (18.0, 31.0)))
    return np.mean(powers[Label.AROUSAL]), np.mean(powers[Label.NON_AROUSAL])


def test_deterministic():
    a = synth_record(SynthParams(duration_s=300, seed=7))
    b = synth_record(SynthParams(duration_s=300, seed=7))
    assert a == b
    for role in a.channels:
        assert a[role].tobytes() == b[role].tobytes()
    c = synth_record(SynthParams(duration_s=300, seed=8))
    assert not np.array_equal(a[ChannelRole.EEG1], c[ChannelRole.EEG1])


def test_zero_rate_has_no_arousals():
    rec = synth_record(SynthParams(duration_s=600, arousal_rate=0, seed=3))
    assert not np.any(rec.annotations == 1)
    assert not np.any(rec.annotations == -1)


def test_undefined_margins_flank_events(short_record):
    ann = short_record.annotations
    onsets = np.flatnonzero(np.diff(ann.astype(int)) != 0)
    assert np.any(ann == 1) and np.any(ann == -1)
    # every arousal run is bordered by undefined samples, never directly by 0
    for i in onsets:
        pair = {int(ann[i]), int(ann[i + 1])}
        assert pair != {0, 1}


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_records_are_valid(seed):
    rec = synth_record(SynthParams(duration_s=600, seed=seed, signature_strength=3.0))
    assert validate_record(rec).ok
    sao2 = rec[ChannelRole.SAO2]
    assert 85 < sao2.min() and sao2.max() <= 100


def test_zero_strength_beta_indistinguishable():
    rec = synth_record(SynthParams(duration_s=3600, seed=7, signature_strength=0.0))
    pos, neg = _beta_by_class(rec)
    assert abs(pos / neg - 1) < 0.05


def test_signature_boosts_beta(hour_record):
    pos, neg = _beta_by_class(hour_record)
    assert pos / neg > 1.5


def test_prevalence_near_ten_percent(hour_record):
    assert 0.05 < np.mean(hour_record.annotations == 1) < 0.15


def test_params_validated():
    for bad in (dict(duration_s=59), dict(arousal_rate=-1), dict(signature_strength=-0.1)):
        with pytest.raises(ValueError):
            SynthParams(**bad)
