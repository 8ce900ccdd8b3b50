"""Seeded synthetic polysomnograms with annotated arousal events.

Arousal signatures, each scaled by ``signature_strength``:

* EEG: added 18-30 Hz band-limited activity.
* chin EMG: amplitude scaled up.
* airflow: irregular low-frequency component and breath amplitude surge.
* SaO2: a desaturation dip of a few percent centred shortly before onset.

Samples within ``undefined_margin_s`` of an event are annotated -1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .record import FS, ChannelRole, EEG_ROLES, Record


@dataclass(frozen=True)
class SynthParams:
    duration_s: float = 3600.0
    arousal_rate: float = 18.0  # events per hour
    arousal_duration_s: float = 20.0
    signature_strength: float = 1.0
    seed: int = 0
    undefined_margin_s: float = 2.0
    include_ecg: bool = False

    def __post_init__(self):
        if not self.duration_s >= 60:
            raise ValueError("duration_s must be >= 60")
        if not self.arousal_rate >= 0:
            raise ValueError("arousal_rate must be >= 0")
        if not self.arousal_duration_s > 0:
            raise ValueError("arousal_duration_s must be > 0")
        if not self.signature_strength >= 0:
            raise ValueError("signature_strength must be >= 0")
        if not self.undefined_margin_s >= 0:
            raise ValueError("undefined_margin_s must be >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def _shaped_noise(rng: np.random.Generator, n: int, fs: float, lo: float, hi: float, slope: float = 0.0) -> np.ndarray:
    """Unit-variance noise restricted to [lo, hi] Hz with a 1/f**slope amplitude profile."""
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / fs)
    gain = np.zeros_like(f)
    band = (f >= lo) & (f <= hi)
    gain[band] = 1.0 / np.maximum(f[band], 0.5) ** slope
    x = np.fft.irfft(spec * gain, n)
    sd = x.std()
    return x / sd if sd > 0 else x


def _events(rng: np.random.Generator, p: SynthParams, n: int, fs: float) -> list[tuple[int, int]]:
    if p.arousal_rate == 0:
        return []
    mean_period = 3600.0 / p.arousal_rate
    min_gap = 2 * p.undefined_margin_s + 5.0
    mean_extra = max(mean_period - p.arousal_duration_s - min_gap, 1.0)
    out = []
    t = min_gap + rng.exponential(mean_extra)
    while True:
        dur = max(3.0, p.arousal_duration_s * rng.uniform(0.5, 1.5))
        start, end = int(round(t * fs)), int(round((t + dur) * fs))
        if end + p.undefined_margin_s * fs > n:
            break
        out.append((start, end))
        t += dur + min_gap + rng.exponential(mean_extra)
    return out


def synth_record(params: SynthParams, subject_id: str = "synth") -> Record:
    """Generate one record; a pure function of `params` and `subject_id`."""
    p = params
    fs = FS
    n = int(round(p.duration_s * fs))
    rng = np.random.default_rng(np.random.SeedSequence(int(p.seed)))
    t = np.arange(n) / fs

    events = _events(rng, p, n, fs)
    ann = np.zeros(n, dtype=np.int8)
    margin = int(round(p.undefined_margin_s * fs))
    active = np.zeros(n)
    for s, e in events:
        ann[max(0, s - margin) : s] = -1
        ann[e : min(n, e + margin)] = -1
    for s, e in events:
        ann[s:e] = 1
        active[s:e] = 1.0
    # half-second ramps at event edges
    ramp = np.hanning(fs // 2 + 1)
    env = np.convolve(active, ramp / ramp.sum(), mode="same")
    k = p.signature_strength

    channels: dict[ChannelRole, np.ndarray] = {}

    common = _shaped_noise(rng, n, fs, 0.5, 45.0, slope=1.0)
    beta_common = _shaped_noise(rng, n, fs, 18.0, 30.0)
    for role in EEG_ROLES:
        own = _shaped_noise(rng, n, fs, 0.5, 45.0, slope=1.0)
        beta = 0.6 * beta_common + 0.8 * _shaped_noise(rng, n, fs, 18.0, 30.0)
        eeg = 20.0 * (0.6 * common + 0.8 * own) + 2.0 * rng.standard_normal(n)
        channels[role] = eeg + k * 12.0 * env * beta

    channels[ChannelRole.EOG] = 30.0 * _shaped_noise(rng, n, fs, 0.1, 5.0) + 3.0 * rng.standard_normal(n)

    resp_rate = 0.25 + 0.02 * _shaped_noise(rng, n, fs, 0.0, 0.01)
    phase = 2 * np.pi * np.cumsum(resp_rate) / fs + rng.uniform(0, 2 * np.pi)
    breath_amp = 1.0 + 0.1 * _shaped_noise(rng, n, fs, 0.0, 0.05)
    breathing = np.sin(phase)
    irregular = _shaped_noise(rng, n, fs, 0.3, 2.0)
    airflow = breath_amp * breathing * (1.0 + 0.6 * k * env) + 0.05 * rng.standard_normal(n)
    channels[ChannelRole.AIRFLOW] = airflow + k * 0.5 * env * irregular

    chin_gain = 1.0 + 2.0 * k * env
    channels[ChannelRole.CHIN_EMG] = chin_gain * rng.standard_normal(n)
    effort = 1.0 + 0.3 * breathing
    channels[ChannelRole.ABDOMINAL_EMG] = effort * rng.standard_normal(n)
    channels[ChannelRole.CHEST_EMG] = effort * rng.standard_normal(n)

    sao2 = 97.0 + 0.4 * _shaped_noise(rng, n, fs, 0.0, 0.05) + 0.1 * rng.standard_normal(n)
    lead, width = 8.0 * fs, 5.0 * fs
    for s, _ in events:
        centre = s - lead
        lo, hi = max(0, int(centre - 5 * width)), min(n, int(centre + 5 * width))
        sao2[lo:hi] -= k * 3.0 * np.exp(-0.5 * ((np.arange(lo, hi) - centre) / width) ** 2)
    channels[ChannelRole.SAO2] = np.clip(sao2, 0.0, 100.0)

    # reorder to the canonical role order before ECG is appended
    ordered = {r: channels[r] for r in ChannelRole if r in channels}
    if p.include_ecg:
        beats = (np.sin(2 * np.pi * 1.1 * t) > 0.995).astype(float)
        ordered[ChannelRole.ECG] = np.convolve(beats, np.hanning(15), mode="same") + 0.02 * rng.standard_normal(n)
    return Record(subject_id, ordered, ann, fs=fs)
