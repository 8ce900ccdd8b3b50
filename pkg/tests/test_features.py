import math

import numpy as np
import pytest
from sklearn.base import clone

from psgarousal import dsp
from psgarousal import features as F
from psgarousal.epoching import segment_train
from psgarousal.record import ChannelRole

from .conftest import random_epoch
from .test_dsp import brute_force_lag

FS = 200.0
IDX = {r: i for i, r in enumerate(F.FEATURE_ROLES)}


def _names(family):
    off = F.FAMILY_OFFSETS[family]
    return F.FEATURE_NAMES[off : off + F.FAMILY_SIZES[family]]


def test_schema_contract():
    assert len(F.SCHEMA) == 428 and len(set(F.FEATURE_NAMES)) == 428
    assert F.FAMILY_OFFSETS == {
        "EEG": 0,
        "SaO2": 119,
        "ChinEMG": 128,
        "AbdominalEMG": 192,
        "ChestEMG": 256,
        "EOG": 320,
        "Airflow": 335,
        "Interaction": 403,
    }
    counts = {}
    for e in F.SCHEMA:
        counts[e.family] = counts.get(e.family, 0) + 1
    assert counts == F.FAMILY_SIZES


def test_eeg_bands_tile():
    edges = [(lo, hi) for _, lo, hi in F.EEG_BANDS]
    assert edges[0][0] == 1 and edges[-1][1] == 101
    assert all(a[1] == b[0] for a, b in zip(edges, edges[1:]))


# ------------------------------------------------------------------ EEG


def test_eeg_identical_channels(rng):
    x = rng.normal(size=6000)
    out = F.eeg_features(np.tile(x, (6, 1)), FS)
    assert out.shape == (119,)
    tcorr = out[70:85]
    eig = out[85:91]
    assert np.allclose(tcorr, 1.0)
    assert np.allclose(eig, [6, 0, 0, 0, 0, 0], atol=1e-9)


def test_eeg_sine_alpha2_dominates():
    x = np.sin(2 * np.pi * 10 * np.arange(6000) / FS)
    out = F.eeg_features(np.tile(x, (6, 1)), FS)
    bands = out[:60].reshape(6, 10)
    alpha2 = [b[0] for b in F.EEG_BANDS].index("alpha2")
    assert np.all(np.argmax(bands, axis=1) == alpha2)
    # cross-check one channel against the spectrum directly
    spec = dsp.periodogram(x, FS)
    direct = [math.log10(dsp.band_power(spec, (lo, hi)) + 1e-12) for _, lo, hi in F.EEG_BANDS]
    assert np.allclose(bands[0], direct)


def test_eeg_random_finite(rng):
    out = F.eeg_features(rng.normal(size=(6, 6000)) * 30, FS)
    assert out.shape == (119,) and np.all(np.isfinite(out))
    assert out[60:70] == pytest.approx(out[:60].reshape(6, 10).mean(axis=0))
    assert out[118] == pytest.approx(out[112:118].mean())


def test_eeg_wrong_channels():
    with pytest.raises(F.FeatureError):
        F.eeg_features(np.zeros((5, 6000)), FS)


# ----------------------------------------------------------------- SaO2


def test_sao2_constant():
    assert F.sao2_features(np.full(6000, 98.0)).tolist() == [98, 0, 0, 0, 0, 100, 0, 0, 0]


def test_sao2_half_split():
    out = F.sao2_features(np.r_[np.full(3000, 98.0), np.full(3000, 85.0)])
    assert out[5:].tolist() == [50, 0, 50, 0]


def test_sao2_boundary_96():
    assert F.sao2_features(np.full(6000, 96.0))[5] == 100


def test_sao2_out_of_range():
    with pytest.raises(F.FeatureError):
        F.sao2_features(np.full(10, 101.0))


def test_sao2_percentages_sum(rng):
    out = F.sao2_features(np.clip(rng.normal(90, 8, size=6000), 0, 100))
    assert out[5:].sum() == pytest.approx(100, abs=1e-9)


# ------------------------------------------------------------------ EMG


def _emg(x):
    return dict(zip(_names("ChinEMG"), F.emg_features(x)))


def test_emg_alternating():
    f = _emg(np.tile([1.0, -1.0], 3000))
    assert f["chin_zcr"] == 5999
    assert f["chin_wl"] == 2 * 5999
    assert f["chin_rms"] == 1 and f["chin_mav"] == 1 and f["chin_arv"] == 1


def test_emg_constant():
    f = _emg(np.full(6000, 0.3))
    for key in ("zcr", "ssc", "wamp", "wl"):
        assert f[f"chin_{key}"] == 0
    assert f["chin_hist01"] == 6000 and f["chin_hfreq01"] == 1.0
    assert all(f[f"chin_hist{i:02d}"] == 0 for i in range(2, 21))
    assert all(np.isfinite(list(f.values())))


def test_emg_histogram_sums(rng):
    out = F.emg_features(rng.normal(size=6000))
    assert out[24:44].sum() == 6000
    assert out[44:64].sum() == pytest.approx(1.0, abs=1e-9)


def test_emg_direct_formulas(rng):
    x = rng.normal(size=6000)
    f = _emg(x)
    dx = np.diff(x)
    assert f["chin_iav"] == pytest.approx(np.abs(x).sum())
    assert f["chin_ssc"] == sum(1 for i in range(1, 5999) if (x[i] - x[i - 1]) * (x[i] - x[i + 1]) > 0)
    assert f["chin_wamp"] == np.count_nonzero(np.abs(dx) >= 0.5 * np.std(x))
    m0, m2, m4 = (math.sqrt(np.sum(v**2)) for v in (x, dx, np.diff(x, 2)))
    assert f["chin_log_m0"] == pytest.approx(math.log(m0))
    assert f["chin_irregularity"] == pytest.approx(m2 / math.sqrt(m0 * m4))
    assert f["chin_sparseness"] == pytest.approx(m0 / math.sqrt((m0 - m2) * (m0 - m4)))


def test_emg_scale_behaviour(rng):
    x = rng.normal(size=6000)
    a, b = _emg(x), _emg(2 * x)
    for key in ("iav", "mav", "rms", "wl", "arv"):
        assert b[f"chin_{key}"] == pytest.approx(2 * a[f"chin_{key}"])
    assert b["chin_log_m0"] == pytest.approx(a["chin_log_m0"] + math.log(2))
    for key in ("zcr", "ssc", "wamp"):
        assert b[f"chin_{key}"] == a[f"chin_{key}"]


def test_wamp_threshold_configurable(rng):
    x = rng.normal(size=6000)
    loose = F.emg_features(x, wamp_threshold_factor=0.0)[15]
    strict = F.emg_features(x, wamp_threshold_factor=2.0)[15]
    assert loose == 5999 and strict < loose


# ------------------------------------------------------------------ EOG


def test_eog_linear_ramp():
    out = dict(zip(_names("EOG"), F.eog_features(np.arange(6000.0), FS, smooth_window=1)))
    assert out["eog_d2_std_ratio"] == 0
    assert out["eog_form_factor"] == 0
    assert out["eog_d1_iav"] == 5999


def test_eog_constant():
    out = dict(zip(_names("EOG"), F.eog_features(np.full(6000, 7.0), FS)))
    for key in ("d1_std_ratio", "d2_std_ratio", "form_factor", "d1_iav", "std", "skew", "kurt"):
        assert out[f"eog_{key}"] == 0
    assert out["eog_mean"] == 7.0


def test_eog_random(rng):
    x = rng.normal(size=6000)
    out = F.eog_features(x, FS)
    assert out.shape == (15,) and np.all(np.isfinite(out))
    y = dsp.moving_average(x, 51)
    assert out[8] == pytest.approx(np.sum(y**2))
    assert out[14] == pytest.approx(np.std(y))


# -------------------------------------------------------------- airflow


def test_airflow_sine_area_zero():
    x = np.sin(2 * np.pi * 0.5 * np.arange(6000) / FS)  # 15 whole periods
    out = F.airflow_features(x, FS)
    assert abs(out[3]) < 1e-6 * np.abs(x).sum()


def test_airflow_area_sign():
    # sharp positive peaks, broad shallow troughs: mean above median
    x = np.where(np.arange(6000) % 100 < 10, 5.0, -0.5)
    assert F.airflow_features(x, FS)[3] > 0


def test_airflow_constant():
    out = F.airflow_features(np.full(6000, 1.5), FS)
    assert out[0] == 0 and out[2] == 0
    assert np.all(np.isfinite(out))


def test_airflow_tail_is_smoothed_emg(rng):
    x = rng.normal(size=6000)
    out = F.airflow_features(x, FS, smooth_window=201)
    assert out.shape == (68,)
    assert np.array_equal(out[4:], F.emg_features(dsp.moving_average(x, 201)))
    assert out[2] == pytest.approx(dsp.pearson(x[:-1], x[1:]))


# ---------------------------------------------------------- interaction


def test_interaction_delayed_abdominal(rng):
    ep = random_epoch(rng)
    abd = ep[IDX[ChannelRole.ABDOMINAL_EMG]]
    ep[IDX[ChannelRole.CHEST_EMG]] = np.r_[rng.normal(size=200), abd[:-200]]
    out = F.interaction_features(ep, FS)
    names = _names("Interaction")
    lag = out[names.index("xlag_chest_abd")]
    # chest is abd delayed by 200 samples: sum abd~[n] chest~[n+l] peaks at l=+200 for (abd, chest),
    # so (chest, abd) peaks at -200
    assert brute_force_lag(abd[:2000], ep[IDX[ChannelRole.CHEST_EMG]][:2000], 400) == 200
    assert lag == -1.0


def test_interaction_identical_channels(rng):
    x = rng.normal(size=6000)
    ep = np.tile(x, (12, 1))
    ep[IDX[ChannelRole.SAO2]] = 95 + x
    assert np.all(F.interaction_features(ep, FS, airflow_smooth_window=1) == 0)


def test_interaction_length(rng):
    assert F.interaction_features(random_epoch(rng), FS).shape == (25,)


# --------------------------------------------------------------- epoch


def test_extract_epoch_cross_check(rng):
    ep = random_epoch(rng)
    vec = F.extract_epoch(ep, FS).values
    assert vec.shape == (428,) and np.all(np.isfinite(vec))
    cfg = F.FeatureConfig()
    parts = {
        "EEG": F.eeg_features(ep[:6], FS),
        "SaO2": F.sao2_features(ep[IDX[ChannelRole.SAO2]]),
        "ChinEMG": F.emg_features(ep[IDX[ChannelRole.CHIN_EMG]]),
        "AbdominalEMG": F.emg_features(ep[IDX[ChannelRole.ABDOMINAL_EMG]]),
        "ChestEMG": F.emg_features(ep[IDX[ChannelRole.CHEST_EMG]]),
        "EOG": F.eog_features(ep[IDX[ChannelRole.EOG]], FS, cfg.eog_smooth_window),
        "Airflow": F.airflow_features(ep[IDX[ChannelRole.AIRFLOW]], FS),
        "Interaction": F.interaction_features(ep, FS),
    }
    for fam, expect in parts.items():
        off = F.FAMILY_OFFSETS[fam]
        assert np.array_equal(vec[off : off + F.FAMILY_SIZES[fam]], expect), fam


def test_extract_epoch_mapping_and_determinism(short_record):
    ep = {r: short_record[r][:6000] for r in short_record.channels}
    a = F.extract_epoch(ep, FS)
    b = F.extract_epoch(ep, FS)
    assert a.schema_version == F.SCHEMA_VERSION
    assert np.array_equal(a.values, b.values)


def test_extract_epoch_missing_role(short_record):
    ep = {r: short_record[r][:6000] for r in short_record.channels if r is not ChannelRole.EOG}
    with pytest.raises(F.FeatureError, match="EOG"):
        F.extract_epoch(ep, FS)


@pytest.mark.parametrize("value", [0.0, 50.0])
def test_flat_epoch_finite(value):
    ep = np.full((12, 6000), value)
    assert np.all(np.isfinite(F.extract_epoch(ep, FS).values))


def test_scale_invariants(rng):
    ep = random_epoch(rng)
    ep2 = ep.copy()
    scaled = [i for i, r in enumerate(F.FEATURE_ROLES) if r is not ChannelRole.SAO2]
    ep2[scaled] *= 2
    a = F.extract_epoch(ep, FS).values
    b = F.extract_epoch(ep2, FS).values
    corr = slice(70, 85), slice(95, 110)
    for s in corr:
        assert np.allclose(a[s], b[s])
    assert np.array_equal(a[403:], b[403:])


def test_transformer_api(short_record):
    ext = F.EpochFeatureExtractor()
    assert clone(ext).get_params() == ext.get_params()
    spans = segment_train(short_record.n_samples, short_record.fs)
    X = ext.fit(None).transform_record(short_record, spans)
    assert X.shape == (len(spans), 428)
    assert list(ext.get_feature_names_out()) == list(F.FEATURE_NAMES)
    assert np.array_equal(X[0], F.extract_epoch({r: short_record[r][:6000] for r in short_record.channels}).values)


def test_schema_hash_tracks_config():
    base = F.schema_hash()
    assert base == F.schema_hash(F.FeatureConfig())
    assert base != F.schema_hash(F.FeatureConfig(eog_smooth_window=31))
    with pytest.raises(ValueError):
        F.FeatureConfig(airflow_smooth_window=200)


def test_benchmark_thousand_epochs_fast_enough(rng):
    import time

    ext = F.EpochFeatureExtractor()
    X = np.stack([random_epoch(rng) for _ in range(50)])
    t0 = time.perf_counter()
    ext.transform(X)
    assert (time.perf_counter() - t0) / 50 < 0.06
