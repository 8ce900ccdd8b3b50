"""Per-epoch feature extraction: 428 features from EEG, SaO2, EMG, EOG and airflow.

Family layout of a feature vector (offset, width)::

    EEG          0  119
    SaO2       119    9
    ChinEMG    128   64
    AbdEMG     192   64
    ChestEMG   256   64
    EOG        320   15
    Airflow    335   68
    Interaction 403  25
"""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass
from itertools import combinations
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import dsp
from .record import EEG_ROLES, ChannelRole, Record

SCHEMA_VERSION = "1"
N_FEATURES = 428

# Signal order expected by the array-based API.
FEATURE_ROLES = EEG_ROLES + (
    ChannelRole.EOG,
    ChannelRole.CHIN_EMG,
    ChannelRole.ABDOMINAL_EMG,
    ChannelRole.CHEST_EMG,
    ChannelRole.AIRFLOW,
    ChannelRole.SAO2,
)
_ROLE_INDEX = {r: i for i, r in enumerate(FEATURE_ROLES)}

# "a-b Hz" bands read as [a, b + 1) so they tile [1, 101) Hz
EEG_BANDS = (
    ("delta", 1.0, 4.0),
    ("theta", 4.0, 8.0),
    ("alpha1", 8.0, 10.0),
    ("alpha2", 10.0, 13.0),
    ("beta1", 13.0, 18.0),
    ("beta2", 18.0, 31.0),
    ("gamma1", 31.0, 41.0),
    ("gamma2", 41.0, 51.0),
    ("high1", 51.0, 71.0),
    ("high2", 71.0, 101.0),
)
EEG_SPAN = (1.0, 101.0)
SAO2_LEVELS = ((96.0, np.inf), (90.0, 96.0), (80.0, 90.0), (-np.inf, 80.0))

EEG_PAIRS = tuple(combinations(range(6), 2))
# (SaO2, smoothed airflow, chest, abdominal, chin) pairs in published order
NON_EEG_PAIR_ROLES = (
    (ChannelRole.SAO2, ChannelRole.AIRFLOW),
    (ChannelRole.SAO2, ChannelRole.CHEST_EMG),
    (ChannelRole.SAO2, ChannelRole.ABDOMINAL_EMG),
    (ChannelRole.SAO2, ChannelRole.CHIN_EMG),
    (ChannelRole.AIRFLOW, ChannelRole.CHEST_EMG),
    (ChannelRole.AIRFLOW, ChannelRole.ABDOMINAL_EMG),
    (ChannelRole.AIRFLOW, ChannelRole.CHIN_EMG),
    (ChannelRole.CHEST_EMG, ChannelRole.ABDOMINAL_EMG),
    (ChannelRole.CHEST_EMG, ChannelRole.CHIN_EMG),
    (ChannelRole.ABDOMINAL_EMG, ChannelRole.CHIN_EMG),
)
_SHORT = {
    ChannelRole.SAO2: "sao2",
    ChannelRole.AIRFLOW: "airflow",
    ChannelRole.CHEST_EMG: "chest",
    ChannelRole.ABDOMINAL_EMG: "abd",
    ChannelRole.CHIN_EMG: "chin",
}
_INTERACTION_PAIRS = tuple((_ROLE_INDEX[a], _ROLE_INDEX[b]) for a, b in NON_EEG_PAIR_ROLES) + EEG_PAIRS


class FeatureError(ValueError):
    pass


class SchemaEntry(NamedTuple):
    name: str
    family: str
    description: str


@dataclass(frozen=True)
class FeatureConfig:
    wamp_threshold_factor: float = 0.5
    eog_smooth_window: int = 51
    airflow_smooth_window: int = 201
    xcorr_max_lag_s: float = 5.0

    def __post_init__(self):
        if not self.wamp_threshold_factor >= 0:
            raise ValueError("wamp_threshold_factor must be >= 0")
        for key in ("eog_smooth_window", "airflow_smooth_window"):
            w = getattr(self, key)
            if int(w) != w or w < 1 or w % 2 == 0:
                raise ValueError(f"{key} must be a positive odd integer, got {w}")
        if not self.xcorr_max_lag_s >= 0:
            raise ValueError("xcorr_max_lag_s must be >= 0")


# ---------------------------------------------------------------- schema

_EMG_STATS = (
    ("mean", "mean"),
    ("min", "minimum"),
    ("max", "maximum"),
    ("range", "max - min"),
    ("var", "population variance"),
    ("cv", "std / |mean| (0 if mean == 0)"),
    ("skew", "standardized 3rd moment"),
    ("kurt", "standardized 4th moment, non-excess"),
    ("iav", "sum |x|"),
    ("mav", "mean |x|"),
    ("zcr", "count of sign changes x[i]*x[i+1] < 0"),
    ("ssc", "count of slope sign changes"),
    ("wl", "waveform length sum |dx|"),
    ("rms", "root mean square"),
    ("arv", "average rectified value"),
    ("wamp", "count of |dx| >= factor*std(x), |dx| > 0"),
    ("log_m0", "ln sqrt(sum x^2)"),
    ("log_m2", "ln sqrt(sum dx^2)"),
    ("log_m4", "ln sqrt(sum d2x^2)"),
    ("log_m0_m2", "ln(m0 - m2)"),
    ("log_m0_m4", "ln(m0 - m4)"),
    ("sparseness", "m0 / sqrt((m0 - m2)(m0 - m4))"),
    ("irregularity", "m2 / sqrt(m0 m4)"),
    ("wl_ratio", "sum |dx| / sum |d2x|"),
)

_EOG_NAMES = (
    ("min", "minimum"),
    ("max", "maximum"),
    ("range", "max - min"),
    ("mean", "mean"),
    ("median", "median"),
    ("skew", "standardized 3rd moment"),
    ("kurt", "standardized 4th moment, non-excess"),
    ("iav", "sum |x|"),
    ("energy", "sum x^2"),
    ("rms", "root mean square"),
    ("form_factor", "Hjorth complexity"),
    ("d1_std_ratio", "std(dx) / std(x)"),
    ("d2_std_ratio", "std(d2x) / std(x)"),
    ("d1_iav", "sum |dx|"),
    ("std", "standard deviation"),
)


def _emg_schema(prefix: str, family: str, what: str) -> list[SchemaEntry]:
    out = [SchemaEntry(f"{prefix}_{n}", family, f"{what}: {d}") for n, d in _EMG_STATS]
    out += [SchemaEntry(f"{prefix}_hist{i:02d}", family, f"{what}: histogram count, bin {i}") for i in range(1, 21)]
    out += [SchemaEntry(f"{prefix}_hfreq{i:02d}", family, f"{what}: histogram relative frequency, bin {i}") for i in range(1, 21)]
    return out


def _build_schema() -> tuple[SchemaEntry, ...]:
    s: list[SchemaEntry] = []
    for c in range(1, 7):
        for band, lo, hi in EEG_BANDS:
            s.append(SchemaEntry(f"eeg{c}_logpow_{band}", "EEG", f"EEG{c} log10 power in [{lo:g}, {hi:g}) Hz"))
    for band, lo, hi in EEG_BANDS:
        s.append(SchemaEntry(f"eeg_mean_logpow_{band}", "EEG", f"mean over channels of log10 {band} power"))
    for i, j in EEG_PAIRS:
        s.append(SchemaEntry(f"eeg_tcorr_{i + 1}_{j + 1}", "EEG", f"Pearson r, EEG{i + 1} vs EEG{j + 1}"))
    for k in range(1, 7):
        s.append(SchemaEntry(f"eeg_tcorr_eig{k}", "EEG", f"eigenvalue {k} of temporal correlation matrix"))
    for i, j in EEG_PAIRS:
        s.append(SchemaEntry(f"eeg_fcorr_{i + 1}_{j + 1}", "EEG", f"Pearson r of log spectra, EEG{i + 1} vs EEG{j + 1}"))
    for k in range(1, 7):
        s.append(SchemaEntry(f"eeg_fcorr_eig{k}", "EEG", f"eigenvalue {k} of spectral correlation matrix"))
    for c in range(1, 7):
        s.append(SchemaEntry(f"eeg{c}_logpow_total", "EEG", f"EEG{c} log10 power in [1, 101) Hz"))
    s.append(SchemaEntry("eeg_mean_logpow_total", "EEG", "mean of the six total log powers"))

    s += [
        SchemaEntry("sao2_mean", "SaO2", "mean SaO2"),
        SchemaEntry("sao2_std", "SaO2", "standard deviation"),
        SchemaEntry("sao2_cv", "SaO2", "coefficient of variation"),
        SchemaEntry("sao2_skew", "SaO2", "skewness"),
        SchemaEntry("sao2_kurt", "SaO2", "kurtosis, non-excess"),
        SchemaEntry("sao2_pct_normal", "SaO2", "% of time SaO2 >= 96"),
        SchemaEntry("sao2_pct_mild", "SaO2", "% of time 90 <= SaO2 < 96"),
        SchemaEntry("sao2_pct_moderate", "SaO2", "% of time 80 <= SaO2 < 90"),
        SchemaEntry("sao2_pct_severe", "SaO2", "% of time SaO2 < 80"),
    ]
    s += _emg_schema("chin", "ChinEMG", "chin EMG")
    s += _emg_schema("abd", "AbdominalEMG", "abdominal EMG")
    s += _emg_schema("chest", "ChestEMG", "chest EMG")
    s += [SchemaEntry(f"eog_{n}", "EOG", f"smoothed EOG: {d}") for n, d in _EOG_NAMES]
    s += [
        SchemaEntry("airflow_diff_std", "Airflow", "std of adjacent-sample differences"),
        SchemaEntry("airflow_diff_cv", "Airflow", "cv of adjacent-sample differences"),
        SchemaEntry("airflow_autocorr1", "Airflow", "lag-1 autocorrelation"),
        SchemaEntry("airflow_area_diff", "Airflow", "positive minus negative area about the median (unit*s)"),
    ]
    s += _emg_schema("airflow_s", "Airflow", "smoothed airflow")
    for a, b in NON_EEG_PAIR_ROLES:
        s.append(SchemaEntry(f"xlag_{_SHORT[a]}_{_SHORT[b]}", "Interaction", f"lag (s) of max |xcorr|, {a} vs {b}"))
    for i, j in EEG_PAIRS:
        s.append(SchemaEntry(f"xlag_eeg{i + 1}_eeg{j + 1}", "Interaction", f"lag (s) of max |xcorr|, EEG{i + 1} vs EEG{j + 1}"))
    return tuple(s)


SCHEMA: tuple[SchemaEntry, ...] = _build_schema()
FEATURE_NAMES: tuple[str, ...] = tuple(e.name for e in SCHEMA)

FAMILY_SIZES = {
    "EEG": 119,
    "SaO2": 9,
    "ChinEMG": 64,
    "AbdominalEMG": 64,
    "ChestEMG": 64,
    "EOG": 15,
    "Airflow": 68,
    "Interaction": 25,
}
FAMILY_OFFSETS = {}
_off = 0
for _fam, _size in FAMILY_SIZES.items():
    FAMILY_OFFSETS[_fam] = _off
    _off += _size
del _off, _fam, _size


def _check_schema() -> None:
    if len(SCHEMA) != N_FEATURES:
        raise RuntimeError(f"feature schema has {len(SCHEMA)} entries, expected {N_FEATURES}")
    if len(set(FEATURE_NAMES)) != len(FEATURE_NAMES):
        raise RuntimeError("feature schema names are not unique")
    for fam, off in FAMILY_OFFSETS.items():
        block = SCHEMA[off : off + FAMILY_SIZES[fam]]
        if any(e.family != fam for e in block) or len(block) != FAMILY_SIZES[fam]:
            raise RuntimeError(f"feature schema family block {fam} is malformed")


_check_schema()


def schema_hash(config: FeatureConfig | None = None) -> bytes:
    """SHA-256 identifying the feature schema and the extractor settings."""
    config = config or FeatureConfig()
    h = hashlib.sha256()
    h.update(f"schema={SCHEMA_VERSION}\n".encode())
    for name in FEATURE_NAMES:
        h.update(name.encode() + b"\n")
    for key, value in sorted(asdict(config).items()):
        h.update(f"{key}={float(value)!r}\n".encode())
    return h.digest()


# ------------------------------------------------------- family operations


def _std(a: np.ndarray) -> float:
    if a.size == 0 or a.max() == a.min():
        return 0.0
    return float(np.std(a))


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def _signal(x, name: str, min_len: int = 16) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < min_len:
        raise FeatureError(f"{name}: expected a 1-D signal of at least {min_len} samples")
    if not np.all(np.isfinite(x)):
        raise FeatureError(f"{name}: non-finite values")
    return x


def eeg_features(eeg, fs: float) -> np.ndarray:
    """119 EEG features from six channel slices."""
    eeg = np.asarray(eeg, dtype=np.float64)
    if eeg.ndim != 2 or eeg.shape[0] != 6:
        raise FeatureError(f"EEG: expected 6 channels, got shape {eeg.shape}")
    for c in range(6):
        _signal(eeg[c], f"EEG{c + 1}")
    spectra = [dsp.periodogram(ch, fs) for ch in eeg]
    freqs, nyq = spectra[0].freqs, spectra[0].nyquist
    masks = [dsp._band_mask(freqs, nyq, lo, hi) for _, lo, hi in EEG_BANDS]
    span = dsp._band_mask(freqs, nyq, *EEG_SPAN)

    power = np.vstack([s.power for s in spectra])
    band_pow = np.stack([power[:, m].sum(axis=1) for m in masks], axis=1)  # (6, 10)
    log_band = np.log10(band_pow + dsp.LOG_FLOOR)

    iu = np.triu_indices(6, k=1)
    tcorr = dsp.corr_matrix(eeg)
    log_spec = np.log10(power[:, span] + dsp.LOG_FLOOR)
    fcorr = dsp.corr_matrix(log_spec)
    total = np.log10(power[:, span].sum(axis=1) + dsp.LOG_FLOOR)

    return np.concatenate(
        [
            log_band.ravel(),
            log_band.mean(axis=0),
            tcorr[iu],
            dsp.sym_eigenvalues(tcorr),
            fcorr[iu],
            dsp.sym_eigenvalues(fcorr),
            total,
            [total.mean()],
        ]
    )


def sao2_features(sao2) -> np.ndarray:
    x = _signal(sao2, "SaO2", min_len=1)
    if x.min() < 0 or x.max() > 100:
        raise FeatureError("SaO2: values outside [0, 100]")
    m = dsp.stat_moments(x)
    n = x.shape[0]
    pct = [100.0 * np.count_nonzero((x >= lo) & (x < hi)) / n for lo, hi in SAO2_LEVELS]
    return np.array([m.mean, m.std, m.cv, m.skewness, m.kurtosis, *pct])


def emg_features(x, wamp_threshold_factor: float = 0.5) -> np.ndarray:
    """64 EMG features: 8 statistics, 8 amplitude, 8 spectral-moment, 40 histogram."""
    x = _signal(x, "EMG", min_len=3)
    n = x.shape[0]
    m = dsp.stat_moments(x)
    absx = np.abs(x)
    dx = np.diff(x)
    d2x = np.diff(x, 2)
    adx = np.abs(dx)
    iav = float(absx.sum())
    theta = wamp_threshold_factor * m.std
    amplitude = [
        iav,
        iav / n,
        np.count_nonzero(x[:-1] * x[1:] < 0),
        np.count_nonzero((x[1:-1] - x[:-2]) * (x[1:-1] - x[2:]) > 0),
        float(adx.sum()),
        float(np.sqrt(np.mean(x * x))),
        float(np.mean(absx)),
        np.count_nonzero((adx >= theta) & (adx > 0)),
    ]

    m0 = float(np.sqrt(np.dot(x, x)))
    m2 = float(np.sqrt(np.dot(dx, dx)))
    m4 = float(np.sqrt(np.dot(d2x, d2x)))
    prod = (m0 - m2) * (m0 - m4)
    moments = [
        dsp.safe_log(m0),
        dsp.safe_log(m2),
        dsp.safe_log(m4),
        dsp.safe_log(m0 - m2),
        dsp.safe_log(m0 - m4),
        m0 / np.sqrt(prod) if prod > 0 else 0.0,
        _ratio(m2, np.sqrt(m0 * m4)),
        _ratio(float(adx.sum()), float(np.abs(d2x).sum())),
    ]

    if m.range > 0:
        counts, _ = np.histogram(x, bins=20, range=(m.min, m.max))
    else:
        counts = np.zeros(20, dtype=np.int64)
        counts[0] = n
    stats = [m.mean, m.min, m.max, m.range, m.variance, m.cv, m.skewness, m.kurtosis]
    return np.concatenate([stats, amplitude, moments, counts, counts / n]).astype(np.float64)


def eog_features(eog, fs: float, smooth_window: int = 51) -> np.ndarray:
    """15 features of the moving-average-smoothed EOG."""
    x = _signal(eog, "EOG", min_len=3)
    y = dsp.moving_average(x, smooth_window)
    m = dsp.stat_moments(y)
    dy = np.diff(y)
    sd0, sd1, sd2 = m.std, _std(dy), _std(np.diff(y, 2))
    form = _ratio(sd2 * sd0, sd1 * sd1) if sd0 > 0 else 0.0
    return np.array(
        [
            m.min,
            m.max,
            m.range,
            m.mean,
            m.median,
            m.skewness,
            m.kurtosis,
            float(np.abs(y).sum()),
            float(np.dot(y, y)),
            float(np.sqrt(np.mean(y * y))),
            form,
            _ratio(sd1, sd0),
            _ratio(sd2, sd0),
            float(np.abs(dy).sum()),
            sd0,
        ]
    )


def airflow_features(
    airflow, fs: float, smooth_window: int = 201, wamp_threshold_factor: float = 0.5
) -> np.ndarray:
    """4 waveform-smoothness features on the raw airflow, then the 64 EMG features of the smoothed one."""
    x = _signal(airflow, "Airflow", min_len=3)
    dx = np.diff(x)
    dm = dsp.stat_moments(dx)
    centred = x - np.median(x)
    area = (np.clip(centred, 0, None).sum() + np.clip(centred, None, 0).sum()) / fs
    head = [dm.std, dm.cv, dsp.pearson(x[:-1], x[1:]), float(area)]
    smoothed = dsp.moving_average(x, smooth_window)
    return np.concatenate([head, emg_features(smoothed, wamp_threshold_factor)])


def interaction_features(epoch, fs: float, max_lag_s: float = 5.0, airflow_smooth_window: int = 201) -> np.ndarray:
    """25 cross-correlation lags in seconds: 10 non-EEG pairs, then the 15 EEG pairs."""
    sig = _epoch_array(epoch).copy()
    n = sig.shape[1]
    max_lag = min(int(round(max_lag_s * fs)), n - 1)
    air = _ROLE_INDEX[ChannelRole.AIRFLOW]
    sig[air] = dsp.moving_average(sig[air], airflow_smooth_window)
    return dsp.xcorr_lags(sig, _INTERACTION_PAIRS, max_lag) / fs


# ------------------------------------------------------------ whole epoch


class FeatureVector(NamedTuple):
    values: np.ndarray
    schema_version: str = SCHEMA_VERSION


def _epoch_array(epoch) -> np.ndarray:
    """Accept a role -> slice mapping or a (12, n) array in FEATURE_ROLES order."""
    if isinstance(epoch, Mapping):
        try:
            rows = [np.asarray(epoch[r], dtype=np.float64) for r in FEATURE_ROLES]
        except KeyError as exc:
            raise FeatureError(f"epoch is missing channel {exc.args[0]}") from None
        if len({r.shape for r in rows}) != 1:
            raise FeatureError("epoch channel slices differ in length")
        arr = np.vstack(rows)
    else:
        arr = np.asarray(epoch, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != len(FEATURE_ROLES):
        raise FeatureError(f"epoch must have {len(FEATURE_ROLES)} channels, got shape {arr.shape}")
    return arr


def _extract(sig: np.ndarray, fs: float, cfg: FeatureConfig) -> np.ndarray:
    idx = _ROLE_INDEX
    parts = [
        eeg_features(sig[:6], fs),
        sao2_features(sig[idx[ChannelRole.SAO2]]),
        emg_features(sig[idx[ChannelRole.CHIN_EMG]], cfg.wamp_threshold_factor),
        emg_features(sig[idx[ChannelRole.ABDOMINAL_EMG]], cfg.wamp_threshold_factor),
        emg_features(sig[idx[ChannelRole.CHEST_EMG]], cfg.wamp_threshold_factor),
        eog_features(sig[idx[ChannelRole.EOG]], fs, cfg.eog_smooth_window),
        airflow_features(sig[idx[ChannelRole.AIRFLOW]], fs, cfg.airflow_smooth_window, cfg.wamp_threshold_factor),
        interaction_features(sig, fs, cfg.xcorr_max_lag_s, cfg.airflow_smooth_window),
    ]
    out = np.concatenate(parts)
    if out.shape[0] != N_FEATURES:
        raise RuntimeError(f"extractor produced {out.shape[0]} features")
    if not np.all(np.isfinite(out)):
        bad = [FEATURE_NAMES[i] for i in np.flatnonzero(~np.isfinite(out))[:5]]
        raise FeatureError(f"non-finite features: {', '.join(bad)}")
    return out


def extract_epoch(epoch, fs: float = 200.0, config: FeatureConfig | None = None) -> FeatureVector:
    """Full 428-value feature vector for one epoch.

    `epoch` maps channel roles to equal-length slices (ECG, if present, is
    ignored) or is a ``(12, n)`` array in :data:`FEATURE_ROLES` order.
    """
    return FeatureVector(_extract(_epoch_array(epoch), fs, config or FeatureConfig()))


def record_epochs(record: Record, spans: Sequence) -> np.ndarray:
    """Stack epoch slices of `record` into an ``(n_spans, 12, width)`` array."""
    sig = np.vstack([record.channels[r] for r in FEATURE_ROLES])
    if not spans:
        return np.empty((0, len(FEATURE_ROLES), 0))
    return np.stack([sig[:, s.start : s.end] for s in spans]).astype(np.float64)


class EpochFeatureExtractor(TransformerMixin, BaseEstimator):
    """Stateless transformer from epoch signal stacks to 428-feature rows.

    ``transform`` takes an array of shape ``(n_epochs, 12, n_samples)`` with
    channels in :data:`FEATURE_ROLES` order.
    """

    def __init__(
        self,
        fs=200.0,
        wamp_threshold_factor=0.5,
        eog_smooth_window=51,
        airflow_smooth_window=201,
        xcorr_max_lag_s=5.0,
    ):
        self.fs = fs
        self.wamp_threshold_factor = wamp_threshold_factor
        self.eog_smooth_window = eog_smooth_window
        self.airflow_smooth_window = airflow_smooth_window
        self.xcorr_max_lag_s = xcorr_max_lag_s

    @classmethod
    def from_config(cls, config: FeatureConfig, fs: float = 200.0) -> "EpochFeatureExtractor":
        return cls(fs=fs, **asdict(config))

    @property
    def config(self) -> FeatureConfig:
        return FeatureConfig(
            wamp_threshold_factor=self.wamp_threshold_factor,
            eog_smooth_window=self.eog_smooth_window,
            airflow_smooth_window=self.airflow_smooth_window,
            xcorr_max_lag_s=self.xcorr_max_lag_s,
        )

    @property
    def schema_hash(self) -> bytes:
        return schema_hash(self.config)

    def fit(self, X=None, y=None):
        self.config  # validates parameters
        self.n_features_out_ = N_FEATURES
        return self

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None]
        if X.ndim != 3 or X.shape[1] != len(FEATURE_ROLES):
            raise FeatureError(f"expected (n_epochs, {len(FEATURE_ROLES)}, n_samples), got {X.shape}")
        cfg = self.config
        out = np.empty((X.shape[0], N_FEATURES))
        for i in range(X.shape[0]):
            out[i] = _extract(X[i], self.fs, cfg)
        return out

    def transform_record(self, record: Record, spans: Sequence) -> np.ndarray:
        return self.transform(record_epochs(record, spans)) if spans else np.empty((0, N_FEATURES))

    def get_feature_names_out(self, input_features=None) -> np.ndarray:
        return np.asarray(FEATURE_NAMES, dtype=object)

    def __sklearn_is_fitted__(self) -> bool:
        return True
