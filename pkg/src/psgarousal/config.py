"""Pipeline configuration: defaults, ``key=value`` files and range checks."""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .classifier import TrainParams
from .features import FeatureConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    epoch_seconds: float = 30.0
    test_overlap: float = 0.5
    trees: int = 30
    max_depth: int = 20
    min_leaf: int = 1
    seed: int = 0
    wamp_threshold_factor: float = 0.5
    eog_smooth_window: int = 51
    airflow_smooth_window: int = 201
    xcorr_max_lag_s: float = 5.0
    threads: int = 0  # 0 = one worker per CPU

    def __post_init__(self):
        checks = [
            (self.epoch_seconds > 0, "epoch_seconds must be > 0"),
            (0 <= self.test_overlap < 1, "test_overlap must be in [0, 1)"),
            (self.trees >= 1, "trees must be >= 1"),
            (self.max_depth >= 1, "max_depth must be >= 1"),
            (self.min_leaf >= 1, "min_leaf must be >= 1"),
            (0 <= self.seed < 2**64, "seed must be an unsigned 64-bit integer"),
            (self.threads >= 0, "threads must be >= 0 (0 = auto)"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        try:
            self.feature_config
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(
            wamp_threshold_factor=self.wamp_threshold_factor,
            eog_smooth_window=self.eog_smooth_window,
            airflow_smooth_window=self.airflow_smooth_window,
            xcorr_max_lag_s=self.xcorr_max_lag_s,
        )

    @property
    def train_params(self) -> TrainParams:
        return TrainParams(n_trees=self.trees, max_depth=self.max_depth, min_leaf=self.min_leaf, seed=self.seed)

    @property
    def workers(self) -> int:
        return self.threads or os.cpu_count() or 1

    def merged(self, **overrides) -> "PipelineConfig":
        """Copy with every non-None override applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self) -> dict:
        return asdict(self)


_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    if key == "threads" and raw.lower() == "auto":
        return 0
    try:
        if kind in ("int", int):
            return int(raw, 0)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected key=value")
        if key not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def load_config(path=None, **overrides) -> PipelineConfig:
    """Defaults, then the file at `path`, then non-None `overrides`."""
    base = {}
    if path is not None:
        path = Path(path)
        try:
            base = parse_config_text(path.read_text(), str(path))
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        return PipelineConfig(**base).merged(**overrides)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
