"""Polysomnography record container and its on-disk directory format.

A record directory looks like::

    <subject_id>/header.txt      key=value lines: subject, fs, n, channels
    <subject_id>/<ROLE>.f32      raw little-endian float32, one per channel
    <subject_id>/annotations.i8  raw signed bytes: 1 arousal, 0 non-arousal, -1 undefined
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import numpy as np

FS = 200
SAO2_RANGE = (0.0, 100.0)
ANNOTATION_VALUES = (-1, 0, 1)

HEADER_NAME = "header.txt"
ANNOTATION_NAME = "annotations.i8"
CHANNEL_SUFFIX = ".f32"

_F32 = np.dtype("<f4")
_I8 = np.dtype("i1")


class RecordError(ValueError):
    """Raised for malformed records or record directories."""


class ChannelRole(str, enum.Enum):
    EEG1 = "EEG1"
    EEG2 = "EEG2"
    EEG3 = "EEG3"
    EEG4 = "EEG4"
    EEG5 = "EEG5"
    EEG6 = "EEG6"
    EOG = "EOG"
    CHIN_EMG = "ChinEMG"
    ABDOMINAL_EMG = "AbdominalEMG"
    CHEST_EMG = "ChestEMG"
    AIRFLOW = "Airflow"
    SAO2 = "SaO2"
    ECG = "ECG"

    def __str__(self) -> str:
        return self.value


EEG_ROLES = tuple(ChannelRole(f"EEG{i}") for i in range(1, 7))
REQUIRED_ROLES = tuple(r for r in ChannelRole if r is not ChannelRole.ECG)
OPTIONAL_ROLES = (ChannelRole.ECG,)


@dataclass(frozen=True)
class Record:
    """Multichannel 200 Hz recording with a sample-wise annotation vector.

    Channel arrays are stored as read-only float32 and annotations as
    read-only int8, so a record can be shared freely between readers.
    Construction does not validate; use :func:`validate_record`.
    """

    subject_id: str
    channels: Mapping[ChannelRole, np.ndarray]
    annotations: np.ndarray
    fs: int = FS

    def __post_init__(self):
        chans = {}
        for role, sig in self.channels.items():
            arr = np.array(sig, dtype=np.float32)
            arr.setflags(write=False)
            chans[ChannelRole(role)] = arr
        ordered = {r: chans[r] for r in ChannelRole if r in chans}
        object.__setattr__(self, "channels", MappingProxyType(ordered))
        ann = np.asarray(self.annotations)
        if ann.dtype != np.int8:
            if np.any((ann < -128) | (ann > 127)):
                ann = np.clip(ann, -128, 127)
            ann = ann.astype(np.int8)
        else:
            ann = ann.copy()
        ann.setflags(write=False)
        object.__setattr__(self, "annotations", ann)

    @property
    def n_samples(self) -> int:
        return int(self.annotations.shape[0])

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs

    def __getitem__(self, role) -> np.ndarray:
        return self.channels[ChannelRole(role)]

    def __eq__(self, other):
        if not isinstance(other, Record):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.fs == other.fs
            and list(self.channels) == list(other.channels)
            and all(np.array_equal(self.channels[r], other.channels[r]) for r in self.channels)
            and np.array_equal(self.annotations, other.annotations)
        )

    __hash__ = None


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_record(record: Record) -> ValidationReport:
    """List every violation found in `record`. An empty report means valid."""
    report = ValidationReport()
    n = record.n_samples
    if record.annotations.ndim != 1:
        report.violations.append("annotations: must be one-dimensional")
    if not record.subject_id or any(c in record.subject_id for c in "/\\\n="):
        report.violations.append(f"subject_id: invalid identifier {record.subject_id!r}")
    if record.fs != FS:
        report.violations.append(f"fs: sampling rate must be {FS} Hz, got {record.fs}")
    for role in REQUIRED_ROLES:
        if role not in record.channels:
            report.violations.append(f"{role}: missing required channel")
    for role, sig in record.channels.items():
        if sig.ndim != 1 or sig.shape[0] != n:
            report.violations.append(
                f"{role}: length {sig.shape[0] if sig.ndim else 0} does not match annotations length {n}"
            )
        if not np.all(np.isfinite(sig)):
            report.violations.append(f"{role}: contains non-finite values")
    sao2 = record.channels.get(ChannelRole.SAO2)
    if sao2 is not None and sao2.size:
        lo, hi = SAO2_RANGE
        bad = int(np.count_nonzero((sao2 < lo) | (sao2 > hi)))
        if bad:
            report.violations.append(f"SaO2: {bad} samples outside range [{lo:g}, {hi:g}]")
    bad_ann = int(np.count_nonzero(~np.isin(record.annotations, ANNOTATION_VALUES)))
    if bad_ann:
        report.violations.append(f"annotations: {bad_ann} values outside {{-1, 0, 1}}")
    elif n and np.all(record.annotations == -1):
        report.notes.append("annotations: entire record is undefined")
    return report


def _check(record: Record) -> None:
    report = validate_record(record)
    if not report.ok:
        raise RecordError(f"invalid record {record.subject_id!r}: " + "; ".join(report.violations))


def write_record(record: Record, directory) -> Path:
    """Write `record` under ``directory/<subject_id>/`` and return that path."""
    _check(record)
    out = Path(directory) / record.subject_id
    out.mkdir(parents=True, exist_ok=True)
    roles = list(record.channels)
    header = (
        f"subject={record.subject_id}\n"
        f"fs={record.fs}\n"
        f"n={record.n_samples}\n"
        f"channels={','.join(r.value for r in roles)}\n"
    )
    for role in roles:
        (out / f"{role.value}{CHANNEL_SUFFIX}").write_bytes(record.channels[role].astype(_F32).tobytes())
    (out / ANNOTATION_NAME).write_bytes(record.annotations.astype(_I8).tobytes())
    (out / HEADER_NAME).write_text(header)
    return out


def _parse_header(path: Path) -> dict[str, str]:
    fields = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise RecordError(f"{path}:{lineno}: expected key=value, got {line!r}")
        fields[key.strip()] = value.strip()
    for key in ("subject", "fs", "n", "channels"):
        if key not in fields:
            raise RecordError(f"{path}: header missing '{key}'")
    return fields


def _read_raw(path: Path, dtype: np.dtype, n: int) -> np.ndarray:
    if not path.exists():
        raise RecordError(f"{path}: file not found")
    size = path.stat().st_size
    if size != n * dtype.itemsize:
        raise RecordError(
            f"{path}: header declares n={n} but file holds {size / dtype.itemsize:g} values"
        )
    return np.fromfile(path, dtype=dtype)


def read_record(path) -> Record:
    """Read and validate a record directory written by :func:`write_record`."""
    path = Path(path)
    if path.is_file():
        path = path.parent
    hdr = _parse_header(path / HEADER_NAME)
    try:
        fs = int(hdr["fs"])
        n = int(hdr["n"])
    except ValueError as exc:
        raise RecordError(f"{path}: bad numeric header field: {exc}") from None
    if n < 0:
        raise RecordError(f"{path}: negative sample count {n}")
    try:
        roles = [ChannelRole(r.strip()) for r in hdr["channels"].split(",") if r.strip()]
    except ValueError as exc:
        raise RecordError(f"{path}: {exc}") from None
    missing = [r.value for r in REQUIRED_ROLES if r not in roles]
    if missing:
        raise RecordError(f"{path}: missing required channel role(s): {', '.join(missing)}")
    channels = {r: _read_raw(path / f"{r.value}{CHANNEL_SUFFIX}", _F32, n) for r in roles}
    ann = _read_raw(path / ANNOTATION_NAME, _I8, n)
    bad = ~np.isin(ann, ANNOTATION_VALUES)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise RecordError(f"{path}: invalid annotation value {int(ann[idx])} at sample {idx}")
    record = Record(hdr["subject"], channels, ann, fs=fs)
    _check(record)
    return record


def list_record_dirs(directory) -> list[Path]:
    """Record subdirectories of `directory` (those holding a header), sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise RecordError(f"{directory}: not a directory")
    return sorted(
        (p for p in directory.iterdir() if (p / HEADER_NAME).is_file()),
        key=lambda p: p.name,
    )
