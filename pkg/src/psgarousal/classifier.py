"""Gini CART trees, bootstrap-aggregated ensembles and the per-subject model database."""
from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .epoching import EPOCH_SECONDS, Label, labeled_epochs
from .features import N_FEATURES, SCHEMA_VERSION, EpochFeatureExtractor
from .record import Record

LEAF = -1


class ModelFormatError(ValueError):
    """Corrupt or unsupported model database file."""


class SchemaMismatchError(ModelFormatError):
    """Model database was built with a different feature schema or extractor config."""


def gini(n_pos: int, n_neg: int) -> float:
    n = n_pos + n_neg
    if n < 1:
        raise ValueError("gini impurity of an empty node is undefined")
    p = n_pos / n
    return 1.0 - p * p - (1.0 - p) * (1.0 - p)


@dataclass(frozen=True)
class Tree:
    """Binary tree in flat-array form; node 0 is the root.

    Internal nodes send ``x[feature] <= threshold`` to ``left``. Leaves have
    ``feature == -1`` and store the arousal fraction of their training rows.
    """

    feature: np.ndarray  # int32
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    value: np.ndarray  # float64, arousal fraction
    n_train: np.ndarray  # int64

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of X."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            inner = feat != LEAF
            if not inner.any():
                return node
            r, nd = rows[inner], node[inner]
            go_left = X[r, feat[inner]] <= self.threshold[nd]
            node[inner] = np.where(go_left, self.left[nd], self.right[nd])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def same_as(self, other: "Tree") -> bool:
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("feature", "threshold", "left", "right", "value", "n_train")
        )


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best Gini split of a node as (feature, threshold) or None.

    Scans every feature and every midpoint between consecutive distinct
    values. Ties go to the lowest feature index, then the smallest threshold.
    Zero-gain splits are accepted so impure nodes keep splitting while any
    feature still separates rows.
    """
    n = X.shape[0]
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    ys = y[order]  # (n, F)
    pos_left = np.cumsum(ys, axis=0)[:-1]  # split after row i -> left rows 0..i
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    n_pos = pos_left[-1] + ys[-1]
    pos_right = n_pos - pos_left
    neg_left = n_left - pos_left
    neg_right = n_right - pos_right
    # maximise sum over children of (pos^2 + neg^2) / size == minimise weighted Gini
    score = (pos_left**2 + neg_left**2) / n_left + (pos_right**2 + neg_right**2) / n_right
    valid = xs[1:] > xs[:-1]
    if min_leaf > 1:
        size_ok = (n_left >= min_leaf) & (n_right >= min_leaf)
        valid &= size_ok
    if not valid.any():
        return None
    score = np.where(valid, score, -np.inf)
    flat = score.T.ravel()  # feature-major: argmax picks lowest feature, then lowest position
    k = int(np.argmax(flat))
    parent = (n_pos[0] ** 2 + (n - n_pos[0]) ** 2) / n
    if flat[k] < parent - 1e-9 * n:
        return None
    feat, pos = divmod(k, n - 1)
    lo, hi = xs[pos, feat], xs[pos + 1, feat]
    thr = lo + (hi - lo) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return feat, float(thr)


def fit_tree(X, y, max_depth: int | None = 20, min_leaf: int = 1) -> Tree:
    """Grow a Gini CART tree greedily on binary labels ``y``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError(f"dimension mismatch: X {X.shape}, y {y.shape}")
    if X.shape[0] < 1:
        raise ValueError("cannot fit a tree on zero rows")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    if max_depth is not None and max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    limit = np.inf if max_depth is None else max_depth

    feature, threshold, left, right, value, n_train = [], [], [], [], [], []

    def new_node(rows: np.ndarray) -> int:
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(y[rows].mean()))
        n_train.append(rows.shape[0])
        return len(feature) - 1

    stack = [(new_node(np.arange(X.shape[0])), np.arange(X.shape[0]), 0)]
    while stack:
        node, rows, depth = stack.pop()
        n_pos = y[rows].sum()
        if depth >= limit or n_pos == 0 or n_pos == rows.shape[0] or rows.shape[0] < 2 * min_leaf:
            continue
        split = _best_split(X[rows], y[rows], min_leaf)
        if split is None:
            continue
        feat, thr = split
        mask = X[rows, feat] <= thr
        lrows, rrows = rows[mask], rows[~mask]
        feature[node], threshold[node] = feat, thr
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        stack.append((right[node], rrows, depth + 1))
        stack.append((left[node], lrows, depth + 1))

    return Tree(
        np.asarray(feature, dtype=np.int32),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int32),
        np.asarray(right, dtype=np.int32),
        np.asarray(value, dtype=np.float64),
        np.asarray(n_train, dtype=np.int64),
    )


def tree_seed(seed: int, t: int) -> np.random.SeedSequence:
    """Independent substream for the ``t``-th tree (1-based) of an ensemble."""
    return np.random.SeedSequence([int(seed) & (2**64 - 1), int(t)])


class BaggedTreesClassifier(ClassifierMixin, BaseEstimator):
    """Bootstrap-aggregated Gini trees; all features are tried at every split.

    ``predict_proba`` averages the leaf arousal fractions of all trees.

    Parameters
    ----------
    n_trees : int
        Number of trees.
    max_depth : int or None
        Depth limit per tree; None grows until leaves are pure or inseparable.
    min_leaf : int
        Minimum number of (bootstrap) rows in a leaf.
    bootstrap_fraction : float
        Bootstrap sample size as a fraction of the training rows, drawn with replacement.
    seed : int
        Seed for the per-tree bootstrap substreams.
    """

    def __init__(self, n_trees=30, max_depth=20, min_leaf=1, bootstrap_fraction=1.0, seed=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.bootstrap_fraction = bootstrap_fraction
        self.seed = seed

    def _check_params(self):
        if int(self.n_trees) < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth is not None and int(self.max_depth) < 1:
            raise ValueError("max_depth must be >= 1")
        if int(self.min_leaf) < 1:
            raise ValueError("min_leaf must be >= 1")
        if not 0 < self.bootstrap_fraction:
            raise ValueError("bootstrap_fraction must be > 0")

    def fit(self, X, y):
        self._check_params()
        X, y = check_X_y(X, y, dtype=np.float64)
        y = y.astype(np.int64)
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 (non-arousal) or 1 (arousal)")
        if np.unique(y).size < 2:
            raise ValueError("bagged ensemble needs both classes in the training data")
        n = X.shape[0]
        m = max(1, int(round(self.bootstrap_fraction * n)))
        trees = []
        for t in range(1, int(self.n_trees) + 1):
            rng = np.random.default_rng(tree_seed(self.seed, t))
            idx = rng.integers(0, n, size=m)
            trees.append(fit_tree(X[idx], y[idx], self.max_depth, int(self.min_leaf)))
        self.trees_ = trees
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def tree_predictions(self, X) -> np.ndarray:
        """Per-tree arousal fractions, shape ``(n_trees, n_rows)``."""
        check_is_fitted(self, "trees_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return np.vstack([t.predict(X) for t in self.trees_])

    def arousal_proba(self, X) -> np.ndarray:
        per_tree = self.tree_predictions(X)
        return np.clip(per_tree.mean(axis=0), per_tree.min(axis=0), per_tree.max(axis=0))

    def predict_proba(self, X) -> np.ndarray:
        p = self.arousal_proba(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.arousal_proba(X) >= 0.5).astype(np.int64)

    @classmethod
    def from_trees(cls, trees, n_features: int, **params) -> "BaggedTreesClassifier":
        est = cls(**params)
        est.trees_ = list(trees)
        est.classes_ = np.array([0, 1])
        est.n_features_in_ = int(n_features)
        return est


def fit_bagged(X, y, params: "TrainParams") -> BaggedTreesClassifier:
    return BaggedTreesClassifier(**params.estimator_params()).fit(X, y)


def predict_proba(ensemble: BaggedTreesClassifier, x) -> float:
    """Arousal probability of a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a single feature vector")
    return float(ensemble.arousal_proba(x[None, :])[0])


# ----------------------------------------------------------- subject models


@dataclass(frozen=True)
class TrainParams:
    n_trees: int = 30
    max_depth: int = 20
    min_leaf: int = 1
    bootstrap_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_leaf < 1:
            raise ValueError("n_trees, max_depth and min_leaf must all be >= 1")
        if not self.bootstrap_fraction > 0:
            raise ValueError("bootstrap_fraction must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def estimator_params(self, seed: int | None = None) -> dict:
        return dict(
            n_trees=self.n_trees,
            max_depth=self.max_depth,
            min_leaf=self.min_leaf,
            bootstrap_fraction=self.bootstrap_fraction,
            seed=self.seed if seed is None else seed,
        )


def hash64(global_seed: int, subject_id: str) -> int:
    """Per-subject seed, independent of training order."""
    digest = hashlib.blake2b(f"{int(global_seed)}\x00{subject_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class SubjectModel:
    subject_id: str
    ensemble: BaggedTreesClassifier
    n_epochs_train: int
    class_counts: tuple[int, int]  # (non-arousal, arousal)


class Skipped(NamedTuple):
    subject_id: str
    reason: str
    class_counts: tuple[int, int]


def train_subject(
    record: Record,
    params: TrainParams,
    extractor: EpochFeatureExtractor | None = None,
    epoch_s: float = EPOCH_SECONDS,
) -> SubjectModel | Skipped:
    """Fit one subject's ensemble on its labelled 30 s epochs, or skip it if single-class."""
    extractor = extractor or EpochFeatureExtractor(fs=record.fs)
    epochs = labeled_epochs(record, epoch_s)
    y = np.array([int(e.label) for e in epochs], dtype=np.int64)
    counts = (int(np.count_nonzero(y == Label.NON_AROUSAL)), int(np.count_nonzero(y == Label.AROUSAL)))
    if counts[0] == 0 or counts[1] == 0:
        return Skipped(record.subject_id, "single-class", counts)
    X = extractor.transform_record(record, [e.span for e in epochs])
    est = BaggedTreesClassifier(**params.estimator_params(hash64(params.seed, record.subject_id)))
    est.fit(X, y)
    return SubjectModel(record.subject_id, est, len(epochs), counts)


@dataclass(frozen=True)
class ModelDatabase:
    models: tuple[SubjectModel, ...] = ()
    schema_hash: bytes = field(default=b"\x00" * 32)
    schema_version: str = SCHEMA_VERSION
    n_features: int = N_FEATURES

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        ids = [m.subject_id for m in self.models]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate subject ids in model database")
        if len(self.schema_hash) != 32:
            raise ValueError("schema_hash must be 32 bytes")

    def __len__(self) -> int:
        return len(self.models)

    @property
    def subject_ids(self) -> list[str]:
        return [m.subject_id for m in self.models]

    def predict_proba(self, X) -> np.ndarray:
        """Mean arousal probability over every subject model, one per row of X."""
        if not self.models:
            raise ValueError("model database is empty")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        probs = np.vstack([m.ensemble.arousal_proba(X) for m in self.models])
        return np.clip(probs.mean(axis=0), probs.min(axis=0), probs.max(axis=0))


# ------------------------------------------------------------- persistence
#
# models.bin, all integers little-endian:
#   magic "PSGADB\r\n" | u32 format version | u16 len + schema version (utf-8)
#   32-byte schema hash | u32 n_features | u32 n_models
#   per model: u16 len + subject id | u32 n_epochs | u32 n_non_arousal | u32 n_arousal
#              u32 n_trees | i32 max_depth | u32 min_leaf | f64 bootstrap_fraction | u64 seed
#              per tree: u32 n_nodes, then arrays of n_nodes:
#                        i32 feature, f64 threshold, i32 left, i32 right, f64 value, u32 n_train

MAGIC = b"PSGADB\r\n"
FORMAT_VERSION = 1
_MODEL_HEAD = struct.Struct("<IIIIiIdQ")


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<H", len(b)) + b


def dumps_db(db: ModelDatabase) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    buf.write(_pack_str(db.schema_version))
    buf.write(db.schema_hash)
    buf.write(struct.pack("<II", db.n_features, len(db.models)))
    for m in db.models:
        est = m.ensemble
        buf.write(_pack_str(m.subject_id))
        buf.write(
            _MODEL_HEAD.pack(
                m.n_epochs_train,
                m.class_counts[0],
                m.class_counts[1],
                len(est.trees_),
                -1 if est.max_depth is None else int(est.max_depth),
                int(est.min_leaf),
                float(est.bootstrap_fraction),
                int(est.seed),
            )
        )
        for t in est.trees_:
            buf.write(struct.pack("<I", t.n_nodes))
            buf.write(t.feature.astype("<i4").tobytes())
            buf.write(t.threshold.astype("<f8").tobytes())
            buf.write(t.left.astype("<i4").tobytes())
            buf.write(t.right.astype("<i4").tobytes())
            buf.write(t.value.astype("<f8").tobytes())
            buf.write(t.n_train.astype("<u4").tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError("model database is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str | struct.Struct):
        s = fmt if isinstance(fmt, struct.Struct) else struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def string(self) -> str:
        (n,) = self.unpack("<H")
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise ModelFormatError("model database holds an invalid string") from None

    def array(self, dtype: str, n: int) -> np.ndarray:
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(n * dt.itemsize), dtype=dt).copy()


def _check_tree(t: Tree, n_features: int) -> None:
    n = t.n_nodes
    inner = t.feature != LEAF
    if n == 0:
        raise ModelFormatError("tree without nodes")
    if np.any(t.feature[inner] >= n_features) or np.any(t.feature < LEAF):
        raise ModelFormatError("tree references an unknown feature")
    kids = np.concatenate([t.left[inner], t.right[inner]])
    if np.any(kids <= 0) or np.any(kids >= n) or np.unique(kids).size != kids.size:
        raise ModelFormatError("tree has invalid child links")
    if np.any(~np.isfinite(t.value)) or np.any((t.value < 0) | (t.value > 1)):
        raise ModelFormatError("tree leaf values outside [0, 1]")


def loads_db(data: bytes, expected_hash: bytes | None = None) -> ModelDatabase:
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise ModelFormatError("not a model database (bad magic)")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model database version {version}")
    schema_version = r.string()
    digest = r.take(32)
    if schema_version != SCHEMA_VERSION:
        raise SchemaMismatchError(
            f"model database uses feature schema {schema_version!r}, extractor has {SCHEMA_VERSION!r}"
        )
    if expected_hash is not None and digest != expected_hash:
        raise SchemaMismatchError(
            "model database was trained with an incompatible feature schema/config "
            f"(hash {digest.hex()[:12]}, expected {expected_hash.hex()[:12]})"
        )
    n_features, n_models = r.unpack("<II")
    models = []
    for _ in range(n_models):
        sid = r.string()
        n_ep, n_neg, n_pos, n_trees, max_depth, min_leaf, frac, seed = r.unpack(_MODEL_HEAD)
        trees = []
        for _ in range(n_trees):
            (n,) = r.unpack("<I")
            t = Tree(
                r.array("<i4", n).astype(np.int32),
                r.array("<f8", n).astype(np.float64),
                r.array("<i4", n).astype(np.int32),
                r.array("<i4", n).astype(np.int32),
                r.array("<f8", n).astype(np.float64),
                r.array("<u4", n).astype(np.int64),
            )
            _check_tree(t, n_features)
            trees.append(t)
        est = BaggedTreesClassifier.from_trees(
            trees,
            n_features,
            n_trees=n_trees,
            max_depth=None if max_depth < 0 else max_depth,
            min_leaf=min_leaf,
            bootstrap_fraction=frac,
            seed=seed,
        )
        models.append(SubjectModel(sid, est, n_ep, (n_neg, n_pos)))
    if r.pos != len(data):
        raise ModelFormatError("trailing bytes after model database")
    try:
        return ModelDatabase(tuple(models), digest, schema_version, n_features)
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from None


def save_db(db: ModelDatabase, path) -> Path:
    path = Path(path)
    path.write_bytes(dumps_db(db))
    return path


def load_db(path, expected_hash: bytes | None = None) -> ModelDatabase:
    """Read a model database; with `expected_hash`, refuse incompatible feature schemas."""
    return loads_db(Path(path).read_bytes(), expected_hash)


def build_db(results: Iterable[SubjectModel | Skipped], extractor: EpochFeatureExtractor) -> ModelDatabase:
    models = sorted((r for r in results if isinstance(r, SubjectModel)), key=lambda m: m.subject_id)
    return ModelDatabase(tuple(models), extractor.schema_hash)
