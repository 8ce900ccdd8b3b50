"""Sleep arousal detection from multichannel polysomnography.

Pipeline: 30 s epochs -> 428 features -> one bagged-tree ensemble per
training subject -> averaged sample-wise arousal probabilities -> gross
AUPRC/AUROC.
"""
from .classifier import (
    BaggedTreesClassifier,
    ModelDatabase,
    SubjectModel,
    TrainParams,
    load_db,
    save_db,
    train_subject,
)
from .config import PipelineConfig
from .epoching import Label, labeled_epochs, segment_test, segment_train
from .features import FEATURE_NAMES, EpochFeatureExtractor, extract_epoch
from .record import ChannelRole, Record, read_record, validate_record, write_record
from .scoring import auprc, auroc, gross_score, predict_record, read_vec, write_vec
from .synth import SynthParams, synth_record

__version__ = "0.1.0"

__all__ = [
    "BaggedTreesClassifier",
    "ChannelRole",
    "EpochFeatureExtractor",
    "FEATURE_NAMES",
    "Label",
    "ModelDatabase",
    "PipelineConfig",
    "Record",
    "SubjectModel",
    "SynthParams",
    "TrainParams",
    "auprc",
    "auroc",
    "extract_epoch",
    "gross_score",
    "labeled_epochs",
    "load_db",
    "predict_record",
    "read_record",
    "read_vec",
    "save_db",
    "segment_test",
    "segment_train",
    "synth_record",
    "train_subject",
    "validate_record",
    "write_record",
    "write_vec",
]
