"""Corpus data model, file formats, labeling, splits, and the synthetic generator."""

from .fileio import FEATURE_MAGIC, ParseError, load_corpus, read_features, save_corpus, write_features
from .model import (
    EOS_NAME,
    NULL_ID,
    NULL_NAME,
    ActionVocabulary,
    Corpus,
    DataError,
    Segment,
    Split,
    TaskData,
    VideoRecord,
    compressed_sequence,
    condition_windows,
    framewise_labels,
    round_half_up,
    split_dataset,
)
from .stats import TaskStats, stats_table, task_stats
from .synth import SpecError, SynthTaskSpec, build_synth_corpus, spec_digest, synth_generate

__all__ = [
    "ActionVocabulary",
    "Corpus",
    "DataError",
    "EOS_NAME",
    "FEATURE_MAGIC",
    "NULL_ID",
    "NULL_NAME",
    "ParseError",
    "Segment",
    "SpecError",
    "Split",
    "SynthTaskSpec",
    "TaskData",
    "TaskStats",
    "VideoRecord",
    "build_synth_corpus",
    "compressed_sequence",
    "condition_windows",
    "framewise_labels",
    "load_corpus",
    "read_features",
    "round_half_up",
    "save_corpus",
    "spec_digest",
    "split_dataset",
    "stats_table",
    "synth_generate",
    "task_stats",
    "write_features",
]
