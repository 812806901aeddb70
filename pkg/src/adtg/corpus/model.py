"""Data model for annotated demonstration videos.

Seconds are 1-based (a video of duration T has seconds 1..T); arrays are
0-indexed, so ``features[t - 1]`` is the feature vector of second ``t``.
Segment boundaries are real-valued and rounded half-up when mapped onto the
per-second grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

NULL_ID = 0
NULL_NAME = "<null>"
EOS_NAME = "<eos>"

RESERVED_NAMES = {NULL_NAME, EOS_NAME}


class DataError(ValueError):
    """Corpus contents violate an invariant."""


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ActionVocabulary:
    """Ordered action names of one task, plus the reserved NULL and EOS ids.

    NULL is index 0, actions occupy 1..n, EOS is index n+1. Indices are
    stable across save/load because they derive from the stored order.
    """

    task_id: str
    actions: Tuple[str, ...]

    def __post_init__(self):
        if len(set(self.actions)) != len(self.actions):
            raise DataError(f"duplicate action names in task {self.task_id!r}")
        for name in self.actions:
            if name in RESERVED_NAMES or not name:
                raise DataError(f"reserved or empty action name {name!r} in task {self.task_id!r}")

    @property
    def eos_id(self) -> int:
        return len(self.actions) + 1

    @property
    def size(self) -> int:
        """Total ids including NULL and EOS."""
        return len(self.actions) + 2

    def index_of(self, name: str) -> int:
        if name == NULL_NAME:
            return NULL_ID
        if name == EOS_NAME:
            return self.eos_id
        try:
            return self.actions.index(name) + 1
        except ValueError:
            raise DataError(f"unknown action {name!r} for task {self.task_id!r}") from None

    def name_of(self, idx: int) -> str:
        if idx == NULL_ID:
            return NULL_NAME
        if idx == self.eos_id:
            return EOS_NAME
        if 1 <= idx <= len(self.actions):
            return self.actions[idx - 1]
        raise DataError(f"action id {idx} out of range for task {self.task_id!r}")

    def action_ids(self) -> Tuple[int, ...]:
        """Ids of the concrete (non-reserved) actions."""
        return tuple(range(1, len(self.actions) + 1))


@dataclass(frozen=True)
class Segment:
    action: str
    t_start: float
    t_end: float

    def __post_init__(self):
        if not (0 <= self.t_start < self.t_end):
            raise DataError(
                f"segment {self.action!r} needs 0 <= t_start < t_end, got [{self.t_start}, {self.t_end}]"
            )

    def rounded(self) -> Tuple[int, int]:
        return round_half_up(self.t_start), round_half_up(self.t_end)


@dataclass
class VideoRecord:
    video_id: str
    task_id: str
    features: np.ndarray  # (T, D) float32
    segments: Tuple[Segment, ...]

    @property
    def duration(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def validate(self, vocab: ActionVocabulary) -> None:
        T = self.duration
        prev_end = 0
        for seg in self.segments:
            if seg.action not in vocab.actions:
                raise DataError(
                    f"video {self.video_id!r}: segment action {seg.action!r} not in task vocabulary"
                )
            t1, t2 = seg.rounded()
            if not (1 <= t1 <= t2 <= T):
                raise DataError(
                    f"video {self.video_id!r}: segment {seg.action!r} rounds to [{t1}, {t2}] outside [1, {T}]"
                )
            if t1 <= prev_end:
                raise DataError(
                    f"video {self.video_id!r}: segments overlap after rounding at second {t1}"
                )
            prev_end = t2


@dataclass
class TaskData:
    vocab: ActionVocabulary
    videos: Dict[str, VideoRecord] = field(default_factory=dict)

    def video_ids(self) -> List[str]:
        return sorted(self.videos)


@dataclass
class Corpus:
    tasks: Dict[str, TaskData] = field(default_factory=dict)
    feature_dim: int = 0
    meta: dict = field(default_factory=dict)

    def task_ids(self) -> List[str]:
        return sorted(self.tasks)

    def validate(self) -> None:
        for task in self.tasks.values():
            for video in task.videos.values():
                if video.feature_dim != self.feature_dim:
                    raise DataError(
                        f"video {video.video_id!r}: feature dim {video.feature_dim} != corpus dim {self.feature_dim}"
                    )
                video.validate(task.vocab)


@dataclass(frozen=True)
class Split:
    train: Tuple[str, ...]
    val: Tuple[str, ...]
    test: Tuple[str, ...]


def framewise_labels(video: VideoRecord, vocab: ActionVocabulary) -> np.ndarray:
    """Per-second action ids of length T; seconds outside any rounded segment get NULL."""
    video.validate(vocab)
    labels = np.zeros(video.duration, dtype=np.int32)
    for seg in video.segments:
        t1, t2 = seg.rounded()
        labels[t1 - 1 : t2] = vocab.index_of(seg.action)
    return labels


def condition_windows(video: VideoRecord, seg: Segment) -> Tuple[np.ndarray, np.ndarray]:
    """Two-second windows around the segment's start and end.

    Returns ``(X_pre, X_post)`` of shape (2, D) in float64: frames
    (t1-1, t1) and (t2, t2+1), clamp-padded at the video boundaries.
    """
    T = video.duration
    t1, t2 = seg.rounded()

    def frame(t: int) -> np.ndarray:
        t = min(max(t, 1), T)
        return video.features[t - 1]

    x_pre = np.stack([frame(t1 - 1), frame(t1)]).astype(np.float64)
    x_post = np.stack([frame(t2), frame(t2 + 1)]).astype(np.float64)
    return x_pre, x_post


def compressed_sequence(labels: Sequence[int]) -> List[int]:
    """Collapse consecutive duplicate labels, then drop NULL runs."""
    out: List[int] = []
    prev = None
    for lab in labels:
        lab = int(lab)
        if lab != prev:
            if lab != NULL_ID:
                out.append(lab)
            prev = lab
    return out


def split_dataset(video_ids: Iterable[str], seed: int) -> Split:
    """Deterministic train/val/test split.

    With at least 71 videos the fixed 50/20/rest split applies; otherwise
    60/20/20 proportions with at least one video per split.
    """
    ids = sorted(video_ids)
    n = len(ids)
    if n < 3:
        raise DataError(f"need at least 3 videos to split, got {n}")
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(n)]
    if n >= 71:
        n_train, n_val = 50, 20
    else:
        n_train = round_half_up(0.6 * n)
        n_val = max(1, round_half_up(0.2 * n))
        while n - n_train - n_val < 1:
            n_train -= 1
        n_train = max(1, n_train)
    return Split(
        train=tuple(order[:n_train]),
        val=tuple(order[n_train : n_train + n_val]),
        test=tuple(order[n_train + n_val :]),
    )
