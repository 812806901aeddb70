"""Portable on-disk corpus format.

Layout of a corpus directory:

    manifest.json                     {"format": 1, "feature_dim": D, "tasks": [...], ...}
    tasks/<task_id>/vocab.json        {"task_id": ..., "actions": [...]}
    tasks/<task_id>/annotations.jsonl one line per video
    features/<video_id>.feat          binary feature stream

Feature files: magic "ADTGFEAT", version u16, T u32, D u32 (little-endian),
then T*D float32 little-endian, row-major. Values survive save/load bitwise.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict

import numpy as np

from .model import (
    ActionVocabulary,
    Corpus,
    DataError,
    Segment,
    TaskData,
    VideoRecord,
)

FEATURE_MAGIC = b"ADTGFEAT"
FEATURE_VERSION = 1
FORMAT_VERSION = 1


class ParseError(ValueError):
    """A corpus file is malformed."""


def write_features(path: Path, features: np.ndarray) -> None:
    arr = np.ascontiguousarray(features, dtype="<f4")
    if arr.ndim != 2:
        raise DataError(f"feature array must be 2-d, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<HII", FEATURE_VERSION, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_features(path: Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    header = struct.calcsize("<HII")
    if len(raw) < len(FEATURE_MAGIC) + header:
        raise ParseError(f"{path}: truncated feature file")
    if raw[: len(FEATURE_MAGIC)] != FEATURE_MAGIC:
        raise ParseError(f"{path}: bad magic, not a feature file")
    version, t, d = struct.unpack_from("<HII", raw, len(FEATURE_MAGIC))
    if version != FEATURE_VERSION:
        raise ParseError(f"{path}: unsupported feature version {version}")
    body = raw[len(FEATURE_MAGIC) + header :]
    expected = t * d * 4
    if len(body) != expected:
        raise ParseError(f"{path}: payload is {len(body)} bytes, expected {expected}")
    return np.frombuffer(body, dtype="<f4").reshape(t, d).copy()


def write_vocab(path: Path, vocab: ActionVocabulary) -> None:
    path.write_text(
        json.dumps({"task_id": vocab.task_id, "actions": list(vocab.actions)}, indent=2) + "\n"
    )


def read_vocab(path: Path) -> ActionVocabulary:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    try:
        return ActionVocabulary(task_id=doc["task_id"], actions=tuple(doc["actions"]))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{path}: missing or malformed field: {exc}") from exc


def _segment_from_obj(obj: dict, where: str) -> Segment:
    try:
        return Segment(
            action=obj["action"], t_start=float(obj["t_start"]), t_end=float(obj["t_end"])
        )
    except KeyError as exc:
        raise ParseError(f"{where}: segment missing field {exc}") from exc


def save_corpus(corpus: Corpus, root: Path) -> None:
    root = Path(root)
    (root / "features").mkdir(parents=True, exist_ok=True)
    for task_id in corpus.task_ids():
        task = corpus.tasks[task_id]
        task_dir = root / "tasks" / task_id
        task_dir.mkdir(parents=True, exist_ok=True)
        write_vocab(task_dir / "vocab.json", task.vocab)
        with open(task_dir / "annotations.jsonl", "w") as fh:
            for video_id in task.video_ids():
                video = task.videos[video_id]
                fh.write(
                    json.dumps(
                        {
                            "video_id": video_id,
                            "segments": [
                                {"action": s.action, "t_start": s.t_start, "t_end": s.t_end}
                                for s in video.segments
                            ],
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
                write_features(root / "features" / f"{video_id}.feat", video.features)
    manifest = {
        "format": FORMAT_VERSION,
        "feature_dim": corpus.feature_dim,
        "tasks": corpus.task_ids(),
        "meta": corpus.meta,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_corpus(root: Path) -> Corpus:
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise ParseError(f"{manifest_path}: missing corpus manifest")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{manifest_path}: {exc}") from exc
    corpus = Corpus(feature_dim=int(manifest["feature_dim"]), meta=manifest.get("meta", {}))
    for task_id in manifest["tasks"]:
        task_dir = root / "tasks" / task_id
        vocab = read_vocab(task_dir / "vocab.json")
        if vocab.task_id != task_id:
            raise ParseError(f"{task_dir}: vocab task_id {vocab.task_id!r} != directory {task_id!r}")
        task = TaskData(vocab=vocab)
        ann_path = task_dir / "annotations.jsonl"
        for lineno, line in enumerate(ann_path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{ann_path}:{lineno}: {exc}") from exc
            video_id = doc.get("video_id")
            if not video_id:
                raise ParseError(f"{ann_path}:{lineno}: missing video_id")
            where = f"{ann_path}:{lineno}"
            segments = tuple(
                sorted(
                    (_segment_from_obj(obj, where) for obj in doc.get("segments", [])),
                    key=lambda s: s.t_start,
                )
            )
            features = read_features(root / "features" / f"{video_id}.feat")
            video = VideoRecord(
                video_id=video_id, task_id=task_id, features=features, segments=segments
            )
            task.videos[video_id] = video
        corpus.tasks[task_id] = task
    corpus.validate()
    return corpus
