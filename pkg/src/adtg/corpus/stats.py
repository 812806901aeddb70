"""Per-task corpus statistics: video counts, action-space sizes, step lengths, null share."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .model import NULL_ID, Corpus, compressed_sequence, framewise_labels


@dataclass(frozen=True)
class TaskStats:
    task_id: str
    n_videos: int
    action_space: int
    mean_steps: float
    null_fraction: float


def task_stats(corpus: Corpus) -> List[TaskStats]:
    out = []
    for task_id in corpus.task_ids():
        task = corpus.tasks[task_id]
        lengths = []
        null_seconds = 0
        total_seconds = 0
        for video_id in task.video_ids():
            labels = framewise_labels(task.videos[video_id], task.vocab)
            lengths.append(len(compressed_sequence(labels)))
            null_seconds += int((labels == NULL_ID).sum())
            total_seconds += len(labels)
        out.append(
            TaskStats(
                task_id=task_id,
                n_videos=len(task.videos),
                action_space=len(task.vocab.actions),
                mean_steps=float(np.mean(lengths)) if lengths else 0.0,
                null_fraction=null_seconds / total_seconds if total_seconds else 0.0,
            )
        )
    return out


def stats_table(corpus: Corpus) -> str:
    """Plain-text table: task, videos, action space, mean steps, null fraction."""
    rows = task_stats(corpus)
    header = f"{'Task':<32} {'Videos':>7} {'Actions':>8} {'MeanSteps':>10} {'Null%':>7}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.task_id:<32} {r.n_videos:>7d} {r.action_space:>8d} "
            f"{r.mean_steps:>10.2f} {100.0 * r.null_fraction:>6.1f}%"
        )
    if rows:
        agg_null = float(np.mean([r.null_fraction for r in rows]))
        agg_steps = float(np.mean([r.mean_steps for r in rows]))
        lines.append("-" * len(header))
        lines.append(
            f"{'Average':<32} {int(np.mean([r.n_videos for r in rows])):>7d} "
            f"{float(np.mean([r.action_space for r in rows])):>8.1f} "
            f"{agg_steps:>10.2f} {100.0 * agg_null:>6.1f}%"
        )
    return "\n".join(lines) + "\n"
