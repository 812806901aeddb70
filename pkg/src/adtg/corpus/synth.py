"""Synthetic procedural-task corpora with known ground truth.

Each task is specified by a DAG partial order over its actions. A video is a
uniform-at-each-step random linearization of the DAG laid out on a 1-second
grid with null gaps, plus per-second feature vectors drawn from Gaussian
clusters: every action has a pre-condition center and a post-condition
center, null seconds use a shared background center.

Within an action's rounded interval [t1, t2] the first half of the frames
(and the frame just before t1) follow the pre center, the second half (and
the frame just after t2) follow the post center, so the two-second windows
around the boundaries land on their clusters exactly. Window frames win over
the background rule on the overlap seconds t1-1 and t2+1.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..graph import GraphBuildResult, TaskGraph, build_graph
from .model import (
    ActionVocabulary,
    Corpus,
    DataError,
    Segment,
    TaskData,
    VideoRecord,
)


class SpecError(ValueError):
    """The synthetic task specification is invalid."""


@dataclass
class SynthTaskSpec:
    task_id: str
    n_actions: int
    partial_order: Tuple[Tuple[int, int], ...]  # (before, after) pairs over 0..n_actions-1
    feature_dim: int = 32
    noise_sigma: float = 0.05
    null_fraction: float = 0.3
    n_videos: int = 50
    seed: int = 0
    duration_range: Tuple[int, int] = (4, 8)
    min_inter_gap: int = 2
    center_scale: float = 1.0
    separable: bool = True
    action_names: Optional[Tuple[str, ...]] = None
    # action index -> index whose feature clusters it reuses (history-ambiguous tasks)
    cluster_aliases: Dict[int, int] = field(default_factory=dict)
    # action index -> duration range replacing duration_range
    duration_overrides: Dict[int, Tuple[int, int]] = field(default_factory=dict)

    def names(self) -> Tuple[str, ...]:
        if self.action_names is not None:
            if len(self.action_names) != self.n_actions:
                raise SpecError("action_names length must equal n_actions")
            return self.action_names
        return tuple(f"act{k:02d}" for k in range(self.n_actions))

    def validate(self) -> None:
        if self.n_actions < 1:
            raise SpecError("need at least one action")
        if not (0 <= self.null_fraction < 1):
            raise SpecError("null_fraction must lie in [0, 1)")
        if self.n_videos < 1:
            raise SpecError("need at least one video")
        if self.duration_range[0] < 2 or self.duration_range[0] > self.duration_range[1]:
            raise SpecError("duration_range must satisfy 2 <= lo <= hi")
        for a, b in self.partial_order:
            if not (0 <= a < self.n_actions and 0 <= b < self.n_actions) or a == b:
                raise SpecError(f"bad partial-order pair ({a}, {b})")
        if _has_cycle(self.n_actions, self.partial_order):
            raise SpecError("partial_order contains a cycle")
        for k, target in self.cluster_aliases.items():
            if not (0 <= k < self.n_actions and 0 <= target < self.n_actions):
                raise SpecError(f"bad cluster alias {k} -> {target}")
        for k, (lo, hi) in self.duration_overrides.items():
            if not (0 <= k < self.n_actions) or lo < 2 or lo > hi:
                raise SpecError(f"bad duration override for action {k}: ({lo}, {hi})")


def _has_cycle(n: int, edges: Sequence[Tuple[int, int]]) -> bool:
    adj: Dict[int, List[int]] = {k: [] for k in range(n)}
    indeg = [0] * n
    for a, b in edges:
        adj[a].append(b)
        indeg[b] += 1
    ready = [k for k in range(n) if indeg[k] == 0]
    seen = 0
    while ready:
        node = ready.pop()
        seen += 1
        for nxt in adj[node]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                ready.append(nxt)
    return seen != n


def _random_linearization(spec: SynthTaskSpec, rng: np.random.Generator) -> List[int]:
    indeg = [0] * spec.n_actions
    adj: Dict[int, List[int]] = {k: [] for k in range(spec.n_actions)}
    for a, b in spec.partial_order:
        adj[a].append(b)
        indeg[b] += 1
    ready = sorted(k for k in range(spec.n_actions) if indeg[k] == 0)
    order: List[int] = []
    while ready:
        pick = ready.pop(int(rng.integers(len(ready))))
        order.append(pick)
        for nxt in adj[pick]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                ready.append(nxt)
        ready.sort()
    return order


def _draw_centers(spec: SynthTaskSpec, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Background, pre and post centers; enforces 4-sigma separation when asked."""
    for _ in range(64):
        background = rng.normal(size=spec.feature_dim)
        pre = rng.normal(size=(spec.n_actions, spec.feature_dim))
        post = rng.normal(size=(spec.n_actions, spec.feature_dim))
        stackable = [background[None, :], pre, post]
        centers = np.concatenate(stackable, axis=0)
        norms = np.linalg.norm(centers, axis=1, keepdims=True)
        centers = centers / norms * spec.center_scale
        background, pre, post = centers[0], centers[1 : 1 + spec.n_actions], centers[1 + spec.n_actions :]
        for k, target in spec.cluster_aliases.items():
            pre[k] = pre[target]
            post[k] = post[target]
        if not spec.separable:
            return background, pre, post
        distinct = [background] + [pre[k] for k in range(spec.n_actions) if k not in spec.cluster_aliases]
        distinct += [post[k] for k in range(spec.n_actions) if k not in spec.cluster_aliases]
        mat = np.stack(distinct)
        dists = np.linalg.norm(mat[:, None, :] - mat[None, :, :], axis=2)
        np.fill_diagonal(dists, np.inf)
        if dists.min() > 4.0 * spec.noise_sigma:
            return background, pre, post
    raise SpecError(
        "could not draw cluster centers with pairwise distance > 4*noise_sigma; "
        "lower noise_sigma or raise feature_dim"
    )


def _gap_layout(spec: SynthTaskSpec, rng: np.random.Generator, n_actions: int,
                action_seconds: int) -> List[int]:
    """Null seconds per slot: intro, between consecutive actions, outro."""
    n_slots = n_actions + 1
    nf = spec.null_fraction
    total_null = int(round(action_seconds * nf / (1.0 - nf))) if nf > 0 else 0
    gaps = list(rng.multinomial(total_null, np.full(n_slots, 1.0 / n_slots)))
    # Inner gaps shorter than min_inter_gap borrow from the largest slot so
    # adjacent condition windows cannot overwrite each other.
    if total_null >= spec.min_inter_gap * (n_slots - 2):
        for idx in range(1, n_slots - 1):
            while gaps[idx] < spec.min_inter_gap:
                donor = int(np.argmax(gaps))
                if donor == idx or gaps[donor] <= spec.min_inter_gap:
                    break
                gaps[donor] -= 1
                gaps[idx] += 1
    return gaps


def synth_generate(spec: SynthTaskSpec) -> Tuple[ActionVocabulary, List[VideoRecord], TaskGraph]:
    """Generate one task's videos plus the ground-truth successor graph.

    The returned graph is constructed directly from the emitted action
    orders (consecutive pairs plus final -> EOS), independently of the
    framewise labeling path, so it can serve as an oracle for graph
    recovery.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    names = spec.names()
    vocab = ActionVocabulary(task_id=spec.task_id, actions=names)
    background, pre_centers, post_centers = _draw_centers(spec, rng)

    videos: List[VideoRecord] = []
    emitted_orders: List[List[int]] = []
    for v in range(spec.n_videos):
        order = _random_linearization(spec, rng)
        emitted_orders.append(order)
        durations = []
        for k in order:
            lo, hi = spec.duration_overrides.get(k, spec.duration_range)
            durations.append(int(rng.integers(lo, hi + 1)))
        gaps = _gap_layout(spec, rng, len(order), sum(durations))
        cursor = 1 + gaps[0]
        bounds: List[Tuple[int, int]] = []
        for i, dur in enumerate(durations):
            t1 = cursor
            t2 = t1 + dur - 1
            bounds.append((t1, t2))
            cursor = t2 + 1 + gaps[i + 1]
        total_T = bounds[-1][1] + gaps[-1]

        feats = background[None, :] + rng.normal(scale=spec.noise_sigma,
                                                 size=(total_T, spec.feature_dim))
        segments: List[Segment] = []
        for (t1, t2), k in zip(bounds, order):
            mid = (t1 + t2) // 2
            lo = max(t1 - 1, 1)
            hi = min(t2 + 1, total_T)
            for t in range(lo, mid + 1):
                feats[t - 1] = pre_centers[k] + rng.normal(scale=spec.noise_sigma,
                                                           size=spec.feature_dim)
            for t in range(mid + 1, hi + 1):
                feats[t - 1] = post_centers[k] + rng.normal(scale=spec.noise_sigma,
                                                            size=spec.feature_dim)
            # Fractional jitter that still rounds back to (t1, t2).
            j1 = rng.uniform(-0.4, 0.4)
            j2 = rng.uniform(-0.4, 0.4)
            segments.append(Segment(action=names[k], t_start=max(t1 + j1, 0.0), t_end=t2 + j2))
        videos.append(
            VideoRecord(
                video_id=f"{spec.task_id}_v{v:04d}",
                task_id=spec.task_id,
                features=feats.astype(np.float32),
                segments=tuple(segments),
            )
        )

    sequences = [[k + 1 for k in order] for order in emitted_orders]
    truth: GraphBuildResult = build_graph(sequences, vocab)
    return vocab, videos, truth.graph


def build_synth_corpus(specs: Sequence[SynthTaskSpec]) -> Tuple[Corpus, Dict[str, TaskGraph]]:
    """Assemble a multi-task corpus; returns it with per-task oracle graphs."""
    corpus = Corpus()
    truths: Dict[str, TaskGraph] = {}
    dim = None
    for spec in specs:
        vocab, videos, truth = synth_generate(spec)
        if dim is None:
            dim = spec.feature_dim
        elif dim != spec.feature_dim:
            raise SpecError("all tasks in one corpus must share feature_dim")
        task = TaskData(vocab=vocab)
        for video in videos:
            task.videos[video.video_id] = video
        corpus.tasks[spec.task_id] = task
        truths[spec.task_id] = truth
    corpus.feature_dim = dim or 0
    corpus.meta["synthetic"] = True
    corpus.validate()
    return corpus, truths


def spec_digest(specs: Sequence[SynthTaskSpec]) -> str:
    parts = []
    for s in sorted(specs, key=lambda s: s.task_id):
        parts.append(
            f"{s.task_id}|{s.n_actions}|{sorted(s.partial_order)}|{s.feature_dim}|{s.noise_sigma}"
            f"|{s.null_fraction}|{s.n_videos}|{s.seed}|{s.duration_range}|{s.min_inter_gap}"
            f"|{s.center_scale}|{s.separable}|{sorted(s.cluster_aliases.items())}"
        )
    return hashlib.sha256("\n".join(parts).encode()).hexdigest()[:16]
