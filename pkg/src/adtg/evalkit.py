"""Metrics and evaluation drivers for tracking, recommendation, and planning.

Tracking is evaluated free-running: the history advances with the predicted
action at each predicted action-change event, never with ground truth.
Recommendation is evaluated teacher-forced per consecutive ground-truth
pair. Planning is evaluated from the first second (complete mode) or from a
seeded uniform-random cut point with the ground-truth prefix as history
(prefix mode).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import numkit as nk
from .config import RunConfig
from .corpus.model import (
    NULL_ID,
    ActionVocabulary,
    Corpus,
    Split,
    compressed_sequence,
    framewise_labels,
)
from .embedding import EmbedDims, EmbeddingBundle, init_bundle, onehot_bundle, train_embeddings
from .graph import TaskGraph, build_graph
from .guidance import (
    GuidanceBundle,
    advance_history,
    init_state,
    plan,
    recommend,
    track_step,
    train_recommender,
    train_tracker,
)
from .seeding import derive_seed, rng_for

ABLATION_VARIANTS = ("full", "no_history", "random_embed", "onehot_embed")


# ---------------------------------------------------------------------------
# metric functions


def accuracy(pred: Sequence[int], gt: Sequence[int]) -> float:
    """Fraction of positions where prediction equals ground truth."""
    if len(pred) != len(gt):
        raise nk.UsageError(f"length mismatch: {len(pred)} vs {len(gt)}")
    if len(gt) == 0:
        raise nk.UsageError("empty sequences")
    return sum(int(p) == int(g) for p, g in zip(pred, gt)) / len(gt)


def accuracy_excl_null(pred: Sequence[int], gt: Sequence[int]) -> float:
    """Accuracy restricted to non-null ground-truth positions.

    All-null ground truth has no scoreable positions; returns NaN, which
    aggregation skips.
    """
    if len(pred) != len(gt):
        raise nk.UsageError(f"length mismatch: {len(pred)} vs {len(gt)}")
    picked = [(p, g) for p, g in zip(pred, gt) if int(g) != NULL_ID]
    if not picked:
        return math.nan
    return sum(int(p) == int(g) for p, g in picked) / len(picked)


class LoglikSteps(NamedTuple):
    pred_mean: float
    gt_mean: float
    scored: int
    skipped: int


def loglik_pair(steps: Sequence[Tuple[Sequence[int], np.ndarray, int]]) -> LoglikSteps:
    """Mean log-probability of the argmax action vs the ground-truth action.

    Each step is (candidates, log_probs, gt). Steps whose ground truth is
    outside the candidate set are skipped and counted.
    """
    pred_total = 0.0
    gt_total = 0.0
    scored = 0
    skipped = 0
    for candidates, log_probs, gt in steps:
        candidates = list(candidates)
        if gt not in candidates:
            skipped += 1
            continue
        lp = np.asarray(log_probs, dtype=np.float64)
        pred_total += float(lp.max())
        gt_total += float(lp[candidates.index(gt)])
        scored += 1
    if scored == 0:
        raise nk.UsageError("no scoreable recommendation steps")
    return LoglikSteps(pred_total / scored, gt_total / scored, scored, skipped)


def miou(pred: Sequence[int], gt: Sequence[int]) -> float:
    """Set-level intersection over union; two empty sets count as identical."""
    ps, gs = set(int(p) for p in pred), set(int(g) for g in gt)
    if not ps and not gs:
        return 1.0
    return len(ps & gs) / len(ps | gs)


# ---------------------------------------------------------------------------
# report structure


@dataclass
class MetricStat:
    mean: float
    std: Optional[float]
    per_seed: List[float]

    def to_obj(self) -> dict:
        return {"mean": self.mean, "std": self.std, "per_seed": self.per_seed}


@dataclass
class EvalReport:
    mode: str
    seeds: List[int]
    config_hash: str
    per_task: Dict[str, Dict[str, MetricStat]] = field(default_factory=dict)
    aggregate: Dict[str, MetricStat] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "mode": self.mode,
            "seeds": self.seeds,
            "config_hash": self.config_hash,
            "per_task": {
                t: {m: s.to_obj() for m, s in metrics.items()}
                for t, metrics in self.per_task.items()
            },
            "aggregate": {m: s.to_obj() for m, s in self.aggregate.items()},
            "meta": self.meta,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        metrics = sorted(self.aggregate)
        width = max([len("task")] + [len(t) for t in self.per_task]) + 2
        header = f"{'task':<{width}}" + "".join(f"{m:>24}" for m in metrics)
        lines = [f"mode: {self.mode}  seeds: {self.seeds}", header, "-" * len(header)]

        def cell(stat: MetricStat) -> str:
            if stat.std is None:
                return f"{stat.mean:.3f}"
            return f"{stat.mean:.3f} (+/- {stat.std:.3f})"

        for task in sorted(self.per_task):
            row = f"{task:<{width}}"
            for m in metrics:
                row += f"{cell(self.per_task[task][m]):>24}"
            lines.append(row)
        lines.append("-" * len(header))
        row = f"{'aggregate':<{width}}"
        for m in metrics:
            row += f"{cell(self.aggregate[m]):>24}"
        lines.append(row)
        return "\n".join(lines) + "\n"


def _stat(values: Sequence[float]) -> MetricStat:
    clean = [v for v in values if not math.isnan(v)]
    if not clean:
        return MetricStat(mean=math.nan, std=None, per_seed=list(values))
    mean = float(np.mean(clean))
    std = float(np.std(clean)) if len(clean) >= 2 else None
    return MetricStat(mean=mean, std=std, per_seed=list(values))


def _assemble_report(mode: str, seeds: Sequence[int], config_hash: str,
                     by_task_seed: Dict[str, List[Dict[str, float]]],
                     meta: dict) -> EvalReport:
    report = EvalReport(mode=mode, seeds=list(seeds), config_hash=config_hash, meta=meta)
    metric_names: List[str] = sorted({m for runs in by_task_seed.values() for r in runs for m in r})
    for task, runs in sorted(by_task_seed.items()):
        report.per_task[task] = {
            m: _stat([r.get(m, math.nan) for r in runs]) for m in metric_names
        }
    for m in metric_names:
        per_seed_aggregate: List[float] = []
        for si in range(len(seeds)):
            vals = [runs[si].get(m, math.nan) for runs in by_task_seed.values()]
            vals = [v for v in vals if not math.isnan(v)]
            per_seed_aggregate.append(float(np.mean(vals)) if vals else math.nan)
        report.aggregate[m] = _stat(per_seed_aggregate)
    return report


# ---------------------------------------------------------------------------
# per-task drivers


@dataclass
class SeedBundles:
    """Everything one trained seed needs at evaluation time."""

    embedding: EmbeddingBundle
    guidance: GuidanceBundle
    graphs: Dict[str, TaskGraph]


def track_video(bundle: GuidanceBundle, vocab: ActionVocabulary, video,
                history_mode: str = "events") -> Tuple[np.ndarray, List[Tuple]]:
    """Free-running per-second predictions for one video.

    With ``history_mode="events"`` the history advances when the predicted
    action changes to a new non-null action; with ``"seconds"`` it advances
    every non-null predicted second. Either way the advance is applied with
    a one-second lag, matching the teacher-forced training schedule.
    """
    cands = (NULL_ID,) + vocab.action_ids()
    state = init_state(bundle)
    prev = NULL_ID
    last_event = NULL_ID
    pending: List[Tuple[int, int]] = []  # (detected-at second, action)
    preds = np.zeros(video.duration, dtype=np.int64)
    scored_steps: List[Tuple] = []
    for t in range(1, video.duration + 1):
        while pending and pending[0][0] <= t - 2:
            state = advance_history(bundle, vocab, state, pending.pop(0)[1])
        scored = track_step(bundle, vocab, state, video.features[t - 1].astype(np.float64), cands)
        pred = scored.chosen
        preds[t - 1] = pred
        scored_steps.append((scored.candidates, scored.log_probs, None))
        if pred != NULL_ID:
            if history_mode == "seconds":
                pending.append((t, pred))
            elif pred != prev and pred != last_event:
                pending.append((t, pred))
                last_event = pred
        prev = pred
    return preds, scored_steps


def _eval_tracking(bundles: SeedBundles, corpus: Corpus, task_id: str,
                   video_ids: Sequence[str], history_mode: str) -> Dict[str, float]:
    task = corpus.tasks[task_id]
    all_preds: List[int] = []
    all_gt: List[int] = []
    for video_id in sorted(video_ids):
        video = task.videos[video_id]
        preds, _ = track_video(bundles.guidance, task.vocab, video, history_mode)
        all_preds.extend(int(p) for p in preds)
        all_gt.extend(int(g) for g in framewise_labels(video, task.vocab))
    return {
        "accuracy": accuracy(all_preds, all_gt),
        "accuracy_excl_null": accuracy_excl_null(all_preds, all_gt),
    }


def _eval_recommendation(bundles: SeedBundles, corpus: Corpus, task_id: str,
                         video_ids: Sequence[str]) -> Dict[str, float]:
    task = corpus.tasks[task_id]
    graph = bundles.graphs[task_id]
    correct = 0
    total = 0
    steps: List[Tuple] = []
    for video_id in sorted(video_ids):
        video = task.videos[video_id]
        seq = compressed_sequence(framewise_labels(video, task.vocab))
        if not seq:
            continue
        walk = seq + [task.vocab.eos_id]
        state = init_state(bundles.guidance)
        for src, dst in zip(walk, walk[1:]):
            state = advance_history(bundles.guidance, task.vocab, state, src)
            if not graph.has_node(src):
                continue  # action unseen in training: no node to recommend from
            scored = recommend(bundles.guidance, task.vocab, graph, state)
            correct += scored.chosen == dst
            total += 1
            steps.append((scored.candidates, scored.log_probs, dst))
    if total == 0:
        return {"accuracy": math.nan, "loglik_pred": math.nan, "loglik_gt": math.nan}
    ll = loglik_pair(steps)
    return {
        "accuracy": correct / total,
        "loglik_pred": ll.pred_mean,
        "loglik_gt": ll.gt_mean,
        "skipped_pairs": float(ll.skipped),
    }


def _plan_metrics(planned: Sequence[int], remainder: Sequence[int]) -> Dict[str, float]:
    out = {"miou": miou(planned, remainder),
           "length_mismatch": float(abs(len(planned) - len(remainder)))}
    n = min(len(planned), len(remainder))
    if n > 0:
        out["accuracy"] = accuracy(list(planned)[:n], list(remainder)[:n])
    else:
        out["accuracy"] = math.nan
    return out


def _eval_planning(bundles: SeedBundles, corpus: Corpus, task_id: str,
                   video_ids: Sequence[str], mode: str, config: RunConfig,
                   seed: int) -> Dict[str, float]:
    task = corpus.tasks[task_id]
    graph = bundles.graphs[task_id]
    per_video: List[Dict[str, float]] = []
    for video_id in sorted(video_ids):
        video = task.videos[video_id]
        labels = framewise_labels(video, task.vocab)
        full_seq = compressed_sequence(labels)
        if mode == "plan_complete":
            t_init = min(1 + config.plan_t_offset, video.duration)
            prefix: List[int] = []
            remainder = full_seq
        else:
            cut_rng = rng_for(seed, "prefix-cut", task_id, video_id)
            t_init = int(cut_rng.integers(1, video.duration + 1))
            prefix = _completed_prefix(video, task.vocab, t_init)
            remainder = compressed_sequence(labels[t_init - 1 :])
        x_init = video.features[t_init - 1].astype(np.float64)
        result = plan(bundles.guidance, task.vocab, graph, x_init, prefix,
                      beam_width=config.beam_width, max_len=config.max_plan_len)
        per_video.append(_plan_metrics(result.actions, remainder))
    if not per_video:
        return {"accuracy": math.nan, "miou": math.nan, "length_mismatch": math.nan}
    out: Dict[str, float] = {}
    for key in ("accuracy", "miou", "length_mismatch"):
        vals = [m[key] for m in per_video if not math.isnan(m[key])]
        out[key] = float(np.mean(vals)) if vals else math.nan
    return out


def _completed_prefix(video, vocab: ActionVocabulary, cut: int) -> List[int]:
    """Actions of segments fully completed before the cut second."""
    done = []
    for seg in video.segments:
        _, t2 = seg.rounded()
        if t2 < cut:
            done.append(vocab.index_of(seg.action))
    return compressed_sequence(done)


# ---------------------------------------------------------------------------
# evaluate / ablations


EVAL_MODES = ("tracking", "recommendation", "plan_complete", "plan_prefix")


def evaluate(corpus: Corpus, splits: Mapping[str, Split],
             bundles_by_seed: Mapping[int, SeedBundles], mode: str, *,
             config: Optional[RunConfig] = None, subset: str = "test") -> EvalReport:
    """Evaluate one mode over the chosen subset for every task and seed."""
    if mode not in EVAL_MODES:
        raise nk.UsageError(f"unknown evaluation mode {mode!r}")
    config = config or RunConfig()
    seeds = sorted(bundles_by_seed)
    by_task_seed: Dict[str, List[Dict[str, float]]] = {}
    for task_id in corpus.task_ids():
        runs: List[Dict[str, float]] = []
        for seed in seeds:
            bundles = bundles_by_seed[seed]
            video_ids = getattr(splits[task_id], subset)
            if mode == "tracking":
                runs.append(_eval_tracking(bundles, corpus, task_id, video_ids,
                                           config.history_mode))
            elif mode == "recommendation":
                runs.append(_eval_recommendation(bundles, corpus, task_id, video_ids))
            else:
                runs.append(_eval_planning(bundles, corpus, task_id, video_ids, mode,
                                           config, seed))
        by_task_seed[task_id] = runs
    return _assemble_report(mode, seeds, config.config_hash(), by_task_seed,
                            meta={"subset": subset})


def train_variant(corpus: Corpus, splits: Mapping[str, Split], config: RunConfig,
                  seed: int, variant: str = "full",
                  logs: Optional[Dict[str, List[float]]] = None) -> SeedBundles:
    """Train embedding + graphs + tracker + recommender for one seed.

    Variants: ``no_history`` zeroes the history input and never trains the
    RNN; ``random_embed`` freezes the embedding table at its seeded init;
    ``onehot_embed`` freezes orthonormal one-hot rows (embedding dim =
    table size); ``full`` is the default pipeline.
    """
    if variant not in ABLATION_VARIANTS:
        raise nk.UsageError(f"unknown ablation variant {variant!r}")
    feature_dim = config.feature_dim or corpus.feature_dim
    dims = EmbedDims(feature=feature_dim, cond=config.cond_dim, embed=config.embed_dim,
                     hidden=config.mlp_hidden)
    vocabs = {tid: corpus.tasks[tid].vocab for tid in corpus.task_ids()}
    train_videos = {tid: list(splits[tid].train) for tid in corpus.task_ids()}

    logs = logs if logs is not None else {}
    embed_seed = derive_seed(seed, "stage-embed")
    if variant == "onehot_embed":
        embedding = onehot_bundle(vocabs, feature_dim, config.margin, embed_seed)
    elif variant == "random_embed":
        embedding = init_bundle(vocabs, dims, config.margin, embed_seed)
    else:  # full and no_history both train the embeddings normally
        embedding = train_embeddings(
            corpus, dims=dims, margin=config.margin, lr=config.lr_embed,
            epochs=config.epochs_embed, seed=embed_seed, videos_by_task=train_videos,
            cross_task_negatives=config.cross_task_negatives,
            log=logs.setdefault("embed", []),
        )

    graphs: Dict[str, TaskGraph] = {}
    for task_id in corpus.task_ids():
        task = corpus.tasks[task_id]
        seqs = [
            compressed_sequence(framewise_labels(task.videos[vid], task.vocab))
            for vid in sorted(splits[task_id].train)
        ]
        graphs[task_id] = build_graph(seqs, task.vocab).graph

    history_enabled = variant != "no_history"
    guidance = train_tracker(
        corpus, embedding, "in-memory", videos_by_task=train_videos,
        lr=config.lr_guidance, epochs=config.epochs_tracker,
        seed=derive_seed(seed, "stage-tracker"), hidden_dim=config.hidden_dim,
        history_enabled=history_enabled, chunk_seconds=config.chunk_seconds,
        log=logs.setdefault("tracker", []),
    )
    guidance = train_recommender(
        corpus, guidance, graphs, videos_by_task=train_videos,
        lr=config.lr_guidance, epochs=config.epochs_recommender,
        seed=derive_seed(seed, "stage-recommender"),
        joint_rnn_update=config.joint_rnn_update,
        log=logs.setdefault("recommender", []),
    )
    return SeedBundles(embedding=embedding, guidance=guidance, graphs=graphs)


def run_ablation(variant: str, corpus: Corpus, splits: Mapping[str, Split],
                 config: RunConfig, seeds: Sequence[int], *,
                 modes: Sequence[str] = EVAL_MODES,
                 subset: str = "test") -> Dict[str, EvalReport]:
    """Train the variant for every seed and evaluate the requested modes."""
    if variant not in ABLATION_VARIANTS:
        raise nk.UsageError(f"unknown ablation variant {variant!r}")
    bundles = {seed: train_variant(corpus, splits, config, seed, variant)
               for seed in seeds}
    return {
        mode: evaluate(corpus, splits, bundles, mode, config=config, subset=subset)
        for mode in modes
    }
