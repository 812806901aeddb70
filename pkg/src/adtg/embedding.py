"""Action embeddings learned as pre- to post-condition transformations.

A shared condition generator maps a two-second feature window to a compact
condition vector; a transformation predictor maps (pre-condition, action
embedding) to a predicted post-condition. Training pulls the prediction of
the annotated action toward the observed post-condition (cosine distance)
while a margin hinge pushes every other action's prediction away.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import numkit as nk
from .numkit import autodiff as ad
from .bundleio import load_params, save_params
from .corpus.model import (
    EOS_NAME,
    NULL_NAME,
    ActionVocabulary,
    Corpus,
    Segment,
    VideoRecord,
    condition_windows,
)
from .seeding import rng_for


class EmbedError(RuntimeError):
    pass


@dataclass(frozen=True)
class EmbedDims:
    feature: int
    cond: int = 128
    embed: int = 96
    hidden: int = 128


def vocab_hash(vocabs: Mapping[str, ActionVocabulary]) -> str:
    doc = {tid: list(vocabs[tid].actions) for tid in sorted(vocabs)}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def row_key(task_id: str, action: str) -> str:
    return f"{task_id}/{action}"


@dataclass
class EmbeddingBundle:
    """Condition generator, transformation predictor, and the embedding table.

    Table rows: index 0 is the shared NULL embedding, index 1 the shared EOS
    embedding, then every task's actions in sorted task order / vocabulary
    order, keyed "task_id/action".
    """

    cond_gen: nk.Mlp2Params
    predictor: nk.Mlp2Params
    table: np.ndarray
    rows: Tuple[str, ...]
    margin: float
    dims: EmbedDims
    vocab_hash: str
    seed: int
    row_index: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.row_index:
            self.row_index = {key: i for i, key in enumerate(self.rows)}
        if self.table.shape != (len(self.rows), self.dims.embed):
            raise EmbedError(
                f"table shape {self.table.shape} != ({len(self.rows)}, {self.dims.embed})"
            )

    def row_of(self, task_id: str, action: str) -> int:
        if action == NULL_NAME:
            return self.row_index[NULL_NAME]
        if action == EOS_NAME:
            return self.row_index[EOS_NAME]
        try:
            return self.row_index[row_key(task_id, action)]
        except KeyError:
            raise EmbedError(f"no embedding row for action {action!r} of task {task_id!r}") from None

    def embedding_of(self, task_id: str, action: str) -> np.ndarray:
        return self.table[self.row_of(task_id, action)]


def init_bundle(vocabs: Mapping[str, ActionVocabulary], dims: EmbedDims, margin: float,
                seed: int) -> EmbeddingBundle:
    rows: List[str] = [NULL_NAME, EOS_NAME]
    for task_id in sorted(vocabs):
        rows.extend(row_key(task_id, a) for a in vocabs[task_id].actions)
    rng = rng_for(seed, "embed-init")
    cond_gen = nk.mlp2_init(rng, 2 * dims.feature, dims.hidden, dims.cond)
    predictor = nk.mlp2_init(rng, dims.cond + dims.embed, dims.hidden, dims.cond)
    bound = 1.0 / np.sqrt(dims.embed)
    table = rng.uniform(-bound, bound, size=(len(rows), dims.embed))
    return EmbeddingBundle(
        cond_gen=cond_gen,
        predictor=predictor,
        table=table,
        rows=tuple(rows),
        margin=margin,
        dims=dims,
        vocab_hash=vocab_hash(vocabs),
        seed=seed,
    )


def onehot_bundle(vocabs: Mapping[str, ActionVocabulary], feature_dim: int, margin: float,
                  seed: int) -> EmbeddingBundle:
    """Ablation variant: frozen orthonormal one-hot rows, embed dim = row count."""
    rows: List[str] = [NULL_NAME, EOS_NAME]
    for task_id in sorted(vocabs):
        rows.extend(row_key(task_id, a) for a in vocabs[task_id].actions)
    dims = EmbedDims(feature=feature_dim, embed=len(rows))
    rng = rng_for(seed, "embed-init")
    cond_gen = nk.mlp2_init(rng, 2 * dims.feature, dims.hidden, dims.cond)
    predictor = nk.mlp2_init(rng, dims.cond + dims.embed, dims.hidden, dims.cond)
    return EmbeddingBundle(
        cond_gen=cond_gen,
        predictor=predictor,
        table=np.eye(len(rows)),
        rows=tuple(rows),
        margin=margin,
        dims=dims,
        vocab_hash=vocab_hash(vocabs),
        seed=seed,
    )


def _flat_window(window: np.ndarray, dims: EmbedDims) -> np.ndarray:
    w = np.asarray(window, dtype=np.float64)
    if w.shape != (2, dims.feature):
        raise nk.ShapeError(f"condition window must be (2, {dims.feature}), got {w.shape}")
    return w.reshape(-1)


def condition_features(bundle: EmbeddingBundle, window: np.ndarray) -> np.ndarray:
    """Condition vector of a 2-frame window (shared for pre and post)."""
    return nk.mlp2_forward(bundle.cond_gen, _flat_window(window, bundle.dims)).value


def predict_post(bundle: EmbeddingBundle, f_pre: np.ndarray, e_a: np.ndarray) -> np.ndarray:
    f_pre = np.asarray(f_pre, dtype=np.float64)
    e_a = np.asarray(e_a, dtype=np.float64)
    if f_pre.shape != (bundle.dims.cond,) or e_a.shape != (bundle.dims.embed,):
        raise nk.ShapeError(
            f"predict_post expects ({bundle.dims.cond},) and ({bundle.dims.embed},), "
            f"got {f_pre.shape} and {e_a.shape}"
        )
    return nk.mlp2_forward(bundle.predictor, np.concatenate([f_pre, e_a])).value


def _pair_distances(cond_gen: nk.Mlp2Params, predictor: nk.Mlp2Params, table,
                    x_pre: np.ndarray, x_post: np.ndarray, row_ids: Sequence[int]) -> ad.Var:
    """Cosine distances D(g(f(pre), e_row), f(post)) for each row id, on the tape."""
    cond = nk.mlp2_forward(cond_gen, np.stack([x_pre, x_post]))
    f_pre = ad.row(cond, 0)
    f_post = ad.row(cond, 1)
    emb = ad.take_rows(table, list(row_ids))
    g_in = ad.concat([ad.repeat_rows(f_pre, len(row_ids)), emb], axis=1)
    g_out = nk.mlp2_forward(predictor, g_in)
    return ad.rowwise_cosine_distance(g_out, f_post)


def disc_loss(bundle: EmbeddingBundle, x_pre: np.ndarray, x_post: np.ndarray,
              task_id: str, action: str) -> float:
    """Distance between the action's predicted and observed post-conditions."""
    if action == NULL_NAME:
        raise nk.UsageError("disc loss is undefined for the null action")
    dists = _pair_distances(
        bundle.cond_gen, bundle.predictor, bundle.table,
        _flat_window(x_pre, bundle.dims), _flat_window(x_post, bundle.dims),
        [bundle.row_of(task_id, action)],
    )
    return float(dists.value[0])


def cont_loss(bundle: EmbeddingBundle, x_pre: np.ndarray, x_post: np.ndarray,
              task_id: str, action: str, negatives: Sequence[str]) -> float:
    """Margin hinge over the wrong-action predictions."""
    if action in negatives:
        raise nk.UsageError(f"action {action!r} must not appear among its own negatives")
    if not negatives:
        return 0.0
    dists = _pair_distances(
        bundle.cond_gen, bundle.predictor, bundle.table,
        _flat_window(x_pre, bundle.dims), _flat_window(x_post, bundle.dims),
        [bundle.row_of(task_id, a) for a in negatives],
    )
    margins = np.maximum(0.0, bundle.margin - dists.value)
    return float(margins.sum())


def action_distances(bundle: EmbeddingBundle, x_pre: np.ndarray, x_post: np.ndarray,
                     task_id: str, candidates: Sequence[str]) -> Dict[str, float]:
    """disc_loss per candidate action, for ranking checks."""
    dists = _pair_distances(
        bundle.cond_gen, bundle.predictor, bundle.table,
        _flat_window(x_pre, bundle.dims), _flat_window(x_post, bundle.dims),
        [bundle.row_of(task_id, a) for a in candidates],
    )
    return {a: float(d) for a, d in zip(candidates, dists.value)}


@dataclass(frozen=True)
class TrainSegment:
    task_id: str
    video_id: str
    action: str
    x_pre: np.ndarray
    x_post: np.ndarray


def collect_segments(corpus: Corpus,
                     videos_by_task: Optional[Mapping[str, Sequence[str]]] = None) -> List[TrainSegment]:
    out: List[TrainSegment] = []
    for task_id in corpus.task_ids():
        task = corpus.tasks[task_id]
        ids = videos_by_task[task_id] if videos_by_task is not None else task.video_ids()
        for video_id in sorted(ids):
            video = task.videos[video_id]
            for seg in video.segments:
                x_pre, x_post = condition_windows(video, seg)
                out.append(
                    TrainSegment(
                        task_id=task_id,
                        video_id=video_id,
                        action=seg.action,
                        x_pre=x_pre.reshape(-1),
                        x_post=x_post.reshape(-1),
                    )
                )
    return out


def train_embeddings(corpus: Corpus, *, dims: EmbedDims, margin: float = 0.5,
                     lr: float = 1e-5, epochs: int = 50, seed: int = 0,
                     videos_by_task: Optional[Mapping[str, Sequence[str]]] = None,
                     cross_task_negatives: bool = False,
                     log: Optional[List[float]] = None) -> EmbeddingBundle:
    """Joint training over all tasks, one segment per Adam step.

    Negatives default to the other actions of the segment's own task; the
    cross-task switch widens them to every action row. Epoch order is a
    seeded shuffle; with ``epochs=0`` the seeded initialization is returned
    unchanged. Appends the per-epoch mean loss to ``log`` when given.
    """
    vocabs = {tid: corpus.tasks[tid].vocab for tid in corpus.task_ids()}
    bundle = init_bundle(vocabs, dims, margin, seed)
    segments = collect_segments(corpus, videos_by_task)
    if not segments:
        raise EmbedError("no annotated segments to train on")
    if epochs == 0:
        return bundle

    params: Dict[str, np.ndarray] = {}
    params.update(nk.named_params("cond", bundle.cond_gen))
    params.update(nk.named_params("pred", bundle.predictor))
    params["table"] = bundle.table
    state = nk.AdamState()

    negatives_of: Dict[Tuple[str, str], List[int]] = {}
    for seg in segments:
        key = (seg.task_id, seg.action)
        if key in negatives_of:
            continue
        if cross_task_negatives:
            negs = [
                i for i, rk in enumerate(bundle.rows)
                if rk not in (NULL_NAME, EOS_NAME) and rk != row_key(seg.task_id, seg.action)
            ]
        else:
            negs = [
                bundle.row_of(seg.task_id, a)
                for a in vocabs[seg.task_id].actions
                if a != seg.action
            ]
        negatives_of[key] = negs

    margin_arr = np.asarray(margin)
    for epoch in range(epochs):
        order = rng_for(seed, "embed-epoch", epoch).permutation(len(segments))
        total = 0.0
        for idx in order:
            seg = segments[idx]
            leaves = {name: ad.leaf(arr) for name, arr in params.items()}
            cond_gen = nk.with_vars(bundle.cond_gen, "cond", leaves)
            predictor = nk.with_vars(bundle.predictor, "pred", leaves)
            row_ids = [bundle.row_of(seg.task_id, seg.action)] + negatives_of[(seg.task_id, seg.action)]
            dists = _pair_distances(cond_gen, predictor, leaves["table"],
                                    seg.x_pre, seg.x_post, row_ids)
            loss = ad.at(dists, 0)
            if len(row_ids) > 1:
                hinge = ad.relu(ad.sub(margin_arr, ad.slice1d(dists, 1, len(row_ids))))
                loss = ad.add(loss, ad.sum_all(hinge))
            ad.backward(loss)
            grads = {name: leaves[name].grad if leaves[name].grad is not None
                     else np.zeros_like(params[name]) for name in params}
            nk.adam_step(state, params, grads, lr)
            total += float(loss.value)
        if log is not None:
            log.append(total / len(segments))
    return bundle


def mean_corpus_loss(bundle: EmbeddingBundle, segments: Iterable[TrainSegment]) -> float:
    """Mean (disc + cont) over segments with the bundle's frozen parameters."""
    total = 0.0
    count = 0
    for seg in segments:
        vocab_actions = [rk.split("/", 1)[1] for rk in bundle.rows
                         if rk.startswith(f"{seg.task_id}/")]
        negs = [a for a in vocab_actions if a != seg.action]
        x_pre = seg.x_pre.reshape(2, -1)
        x_post = seg.x_post.reshape(2, -1)
        total += disc_loss(bundle, x_pre, x_post, seg.task_id, seg.action)
        total += cont_loss(bundle, x_pre, x_post, seg.task_id, seg.action, negs)
        count += 1
    return total / max(count, 1)


def save_bundle(bundle: EmbeddingBundle, out_dir) -> str:
    params = {
        "cond.W1": bundle.cond_gen.W1, "cond.b1": bundle.cond_gen.b1,
        "cond.W2": bundle.cond_gen.W2, "cond.b2": bundle.cond_gen.b2,
        "pred.W1": bundle.predictor.W1, "pred.b1": bundle.predictor.b1,
        "pred.W2": bundle.predictor.W2, "pred.b2": bundle.predictor.b2,
        "table": bundle.table,
    }
    meta = {
        "rows": list(bundle.rows),
        "margin": bundle.margin,
        "dims": {"feature": bundle.dims.feature, "cond": bundle.dims.cond,
                 "embed": bundle.dims.embed, "hidden": bundle.dims.hidden},
        "vocab_hash": bundle.vocab_hash,
        "seed": bundle.seed,
    }
    return save_params(out_dir, "embedding", params, meta)


def load_bundle(out_dir) -> Tuple[EmbeddingBundle, str]:
    params, meta, digest = load_params(out_dir, "embedding")
    dims = EmbedDims(**meta["dims"])
    bundle = EmbeddingBundle(
        cond_gen=nk.Mlp2Params(W1=params["cond.W1"], b1=params["cond.b1"],
                               W2=params["cond.W2"], b2=params["cond.b2"]),
        predictor=nk.Mlp2Params(W1=params["pred.W1"], b1=params["pred.b1"],
                                W2=params["pred.W2"], b2=params["pred.b2"]),
        table=params["table"],
        rows=tuple(meta["rows"]),
        margin=float(meta["margin"]),
        dims=dims,
        vocab_hash=meta["vocab_hash"],
        seed=int(meta["seed"]),
    )
    return bundle, digest
