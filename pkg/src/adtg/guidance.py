"""Task tracking, next-action recommendation, and beam-search planning.

All three share one history RNN over action embeddings. Tracking scores
(observation, history, candidate embedding) per second; recommendation
scores (current action embedding, history, candidate embedding) over the
graph successors of the current node; planning runs one tracking step to
localize, then autoregressive recommendation under beam search until an
end-of-sequence emission or the length cap.

Training uses teacher-forced history (ground-truth action events);
inference is free-running on predicted events. One Adam step per video,
with the per-second / per-pair cross-entropies batched into grouped-softmax
losses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import numkit as nk
from .numkit import autodiff as ad
from .bundleio import load_params, save_params
from .corpus.model import (
    NULL_ID,
    ActionVocabulary,
    Corpus,
    compressed_sequence,
    framewise_labels,
)
from .embedding import EmbeddingBundle, EmbedDims, load_bundle as load_embedding
from .graph import TaskGraph
from .seeding import rng_for


class PlanningError(RuntimeError):
    pass


class ConfigError(RuntimeError):
    pass


@dataclass
class GuidanceBundle:
    """History RNN plus the tracking and recommendation scorers.

    Bound to the embedding bundle it was trained with; the binding is
    hash-checked when loading from disk. With ``history_enabled`` off the
    scorers receive a zero vector in place of the RNN state and the RNN is
    never trained (the no-history ablation).
    """

    history_rnn: nk.RnnParams
    track_scorer: nk.Mlp2Params
    rec_scorer: nk.Mlp2Params
    embedding: EmbeddingBundle
    embed_hash: str
    hidden_dim: int
    history_enabled: bool = True
    seed: int = 0

    def dims(self) -> EmbedDims:
        return self.embedding.dims


@dataclass(frozen=True)
class TrackState:
    """Immutable per-session tracking state."""

    h: np.ndarray
    last_action: int
    history_events: Tuple[int, ...] = ()


class ScoredStep(NamedTuple):
    chosen: int
    candidates: Tuple[int, ...]
    log_probs: np.ndarray


def init_guidance(embedding: EmbeddingBundle, embed_hash: str, *, hidden_dim: int = 128,
                  seed: int = 0, history_enabled: bool = True) -> GuidanceBundle:
    dims = embedding.dims
    rng = rng_for(seed, "guidance-init")
    history_rnn = nk.rnn_init(rng, dims.embed, hidden_dim)
    track_scorer = nk.mlp2_init(rng, dims.feature + hidden_dim + dims.embed, dims.hidden, 1)
    rec_scorer = nk.mlp2_init(rng, dims.embed + hidden_dim + dims.embed, dims.hidden, 1)
    return GuidanceBundle(
        history_rnn=history_rnn,
        track_scorer=track_scorer,
        rec_scorer=rec_scorer,
        embedding=embedding,
        embed_hash=embed_hash,
        hidden_dim=hidden_dim,
        history_enabled=history_enabled,
        seed=seed,
    )


def init_state(bundle: GuidanceBundle) -> TrackState:
    return TrackState(h=np.zeros(bundle.hidden_dim), last_action=NULL_ID, history_events=())


def _embedding_rows(bundle: GuidanceBundle, vocab: ActionVocabulary,
                    action_ids: Sequence[int]) -> np.ndarray:
    table = bundle.embedding.table
    return np.stack([
        table[bundle.embedding.row_of(vocab.task_id, vocab.name_of(a))] for a in action_ids
    ])


def _history_vec(bundle: GuidanceBundle, state: TrackState) -> np.ndarray:
    if not bundle.history_enabled:
        return np.zeros(bundle.hidden_dim)
    return state.h


def advance_history(bundle: GuidanceBundle, vocab: ActionVocabulary, state: TrackState,
                    action_id: int) -> TrackState:
    """New state with the action appended to history and folded into the RNN."""
    if action_id == NULL_ID:
        raise nk.UsageError("the null action never enters the history")
    e_a = bundle.embedding.embedding_of(vocab.task_id, vocab.name_of(action_id))
    if bundle.history_enabled:
        h = nk.rnn_step(bundle.history_rnn, state.h, e_a).value
    else:
        h = state.h
    return TrackState(
        h=h, last_action=action_id, history_events=state.history_events + (action_id,)
    )


def track_step(bundle: GuidanceBundle, vocab: ActionVocabulary, state: TrackState,
               x_t: np.ndarray, candidates: Sequence[int]) -> ScoredStep:
    """Score the candidates against one observation; does not mutate state.

    Returns the argmax candidate (ties break to the lowest action index) and
    the log-probabilities over the candidate set sorted by action index.
    """
    if len(candidates) == 0:
        raise nk.UsageError("need at least one tracking candidate")
    cands = tuple(sorted(set(int(c) for c in candidates)))
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != (bundle.dims().feature,):
        raise nk.ShapeError(f"observation must be ({bundle.dims().feature},), got {x_t.shape}")
    emb = _embedding_rows(bundle, vocab, cands)
    h = _history_vec(bundle, state)
    inputs = np.concatenate(
        [np.repeat(x_t[None, :], len(cands), axis=0),
         np.repeat(h[None, :], len(cands), axis=0),
         emb],
        axis=1,
    )
    logits = nk.mlp2_forward(bundle.track_scorer, inputs).value[:, 0]
    log_probs = nk.log_softmax(logits)
    return ScoredStep(chosen=cands[int(np.argmax(log_probs))], candidates=cands,
                      log_probs=log_probs)


def recommend(bundle: GuidanceBundle, vocab: ActionVocabulary, graph: TaskGraph,
              state: TrackState) -> ScoredStep:
    """Score the graph successors of the current action node."""
    cands = graph.successors(state.last_action)
    if not cands:
        raise PlanningError(
            f"dead-end node {vocab.name_of(state.last_action)!r} has no successors"
        )
    e_last = bundle.embedding.embedding_of(vocab.task_id, vocab.name_of(state.last_action))
    emb = _embedding_rows(bundle, vocab, cands)
    h = _history_vec(bundle, state)
    inputs = np.concatenate(
        [np.repeat(e_last[None, :], len(cands), axis=0),
         np.repeat(h[None, :], len(cands), axis=0),
         emb],
        axis=1,
    )
    logits = nk.mlp2_forward(bundle.rec_scorer, inputs).value[:, 0]
    log_probs = nk.log_softmax(logits)
    return ScoredStep(chosen=cands[int(np.argmax(log_probs))], candidates=cands,
                      log_probs=log_probs)


# ---------------------------------------------------------------------------
# training


def _event_schedule(labels: np.ndarray) -> Tuple[List[int], np.ndarray]:
    """Teacher-forcing schedule for one video.

    Returns the ground-truth action events and, per second t, the index
    into the history-state sequence to use when scoring second t.

    An event fires when a non-null run starts with an action different from
    the last recorded event, so a run resumed across a null gap does not
    refire (free-running prediction flicker would otherwise poison the
    history with duplicates). The history also lags one second behind the
    event stream (second t sees events from seconds <= t-2): a segment's
    first two seconds then share the pre-start history, which keeps the
    start of a run distinguishable from the null second just before it.
    """
    events: List[int] = []
    h_index = np.zeros(len(labels), dtype=np.int64)
    prev = NULL_ID
    last_event = NULL_ID
    count = 0
    for i, lab in enumerate(labels):
        h_index[i] = count
        lab = int(lab)
        if lab != prev:
            if lab != NULL_ID and lab != last_event:
                events.append(lab)
                last_event = lab
                count += 1
            prev = lab
    h_index[1:] = h_index[:-1]
    h_index[0] = 0
    return events, h_index


def _history_chain(bundle_rnn: nk.RnnParams, table_rows: np.ndarray,
                   enabled: bool, hidden_dim: int, n_states: int) -> ad.Var:
    """Stack of history states h_0..h_{n-1} on the tape (h_0 = 0)."""
    states = [ad.as_var(np.zeros(hidden_dim))]
    if enabled:
        for i in range(n_states - 1):
            states.append(nk.rnn_step(bundle_rnn, states[-1], table_rows[i]))
    else:
        for _ in range(n_states - 1):
            states.append(states[0])
    return ad.stack_rows(states)


def train_tracker(corpus: Corpus, embedding: EmbeddingBundle, embed_hash: str, *,
                  videos_by_task: Mapping[str, Sequence[str]], lr: float = 5e-5,
                  epochs: int = 50, seed: int = 0, hidden_dim: int = 128,
                  history_enabled: bool = True, chunk_seconds: int = 8,
                  log: Optional[List[float]] = None) -> GuidanceBundle:
    """Train the history RNN and tracking scorer with teacher forcing.

    Candidates at every second are the task vocabulary plus NULL. One Adam
    step per contiguous chunk of ``chunk_seconds`` seconds (mean
    cross-entropy within the chunk); video order is shuffled per epoch,
    chunks stay in temporal order. ``epochs=0`` returns the seeded
    initialization unchanged.
    """
    bundle = init_guidance(embedding, embed_hash, hidden_dim=hidden_dim, seed=seed,
                           history_enabled=history_enabled)
    videos = []
    for task_id in sorted(videos_by_task):
        task = corpus.tasks[task_id]
        for video_id in sorted(videos_by_task[task_id]):
            videos.append((task_id, video_id))
    if not videos:
        raise ConfigError("no training videos for the tracker")
    if epochs == 0:
        return bundle
    if chunk_seconds < 1:
        raise ConfigError("chunk_seconds must be at least 1")

    dims = embedding.dims
    params: Dict[str, np.ndarray] = {}
    params.update(nk.named_params("track", bundle.track_scorer))
    if history_enabled:
        params.update(nk.named_params("rnn", bundle.history_rnn))
    state = nk.AdamState()

    # Per-video constants, precomputed once.
    prepared = {}
    for task_id, video_id in videos:
        task = corpus.tasks[task_id]
        video = task.videos[video_id]
        labels = framewise_labels(video, task.vocab)
        events, h_index = _event_schedule(labels)
        cands = (NULL_ID,) + task.vocab.action_ids()
        cand_pos = {c: i for i, c in enumerate(cands)}
        targets = np.asarray([cand_pos[int(lab)] for lab in labels])
        feats = video.features.astype(np.float64)
        event_rows = (_embedding_rows(bundle, task.vocab, events)
                      if events else np.zeros((0, dims.embed)))
        cand_rows = _embedding_rows(bundle, task.vocab, cands)
        prepared[(task_id, video_id)] = (feats, targets, events, h_index, cand_rows, event_rows)

    for epoch in range(epochs):
        order = rng_for(seed, "tracker-epoch", epoch).permutation(len(videos))
        total = 0.0
        n_chunks = 0
        for vi in order:
            task_id, video_id = videos[vi]
            feats, targets, events, h_index, cand_rows, event_rows = prepared[(task_id, video_id)]
            T = feats.shape[0]
            C = cand_rows.shape[0]
            for lo in range(0, T, chunk_seconds):
                hi = min(lo + chunk_seconds, T)
                n = hi - lo
                leaves = {name: ad.leaf(arr) for name, arr in params.items()}
                scorer = nk.with_vars(bundle.track_scorer, "track", leaves)
                rnn = (nk.with_vars(bundle.history_rnn, "rnn", leaves)
                       if history_enabled else bundle.history_rnn)
                n_states = int(h_index[hi - 1]) + 1
                h_stack = _history_chain(rnn, event_rows, history_enabled,
                                         hidden_dim, n_states)
                h_per_second = ad.take_rows(h_stack, h_index[lo:hi].tolist())
                # Row i*C + c is [x_{lo+i} | h_{lo+i} | e_c].
                inputs = ad.concat(
                    [ad.repeat_each_row(ad.as_var(feats[lo:hi]), C),
                     ad.repeat_each_row(h_per_second, C),
                     ad.tile_rows(ad.as_var(cand_rows), n)],
                    axis=1,
                )
                logits = nk.mlp2_forward(scorer, inputs)
                loss = ad.softmax_cross_entropy_rows(ad.reshape(logits, (n, C)),
                                                     targets[lo:hi])
                ad.backward(loss)
                grads = {name: leaves[name].grad if leaves[name].grad is not None
                         else np.zeros_like(params[name]) for name in params}
                nk.adam_step(state, params, grads, lr)
                total += float(loss.value) * n
                n_chunks += n
        if log is not None:
            log.append(total / n_chunks)
    return bundle


def train_recommender(corpus: Corpus, bundle: GuidanceBundle,
                      graphs: Mapping[str, TaskGraph], *,
                      videos_by_task: Mapping[str, Sequence[str]], lr: float = 5e-5,
                      epochs: int = 100, seed: int = 0, joint_rnn_update: bool = True,
                      log: Optional[List[float]] = None) -> GuidanceBundle:
    """Train the recommendation scorer over consecutive action pairs.

    For every pair (a_t, a_{t+1}) of a compressed training sequence (plus
    the final action -> EOS) the candidate set is the graph successors of
    a_t, with teacher-forced history; one Adam step per pair. The shared
    history RNN is updated jointly by default, or frozen when
    ``joint_rnn_update`` is off.
    """
    videos = []
    for task_id in sorted(videos_by_task):
        task = corpus.tasks[task_id]
        for video_id in sorted(videos_by_task[task_id]):
            videos.append((task_id, video_id))
    if not videos:
        raise ConfigError("no training videos for the recommender")
    if epochs == 0:
        return bundle

    dims = bundle.dims()
    train_rnn = joint_rnn_update and bundle.history_enabled
    params: Dict[str, np.ndarray] = {}
    params.update(nk.named_params("rec", bundle.rec_scorer))
    if train_rnn:
        params.update(nk.named_params("rnn", bundle.history_rnn))
    state = nk.AdamState()

    prepared = []
    for task_id, video_id in videos:
        task = corpus.tasks[task_id]
        graph = graphs[task_id]
        video = task.videos[video_id]
        seq = compressed_sequence(framewise_labels(video, task.vocab))
        if not seq:
            continue
        walk = seq + [task.vocab.eos_id]
        event_rows = _embedding_rows(bundle, task.vocab, seq)
        pairs = []  # (h_state_index, src_action, candidates, target_local)
        for i, (src, dst) in enumerate(zip(walk, walk[1:])):
            cands = graph.successors(src)
            if dst not in cands:
                raise ConfigError(
                    f"pair {src}->{dst} of training video {video_id!r} missing from graph"
                )
            pairs.append((i + 1, src, cands, cands.index(dst)))
        cand_rows = {
            c: bundle.embedding.table[
                bundle.embedding.row_of(task_id, task.vocab.name_of(c))
            ]
            for c in set(c for _, _, cs, _ in pairs for c in cs)
        }
        prepared.append((task_id, video_id, seq, event_rows, pairs, cand_rows))
    if not prepared:
        raise ConfigError("no non-empty training sequences for the recommender")

    for epoch in range(epochs):
        order = rng_for(seed, "recommender-epoch", epoch).permutation(len(prepared))
        total = 0.0
        n_pairs = 0
        for vi in order:
            task_id, video_id, seq, event_rows, pairs, cand_rows = prepared[vi]
            for h_idx, src, cands, tgt in pairs:
                leaves = {name: ad.leaf(arr) for name, arr in params.items()}
                scorer = nk.with_vars(bundle.rec_scorer, "rec", leaves)
                rnn = (nk.with_vars(bundle.history_rnn, "rnn", leaves)
                       if train_rnn else bundle.history_rnn)
                h_stack = _history_chain(rnn, event_rows, bundle.history_enabled,
                                         bundle.hidden_dim, h_idx + 1)
                e_src = event_rows[h_idx - 1]
                const_cols = np.stack([
                    np.concatenate([e_src, cand_rows[c]]) for c in cands
                ])
                h_rows = ad.repeat_rows(ad.row(h_stack, h_idx), len(cands))
                inputs = ad.concat(
                    [ad.as_var(const_cols[:, : dims.embed]), h_rows,
                     ad.as_var(const_cols[:, dims.embed :])],
                    axis=1,
                )
                logits = nk.mlp2_forward(scorer, inputs)
                loss, _ = ad.softmax_cross_entropy(ad.reshape(logits, (len(cands),)), tgt)
                ad.backward(loss)
                grads = {name: leaves[name].grad if leaves[name].grad is not None
                         else np.zeros_like(params[name]) for name in params}
                nk.adam_step(state, params, grads, lr)
                total += float(loss.value)
                n_pairs += 1
        if log is not None:
            log.append(total / n_pairs)
    return bundle


# ---------------------------------------------------------------------------
# serialization


def save_guidance(bundle: GuidanceBundle, out_dir) -> str:
    params = {
        "rnn.W_in": bundle.history_rnn.W_in, "rnn.W_h": bundle.history_rnn.W_h,
        "rnn.b": bundle.history_rnn.b,
        "track.W1": bundle.track_scorer.W1, "track.b1": bundle.track_scorer.b1,
        "track.W2": bundle.track_scorer.W2, "track.b2": bundle.track_scorer.b2,
        "rec.W1": bundle.rec_scorer.W1, "rec.b1": bundle.rec_scorer.b1,
        "rec.W2": bundle.rec_scorer.W2, "rec.b2": bundle.rec_scorer.b2,
    }
    meta = {
        "embed_hash": bundle.embed_hash,
        "hidden_dim": bundle.hidden_dim,
        "history_enabled": bundle.history_enabled,
        "seed": bundle.seed,
    }
    return save_params(out_dir, "guidance", params, meta)


def load_guidance(out_dir, embedding_dir=None) -> Tuple[GuidanceBundle, str]:
    """Load a guidance bundle and its bound embedding bundle.

    The embedding bundle is loaded from ``embedding_dir`` (default: same
    directory) and must hash-match the binding recorded at training time.
    """
    params, meta, digest = load_params(out_dir, "guidance")
    embedding, embed_hash = load_embedding(embedding_dir or out_dir)
    if embed_hash != meta["embed_hash"]:
        raise ConfigError(
            f"guidance bundle is bound to embedding {meta['embed_hash'][:12]}..., "
            f"found {embed_hash[:12]}..."
        )
    bundle = GuidanceBundle(
        history_rnn=nk.RnnParams(W_in=params["rnn.W_in"], W_h=params["rnn.W_h"],
                                 b=params["rnn.b"]),
        track_scorer=nk.Mlp2Params(W1=params["track.W1"], b1=params["track.b1"],
                                   W2=params["track.W2"], b2=params["track.b2"]),
        rec_scorer=nk.Mlp2Params(W1=params["rec.W1"], b1=params["rec.b1"],
                                 W2=params["rec.W2"], b2=params["rec.b2"]),
        embedding=embedding,
        embed_hash=embed_hash,
        hidden_dim=int(meta["hidden_dim"]),
        history_enabled=bool(meta["history_enabled"]),
        seed=int(meta["seed"]),
    )
    return bundle, digest


# ---------------------------------------------------------------------------
# planning


@dataclass(frozen=True)
class PlanResult:
    actions: Tuple[int, ...]
    log_prob: float
    ended_with_eos: bool
    trace: Tuple[dict, ...]


@dataclass(frozen=True)
class _Trajectory:
    actions: Tuple[int, ...]
    log_prob: float
    state: TrackState
    trace: Tuple[dict, ...]


def _trace_entry(kind: str, vocab: ActionVocabulary, scored: ScoredStep, chosen: int) -> dict:
    return {
        "kind": kind,
        "candidates": [vocab.name_of(c) for c in scored.candidates],
        "log_probs": [float(lp) for lp in scored.log_probs],
        "chosen": vocab.name_of(chosen),
    }


def plan(bundle: GuidanceBundle, vocab: ActionVocabulary, graph: TaskGraph,
         x_init: np.ndarray, prefix: Sequence[int] = (), *, beam_width: int = 5,
         max_len: int = 20) -> PlanResult:
    """Generate an action sequence from one observation and a history prefix.

    The localized action (one tracking step over the graph's concrete
    actions) is the first plan element. Beam trajectories accumulate
    recommendation log-probabilities; a trajectory retires when it emits
    EOS. The best EOS-terminated trajectory wins; if none terminated within
    ``max_len``, the best live one does.
    """
    if beam_width < 1:
        raise nk.UsageError("beam width must be at least 1")
    if max_len < 1:
        raise nk.UsageError("max plan length must be at least 1")
    state = init_state(bundle)
    for action_id in prefix:
        state = advance_history(bundle, vocab, state, int(action_id))

    localize_cands = tuple(n for n in graph.node_ids if n != vocab.eos_id)
    if not localize_cands:
        raise PlanningError(f"graph for task {vocab.task_id!r} has no action nodes")
    scored = track_step(bundle, vocab, state, x_init, localize_cands)
    first = scored.chosen
    root = _Trajectory(
        actions=(first,),
        log_prob=0.0,
        state=advance_history(bundle, vocab, state, first),
        trace=(_trace_entry("track", vocab, scored, first),),
    )

    if max_len == 1:
        return PlanResult(root.actions, root.log_prob, False, root.trace)

    def best_of(pool: List[_Trajectory]) -> _Trajectory:
        return sorted(pool, key=lambda t: (-t.log_prob, t.actions))[0]

    finished: List[_Trajectory] = []  # emitted EOS; retained for final selection
    capped: List[_Trajectory] = []  # hit max_len before EOS
    live = [root]
    while live:
        expansions: List[Tuple[float, _Trajectory, int, float, ScoredStep]] = []
        for traj in live:
            step = recommend(bundle, vocab, graph, traj.state)
            for cand, lp in zip(step.candidates, step.log_probs):
                expansions.append((traj.log_prob + float(lp), traj, cand, float(lp), step))
        expansions.sort(key=lambda e: (-e[0], e[1].actions, e[2]))
        live = []
        for total_lp, traj, cand, lp, step in expansions[:beam_width]:
            entry = _trace_entry("recommend", vocab, step, cand)
            if cand == vocab.eos_id:
                finished.append(_Trajectory(traj.actions, total_lp, traj.state,
                                            traj.trace + (entry,)))
                continue
            extended = _Trajectory(
                actions=traj.actions + (cand,),
                log_prob=total_lp,
                state=advance_history(bundle, vocab, traj.state, cand),
                trace=traj.trace + (entry,),
            )
            if len(extended.actions) >= max_len:
                capped.append(extended)
            else:
                live.append(extended)
    if finished:
        best = best_of(finished)
        return PlanResult(best.actions, best.log_prob, True, best.trace)
    best = best_of(capped)
    return PlanResult(best.actions, best.log_prob, False, best.trace)
