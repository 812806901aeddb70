"""Feasibility probe for tracking accuracy under default hyperparameters."""
import time

import numpy as np

from adtg.corpus import NULL_ID, SynthTaskSpec, build_synth_corpus, framewise_labels, split_dataset
from adtg.embedding import EmbedDims, train_embeddings
from adtg.guidance import advance_history, init_state, track_step, train_tracker

spec = SynthTaskSpec(
    task_id="sep6",
    n_actions=6,
    partial_order=((0, 2), (1, 2), (2, 3), (3, 4), (3, 5)),
    feature_dim=32,
    noise_sigma=0.05,
    null_fraction=0.3,
    n_videos=54,
    seed=101,
    duration_range=(18, 26),
    min_inter_gap=2,
)
corpus, _ = build_synth_corpus([spec])
task = corpus.tasks["sep6"]
split = split_dataset(task.video_ids(), seed=7)

t0 = time.time()
emb_log = []
embedding = train_embeddings(corpus, dims=EmbedDims(feature=32), seed=11,
                             videos_by_task={"sep6": split.train}, log=emb_log)
t1 = time.time()
print(f"embedding: {t1-t0:.1f}s loss {emb_log[0]:.3f}->{emb_log[-1]:.4f}")

trk_log = []
gb = train_tracker(corpus, embedding, "x", videos_by_task={"sep6": split.train},
                   lr=5e-5, epochs=50, seed=12, log=trk_log)
t2 = time.time()
print(f"tracker: {t2-t1:.1f}s loss {trk_log[0]:.3f}->{trk_log[-1]:.4f}")

# free-running eval on held-out videos
vocab = task.vocab
cands = (NULL_ID,) + vocab.action_ids()
correct = correct_nonnull = total = total_nonnull = 0
for vid in list(split.val) + list(split.test):
    video = task.videos[vid]
    labels = framewise_labels(video, vocab)
    state = init_state(gb)
    prev_pred = NULL_ID
    for t in range(1, video.duration + 1):
        scored = track_step(gb, vocab, state, video.features[t - 1].astype(np.float64), cands)
        pred = scored.chosen
        gt = int(labels[t - 1])
        correct += pred == gt
        total += 1
        if gt != NULL_ID:
            correct_nonnull += pred == gt
            total_nonnull += 1
        if pred != prev_pred and pred != NULL_ID:
            state = advance_history(gb, vocab, state, pred)
        prev_pred = pred
t3 = time.time()
print(f"eval: {t3-t2:.1f}s")
print(f"overall acc: {correct/total:.4f}  excl-null acc: {correct_nonnull/total_nonnull:.4f}")
print(f"total: {t3-t0:.1f}s")
