"""Instrument free-running tracking on the ambiguous corpus."""
import numpy as np

from adtg.config import RunConfig
from adtg.corpus import NULL_ID, SynthTaskSpec, build_synth_corpus, framewise_labels, split_dataset
from adtg.evalkit import train_variant
from adtg.guidance import advance_history, init_state, track_step

spec = SynthTaskSpec(
    task_id="ambig",
    n_actions=6,
    action_names=("mix1", "mix2", "join", "twin1", "sep", "twin2"),
    partial_order=((0, 2), (1, 2), (2, 3), (3, 4), (4, 5)),
    cluster_aliases={5: 3},
    feature_dim=32,
    noise_sigma=0.05,
    null_fraction=0.3,
    n_videos=30,
    seed=202,
    duration_range=(10, 16),
    min_inter_gap=2,
)
corpus, _ = build_synth_corpus([spec])
splits = {"ambig": split_dataset(corpus.tasks["ambig"].video_ids(), seed=7)}
config = RunConfig(feature_dim=32)
logs = {}
bundles = train_variant(corpus, splits, config, seed=0, variant="full", logs=logs)
print("tracker loss:", logs["tracker"][0], "->", logs["tracker"][-1])
print("recommender loss:", logs["recommender"][0], "->", logs["recommender"][-1])

task = corpus.tasks["ambig"]
vocab = task.vocab
cands = (NULL_ID,) + vocab.action_ids()
for vid in list(splits["ambig"].val)[:3]:
    video = task.videos[vid]
    labels = framewise_labels(video, vocab)
    gb = bundles.guidance
    state = init_state(gb)
    prev = NULL_ID
    preds = []
    for t in range(1, video.duration + 1):
        scored = track_step(gb, vocab, state, video.features[t - 1].astype(np.float64), cands)
        pred = scored.chosen
        preds.append(pred)
        if pred != NULL_ID and pred != prev:
            state = advance_history(gb, vocab, state, pred)
        prev = pred
    gt_str = "".join(str(int(l)) for l in labels)
    pd_str = "".join(str(int(p)) for p in preds)
    print(f"{vid}  events={state.history_events}")
    print(f"  gt:   {gt_str}")
    print(f"  pred: {pd_str}")
