"""Feasibility probe for the history-ablation gaps."""
import time

from adtg.config import RunConfig
from adtg.corpus import SynthTaskSpec, build_synth_corpus, split_dataset
from adtg.evalkit import run_ablation

spec = SynthTaskSpec(
    task_id="ambig",
    n_actions=6,
    action_names=("mix1", "mix2", "join", "twin1", "sep", "twin2"),
    partial_order=((0, 2), (1, 2), (2, 3), (3, 4), (4, 5)),
    cluster_aliases={5: 3},  # twin2 reuses twin1's clusters
    feature_dim=32,
    noise_sigma=0.05,
    null_fraction=0.3,
    n_videos=30,
    seed=202,
    duration_range=(10, 16),
    duration_overrides={3: (18, 24), 5: (18, 24)},
    min_inter_gap=2,
)
corpus, _ = build_synth_corpus([spec])
splits = {"ambig": split_dataset(corpus.tasks["ambig"].video_ids(), seed=7)}
config = RunConfig(feature_dim=32)

modes = ("tracking", "recommendation", "plan_prefix", "plan_complete")
t0 = time.time()
for variant in ("full", "no_history"):
    reports = run_ablation(variant, corpus, splits, config, seeds=[0], modes=modes)
    t1 = time.time()
    print(f"--- {variant} ({t1 - t0:.0f}s)")
    for mode in modes:
        agg = {m: s.mean for m, s in reports[mode].aggregate.items()}
        print(f"  {mode}: " + "  ".join(f"{k}={v:.3f}" for k, v in sorted(agg.items())))
    t0 = t1
