"""Evaluation drivers: oracle stubs, random-tracker bound, ablation harness."""

import math

import numpy as np
import pytest

import adtg.evalkit as ek
from adtg.corpus import (
    NULL_ID,
    SynthTaskSpec,
    build_synth_corpus,
    compressed_sequence,
    framewise_labels,
    load_corpus,
    split_dataset,
)
from adtg.evalkit import evaluate, run_ablation, train_variant
from adtg.pipeline import compute_splits
from tests.conftest import tiny_config


@pytest.fixture(scope="module")
def tiny(tiny_run):
    corpus = load_corpus(tiny_run["corpus_dir"])
    splits = compute_splits(corpus, tiny_run["config"].split_seed)
    return corpus, splits, tiny_run["bundles"], tiny_run["config"]


def test_oracle_stub_gets_perfect_scores(tiny, monkeypatch):
    corpus, splits, bundles, config = tiny

    def oracle_track(bundle, vocab, video, history_mode="events"):
        labels = framewise_labels(video, vocab)
        return labels.astype(np.int64), []

    monkeypatch.setattr(ek, "track_video", oracle_track)
    report = evaluate(corpus, splits, bundles, "tracking", config=config)
    assert report.aggregate["accuracy"].mean == 1.0
    assert report.aggregate["accuracy_excl_null"].mean == 1.0


def test_oracle_planner_gets_perfect_scores(tiny, monkeypatch):
    corpus, splits, bundles, config = tiny
    # map each video's first frame to its full compressed sequence
    by_frame = {}
    for tid in corpus.task_ids():
        task = corpus.tasks[tid]
        for vid, video in task.videos.items():
            key = video.features[0].astype(np.float64).tobytes()
            by_frame[key] = compressed_sequence(framewise_labels(video, task.vocab))

    class OracleResult:
        def __init__(self, actions):
            self.actions = tuple(actions)
            self.log_prob = 0.0
            self.ended_with_eos = True
            self.trace = ()

    def oracle_plan(bundle, vocab, graph, x_init, prefix=(), *, beam_width, max_len):
        return OracleResult(by_frame[np.asarray(x_init).tobytes()])

    monkeypatch.setattr(ek, "plan", oracle_plan)
    report = evaluate(corpus, splits, bundles, "plan_complete", config=config)
    assert report.aggregate["accuracy"].mean == 1.0
    assert report.aggregate["miou"].mean == 1.0
    assert report.aggregate["length_mismatch"].mean == 0.0


def test_uniform_random_tracker_matches_binomial_oracle(monkeypatch):
    spec = SynthTaskSpec(
        task_id="rand", n_actions=5, partial_order=((0, 1), (1, 2), (2, 3), (3, 4)),
        feature_dim=8, n_videos=40, seed=9, duration_range=(6, 10), null_fraction=0.3,
    )
    corpus, _ = build_synth_corpus([spec])
    task = corpus.tasks["rand"]
    rng = np.random.default_rng(17)
    n_cands = len(task.vocab.actions) + 1  # actions + NULL

    preds_all = []
    gt_all = []
    for vid in task.video_ids():
        video = task.videos[vid]
        labels = framewise_labels(video, task.vocab)
        preds = rng.integers(0, n_cands, size=video.duration)
        preds_all.extend(int(p) for p in preds)
        gt_all.extend(int(g) for g in labels)
    acc = ek.accuracy(preds_all, gt_all)
    p = 1.0 / n_cands
    bound = 3.0 * math.sqrt(p * (1 - p) / len(gt_all))
    assert abs(acc - p) <= bound


def test_run_ablation_full_equals_default_pipeline(tiny):
    corpus, splits, _, config = tiny
    reports_a = run_ablation("full", corpus, splits, config, seeds=[0],
                             modes=("tracking",))
    bundles = {0: train_variant(corpus, splits, config, 0, "full")}
    report_b = evaluate(corpus, splits, bundles, "tracking", config=config)
    assert reports_a["tracking"].to_json() == report_b.to_json()


def test_run_ablation_rejects_unknown_variant(tiny):
    import adtg.numkit as nk

    corpus, splits, _, config = tiny
    with pytest.raises(nk.UsageError):
        run_ablation("bogus", corpus, splits, config, seeds=[0])


def test_onehot_variant_table_is_orthonormal(tiny):
    corpus, splits, _, config = tiny
    bundles = train_variant(corpus, splits, config, 0, "onehot_embed")
    table = bundles.embedding.table
    assert np.array_equal(table @ table.T, np.eye(table.shape[0]))


def test_random_embed_variant_freezes_table(tiny):
    corpus, splits, _, config = tiny
    from adtg.embedding import init_bundle, EmbedDims
    from adtg.seeding import derive_seed

    bundles = train_variant(corpus, splits, config, 0, "random_embed")
    dims = EmbedDims(feature=config.feature_dim, cond=config.cond_dim,
                     embed=config.embed_dim, hidden=config.mlp_hidden)
    vocabs = {tid: corpus.tasks[tid].vocab for tid in corpus.task_ids()}
    frozen = init_bundle(vocabs, dims, config.margin, derive_seed(0, "stage-embed"))
    assert np.array_equal(bundles.embedding.table, frozen.table)


def test_no_history_equals_full_on_single_action_task():
    spec = SynthTaskSpec(
        task_id="solo", n_actions=1, partial_order=(), feature_dim=10, n_videos=9,
        seed=21, duration_range=(5, 8), null_fraction=0.3,
    )
    corpus, _ = build_synth_corpus([spec])
    splits = {"solo": split_dataset(corpus.tasks["solo"].video_ids(), seed=3)}
    config = tiny_config(feature_dim=10, epochs_embed=5, epochs_tracker=10,
                         epochs_recommender=5)
    preds = {}
    for variant in ("full", "no_history"):
        bundles = train_variant(corpus, splits, config, 0, variant)
        task = corpus.tasks["solo"]
        out = []
        for vid in splits["solo"].test:
            video = task.videos[vid]
            p, _ = ek.track_video(bundles.guidance, task.vocab, video)
            out.extend(int(x) for x in p)
        preds[variant] = out
    assert preds["full"] == preds["no_history"]


def test_evaluate_bitwise_reproducible(tiny):
    corpus, splits, bundles, config = tiny
    r1 = evaluate(corpus, splits, bundles, "recommendation", config=config)
    r2 = evaluate(corpus, splits, bundles, "recommendation", config=config)
    assert r1.to_json() == r2.to_json()


def test_report_structure(tiny):
    corpus, splits, bundles, config = tiny
    report = evaluate(corpus, splits, bundles, "plan_prefix", config=config)
    assert set(report.per_task) == {"tiny", "forked"}
    for stats in report.per_task.values():
        assert "miou" in stats and "accuracy" in stats
        assert stats["miou"].std is None  # single seed: no std
    table = report.to_table()
    assert "aggregate" in table
