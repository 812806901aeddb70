"""Corpus model, labeling, windows, splits, and file-format tests."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adtg.corpus import (
    NULL_ID,
    ActionVocabulary,
    Corpus,
    DataError,
    ParseError,
    Segment,
    TaskData,
    VideoRecord,
    compressed_sequence,
    condition_windows,
    framewise_labels,
    load_corpus,
    read_features,
    round_half_up,
    save_corpus,
    split_dataset,
    write_features,
)


def make_video(T=10, D=4, segments=(), task_id="t", video_id="v0"):
    feats = np.arange(T * D, dtype=np.float32).reshape(T, D)
    return VideoRecord(video_id=video_id, task_id=task_id, features=feats, segments=tuple(segments))


VOCAB = ActionVocabulary(task_id="t", actions=("alpha", "beta", "gamma"))


# ---------------------------------------------------------------------------
# vocabulary


def test_vocab_reserved_indices():
    assert VOCAB.index_of("<null>") == 0
    assert VOCAB.index_of("alpha") == 1
    assert VOCAB.eos_id == 4
    assert VOCAB.name_of(4) == "<eos>"
    assert VOCAB.action_ids() == (1, 2, 3)


def test_vocab_rejects_duplicates_and_reserved():
    with pytest.raises(DataError):
        ActionVocabulary(task_id="t", actions=("a", "a"))
    with pytest.raises(DataError):
        ActionVocabulary(task_id="t", actions=("<eos>",))


# ---------------------------------------------------------------------------
# framewise labels


def test_framewise_single_segment():
    video = make_video(T=10, segments=[Segment("alpha", 3.0, 5.0)])
    labels = framewise_labels(video, VOCAB)
    expect = [0, 0, 1, 1, 1, 0, 0, 0, 0, 0]
    assert labels.tolist() == expect


def test_framewise_no_segments_all_null():
    labels = framewise_labels(make_video(), VOCAB)
    assert np.all(labels == NULL_ID)


def test_framewise_overlap_names_video():
    video = make_video(
        T=10,
        video_id="vbad",
        segments=[Segment("alpha", 2.0, 5.0), Segment("beta", 4.6, 8.0)],
    )
    with pytest.raises(DataError, match="vbad"):
        framewise_labels(video, VOCAB)


def test_framewise_unknown_action_rejected():
    video = make_video(segments=[Segment("delta", 2.0, 4.0)])
    with pytest.raises(DataError, match="delta"):
        framewise_labels(video, VOCAB)


# ---------------------------------------------------------------------------
# condition windows


def test_condition_window_rounding_rule():
    video = make_video(T=10)
    pre, post = condition_windows(video, Segment("alpha", 3.4, 7.6))
    # t1=3, t2=8 -> pre frames (2, 3); post frames (8, 9)
    assert np.array_equal(pre, video.features[[1, 2]].astype(np.float64))
    assert np.array_equal(post, video.features[[7, 8]].astype(np.float64))


def test_condition_window_start_clamp():
    video = make_video(T=10)
    pre, _ = condition_windows(video, Segment("alpha", 1.0, 4.0))
    assert np.array_equal(pre[0], pre[1])
    assert np.array_equal(pre[0], video.features[0].astype(np.float64))


def test_condition_window_end_clamp():
    video = make_video(T=10)
    _, post = condition_windows(video, Segment("alpha", 5.0, 10.0))
    assert np.array_equal(post[0], post[1])
    assert np.array_equal(post[0], video.features[9].astype(np.float64))


def test_round_half_up():
    assert round_half_up(3.5) == 4
    assert round_half_up(2.4999) == 2
    assert round_half_up(2.5) == 3


# ---------------------------------------------------------------------------
# compressed sequences


def rle_oracle(labels):
    """Run-length encode, drop NULL runs."""
    runs = []
    for lab in labels:
        if not runs or runs[-1] != lab:
            runs.append(lab)
    return [r for r in runs if r != NULL_ID]


def test_compressed_basic():
    assert compressed_sequence([0, 1, 1, 0, 2, 2, 1]) == [1, 2, 1]


def test_compressed_all_null():
    assert compressed_sequence([0, 0, 0]) == []


@given(st.lists(st.integers(0, 4), max_size=40))
def test_compressed_matches_rle_oracle(labels):
    assert compressed_sequence(labels) == rle_oracle(labels)


def test_compressed_matches_rle_on_1000_random_strings():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        labels = rng.integers(0, 5, size=rng.integers(0, 30)).tolist()
        assert compressed_sequence(labels) == rle_oracle(labels)


def test_framewise_then_compressed_recovers_order():
    video = make_video(
        T=12,
        segments=[Segment("beta", 1.0, 3.0), Segment("alpha", 4.6, 7.0), Segment("gamma", 9.0, 12.0)],
    )
    labels = framewise_labels(video, VOCAB)
    assert compressed_sequence(labels) == [2, 1, 3]


# ---------------------------------------------------------------------------
# splits


def test_split_paper_sizes_for_89_videos():
    ids = [f"v{i}" for i in range(89)]
    split = split_dataset(ids, seed=1)
    assert (len(split.train), len(split.val), len(split.test)) == (50, 20, 19)


def test_split_minimum_three():
    split = split_dataset(["a", "b", "c"], seed=0)
    assert (len(split.train), len(split.val), len(split.test)) == (1, 1, 1)


def test_split_deterministic():
    ids = [f"v{i}" for i in range(37)]
    assert split_dataset(ids, seed=9) == split_dataset(ids, seed=9)
    assert split_dataset(ids, seed=9) != split_dataset(ids, seed=10)


def test_split_too_few_videos():
    with pytest.raises(DataError):
        split_dataset(["a", "b"], seed=0)


@given(st.integers(3, 120), st.integers(0, 5))
def test_split_partitions_input(n, seed):
    ids = [f"v{i}" for i in range(n)]
    split = split_dataset(ids, seed=seed)
    all_ids = list(split.train) + list(split.val) + list(split.test)
    assert sorted(all_ids) == sorted(ids)
    assert len(set(all_ids)) == n
    assert split.train and split.val and split.test


# ---------------------------------------------------------------------------
# file formats


def test_feature_file_round_trip(tmp_path):
    feats = np.random.default_rng(0).normal(size=(7, 5)).astype(np.float32)
    path = tmp_path / "x.feat"
    write_features(path, feats)
    back = read_features(path)
    assert back.dtype == np.float32
    assert np.array_equal(back, feats)


def test_feature_file_bad_magic(tmp_path):
    path = tmp_path / "x.feat"
    path.write_bytes(b"NOTAFEAT" + b"\0" * 16)
    with pytest.raises(ParseError, match="magic"):
        read_features(path)


def test_feature_file_truncated(tmp_path):
    feats = np.ones((4, 3), dtype=np.float32)
    path = tmp_path / "x.feat"
    write_features(path, feats)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(ParseError):
        read_features(path)


def make_corpus():
    corpus = Corpus(feature_dim=4)
    task = TaskData(vocab=VOCAB)
    task.videos["v0"] = make_video(T=10, segments=[Segment("alpha", 2.0, 4.0)])
    task.videos["v1"] = make_video(T=8, video_id="v1", segments=[Segment("beta", 1.0, 3.2)])
    corpus.tasks["t"] = task
    return corpus


def test_corpus_round_trip(tmp_path):
    corpus = make_corpus()
    save_corpus(corpus, tmp_path / "c")
    back = load_corpus(tmp_path / "c")
    assert back.task_ids() == ["t"]
    assert back.feature_dim == 4
    v0 = back.tasks["t"].videos["v0"]
    assert np.array_equal(v0.features, corpus.tasks["t"].videos["v0"].features)
    assert v0.segments == corpus.tasks["t"].videos["v0"].segments


def test_corpus_unknown_action_rejected_on_load(tmp_path):
    corpus = make_corpus()
    save_corpus(corpus, tmp_path / "c")
    ann = tmp_path / "c" / "tasks" / "t" / "annotations.jsonl"
    text = ann.read_text().replace('"alpha"', '"zeta"')
    ann.write_text(text)
    with pytest.raises(DataError, match="zeta"):
        load_corpus(tmp_path / "c")


def test_corpus_malformed_line_reports_position(tmp_path):
    corpus = make_corpus()
    save_corpus(corpus, tmp_path / "c")
    ann = tmp_path / "c" / "tasks" / "t" / "annotations.jsonl"
    ann.write_text(ann.read_text() + "{not json\n")
    with pytest.raises(ParseError, match="annotations.jsonl:3"):
        load_corpus(tmp_path / "c")


def test_corpus_dim_mismatch(tmp_path):
    corpus = make_corpus()
    corpus.feature_dim = 5
    with pytest.raises(DataError, match="feature dim"):
        corpus.validate()
