"""Pipeline staging, resumability, determinism, and CLI behavior."""

import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from adtg.cli import main
from adtg.config import RunConfig
from adtg.corpus import load_corpus
from adtg.evalkit import evaluate
from adtg.pipeline import (
    StageError,
    cmd_build_graphs,
    cmd_eval,
    cmd_plan,
    cmd_train,
    compute_splits,
    corpus_digest,
)
from tests.conftest import TINY_SPECS, tiny_config


def read_bundle_bytes(seed_dir: Path) -> bytes:
    return (seed_dir / "embedding.params").read_bytes() + (seed_dir / "guidance.params").read_bytes()


# ---------------------------------------------------------------------------
# config


def test_config_defaults_match_published_recipe():
    c = RunConfig()
    assert c.cond_dim == 128
    assert c.embed_dim == 96
    assert c.hidden_dim == 128
    assert c.margin == 0.5
    assert c.lr_embed == 1e-5
    assert c.lr_guidance == 5e-5
    assert c.epochs_embed == 50
    assert c.epochs_tracker == 50
    assert c.epochs_recommender == 100
    assert c.beam_width == 5
    assert c.max_plan_len == 20


def test_config_round_trip():
    c = RunConfig(seeds=[1, 2], margin=0.7)
    back = RunConfig.from_json(c.to_json())
    assert back == c
    assert back.config_hash() == c.config_hash()


def test_config_rejects_unknown_fields():
    with pytest.raises(ValueError, match="unknown config"):
        RunConfig.from_json(json.dumps({"not_a_field": 1}))
    with pytest.raises(ValueError):
        RunConfig().with_overrides({"nope": 2})


def test_config_validates_values():
    with pytest.raises(ValueError):
        RunConfig(margin=-1.0).validate()
    with pytest.raises(ValueError):
        RunConfig(ablation="bogus").validate()


# ---------------------------------------------------------------------------
# stages


def test_stage_order_enforced(tmp_path, tiny_corpus_dir):
    config = tiny_config(corpus_dir=str(tiny_corpus_dir), out_dir=str(tmp_path))
    with pytest.raises(StageError, match="embeddings"):
        cmd_train(tiny_corpus_dir, tmp_path, config, stage="tracker")


def test_stage_all_produces_artifacts(tiny_run):
    seed_dir = Path(tiny_run["out_dir"]) / "seed0"
    for name in ("embedding.json", "embedding.params", "guidance.json", "guidance.params",
                 "stage_embeddings.json", "stage_tracker.json", "stage_recommender.json",
                 "loss_embeddings.csv", "loss_tracker.csv", "loss_recommender.csv"):
        assert (seed_dir / name).exists(), name


def test_rerun_skips_completed_stages(tiny_run):
    out = tiny_run["out_dir"]
    before = read_bundle_bytes(Path(out) / "seed0")
    cmd_train(tiny_run["corpus_dir"], out, tiny_run["config"], stage="all")
    assert read_bundle_bytes(Path(out) / "seed0") == before


def test_force_rerun_is_bitwise_identical(tiny_run):
    out = tiny_run["out_dir"]
    before = read_bundle_bytes(Path(out) / "seed0")
    cmd_train(tiny_run["corpus_dir"], out, tiny_run["config"], stage="all", force=True)
    assert read_bundle_bytes(Path(out) / "seed0") == before


def test_stale_config_rejected(tiny_run, tmp_path):
    changed = tiny_run["config"].with_overrides({"margin": 0.9})
    with pytest.raises(StageError, match="stale"):
        cmd_train(tiny_run["corpus_dir"], tiny_run["out_dir"], changed, stage="all")


def test_loss_csv_trends_down(tiny_run):
    for stage in ("embeddings", "tracker", "recommender"):
        path = Path(tiny_run["out_dir"]) / "seed0" / f"loss_{stage}.csv"
        rows = path.read_text().strip().splitlines()[1:]
        losses = [float(r.split(",")[1]) for r in rows]
        assert losses[-1] < losses[0], stage


def test_graphs_replayable_and_written(tiny_run):
    gdir = Path(tiny_run["out_dir"]) / "graphs"
    assert (gdir / "tiny.json").exists()
    assert (gdir / "tiny.dot").exists()
    dot = (gdir / "tiny.dot").read_text()
    assert dot.startswith('digraph "tiny"')


def test_corpus_digest_changes_with_content(tiny_corpus_dir, tmp_path):
    d1 = corpus_digest(tiny_corpus_dir)
    import shutil

    clone = tmp_path / "clone"
    shutil.copytree(tiny_corpus_dir, clone)
    assert corpus_digest(clone) == d1
    ann = next(clone.glob("tasks/*/annotations.jsonl"))
    ann.write_text(ann.read_text().replace("t_start", "t_start", 1) + "\n")
    assert corpus_digest(clone) != d1


# ---------------------------------------------------------------------------
# eval + plan commands


def test_cmd_eval_writes_reports(tiny_run):
    report = cmd_eval(tiny_run["corpus_dir"], tiny_run["out_dir"], tiny_run["config"],
                      "tracking")
    rdir = Path(tiny_run["out_dir"]) / "reports"
    assert (rdir / "tracking.json").exists()
    table = (rdir / "tracking.txt").read_text()
    assert "accuracy" in table and "accuracy_excl_null" in table
    assert set(report.per_task) == {"tiny", "forked"}


def test_cmd_plan_outputs(tiny_run):
    corpus = load_corpus(tiny_run["corpus_dir"])
    video_id = corpus.tasks["tiny"].video_ids()[0]
    result = cmd_plan(tiny_run["corpus_dir"], tiny_run["out_dir"], tiny_run["config"],
                      video_id, prefix_cut=0)
    assert result["plan"]
    pdir = Path(tiny_run["out_dir"]) / "plans"
    trace_path = pdir / f"{video_id}_cut0.trace.jsonl"
    assert trace_path.exists()
    entries = [json.loads(line) for line in trace_path.read_text().splitlines()]
    assert entries[0]["kind"] == "track"
    assert all(set(e) >= {"kind", "candidates", "log_probs", "chosen"} for e in entries)
    assert "| generated" in result["text"]


def test_cmd_plan_unknown_video(tiny_run):
    with pytest.raises(StageError, match="unknown video"):
        cmd_plan(tiny_run["corpus_dir"], tiny_run["out_dir"], tiny_run["config"], "nope")


def test_prefix_cut_zero_equals_complete_mode(tiny_run):
    corpus = load_corpus(tiny_run["corpus_dir"])
    video_id = corpus.tasks["tiny"].video_ids()[1]
    a = cmd_plan(tiny_run["corpus_dir"], tiny_run["out_dir"], tiny_run["config"],
                 video_id, prefix_cut=0)
    b = cmd_plan(tiny_run["corpus_dir"], tiny_run["out_dir"], tiny_run["config"],
                 video_id, prefix_cut=1)
    # cut before the first second: empty prefix, same initial frame
    assert a["plan"] == b["plan"]


def test_evaluate_rejects_bad_mode(tiny_run):
    import adtg.numkit as nk

    corpus = load_corpus(tiny_run["corpus_dir"])
    splits = compute_splits(corpus, 0)
    with pytest.raises(nk.UsageError):
        evaluate(corpus, splits, tiny_run["bundles"], "bogus")


# ---------------------------------------------------------------------------
# CLI surface


def write_spec_file(path: Path) -> Path:
    doc = {"tasks": [
        {"task_id": "cli", "n_actions": 3, "partial_order": [[0, 1], [1, 2]],
         "feature_dim": 8, "n_videos": 6, "seed": 3, "duration_range": [4, 6],
         "noise_sigma": 0.05, "null_fraction": 0.2}
    ]}
    path.write_text(json.dumps(doc))
    return path


def test_cli_synth_and_stats(tmp_path):
    runner = CliRunner()
    spec = write_spec_file(tmp_path / "spec.json")
    corpus_dir = tmp_path / "corpus"
    res = runner.invoke(main, ["synth", "--spec", str(spec), "--corpus", str(corpus_dir)])
    assert res.exit_code == 0, res.output
    assert "cli" in res.output
    res = runner.invoke(main, ["stats", "--corpus", str(corpus_dir)])
    assert res.exit_code == 0
    assert "Null%" in res.output


def test_cli_synth_same_seed_byte_identical(tmp_path):
    runner = CliRunner()
    spec = write_spec_file(tmp_path / "spec.json")
    for name in ("c1", "c2"):
        res = runner.invoke(main, ["synth", "--spec", str(spec), "--corpus",
                                   str(tmp_path / name)])
        assert res.exit_code == 0, res.output
    files1 = sorted((tmp_path / "c1").rglob("*"))
    files2 = sorted((tmp_path / "c2").rglob("*"))
    assert [f.name for f in files1 if f.is_file()] == [f.name for f in files2 if f.is_file()]
    for f1, f2 in zip(files1, files2):
        if f1.is_file():
            assert f1.read_bytes() == f2.read_bytes(), f1.name


def test_cli_ingest_verify_ok_and_fail(tmp_path, tiny_corpus_dir):
    runner = CliRunner()
    res = runner.invoke(main, ["ingest-verify", "--corpus", str(tiny_corpus_dir)])
    assert res.exit_code == 0
    assert "corpus ok" in res.output
    res = runner.invoke(main, ["ingest-verify", "--corpus", str(tmp_path / "missing")])
    assert res.exit_code == 2


def test_cli_validation_error_exit_code(tmp_path):
    runner = CliRunner()
    res = runner.invoke(main, ["train", "--corpus", str(tmp_path / "nope"),
                               "--out", str(tmp_path / "out")])
    assert res.exit_code == 2


def test_cli_eval_and_plan(tiny_run, tiny_config_file):
    runner = CliRunner()
    res = runner.invoke(main, ["eval", "--mode", "tracking", "--config",
                               str(tiny_config_file)])
    assert res.exit_code == 0, res.output
    assert "accuracy" in res.output

    corpus = load_corpus(tiny_run["corpus_dir"])
    video_id = corpus.tasks["tiny"].video_ids()[0]
    res = runner.invoke(main, ["plan", "--video", video_id, "--config",
                               str(tiny_config_file)])
    assert res.exit_code == 0, res.output
    assert "| generated" in res.output


def test_cli_set_overrides(tmp_path):
    runner = CliRunner()
    spec = write_spec_file(tmp_path / "spec.json")
    res = runner.invoke(main, ["synth", "--spec", str(spec), "--corpus",
                               str(tmp_path / "c"), "--set", "margin=0.75"])
    assert res.exit_code == 0, res.output
    res = runner.invoke(main, ["synth", "--spec", str(spec), "--corpus",
                               str(tmp_path / "c"), "--set", "bogus_field=1"])
    assert res.exit_code == 2
