"""Shared fixtures: a tiny synthetic corpus and a trained run directory."""

import json
from pathlib import Path

import pytest

from adtg.config import RunConfig
from adtg.corpus import SynthTaskSpec
from adtg.pipeline import cmd_build_graphs, cmd_synth, cmd_train

TINY_SPECS = [
    SynthTaskSpec(
        task_id="tiny",
        n_actions=3,
        partial_order=((0, 1), (1, 2)),
        feature_dim=12,
        noise_sigma=0.05,
        null_fraction=0.25,
        n_videos=8,
        seed=5,
        duration_range=(4, 6),
        min_inter_gap=2,
    ),
    SynthTaskSpec(
        task_id="forked",
        n_actions=4,
        partial_order=((0, 2), (1, 2), (2, 3)),
        feature_dim=12,
        noise_sigma=0.05,
        null_fraction=0.25,
        n_videos=8,
        seed=6,
        duration_range=(4, 6),
        min_inter_gap=2,
    ),
]


def tiny_config(**overrides) -> RunConfig:
    base = dict(
        feature_dim=12,
        cond_dim=16,
        embed_dim=8,
        hidden_dim=12,
        mlp_hidden=16,
        epochs_embed=3,
        epochs_tracker=3,
        epochs_recommender=5,
        seeds=[0],
        beam_width=3,
        max_plan_len=8,
    )
    base.update(overrides)
    return RunConfig(**base)


@pytest.fixture(scope="session")
def tiny_corpus_dir(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("tiny-corpus")
    cmd_synth(TINY_SPECS, root)
    return root


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory, tiny_corpus_dir):
    """A fully trained (short-epoch) run over the tiny corpus."""
    out = tmp_path_factory.mktemp("tiny-run")
    config = tiny_config(corpus_dir=str(tiny_corpus_dir), out_dir=str(out))
    cmd_build_graphs(tiny_corpus_dir, out, config.split_seed)
    bundles = cmd_train(tiny_corpus_dir, out, config, stage="all")
    return {"corpus_dir": tiny_corpus_dir, "out_dir": out, "config": config,
            "bundles": bundles}


@pytest.fixture(scope="session")
def tiny_config_file(tmp_path_factory, tiny_run) -> Path:
    path = tmp_path_factory.mktemp("cfg") / "config.json"
    path.write_text(tiny_run["config"].to_json())
    return path


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if name.startswith("test_a"):
        tag = name.split("_")[1].upper()
        outcome = "PASS" if report.passed else "FAIL"
        print(f"\n[{tag}] {outcome} ({report.duration:.1f}s) {name}")
