"""Command-line interface.

Exit codes: 0 success, 2 validation/config error, 1 anything else. The
pipeline commands run the core package directly; the ``client`` group is a
thin HTTP client for a running guidance service.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import numkit as nk
from .config import RunConfig
from .corpus.fileio import load_corpus
from .corpus.model import DataError
from .corpus.stats import stats_table
from .corpus.synth import SpecError
from .corpus.fileio import ParseError
from .guidance import ConfigError
from .pipeline import (
    STAGES,
    StageError,
    cmd_build_graphs,
    cmd_eval,
    cmd_plan,
    cmd_synth,
    cmd_train,
    synth_spec_from_obj,
)

VALIDATION_ERRORS = (
    DataError, ParseError, SpecError, ConfigError, StageError, nk.UsageError,
    nk.ShapeError, nk.DomainError, ValueError, KeyError, FileNotFoundError,
)


def _fail(exc: BaseException) -> None:
    click.echo(f"error: {exc}", err=True)
    code = 2 if isinstance(exc, VALIDATION_ERRORS) else 1
    sys.exit(code)


def _load_config(config_path: str | None, sets: tuple[str, ...], **direct) -> RunConfig:
    config = RunConfig()
    if config_path:
        config = RunConfig.from_json(Path(config_path).read_text())
    overrides = {}
    for item in sets:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        overrides[key] = json.loads(raw)
    for key, value in direct.items():
        if value is not None:
            overrides[key] = value
    if overrides:
        config = config.with_overrides(overrides)
    config.validate()
    return config


@click.group()
def main():
    """Task-graph learning, tracking, recommendation, and planning."""


common_options = [
    click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                 help="JSON config file (defaults are the published recipe)."),
    click.option("--set", "sets", multiple=True, metavar="KEY=VALUE",
                 help="Override a config field (value parsed as JSON)."),
    click.option("--corpus", "corpus_dir", type=click.Path(), default=None),
    click.option("--out", "out_dir", type=click.Path(), default=None),
    click.option("--seed", "seeds", type=int, multiple=True,
                 help="Root seed(s); repeat for multi-seed runs."),
]


def with_common(fn):
    for opt in reversed(common_options):
        fn = opt(fn)
    return fn


def _config_from(config_path, sets, corpus_dir, out_dir, seeds) -> RunConfig:
    direct = {}
    if corpus_dir is not None:
        direct["corpus_dir"] = corpus_dir
    if out_dir is not None:
        direct["out_dir"] = out_dir
    if seeds:
        direct["seeds"] = list(seeds)
    return _load_config(config_path, sets, **direct)


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True), required=True,
              help="JSON file: {\"tasks\": [synthetic task specs]}.")
@with_common
def synth(spec_path, config_path, sets, corpus_dir, out_dir, seeds):
    """Generate a synthetic corpus with ground-truth graphs."""
    try:
        config = _config_from(config_path, sets, corpus_dir, out_dir, seeds)
        doc = json.loads(Path(spec_path).read_text())
        specs = [synth_spec_from_obj(obj) for obj in doc["tasks"]]
        out = cmd_synth(specs, Path(config.corpus_dir))
        corpus = load_corpus(out)
        click.echo(f"wrote corpus with {len(corpus.tasks)} task(s) to {out}")
        click.echo(stats_table(corpus), nl=False)
    except Exception as exc:
        _fail(exc)


@main.command("ingest-verify")
@with_common
def ingest_verify(config_path, sets, corpus_dir, out_dir, seeds):
    """Load and validate a corpus directory; print its statistics."""
    try:
        config = _config_from(config_path, sets, corpus_dir, out_dir, seeds)
        corpus = load_corpus(Path(config.corpus_dir))
        corpus.validate()
        click.echo(f"corpus ok: {len(corpus.tasks)} task(s), feature dim {corpus.feature_dim}")
        click.echo(stats_table(corpus), nl=False)
    except Exception as exc:
        _fail(exc)


@main.command()
@with_common
def stats(config_path, sets, corpus_dir, out_dir, seeds):
    """Print the per-task statistics table."""
    try:
        config = _config_from(config_path, sets, corpus_dir, out_dir, seeds)
        corpus = load_corpus(Path(config.corpus_dir))
        click.echo(stats_table(corpus), nl=False)
    except Exception as exc:
        _fail(exc)


@main.command("build-graphs")
@with_common
def build_graphs(config_path, sets, corpus_dir, out_dir, seeds):
    """Build per-task graphs from the train split; write JSON and DOT."""
    try:
        config = _config_from(config_path, sets, corpus_dir, out_dir, seeds)
        info = cmd_build_graphs(Path(config.corpus_dir), Path(config.out_dir),
                                config.split_seed)
        for task_id, row in sorted(info.items()):
            click.echo(
                f"{task_id}: {row['nodes']} nodes, {row['edges']} edges, "
                f"{row['unseen_holdout_edges']} unseen holdout edge(s)"
            )
    except Exception as exc:
        _fail(exc)


@main.command()
@click.option("--stage", type=click.Choice(STAGES + ("all",)), default="all")
@click.option("--force", is_flag=True, help="Retrain even when a stage is up to date.")
@with_common
def train(stage, force, config_path, sets, corpus_dir, out_dir, seeds):
    """Train pipeline stages (embeddings -> tracker -> recommender)."""
    try:
        config = _config_from(config_path, sets, corpus_dir, out_dir, seeds)
        cmd_train(Path(config.corpus_dir), Path(config.out_dir), config, stage=stage,
                  force=force)
        click.echo(f"trained stage={stage} for seeds {config.seeds}")
    except Exception as exc:
        _fail(exc)


@main.command("eval")
@click.option("--mode", type=click.Choice(["tracking", "recommendation", "plan_complete",
                                           "plan_prefix"]), required=True)
@click.option("--subset", type=click.Choice(["train", "val", "test"]), default="test")
@with_common
def eval_cmd(mode, subset, config_path, sets, corpus_dir, out_dir, seeds):
    """Evaluate trained bundles; write the report JSON and text table."""
    try:
        config = _config_from(config_path, sets, corpus_dir, out_dir, seeds)
        report = cmd_eval(Path(config.corpus_dir), Path(config.out_dir), config, mode,
                          subset=subset)
        click.echo(report.to_table(), nl=False)
    except Exception as exc:
        _fail(exc)


@main.command("plan")
@click.option("--video", "video_id", required=True)
@click.option("--prefix-cut", type=int, default=0,
              help="0 = complete plan; t > 0 = plan after the prefix ending before t.")
@with_common
def plan_cmd(video_id, prefix_cut, config_path, sets, corpus_dir, out_dir, seeds):
    """Plan for one video and write the trace + side-by-side comparison."""
    try:
        config = _config_from(config_path, sets, corpus_dir, out_dir, seeds)
        result = cmd_plan(Path(config.corpus_dir), Path(config.out_dir), config,
                          video_id, prefix_cut)
        click.echo(result["text"], nl=False)
    except Exception as exc:
        _fail(exc)


# ---------------------------------------------------------------------------
# thin HTTP client for the guidance service


@main.group()
def client():
    """Thin client for a running guidance service."""


@client.command("plan")
@click.option("--url", default="http://127.0.0.1:8000")
@click.option("--video", "video_id", required=True)
@click.option("--prefix-cut", type=int, default=0)
def client_plan(url, video_id, prefix_cut):
    try:
        import httpx

        resp = httpx.post(f"{url}/plan", json={"video_id": video_id,
                                               "prefix_cut": prefix_cut}, timeout=300.0)
        resp.raise_for_status()
        doc = resp.json()
        click.echo(doc["text"], nl=False)
    except Exception as exc:
        _fail(exc)


@client.command("stats")
@click.option("--url", default="http://127.0.0.1:8000")
def client_stats(url):
    try:
        import httpx

        resp = httpx.get(f"{url}/corpus/stats", timeout=60.0)
        resp.raise_for_status()
        click.echo(resp.json()["table"], nl=False)
    except Exception as exc:
        _fail(exc)


@client.command("recommend")
@click.option("--url", default="http://127.0.0.1:8000")
@click.option("--task", "task_id", required=True)
@click.option("--history", required=True,
              help="Comma-separated action names observed so far.")
def client_recommend(url, task_id, history):
    try:
        import httpx

        actions = [a.strip() for a in history.split(",") if a.strip()]
        resp = httpx.post(f"{url}/recommend", json={"task_id": task_id,
                                                    "history": actions}, timeout=60.0)
        resp.raise_for_status()
        doc = resp.json()
        click.echo(f"next: {doc['action']}")
        for name, lp in zip(doc["candidates"], doc["log_probs"]):
            click.echo(f"  {name}: {lp:.4f}")
    except Exception as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
