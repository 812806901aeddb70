"""Staged pipeline over on-disk artifacts: synth -> graphs -> train -> eval -> plan.

Run layout under the output directory:

    graphs/<task_id>.json, graphs/<task_id>.dot
    seed<N>/embedding.json + .params        trained embedding bundle
    seed<N>/guidance.json + .params         trained guidance bundle
    seed<N>/stage_<name>.json               stage manifest (config/corpus hashes)
    seed<N>/loss_<name>.csv                 per-epoch mean loss

Every stage records the config hash and corpus digest it was built from;
reruns with matching hashes are skipped, mismatches are rejected as stale.
All stage seeds derive from the root seed via labeled sha256, so a rerun of
any stage is bitwise identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .config import RunConfig
from .corpus.fileio import load_corpus, save_corpus
from .corpus.model import Corpus, Split, compressed_sequence, framewise_labels, split_dataset
from .corpus.synth import SynthTaskSpec, build_synth_corpus
from .embedding import load_bundle as load_embedding_bundle, save_bundle
from .evalkit import EvalReport, SeedBundles, evaluate
from .graph import TaskGraph, build_graph, graph_from_json
from .guidance import ConfigError, load_guidance, plan, save_guidance
from .seeding import derive_seed

STAGES = ("embeddings", "tracker", "recommender")


class StageError(ConfigError):
    pass


def corpus_digest(corpus_dir: Path) -> str:
    """Cheap content digest: manifest + vocab/annotation bytes + feature sizes."""
    root = Path(corpus_dir)
    h = hashlib.sha256()
    h.update((root / "manifest.json").read_bytes())
    for vocab_path in sorted(root.glob("tasks/*/vocab.json")):
        h.update(vocab_path.read_bytes())
    for ann_path in sorted(root.glob("tasks/*/annotations.jsonl")):
        h.update(ann_path.read_bytes())
    for feat_path in sorted(root.glob("features/*.feat")):
        h.update(feat_path.name.encode())
        h.update(str(feat_path.stat().st_size).encode())
    return h.hexdigest()


def compute_splits(corpus: Corpus, split_seed: int) -> Dict[str, Split]:
    return {
        task_id: split_dataset(corpus.tasks[task_id].video_ids(),
                               derive_seed(split_seed, "split", task_id))
        for task_id in corpus.task_ids()
    }


# ---------------------------------------------------------------------------
# synth specs from config files


def synth_spec_from_obj(obj: dict) -> SynthTaskSpec:
    kwargs = dict(obj)
    if "partial_order" in kwargs:
        kwargs["partial_order"] = tuple((int(a), int(b)) for a, b in kwargs["partial_order"])
    if "action_names" in kwargs and kwargs["action_names"] is not None:
        kwargs["action_names"] = tuple(kwargs["action_names"])
    if "duration_range" in kwargs:
        kwargs["duration_range"] = tuple(kwargs["duration_range"])
    if "cluster_aliases" in kwargs:
        kwargs["cluster_aliases"] = {int(k): int(v) for k, v in kwargs["cluster_aliases"].items()}
    if "duration_overrides" in kwargs:
        kwargs["duration_overrides"] = {
            int(k): tuple(v) for k, v in kwargs["duration_overrides"].items()
        }
    return SynthTaskSpec(**kwargs)


def cmd_synth(specs: Sequence[SynthTaskSpec], out_dir: Path) -> Path:
    """Generate a synthetic corpus plus its ground-truth graphs on disk."""
    corpus, truths = build_synth_corpus(specs)
    out_dir = Path(out_dir)
    save_corpus(corpus, out_dir)
    truth_dir = out_dir / "truth"
    truth_dir.mkdir(parents=True, exist_ok=True)
    for task_id, graph in sorted(truths.items()):
        (truth_dir / f"{task_id}.json").write_text(graph.to_json())
        (truth_dir / f"{task_id}.dot").write_text(graph.to_dot())
    return out_dir


# ---------------------------------------------------------------------------
# graphs


def cmd_build_graphs(corpus_dir: Path, out_dir: Path, split_seed: int) -> Dict[str, dict]:
    """Build one graph per task from the train split; write JSON + DOT.

    Returns per-task info including replayability of train sequences and
    any val/test sequences containing edges unseen in training (reported,
    not fatal).
    """
    corpus = load_corpus(corpus_dir)
    splits = compute_splits(corpus, split_seed)
    graph_dir = Path(out_dir) / "graphs"
    graph_dir.mkdir(parents=True, exist_ok=True)
    info: Dict[str, dict] = {}
    for task_id in corpus.task_ids():
        task = corpus.tasks[task_id]
        split = splits[task_id]
        seqs = [
            compressed_sequence(framewise_labels(task.videos[vid], task.vocab))
            for vid in sorted(split.train)
        ]
        result = build_graph(seqs, task.vocab)
        graph = result.graph
        (graph_dir / f"{task_id}.json").write_text(graph.to_json())
        (graph_dir / f"{task_id}.dot").write_text(graph.to_dot())

        for seq in seqs:  # replayability: every train sequence is a path to EOS
            walk = list(seq) + [task.vocab.eos_id]
            for src, dst in zip(walk, walk[1:]):
                if not graph.has_edge(src, dst):
                    raise StageError(f"train sequence of task {task_id!r} is not replayable")
        unseen = 0
        for vid in sorted(split.val) + sorted(split.test):
            seq = compressed_sequence(framewise_labels(task.videos[vid], task.vocab))
            walk = list(seq) + [task.vocab.eos_id]
            for src, dst in zip(walk, walk[1:]):
                if not (graph.has_node(src) and graph.has_edge(src, dst)):
                    unseen += 1
        info[task_id] = {
            "nodes": len(graph.node_ids),
            "edges": len(graph.edge_counts),
            "skipped_empty": result.skipped_empty,
            "unseen_holdout_edges": unseen,
        }
    return info


def load_graphs(out_dir: Path, corpus: Corpus) -> Dict[str, TaskGraph]:
    graph_dir = Path(out_dir) / "graphs"
    graphs = {}
    for task_id in corpus.task_ids():
        path = graph_dir / f"{task_id}.json"
        if not path.exists():
            raise StageError(f"no graph for task {task_id!r}; run build-graphs first")
        graphs[task_id] = graph_from_json(path.read_text(), corpus.tasks[task_id].vocab)
    return graphs


# ---------------------------------------------------------------------------
# training stages


def _seed_dir(out_dir: Path, seed: int) -> Path:
    return Path(out_dir) / f"seed{seed}"


def _write_stage_manifest(seed_dir: Path, stage: str, config: RunConfig,
                          digest: str, bundle_hash: str) -> None:
    doc = {
        "stage": stage,
        "config_hash": config.config_hash(),
        "corpus_digest": digest,
        "bundle_hash": bundle_hash,
    }
    (seed_dir / f"stage_{stage}.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _check_stage_manifest(seed_dir: Path, stage: str, config: RunConfig,
                          digest: str) -> Optional[dict]:
    path = seed_dir / f"stage_{stage}.json"
    if not path.exists():
        return None
    doc = json.loads(path.read_text())
    if doc["config_hash"] != config.config_hash() or doc["corpus_digest"] != digest:
        raise StageError(
            f"stale {stage} bundle in {seed_dir}: config or corpus changed; "
            "use --force to retrain"
        )
    return doc


def _write_loss_csv(seed_dir: Path, stage: str, losses: Sequence[float]) -> None:
    lines = ["epoch,mean_loss"]
    lines += [f"{i + 1},{loss!r}" for i, loss in enumerate(losses)]
    (seed_dir / f"loss_{stage}.csv").write_text("\n".join(lines) + "\n")


def cmd_train(corpus_dir: Path, out_dir: Path, config: RunConfig, stage: str = "all",
              force: bool = False) -> Dict[int, SeedBundles]:
    """Train the requested stage (or all, in order) for every config seed.

    Stages must run in order: embeddings -> tracker -> recommender. The
    tracker and recommender share one guidance bundle file; the recommender
    stage rewrites it with the trained recommendation scorer.
    """
    if stage not in STAGES + ("all",):
        raise StageError(f"unknown stage {stage!r}")
    wanted = list(STAGES) if stage == "all" else [stage]
    corpus = load_corpus(corpus_dir)
    digest = corpus_digest(corpus_dir)
    splits = compute_splits(corpus, config.split_seed)
    if not (Path(out_dir) / "graphs").exists():
        cmd_build_graphs(corpus_dir, out_dir, config.split_seed)
    graphs = load_graphs(out_dir, corpus)

    out: Dict[int, SeedBundles] = {}
    for seed in config.seeds:
        seed_dir = _seed_dir(out_dir, seed)
        seed_dir.mkdir(parents=True, exist_ok=True)
        bundles = _train_one_seed(corpus, splits, graphs, config, seed, seed_dir,
                                  digest, wanted, force)
        out[seed] = bundles
    return out


def _train_one_seed(corpus, splits, graphs, config: RunConfig, seed: int, seed_dir: Path,
                    digest: str, wanted: List[str], force: bool) -> SeedBundles:
    from .embedding import EmbedDims, init_bundle, onehot_bundle, train_embeddings
    from .guidance import train_recommender, train_tracker

    feature_dim = config.feature_dim or corpus.feature_dim
    dims = EmbedDims(feature=feature_dim, cond=config.cond_dim, embed=config.embed_dim,
                     hidden=config.mlp_hidden)
    train_videos = {tid: list(splits[tid].train) for tid in corpus.task_ids()}
    vocabs = {tid: corpus.tasks[tid].vocab for tid in corpus.task_ids()}

    # --- embeddings
    done = None if force else _check_stage_manifest(seed_dir, "embeddings", config, digest)
    if "embeddings" in wanted and (done is None or force):
        log: List[float] = []
        embed_seed = derive_seed(seed, "stage-embed")
        if config.ablation == "onehot_embed":
            embedding = onehot_bundle(vocabs, feature_dim, config.margin, embed_seed)
        elif config.ablation == "random_embed":
            embedding = init_bundle(vocabs, dims, config.margin, embed_seed)
        else:
            embedding = train_embeddings(
                corpus, dims=dims, margin=config.margin, lr=config.lr_embed,
                epochs=config.epochs_embed, seed=embed_seed,
                videos_by_task=train_videos,
                cross_task_negatives=config.cross_task_negatives, log=log,
            )
        embed_hash = save_bundle(embedding, seed_dir)
        _write_loss_csv(seed_dir, "embeddings", log)
        _write_stage_manifest(seed_dir, "embeddings", config, digest, embed_hash)
    else:
        if not (seed_dir / "embedding.json").exists():
            raise StageError(f"stage embeddings has not run for seed {seed}")
        _check_stage_manifest(seed_dir, "embeddings", config, digest)
    embedding, embed_hash = load_embedding_bundle(seed_dir)

    # --- tracker
    done = None if force else _check_stage_manifest(seed_dir, "tracker", config, digest)
    if "tracker" in wanted and (done is None or force):
        if not (seed_dir / "embedding.json").exists():
            raise StageError("tracker stage requires the embeddings stage")
        log = []
        guidance = train_tracker(
            corpus, embedding, embed_hash, videos_by_task=train_videos,
            lr=config.lr_guidance, epochs=config.epochs_tracker,
            seed=derive_seed(seed, "stage-tracker"), hidden_dim=config.hidden_dim,
            history_enabled=config.ablation != "no_history",
            chunk_seconds=config.chunk_seconds, log=log,
        )
        guid_hash = save_guidance(guidance, seed_dir)
        _write_loss_csv(seed_dir, "tracker", log)
        _write_stage_manifest(seed_dir, "tracker", config, digest, guid_hash)

    # --- recommender
    done = None if force else _check_stage_manifest(seed_dir, "recommender", config, digest)
    if "recommender" in wanted and (done is None or force):
        if not (seed_dir / "guidance.json").exists():
            raise StageError("recommender stage requires the tracker stage")
        guidance, _ = load_guidance(seed_dir)
        log = []
        guidance = train_recommender(
            corpus, guidance, graphs, videos_by_task=train_videos,
            lr=config.lr_guidance, epochs=config.epochs_recommender,
            seed=derive_seed(seed, "stage-recommender"),
            joint_rnn_update=config.joint_rnn_update, log=log,
        )
        guid_hash = save_guidance(guidance, seed_dir)
        _write_loss_csv(seed_dir, "recommender", log)
        _write_stage_manifest(seed_dir, "recommender", config, digest, guid_hash)

    if not (seed_dir / "guidance.json").exists():
        raise StageError(f"guidance bundle missing for seed {seed}; train tracker first")
    guidance, _ = load_guidance(seed_dir)
    return SeedBundles(embedding=embedding, guidance=guidance, graphs=graphs)


def load_seed_bundles(corpus: Corpus, out_dir: Path, seeds: Sequence[int]) -> Dict[int, SeedBundles]:
    graphs = load_graphs(out_dir, corpus)
    out = {}
    for seed in seeds:
        seed_dir = _seed_dir(out_dir, seed)
        if not (seed_dir / "guidance.json").exists():
            raise StageError(f"no trained bundle for seed {seed} in {seed_dir}")
        embedding, _ = load_embedding_bundle(seed_dir)
        guidance, _ = load_guidance(seed_dir)
        out[seed] = SeedBundles(embedding=embedding, guidance=guidance, graphs=graphs)
    return out


# ---------------------------------------------------------------------------
# evaluation / planning commands


def cmd_eval(corpus_dir: Path, out_dir: Path, config: RunConfig, mode: str,
             subset: str = "test") -> EvalReport:
    corpus = load_corpus(corpus_dir)
    splits = compute_splits(corpus, config.split_seed)
    bundles = load_seed_bundles(corpus, out_dir, config.seeds)
    report = evaluate(corpus, splits, bundles, mode, config=config, subset=subset)
    report_dir = Path(out_dir) / "reports"
    report_dir.mkdir(parents=True, exist_ok=True)
    (report_dir / f"{mode}.json").write_text(report.to_json())
    (report_dir / f"{mode}.txt").write_text(report.to_table())
    return report


def cmd_plan(corpus_dir: Path, out_dir: Path, config: RunConfig, video_id: str,
             prefix_cut: int = 0, seed: Optional[int] = None) -> dict:
    """Plan for one video; writes the side-by-side text and the JSONL trace.

    ``prefix_cut`` = 0 plans the whole task from the first second;
    ``prefix_cut`` = t > 0 uses the ground-truth compressed prefix of
    segments completed before second t and plans the remainder from there.
    """
    from .evalkit import _completed_prefix, miou

    corpus = load_corpus(corpus_dir)
    task_id = None
    for tid in corpus.task_ids():
        if video_id in corpus.tasks[tid].videos:
            task_id = tid
            break
    if task_id is None:
        raise StageError(f"unknown video id {video_id!r}")
    task = corpus.tasks[task_id]
    video = task.videos[video_id]
    if not (0 <= prefix_cut <= video.duration):
        raise StageError(f"prefix cut {prefix_cut} outside video duration {video.duration}")

    seed = seed if seed is not None else config.seeds[0]
    bundles = load_seed_bundles(corpus, out_dir, [seed])[seed]
    labels = framewise_labels(video, task.vocab)
    if prefix_cut == 0:
        t_init = min(1 + config.plan_t_offset, video.duration)
        prefix: List[int] = []
        remainder = compressed_sequence(labels)
    else:
        t_init = prefix_cut
        prefix = _completed_prefix(video, task.vocab, prefix_cut)
        remainder = compressed_sequence(labels[prefix_cut - 1 :])
    result = plan(bundles.guidance, task.vocab, bundles.graphs[task_id],
                  video.features[t_init - 1].astype("float64"), prefix,
                  beam_width=config.beam_width, max_len=config.max_plan_len)

    plan_dir = Path(out_dir) / "plans"
    plan_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{video_id}_cut{prefix_cut}"
    with open(plan_dir / f"{stem}.trace.jsonl", "w") as fh:
        for entry in result.trace:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    gt_names = [task.vocab.name_of(a) for a in remainder]
    plan_names = [task.vocab.name_of(a) for a in result.actions]
    width = max([len("ground truth")] + [len(n) for n in gt_names]) + 2
    lines = [
        f"video: {video_id}  task: {task_id}  cut: {prefix_cut}  "
        f"prefix: {[task.vocab.name_of(a) for a in prefix]}",
        f"{'ground truth':<{width}}| generated",
        "-" * (width + 24),
    ]
    for i in range(max(len(gt_names), len(plan_names))):
        left = gt_names[i] if i < len(gt_names) else ""
        right = plan_names[i] if i < len(plan_names) else ""
        lines.append(f"{left:<{width}}| {right}")
    lines.append("-" * (width + 24))
    lines.append(f"miou: {miou(result.actions, remainder):.3f}  "
                 f"eos: {result.ended_with_eos}  log_prob: {result.log_prob:.4f}")
    text = "\n".join(lines) + "\n"
    (plan_dir / f"{stem}.txt").write_text(text)
    return {
        "task_id": task_id,
        "video_id": video_id,
        "prefix": [task.vocab.name_of(a) for a in prefix],
        "plan": plan_names,
        "ground_truth": gt_names,
        "miou": miou(result.actions, remainder),
        "ended_with_eos": result.ended_with_eos,
        "log_prob": result.log_prob,
        "text": text,
    }
