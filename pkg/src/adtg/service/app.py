"""Guidance service: tracking sessions, recommendations, and planning over HTTP.

The service wraps a trained run directory (bundles + graphs) and its corpus.
Tracking sessions hold per-client state server-side; trained bundles are
immutable and shared across sessions. Configure through ``create_app`` or
the ADTG_CORPUS / ADTG_OUT / ADTG_CONFIG environment variables:

    uvicorn adtg.service:app
"""

from __future__ import annotations

import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import numkit as nk
from ..config import RunConfig
from ..corpus.fileio import load_corpus
from ..corpus.model import NULL_ID, NULL_NAME, Corpus
from ..corpus.stats import stats_table, task_stats
from ..guidance import (
    ConfigError,
    PlanningError,
    TrackState,
    advance_history,
    init_state,
    recommend,
    track_step,
)
from ..pipeline import StageError, cmd_plan, load_seed_bundles
from . import schemas


@dataclass
class Session:
    task_id: str
    seed: int
    state: TrackState
    prev_pred: int = NULL_ID
    last_event: int = NULL_ID
    pending: List[Tuple[int, int]] = field(default_factory=list)
    clock: int = 0


class ServiceState:
    """Corpus, trained bundles, and live sessions behind one lock."""

    def __init__(self, corpus_dir: Path, out_dir: Path, config: RunConfig):
        self.corpus_dir = Path(corpus_dir)
        self.out_dir = Path(out_dir)
        self.config = config
        self.corpus: Corpus = load_corpus(self.corpus_dir)
        self.bundles = load_seed_bundles(self.corpus, self.out_dir, config.seeds)
        self.sessions: Dict[str, Session] = {}
        self.lock = threading.Lock()

    def bundle_for(self, seed: Optional[int]):
        seed = seed if seed is not None else self.config.seeds[0]
        if seed not in self.bundles:
            raise HTTPException(status_code=404, detail=f"no trained bundle for seed {seed}")
        return seed, self.bundles[seed]

    def vocab_for(self, task_id: str):
        if task_id not in self.corpus.tasks:
            raise HTTPException(status_code=404, detail=f"unknown task {task_id!r}")
        return self.corpus.tasks[task_id].vocab


def create_app(corpus_dir, out_dir, config: Optional[RunConfig] = None) -> FastAPI:
    config = config or RunConfig()
    state = ServiceState(Path(corpus_dir), Path(out_dir), config)
    app = FastAPI(title="adtg guidance service",
                  description="Task tracking, next-action recommendation, and planning")
    app.state.service = state

    def session_of(session_id: str) -> Session:
        session = state.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return session

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", tasks=state.corpus.task_ids(),
                                      seeds=list(state.bundles))

    @app.get("/corpus/stats", response_model=schemas.StatsResponse)
    def corpus_stats():
        rows = [
            schemas.StatsRow(task_id=r.task_id, n_videos=r.n_videos,
                             action_space=r.action_space, mean_steps=r.mean_steps,
                             null_fraction=r.null_fraction)
            for r in task_stats(state.corpus)
        ]
        return schemas.StatsResponse(table=stats_table(state.corpus), tasks=rows)

    @app.get("/graphs/{task_id}", response_model=schemas.GraphResponse)
    def graph(task_id: str, fmt: str = "json"):
        state.vocab_for(task_id)
        _, bundles = state.bundle_for(None)
        g = bundles.graphs[task_id]
        doc = g.to_json_obj()
        return schemas.GraphResponse(
            task_id=task_id, nodes=doc["nodes"], edges=doc["edges"],
            dot=g.to_dot() if fmt == "dot" else None,
        )

    @app.post("/sessions", response_model=schemas.SessionCreateResponse)
    def create_session(req: schemas.SessionCreateRequest):
        state.vocab_for(req.task_id)
        seed, bundles = state.bundle_for(req.seed)
        session_id = uuid.uuid4().hex
        with state.lock:
            state.sessions[session_id] = Session(
                task_id=req.task_id, seed=seed, state=init_state(bundles.guidance)
            )
        return schemas.SessionCreateResponse(session_id=session_id, task_id=req.task_id,
                                             seed=seed)

    @app.post("/sessions/{session_id}/track", response_model=schemas.ScoredResponse)
    def session_track(session_id: str, req: schemas.TrackRequest):
        session = session_of(session_id)
        _, bundles = state.bundle_for(session.seed)
        vocab = state.vocab_for(session.task_id)
        x = np.asarray(req.features, dtype=np.float64)
        cands = (NULL_ID,) + vocab.action_ids()
        with state.lock:
            session.clock += 1
            while session.pending and session.pending[0][0] <= session.clock - 2:
                session.state = advance_history(bundles.guidance, vocab, session.state,
                                                session.pending.pop(0)[1])
            try:
                scored = track_step(bundles.guidance, vocab, session.state, x, cands)
            except (nk.ShapeError, nk.UsageError) as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            pred = scored.chosen
            if pred != NULL_ID and pred != session.prev_pred and pred != session.last_event:
                session.pending.append((session.clock, pred))
                session.last_event = pred
            session.prev_pred = pred
            history = [vocab.name_of(a) for a in session.state.history_events]
        return schemas.ScoredResponse(
            action=vocab.name_of(pred),
            candidates=[vocab.name_of(c) for c in scored.candidates],
            log_probs=[float(lp) for lp in scored.log_probs],
            history=history,
        )

    @app.post("/sessions/{session_id}/advance", response_model=schemas.HistoryResponse)
    def session_advance(session_id: str, req: schemas.AdvanceRequest):
        session = session_of(session_id)
        _, bundles = state.bundle_for(session.seed)
        vocab = state.vocab_for(session.task_id)
        if req.action == NULL_NAME:
            raise HTTPException(status_code=422, detail="the null action never enters history")
        try:
            action_id = vocab.index_of(req.action)
        except Exception as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        with state.lock:
            session.state = advance_history(bundles.guidance, vocab, session.state, action_id)
            session.last_event = action_id
            history = [vocab.name_of(a) for a in session.state.history_events]
        return schemas.HistoryResponse(history=history, last_action=req.action)

    @app.post("/sessions/{session_id}/recommend", response_model=schemas.ScoredResponse)
    def session_recommend(session_id: str):
        session = session_of(session_id)
        _, bundles = state.bundle_for(session.seed)
        vocab = state.vocab_for(session.task_id)
        with state.lock:
            if session.state.last_action == NULL_ID:
                raise HTTPException(status_code=422,
                                    detail="no action tracked yet; advance or track first")
            try:
                scored = recommend(bundles.guidance, vocab,
                                   bundles.graphs[session.task_id], session.state)
            except PlanningError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            history = [vocab.name_of(a) for a in session.state.history_events]
        return schemas.ScoredResponse(
            action=vocab.name_of(scored.chosen),
            candidates=[vocab.name_of(c) for c in scored.candidates],
            log_probs=[float(lp) for lp in scored.log_probs],
            history=history,
        )

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        with state.lock:
            if state.sessions.pop(session_id, None) is None:
                raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return {"deleted": session_id}

    @app.post("/recommend", response_model=schemas.ScoredResponse)
    def stateless_recommend(req: schemas.RecommendRequest):
        _, bundles = state.bundle_for(req.seed)
        vocab = state.vocab_for(req.task_id)
        if not req.history:
            raise HTTPException(status_code=422, detail="history must name at least one action")
        track = init_state(bundles.guidance)
        try:
            for name in req.history:
                track = advance_history(bundles.guidance, vocab, track, vocab.index_of(name))
            scored = recommend(bundles.guidance, vocab, bundles.graphs[req.task_id], track)
        except (PlanningError, nk.UsageError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except Exception as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return schemas.ScoredResponse(
            action=vocab.name_of(scored.chosen),
            candidates=[vocab.name_of(c) for c in scored.candidates],
            log_probs=[float(lp) for lp in scored.log_probs],
            history=list(req.history),
        )

    @app.post("/plan", response_model=schemas.PlanResponse)
    def plan_endpoint(req: schemas.PlanRequest):
        try:
            result = cmd_plan(state.corpus_dir, state.out_dir, state.config,
                              req.video_id, req.prefix_cut, seed=req.seed)
        except (StageError, ConfigError, nk.UsageError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return schemas.PlanResponse(**result)

    return app


def app_from_env() -> FastAPI:
    corpus_dir = os.environ.get("ADTG_CORPUS", "corpus")
    out_dir = os.environ.get("ADTG_OUT", "runs")
    config_path = os.environ.get("ADTG_CONFIG")
    config = RunConfig.from_json(Path(config_path).read_text()) if config_path else RunConfig()
    if config_path is None:
        config.corpus_dir = corpus_dir
        config.out_dir = out_dir
    return create_app(corpus_dir, out_dir, config)
