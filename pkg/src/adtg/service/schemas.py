"""Request/response models for the guidance service."""

from __future__ import annotations

from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    tasks: List[str]
    seeds: List[int]


class StatsRow(BaseModel):
    task_id: str
    n_videos: int
    action_space: int
    mean_steps: float
    null_fraction: float


class StatsResponse(BaseModel):
    table: str
    tasks: List[StatsRow]


class GraphResponse(BaseModel):
    task_id: str
    nodes: List[str]
    edges: List[List[object]]  # [src, dst, count]
    dot: Optional[str] = None


class SessionCreateRequest(BaseModel):
    task_id: str
    seed: Optional[int] = None


class SessionCreateResponse(BaseModel):
    session_id: str
    task_id: str
    seed: int


class TrackRequest(BaseModel):
    features: List[float] = Field(description="One second's feature vector")


class ScoredResponse(BaseModel):
    action: str
    candidates: List[str]
    log_probs: List[float]
    history: List[str]


class AdvanceRequest(BaseModel):
    action: str


class HistoryResponse(BaseModel):
    history: List[str]
    last_action: str


class RecommendRequest(BaseModel):
    task_id: str
    history: List[str] = Field(default_factory=list,
                               description="Action names observed so far, oldest first")
    seed: Optional[int] = None


class PlanRequest(BaseModel):
    video_id: str
    prefix_cut: int = 0
    seed: Optional[int] = None


class PlanResponse(BaseModel):
    task_id: str
    video_id: str
    prefix: List[str]
    plan: List[str]
    ground_truth: List[str]
    miou: float
    ended_with_eos: bool
    log_prob: float
    text: str


class ErrorResponse(BaseModel):
    detail: str
