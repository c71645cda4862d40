"""Pydantic request/response models for the HTTP facade.

These mirror the engine types exactly; the JSON schema published at /schema
is generated from them, making this module the wire-format source of truth.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class SpaceModel(BaseModel):
    names: list[str] = ["glycerol", "DMSO", "EG", "12PD", "13PD", "3M12PD", "urea"]
    increment: float = 0.5
    per_component_max: Optional[float] = None
    total_min: float = 3.5
    total_max: float = 6.0


class InitialObservationModel(BaseModel):
    concentrations: list[float]
    replicates: list[float] = Field(min_length=1)


class OracleModel(BaseModel):
    kind: Literal["one_d_sin_tanh", "rastrigin", "toxicity"] = "toxicity"
    noise_sd: float = 0.05
    replicates: int = 3
    toxicity: Optional[dict] = None
    clamp: Optional[tuple[float, float]] = None


class CampaignCreateRequest(BaseModel):
    campaign_id: Optional[str] = None
    method: Literal["random", "ucb", "ei", "qlognparego",
                    "qlognehvi", "qvarlognehvi"] = "qlognehvi"
    batch_size: int = 10
    iterations: int = 8
    seed: int = 0
    mc_samples: int = 4096
    beta: float = 2.0
    rho: float = 0.05
    space: Optional[SpaceModel] = None
    pool_limit: Optional[int] = None
    pool_seed: Optional[int] = None
    viability_bounds: tuple[float, float] = (0.0, 1.0)
    oracle: Optional[OracleModel] = None
    initial: list[InitialObservationModel] = []


class BatchCandidateModel(BaseModel):
    formulation_id: str
    concentrations: list[float]
    total_concentration: float
    pred_mean: float
    pred_std: float
    acq_score: float


class PendingBatchModel(BaseModel):
    iteration: int
    method: str
    model_ref: Optional[str]
    candidates: list[BatchCandidateModel]


class CampaignSummary(BaseModel):
    campaign_id: str
    method: str
    status: str
    computing: bool = False
    iteration: int
    iterations: int
    version: int
    n_observations: int
    bounds: dict
    component_names: list[str]
    pending: Optional[PendingBatchModel] = None


class SuggestRequest(BaseModel):
    version: int


class ResultEntryModel(BaseModel):
    formulation_id: str
    replicates: list[float] = Field(min_length=1)


class ResultsRequest(BaseModel):
    version: int
    results: list[ResultEntryModel]
    allow_partial: bool = False


class MetricRecordModel(BaseModel):
    iteration: int
    method: str
    hypervolume: float
    igd: Optional[float] = None
    bounds: dict
    reference: list[float]


class MetricsResponse(BaseModel):
    campaign_id: str
    version: int
    records: list[MetricRecordModel]


class FrontMemberModel(BaseModel):
    formulation_id: str
    concentrations: list[float]
    total_concentration: float
    viability: float
    normalized: list[float]
    iteration: int


class FrontPointModel(BaseModel):
    formulation_id: str
    normalized: list[float]
    raw: list[float]
    on_front: bool
    iteration: int


class FrontResponse(BaseModel):
    campaign_id: str
    version: int
    bounds: dict
    members: list[FrontMemberModel]
    points: list[FrontPointModel]


class CandidateModel(BaseModel):
    formulation_id: str
    concentrations: list[float]
    total_concentration: float


class CandidatesResponse(BaseModel):
    campaign_id: str
    version: int
    total: int
    candidates: list[CandidateModel]


class CampaignListResponse(BaseModel):
    campaigns: list[CampaignSummary]


class ErrorDetail(BaseModel):
    detail: str
