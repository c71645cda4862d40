"""HTTP facade over the campaign engine.

A thin projection: every response is derived from persisted engine state, and
every mutation is an engine call guarded by an optimistic version token.
Writers serialize through a per-campaign lock; reads never take it (suggest
can run for a while, during which GETs report ``computing``).
"""

from __future__ import annotations

import tempfile
import threading
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import Depends, FastAPI, Header, HTTPException, Request, Response

from . import campaign as eng
from . import schemas as sm
from .errors import CryoboError, StoreError, ValidationFailure
from .oracles import OracleSpec
from .space import ComponentSet


class _CampaignGuards:
    def __init__(self) -> None:
        self._locks: dict[str, threading.Lock] = {}
        self._computing: set[str] = set()
        self._mutex = threading.Lock()

    def lock(self, campaign_id: str) -> threading.Lock:
        with self._mutex:
            return self._locks.setdefault(campaign_id, threading.Lock())

    def set_computing(self, campaign_id: str, value: bool) -> None:
        with self._mutex:
            if value:
                self._computing.add(campaign_id)
            else:
                self._computing.discard(campaign_id)

    def is_computing(self, campaign_id: str) -> bool:
        with self._mutex:
            return campaign_id in self._computing


def _pending_model(state: eng.CampaignState) -> Optional[sm.PendingBatchModel]:
    if state.pending is None or state.pending_grids is None:
        return None
    space = state.config.space
    cands = []
    for grid, fid, mu, sd, score in zip(state.pending_grids, state.pending.ids,
                                        state.pending.pred_mean,
                                        state.pending.pred_std,
                                        state.pending.scores):
        f = space.formulation(grid)
        cands.append(sm.BatchCandidateModel(
            formulation_id=fid,
            concentrations=[float(c) for c in f.concentrations],
            total_concentration=float(f.total),
            pred_mean=float(mu) if np.isfinite(mu) else 0.0,
            pred_std=float(sd) if np.isfinite(sd) else 0.0,
            acq_score=float(score)))
    return sm.PendingBatchModel(iteration=state.iteration + 1,
                                method=state.config.method,
                                model_ref=state.pending.model_ref,
                                candidates=cands)


def _summary(state: eng.CampaignState, computing: bool = False) -> sm.CampaignSummary:
    return sm.CampaignSummary(
        campaign_id=state.campaign_id, method=state.config.method,
        status="fitting" if computing else state.status, computing=computing,
        iteration=state.iteration, iterations=state.config.iterations,
        version=state.version, n_observations=len(state.observations),
        bounds=state.bounds.to_dict(),
        component_names=list(state.config.space.names),
        pending=_pending_model(state))


def create_app(store_path: str | Path, token: str | None = None) -> FastAPI:
    store = eng.CampaignStore(store_path)
    guards = _CampaignGuards()
    app = FastAPI(title="cryobo", version="0.1.0")

    def auth(x_auth_token: Optional[str] = Header(default=None)) -> None:
        if token is not None and x_auth_token != token:
            raise HTTPException(status_code=401, detail="invalid or missing token")

    def load_or_404(campaign_id: str) -> eng.CampaignState:
        try:
            return store.load(campaign_id)
        except StoreError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    def check_version(state: eng.CampaignState, version: int) -> None:
        if version != state.version:
            raise HTTPException(
                status_code=409,
                detail=f"stale version {version}; current is {state.version}")

    @app.exception_handler(ValidationFailure)
    def _validation_handler(_req: Request, exc: ValidationFailure):
        from fastapi.responses import JSONResponse
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(CryoboError)
    def _engine_handler(_req: Request, exc: CryoboError):
        from fastapi.responses import JSONResponse
        return JSONResponse(status_code=500, content={"detail": str(exc)})

    @app.get("/schema")
    def schema() -> dict:
        models = [sm.CampaignCreateRequest, sm.CampaignSummary, sm.SuggestRequest,
                  sm.ResultsRequest, sm.MetricsResponse, sm.FrontResponse,
                  sm.CandidatesResponse, sm.CampaignListResponse]
        return {m.__name__: m.model_json_schema() for m in models}

    @app.get("/campaigns", response_model=sm.CampaignListResponse)
    def list_campaigns(_: None = Depends(auth)) -> sm.CampaignListResponse:
        out = []
        for cid in store.list_ids():
            out.append(_summary(store.load(cid), guards.is_computing(cid)))
        return sm.CampaignListResponse(campaigns=out)

    @app.post("/campaigns", response_model=sm.CampaignSummary, status_code=201)
    def create(req: sm.CampaignCreateRequest, _: None = Depends(auth)) -> sm.CampaignSummary:
        space = ComponentSet.from_dict(req.space.model_dump()) if req.space \
            else ComponentSet()
        from .acquisition import AcquisitionConfig
        config = eng.CampaignConfig(
            acquisition=AcquisitionConfig(method=req.method, batch_size=req.batch_size,
                                          mc_samples=req.mc_samples, seed=req.seed,
                                          beta=req.beta, rho=req.rho),
            space=space, iterations=req.iterations, master_seed=req.seed,
            pool_limit=req.pool_limit, pool_seed=req.pool_seed,
            viability_bounds=tuple(req.viability_bounds),
            oracle=OracleSpec.from_dict(req.oracle.model_dump()) if req.oracle else None)
        initial = [(space.formulation_from_molar(row.concentrations), row.replicates)
                   for row in req.initial]
        state = eng.create_campaign(store, config, initial, campaign_id=req.campaign_id)
        return _summary(state)

    @app.get("/campaigns/{campaign_id}", response_model=sm.CampaignSummary)
    def get_campaign(campaign_id: str, _: None = Depends(auth)) -> sm.CampaignSummary:
        return _summary(load_or_404(campaign_id), guards.is_computing(campaign_id))

    @app.post("/campaigns/{campaign_id}/suggest", response_model=sm.CampaignSummary)
    def post_suggest(campaign_id: str, req: sm.SuggestRequest,
                     _: None = Depends(auth)) -> sm.CampaignSummary:
        with guards.lock(campaign_id):
            state = load_or_404(campaign_id)
            if state.status == eng.STATUS_AWAITING:
                return _summary(state)  # idempotent: stored suggestion
            if state.status == eng.STATUS_COMPLETED:
                raise HTTPException(status_code=409, detail="campaign is completed")
            check_version(state, req.version)
            guards.set_computing(campaign_id, True)
            try:
                state, _chosen = eng.suggest(store, campaign_id)
            finally:
                guards.set_computing(campaign_id, False)
            return _summary(state)

    def _apply_results(campaign_id: str, version: int,
                       results: list[tuple[str, list[float]]],
                       allow_partial: bool) -> sm.CampaignSummary:
        with guards.lock(campaign_id):
            state = load_or_404(campaign_id)
            if state.status != eng.STATUS_AWAITING:
                raise HTTPException(status_code=409,
                                    detail=f"campaign is {state.status}; "
                                    "results need a pending batch")
            check_version(state, version)
            state = eng.ingest_results(store, campaign_id, results,
                                       allow_partial=allow_partial)
            return _summary(state)

    @app.post("/campaigns/{campaign_id}/results", response_model=sm.CampaignSummary)
    async def post_results(campaign_id: str, request: Request,
                           x_campaign_version: Optional[int] = Header(default=None),
                           _: None = Depends(auth)) -> sm.CampaignSummary:
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("text/csv"):
            if x_campaign_version is None:
                raise HTTPException(status_code=422,
                                    detail="CSV upload needs X-Campaign-Version")
            body = await request.body()
            state = load_or_404(campaign_id)
            with tempfile.NamedTemporaryFile("w", suffix=".csv", delete=False) as fh:
                fh.write(body.decode())
                tmp = fh.name
            try:
                rows = eng.parse_results_csv(state.config.space, tmp)
            finally:
                Path(tmp).unlink(missing_ok=True)
            return _apply_results(campaign_id, x_campaign_version, rows, False)
        try:
            payload = sm.ResultsRequest.model_validate(await request.json())
        except Exception as exc:  # malformed JSON or schema violation
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        rows = [(r.formulation_id, list(r.replicates)) for r in payload.results]
        return _apply_results(campaign_id, payload.version, rows, payload.allow_partial)

    @app.get("/campaigns/{campaign_id}/metrics", response_model=sm.MetricsResponse)
    def get_metrics(campaign_id: str, _: None = Depends(auth)) -> sm.MetricsResponse:
        state = load_or_404(campaign_id)
        rows = eng.metric_rows(state)
        return sm.MetricsResponse(
            campaign_id=campaign_id, version=state.version,
            records=[sm.MetricRecordModel(**row) for row in rows])

    @app.get("/campaigns/{campaign_id}/front", response_model=sm.FrontResponse)
    def get_front(campaign_id: str, _: None = Depends(auth)) -> sm.FrontResponse:
        state = load_or_404(campaign_id)
        members = eng.front_members(state)
        normed, ids = state.normalized_objectives()
        raw, _ids = state.raw_objectives()
        front_ids = {m["formulation_id"] for m in members}
        by_id = {o.formulation_id: o for o in state.observations}
        points = [sm.FrontPointModel(formulation_id=fid,
                                     normalized=[float(v) for v in normed[i]],
                                     raw=[float(v) for v in raw[i]],
                                     on_front=fid in front_ids,
                                     iteration=by_id[fid].iteration)
                  for i, fid in enumerate(ids)]
        return sm.FrontResponse(campaign_id=campaign_id, version=state.version,
                                bounds=state.bounds.to_dict(),
                                members=[sm.FrontMemberModel(**m) for m in members],
                                points=points)

    @app.get("/campaigns/{campaign_id}/candidates", response_model=sm.CandidatesResponse)
    def get_candidates(campaign_id: str, limit: int = 50,
                       _: None = Depends(auth)) -> sm.CandidatesResponse:
        state = load_or_404(campaign_id)
        known = state.known_ids()
        pool = [f for f in eng.campaign_pool(state.config, campaign_id)
                if f.id not in known]
        cands = [sm.CandidateModel(formulation_id=f.id,
                                   concentrations=[float(c) for c in f.concentrations],
                                   total_concentration=float(f.total))
                 for f in pool[:max(limit, 0)]]
        return sm.CandidatesResponse(campaign_id=campaign_id, version=state.version,
                                     total=len(pool), candidates=cands)

    @app.get("/campaigns/{campaign_id}/batch-sheet.csv")
    def get_batch_sheet(campaign_id: str, _: None = Depends(auth)) -> Response:
        state = load_or_404(campaign_id)
        if state.pending is None or state.pending_grids is None:
            raise HTTPException(status_code=409, detail="no pending batch")
        import csv as _csv
        import io
        space = state.config.space
        buf = io.StringIO()
        writer = _csv.writer(buf)
        writer.writerow(["formulation_id", *space.names, "pred_mean", "pred_std",
                         "acq_score"])
        for grid, fid, mu, sd, score in zip(state.pending_grids, state.pending.ids,
                                            state.pending.pred_mean,
                                            state.pending.pred_std,
                                            state.pending.scores):
            f = space.formulation(grid)
            writer.writerow([fid, *[f"{c:g}" for c in f.concentrations],
                             f"{mu:.6g}", f"{sd:.6g}", f"{score:.6g}"])
        return Response(content=buf.getvalue(), media_type="text/csv")

    return app
