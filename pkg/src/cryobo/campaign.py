"""Campaign orchestration: seeded, method-isolated optimization loops.

A campaign owns a ledger of observations, a candidate pool, and a pending
suggestion, persisted as an append-only JSON event log plus an atomically
rewritten state snapshot.  All randomness derives from the master seed via
sha256 over (master seed, campaign id, iteration, role), so identical inputs
reproduce byte-identical state files.

Objective conventions: objective 0 is total concentration (known exactly
from the formulation), objective 1 is mean viability.  Both are normalized
to [0, 1] with bounds frozen at campaign creation (pool range x configured
viability range), which keeps the per-iteration hypervolume series monotone
and comparable across methods sharing a pool.
"""

from __future__ import annotations

import csv
import fcntl
import hashlib
import json
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .acquisition import (AcquisitionConfig, BatchSuggestion, CandidatePool,
                          select_batch)
from .errors import StoreError, ValidationFailure
from .gp import SurrogateModel, fit
from .kcenter import kcenter_select
from .oracles import OracleSpec, observe
from .pareto import hypervolume, igd as igd_metric, metric_row, pareto_front
from .space import (ComponentSet, Formulation, ObjectiveBounds, enumerate_pool,
                    normalize_objectives)

SCHEMA_VERSION = 1

STATUS_READY = "ready_to_suggest"
STATUS_AWAITING = "awaiting_results"
STATUS_COMPLETED = "completed"

ROLE_SUGGEST = "suggest"
ROLE_FIT = "fit"
ROLE_OBSERVE = "observe"
ROLE_POOL = "pool"
ROLE_INIT = "init"

#: Accepted raw viability range for ingested results.
VIABILITY_RANGE = (0.0, 1.2)


def derive_seed(master_seed: int, campaign_id: str, iteration: int, role: str,
                extra: str = "") -> int:
    """Documented key derivation: sha256 over the colon-joined key parts."""
    key = f"{master_seed}:{campaign_id}:{iteration}:{role}:{extra}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


@dataclass(frozen=True)
class Observation:
    """One labeled formulation: replicate viabilities plus their summary."""

    formulation_id: str
    grid: tuple[int, ...]
    replicates: tuple[float, ...]
    mean: float
    variance: float
    count: int
    iteration: int
    source: str  # "lab" | "oracle"

    def __post_init__(self) -> None:
        if self.count < 1 or len(self.replicates) != self.count:
            raise ValidationFailure("replicate count mismatch")
        vals = np.asarray(self.replicates, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValidationFailure("replicates must be finite")
        if abs(float(vals.mean()) - self.mean) > 1e-12:
            raise ValidationFailure("stored mean inconsistent with replicates")
        expect_var = float(vals.var(ddof=1)) if self.count > 1 else 0.0
        if abs(expect_var - self.variance) > 1e-12:
            raise ValidationFailure("stored variance inconsistent with replicates")

    @classmethod
    def from_replicates(cls, formulation: Formulation, replicates: Sequence[float],
                        iteration: int, source: str) -> "Observation":
        vals = np.asarray(list(replicates), dtype=float)
        if vals.size < 1:
            raise ValidationFailure("need at least one replicate")
        variance = float(vals.var(ddof=1)) if vals.size > 1 else 0.0
        return cls(formulation_id=formulation.id, grid=tuple(formulation.grid),
                   replicates=tuple(float(v) for v in vals), mean=float(vals.mean()),
                   variance=variance, count=int(vals.size), iteration=iteration,
                   source=source)

    def to_dict(self) -> dict:
        return {
            "formulation_id": self.formulation_id, "grid": list(self.grid),
            "replicates": list(self.replicates), "mean": self.mean,
            "variance": self.variance, "count": self.count,
            "iteration": self.iteration, "source": self.source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Observation":
        return cls(formulation_id=d["formulation_id"], grid=tuple(d["grid"]),
                   replicates=tuple(d["replicates"]), mean=d["mean"],
                   variance=d["variance"], count=d["count"],
                   iteration=d["iteration"], source=d["source"])


@dataclass(frozen=True)
class MetricRecord:
    iteration: int
    hypervolume: float
    igd: float | None
    bounds: dict
    reference: tuple[float, float]
    front_ids: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration, "hypervolume": self.hypervolume,
            "igd": self.igd, "bounds": self.bounds,
            "reference": list(self.reference), "front_ids": list(self.front_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricRecord":
        return cls(iteration=d["iteration"], hypervolume=d["hypervolume"],
                   igd=d.get("igd"), bounds=d["bounds"],
                   reference=tuple(d["reference"]), front_ids=tuple(d["front_ids"]))


@dataclass(frozen=True)
class CampaignConfig:
    acquisition: AcquisitionConfig
    space: ComponentSet = ComponentSet()
    iterations: int = 8
    master_seed: int = 0
    pool_limit: int | None = None
    pool_seed: int | None = None  # shared subsample across campaigns when set
    viability_bounds: tuple[float, float] = (0.0, 1.0)
    objective_bounds: ObjectiveBounds | None = None
    oracle: OracleSpec | None = None

    def __post_init__(self) -> None:
        if self.iterations < 0:
            raise ValidationFailure("iterations must be >= 0")
        if self.pool_limit is not None and self.pool_limit < 1:
            raise ValidationFailure("pool_limit must be >= 1")
        vb = self.viability_bounds
        if not vb[1] > vb[0]:
            raise ValidationFailure("degenerate viability bounds")

    @property
    def method(self) -> str:
        return self.acquisition.method

    def to_dict(self) -> dict:
        return {
            "acquisition": self.acquisition.to_dict(),
            "space": self.space.to_dict(),
            "iterations": self.iterations,
            "master_seed": self.master_seed,
            "pool_limit": self.pool_limit,
            "pool_seed": self.pool_seed,
            "viability_bounds": list(self.viability_bounds),
            "objective_bounds": None if self.objective_bounds is None
            else self.objective_bounds.to_dict(),
            "oracle": None if self.oracle is None else self.oracle.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        return cls(
            acquisition=AcquisitionConfig.from_dict(d["acquisition"]),
            space=ComponentSet.from_dict(d["space"]),
            iterations=int(d.get("iterations", 8)),
            master_seed=int(d.get("master_seed", 0)),
            pool_limit=d.get("pool_limit"),
            pool_seed=d.get("pool_seed"),
            viability_bounds=tuple(d.get("viability_bounds", (0.0, 1.0))),
            objective_bounds=None if d.get("objective_bounds") is None
            else ObjectiveBounds.from_dict(d["objective_bounds"]),
            oracle=None if d.get("oracle") is None else OracleSpec.from_dict(d["oracle"]),
        )


@dataclass
class CampaignState:
    campaign_id: str
    config: CampaignConfig
    status: str
    iteration: int
    version: int
    bounds: ObjectiveBounds
    pool_hash: str
    observations: list[Observation]
    pending: BatchSuggestion | None
    pending_grids: list[tuple[int, ...]] | None
    metrics: list[MetricRecord]

    def known_ids(self) -> set[str]:
        return {o.formulation_id for o in self.observations}

    def formulation(self, obs: Observation) -> Formulation:
        return Formulation(grid=tuple(obs.grid), increment=self.config.space.increment)

    def raw_objectives(self, up_to_iteration: int | None = None) -> tuple[np.ndarray, list[str]]:
        obs = [o for o in self.observations
               if up_to_iteration is None or o.iteration <= up_to_iteration]
        if not obs:
            return np.empty((0, 2)), []
        pts = np.array([[self.formulation(o).total, o.mean] for o in obs])
        return pts, [o.formulation_id for o in obs]

    def normalized_objectives(self, up_to_iteration: int | None = None,
                              clamp: bool = True) -> tuple[np.ndarray, list[str]]:
        pts, ids = self.raw_objectives(up_to_iteration)
        if not len(ids):
            return pts, ids
        normed, _ = normalize_objectives(pts, self.bounds, clamp=clamp)
        return normed, ids

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "campaign_id": self.campaign_id,
            "config": self.config.to_dict(),
            "status": self.status,
            "iteration": self.iteration,
            "version": self.version,
            "bounds": self.bounds.to_dict(),
            "pool_hash": self.pool_hash,
            "observations": [o.to_dict() for o in self.observations],
            "pending": None if self.pending is None else self.pending.to_dict(),
            "pending_grids": None if self.pending_grids is None
            else [list(g) for g in self.pending_grids],
            "metrics": [m.to_dict() for m in self.metrics],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignState":
        if d.get("schema") != SCHEMA_VERSION:
            raise StoreError(f"unsupported state schema {d.get('schema')}")
        return cls(
            campaign_id=d["campaign_id"],
            config=CampaignConfig.from_dict(d["config"]),
            status=d["status"], iteration=d["iteration"], version=d["version"],
            bounds=ObjectiveBounds.from_dict(d["bounds"]),
            pool_hash=d["pool_hash"],
            observations=[Observation.from_dict(o) for o in d["observations"]],
            pending=None if d.get("pending") is None
            else BatchSuggestion.from_dict(d["pending"]),
            pending_grids=None if d.get("pending_grids") is None
            else [tuple(g) for g in d["pending_grids"]],
            metrics=[MetricRecord.from_dict(m) for m in d["metrics"]],
        )


# ---------------------------------------------------------------------------
# Pool handling


def campaign_pool(config: CampaignConfig, campaign_id: str) -> list[Formulation]:
    """The campaign's candidate pool: deterministic enumeration, optionally a
    seeded subsample (kept in enumeration order)."""
    pool = enumerate_pool(config.space)
    if config.pool_limit is not None and config.pool_limit < len(pool):
        entropy = config.pool_seed if config.pool_seed is not None else \
            derive_seed(config.master_seed, campaign_id, 0, ROLE_POOL)
        rng = np.random.default_rng(np.random.SeedSequence([entropy, 0x706C]))
        keep = np.sort(rng.choice(len(pool), size=config.pool_limit, replace=False))
        pool = [pool[i] for i in keep]
    return pool


def pool_digest(pool: Sequence[Formulation]) -> str:
    h = hashlib.sha1()
    for f in pool:
        h.update(f.id.encode())
    return h.hexdigest()[:16]


def _campaign_bounds(config: CampaignConfig, pool: Sequence[Formulation],
                     initial: Sequence[Observation]) -> ObjectiveBounds:
    if config.objective_bounds is not None:
        return config.objective_bounds
    totals = [f.total for f in pool]
    totals += [sum(o.grid) * config.space.increment for o in initial]
    if not totals:
        raise ValidationFailure("cannot derive bounds from an empty pool")
    lo, hi = min(totals), max(totals)
    if not hi > lo:
        hi = lo + 1.0
    vb = config.viability_bounds
    return ObjectiveBounds(lower=(lo, vb[0]), upper=(hi, vb[1]))


# ---------------------------------------------------------------------------
# Store


def _canonical_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


class CampaignStore:
    """Directory-per-campaign persistence: events.jsonl + state.json."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _dir(self, campaign_id: str) -> Path:
        return self.root / campaign_id

    def list_ids(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir()
                      if (p / "state.json").exists())

    def exists(self, campaign_id: str) -> bool:
        return (self._dir(campaign_id) / "state.json").exists()

    @contextmanager
    def lock(self, campaign_id: str):
        """Single-writer lock per campaign (advisory flock)."""
        d = self._dir(campaign_id)
        d.mkdir(parents=True, exist_ok=True)
        fd = os.open(d / "lock", os.O_CREAT | os.O_RDWR, 0o644)
        try:
            fcntl.flock(fd, fcntl.LOCK_EX)
            yield
        finally:
            fcntl.flock(fd, fcntl.LOCK_UN)
            os.close(fd)

    def write_state(self, state: CampaignState) -> None:
        d = self._dir(state.campaign_id)
        d.mkdir(parents=True, exist_ok=True)
        tmp = d / "state.json.tmp"
        tmp.write_text(_canonical_json(state.to_dict()))
        os.replace(tmp, d / "state.json")

    def append_event(self, campaign_id: str, event: dict) -> None:
        d = self._dir(campaign_id)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "events.jsonl", "a") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def read_events(self, campaign_id: str) -> list[dict]:
        path = self._dir(campaign_id) / "events.jsonl"
        if not path.exists():
            raise StoreError(f"no event log for campaign {campaign_id!r}")
        return [json.loads(line) for line in path.read_text().splitlines() if line]

    def load(self, campaign_id: str) -> CampaignState:
        path = self._dir(campaign_id) / "state.json"
        if not path.exists():
            raise StoreError(f"unknown campaign {campaign_id!r}")
        return CampaignState.from_dict(json.loads(path.read_text()))


# ---------------------------------------------------------------------------
# Engine operations


def _metric_record(state_like: CampaignState, iteration: int) -> MetricRecord:
    normed, ids = state_like.normalized_objectives(up_to_iteration=iteration)
    ref = state_like.config.acquisition.reference
    if not len(ids):
        return MetricRecord(iteration=iteration, hypervolume=0.0, igd=None,
                            bounds=state_like.bounds.to_dict(), reference=ref,
                            front_ids=())
    front = pareto_front(normed, ids)
    hv = hypervolume(front.points, ref)
    return MetricRecord(iteration=iteration, hypervolume=float(hv), igd=None,
                        bounds=state_like.bounds.to_dict(), reference=ref,
                        front_ids=tuple(sorted(front.ids)))


def _auto_campaign_id(config: CampaignConfig,
                      initial: Sequence[Observation]) -> str:
    blob = _canonical_json({"config": config.to_dict(),
                            "initial": [o.to_dict() for o in initial]})
    return "c" + hashlib.sha1(blob.encode()).hexdigest()[:10]


def create_campaign(store: CampaignStore, config: CampaignConfig,
                    initial: Sequence[tuple[Formulation, Sequence[float]]] = (),
                    campaign_id: str | None = None) -> CampaignState:
    """Create and persist a campaign in ready_to_suggest with iteration-0 metrics."""
    observations = []
    seen: set[str] = set()
    for formulation, replicates in initial:
        if formulation.id in seen:
            raise ValidationFailure(f"duplicate initial formulation {formulation.id}")
        seen.add(formulation.id)
        observations.append(Observation.from_replicates(formulation, replicates,
                                                        iteration=0, source="lab"))
    if campaign_id is None:
        campaign_id = _auto_campaign_id(config, observations)
    if store.exists(campaign_id):
        raise ValidationFailure(f"campaign {campaign_id!r} already exists")

    pool = campaign_pool(config, campaign_id)
    bounds = _campaign_bounds(config, pool, observations)
    state = CampaignState(
        campaign_id=campaign_id, config=config, status=STATUS_READY,
        iteration=0, version=0, bounds=bounds, pool_hash=pool_digest(pool),
        observations=observations, pending=None, pending_grids=None, metrics=[])
    state.metrics.append(_metric_record(state, 0))
    if config.iterations == 0:
        state.status = STATUS_COMPLETED

    with store.lock(campaign_id):
        if store.exists(campaign_id):
            raise ValidationFailure(f"campaign {campaign_id!r} already exists")
        state.version = 1
        store.append_event(campaign_id, {
            "type": "created", "schema": SCHEMA_VERSION,
            "campaign_id": campaign_id, "config": config.to_dict(),
            "initial_observations": [o.to_dict() for o in observations],
            "bounds": bounds.to_dict(), "pool_hash": state.pool_hash,
            "metrics": state.metrics[0].to_dict(), "status": state.status,
        })
        store.write_state(state)
    return state


def _fit_surrogate(state: CampaignState, iteration_seed: int) -> SurrogateModel:
    obs = state.observations
    x = np.array([state.formulation(o).as_array() for o in obs])
    y = np.array([o.mean for o in obs])
    space = state.config.space
    d = space.n_components
    comp_hi = space.component_max_units * space.increment
    method = state.config.method
    if method == "qvarlognehvi":
        variances = np.array([o.variance / o.count for o in obs])
        return fit(x, y, noise_mode="fixed_per_point", point_variances=variances,
                   input_bounds=(np.zeros(d), np.full(d, comp_hi)), seed=iteration_seed)
    return fit(x, y, noise_mode="inferred_homoscedastic",
               input_bounds=(np.zeros(d), np.full(d, comp_hi)), seed=iteration_seed)


def suggest(store: CampaignStore, campaign_id: str) -> tuple[CampaignState, list[Formulation]]:
    """Select the next batch (idempotent while awaiting results)."""
    with store.lock(campaign_id):
        state = store.load(campaign_id)
        space = state.config.space
        if state.status == STATUS_AWAITING:
            assert state.pending is not None and state.pending_grids is not None
            return state, [space.formulation(g) for g in state.pending_grids]
        if state.status == STATUS_COMPLETED:
            raise ValidationFailure(f"campaign {campaign_id!r} is completed")

        config = state.config
        known = state.known_ids()
        pool = [f for f in campaign_pool(config, campaign_id) if f.id not in known]
        if len(pool) < config.acquisition.batch_size:
            raise ValidationFailure("pool exhausted: fewer candidates than batch size")

        iteration = state.iteration + 1
        acq_seed = derive_seed(config.master_seed, campaign_id, iteration, ROLE_SUGGEST)
        fit_seed = derive_seed(config.master_seed, campaign_id, iteration, ROLE_FIT)
        acq = AcquisitionConfig.from_dict({**config.acquisition.to_dict(), "seed": acq_seed})

        totals = np.array([f.total for f in pool])
        conc_norm = (totals - state.bounds.lower[0]) / \
            (state.bounds.upper[0] - state.bounds.lower[0])
        cand = CandidatePool(x=np.array([f.as_array() for f in pool]),
                             ids=tuple(f.id for f in pool), conc_norm=conc_norm)

        method = config.method
        if method == "random":
            suggestion = select_batch("random", model=None, pool=cand, config=acq)
        else:
            model = _fit_surrogate(state, fit_seed)
            known_norm, _ = state.normalized_objectives(clamp=False)
            incumbent = float(np.max([o.mean for o in state.observations])) \
                if state.observations else 0.0
            suggestion = select_batch(method, model=model, pool=cand, config=acq,
                                      known_objectives=known_norm, incumbent=incumbent)

        chosen = [pool[i] for i in suggestion.indices]
        state.pending = suggestion
        state.pending_grids = [tuple(f.grid) for f in chosen]
        state.status = STATUS_AWAITING
        state.version += 1
        store.append_event(campaign_id, {
            "type": "suggested", "iteration": iteration,
            "suggestion": suggestion.to_dict(),
            "grids": [list(f.grid) for f in chosen],
        })
        store.write_state(state)
        return state, chosen


def ingest_results(store: CampaignStore, campaign_id: str,
                   results: Sequence[tuple[str, Sequence[float]]],
                   allow_partial: bool = False,
                   source: str = "lab") -> CampaignState:
    """Append a batch of replicate results; atomic (all validated, then applied)."""
    with store.lock(campaign_id):
        state = store.load(campaign_id)
        if state.status != STATUS_AWAITING:
            raise ValidationFailure(
                f"campaign {campaign_id!r} is {state.status}; results need a pending batch")
        assert state.pending is not None and state.pending_grids is not None
        pending_ids = list(state.pending.ids)
        grid_by_id = {fid: g for fid, g in zip(pending_ids, state.pending_grids)}

        seen: set[str] = set()
        offenders = []
        for fid, _ in results:
            if fid not in grid_by_id:
                offenders.append(fid)
            if fid in seen:
                raise ValidationFailure(f"duplicate result for formulation {fid}")
            seen.add(fid)
        if offenders:
            raise ValidationFailure(
                f"results reference formulations outside the pending batch: {offenders}")
        missing = [fid for fid in pending_ids if fid not in seen]
        if missing and not allow_partial:
            raise ValidationFailure(
                f"partial results rejected (missing {missing}); pass allow_partial to accept")

        lo, hi = VIABILITY_RANGE
        bad = [fid for fid, reps in results
               if not all(np.isfinite(list(reps))) or
               any(not lo <= float(v) <= hi for v in reps)]
        if bad:
            raise ValidationFailure(f"replicate viabilities outside [{lo}, {hi}]: {bad}")

        iteration = state.iteration + 1
        space = state.config.space
        new_obs = [Observation.from_replicates(space.formulation(grid_by_id[fid]), reps,
                                               iteration=iteration, source=source)
                   for fid, reps in results]

        state.observations.extend(new_obs)
        state.iteration = iteration
        state.pending = None
        state.pending_grids = None
        record = _metric_record(state, iteration)
        prev = state.metrics[-1].hypervolume if state.metrics else 0.0
        if record.hypervolume < prev - 1e-12:
            raise ValidationFailure("hypervolume decreased within a campaign "
                                    "(bounds snapshot violated)")
        state.metrics.append(record)
        state.status = STATUS_COMPLETED if iteration >= state.config.iterations \
            else STATUS_READY
        state.version += 1
        store.append_event(campaign_id, {
            "type": "ingested", "iteration": iteration,
            "results": [o.to_dict() for o in new_obs],
            "metrics": record.to_dict(), "status": state.status,
        })
        store.write_state(state)
        return state


def replay(store: CampaignStore, campaign_id: str) -> CampaignState:
    """Rebuild state purely from the event log (no recomputation)."""
    events = store.read_events(campaign_id)
    if not events or events[0]["type"] != "created":
        raise StoreError("event log must start with a 'created' event")
    head = events[0]
    state = CampaignState(
        campaign_id=head["campaign_id"],
        config=CampaignConfig.from_dict(head["config"]),
        status=head["status"], iteration=0, version=1,
        bounds=ObjectiveBounds.from_dict(head["bounds"]),
        pool_hash=head["pool_hash"],
        observations=[Observation.from_dict(o) for o in head["initial_observations"]],
        pending=None, pending_grids=None,
        metrics=[MetricRecord.from_dict(head["metrics"])])
    for ev in events[1:]:
        state.version += 1
        if ev["type"] == "suggested":
            state.pending = BatchSuggestion.from_dict(ev["suggestion"])
            state.pending_grids = [tuple(g) for g in ev["grids"]]
            state.status = STATUS_AWAITING
        elif ev["type"] == "ingested":
            state.observations.extend(Observation.from_dict(o) for o in ev["results"])
            state.iteration = ev["iteration"]
            state.pending = None
            state.pending_grids = None
            state.metrics.append(MetricRecord.from_dict(ev["metrics"]))
            state.status = ev["status"]
        else:
            raise StoreError(f"unknown event type {ev['type']!r}")
    return state


def front_members(state: CampaignState) -> list[dict]:
    """Current Pareto members with compositions, raw and normalized objectives."""
    normed, ids = state.normalized_objectives()
    if not len(ids):
        return []
    raw, _ = state.raw_objectives()
    front = pareto_front(normed, ids)
    by_id = {o.formulation_id: o for o in state.observations}
    out = []
    for idx, fid in zip(front.indices, front.ids):
        obs = by_id[fid]
        f = state.formulation(obs)
        out.append({
            "formulation_id": fid,
            "concentrations": [float(c) for c in f.concentrations],
            "total_concentration": float(raw[idx][0]),
            "viability": float(raw[idx][1]),
            "normalized": [float(v) for v in normed[idx]],
            "iteration": obs.iteration,
        })
    out.sort(key=lambda row: row["formulation_id"])
    return out


def igd_series(state: CampaignState, reference_points: np.ndarray) -> list[float]:
    """Retrospective IGD per iteration against a caller-supplied reference front
    (normalized with this campaign's bounds snapshot)."""
    out = []
    for record in state.metrics:
        normed, ids = state.normalized_objectives(up_to_iteration=record.iteration)
        if not len(ids):
            out.append(float("nan"))
            continue
        front = pareto_front(normed, ids)
        out.append(igd_metric(front.points, reference_points))
    return out


def metric_rows(state: CampaignState, igd_values: Sequence[float] | None = None) -> list[dict]:
    rows = []
    for i, record in enumerate(state.metrics):
        igd_val = record.igd
        if igd_values is not None and i < len(igd_values):
            v = igd_values[i]
            igd_val = None if v is None or (isinstance(v, float) and np.isnan(v)) else float(v)
        rows.append(metric_row(record.iteration, state.config.method,
                               record.hypervolume, igd_val, record.bounds,
                               record.reference))
    return rows


# ---------------------------------------------------------------------------
# Results CSV (the lab round-trip format)


def results_csv_header(space: ComponentSet, max_replicates: int) -> list[str]:
    return ["formulation_id", *space.names,
            *[f"replicate_{i + 1}" for i in range(max_replicates)]]


def write_results_csv(space: ComponentSet, rows: Sequence[tuple[Formulation, Sequence[float]]],
                      path: str | Path) -> None:
    max_reps = max((len(r) for _, r in rows), default=0)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(results_csv_header(space, max_reps))
        for f, reps in rows:
            cells = [f.id, *[f"{c:g}" for c in f.concentrations]]
            cells += [f"{v!r}" for v in reps]
            cells += [""] * (max_reps - len(reps))
            writer.writerow(cells)


def parse_results_csv(space: ComponentSet, path: str | Path) -> list[tuple[str, list[float]]]:
    """Read {formulation_id, component columns, replicate_1..n}; raises with the
    offending row number on malformed cells."""
    out: list[tuple[str, list[float]]] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        names = reader.fieldnames or []
        if "formulation_id" not in names:
            raise ValidationFailure("results CSV needs a formulation_id column")
        rep_cols = [c for c in names if c.startswith("replicate_")]
        if not rep_cols:
            raise ValidationFailure("results CSV needs replicate_N columns")
        comp_cols = [c for c in space.names if c in names]
        for lineno, row in enumerate(reader, start=2):
            fid = (row.get("formulation_id") or "").strip()
            if not fid:
                raise ValidationFailure(f"results CSV row {lineno}: missing formulation_id")
            if len(comp_cols) == len(space.names):
                try:
                    conc = [float(row[c]) for c in comp_cols]
                except (TypeError, ValueError) as exc:
                    raise ValidationFailure(f"results CSV row {lineno}: {exc}") from exc
                f = space.formulation_from_molar(conc)
                if f.id != fid:
                    raise ValidationFailure(
                        f"results CSV row {lineno}: composition does not match id {fid}")
            reps = []
            for c in rep_cols:
                cell = (row.get(c) or "").strip()
                if cell == "":
                    continue
                try:
                    reps.append(float(cell))
                except ValueError as exc:
                    raise ValidationFailure(f"results CSV row {lineno}: bad replicate "
                                            f"{cell!r}") from exc
            if not reps:
                raise ValidationFailure(f"results CSV row {lineno}: no replicate values")
            out.append((fid, reps))
    return out


# ---------------------------------------------------------------------------
# Synthetic campaigns


def kcenter_initial(space_pool: Sequence[Formulation], k: int, oracle: OracleSpec,
                    master_seed: int, campaign_key: str) -> list[tuple[Formulation, list[float]]]:
    """Diverse k-point initialization: greedy k-center over the pool, labeled
    by the oracle."""
    x = np.array([f.as_array() for f in space_pool])
    ids = [f.id for f in space_pool]
    picks = kcenter_select(np.empty((0, x.shape[1])), x, k, ids)
    out = []
    for idx in picks:
        f = space_pool[idx]
        seed = derive_seed(master_seed, campaign_key, 0, ROLE_OBSERVE, f.id)
        obs = observe(oracle, f, seed)
        out.append((f, list(obs.values)))
    return out


def auto_ingest(store: CampaignStore, state: CampaignState,
                chosen: Sequence[Formulation]) -> CampaignState:
    """Label the pending batch with the campaign's oracle and ingest it."""
    oracle = state.config.oracle
    if oracle is None:
        raise ValidationFailure("campaign has no oracle configured")
    iteration = state.iteration + 1
    results = []
    for f in chosen:
        seed = derive_seed(state.config.master_seed, state.campaign_id,
                           iteration, ROLE_OBSERVE, f.id)
        results.append((f.id, list(observe(oracle, f, seed).values)))
    return ingest_results(store, state.campaign_id, results, source="oracle")


@dataclass
class TrajectoryStats:
    method: str
    iterations: int
    repeats: int
    mean: list[float]
    sd: list[float]
    per_repeat: list[list[float]]

    def to_dict(self) -> dict:
        return {"method": self.method, "iterations": self.iterations,
                "repeats": self.repeats, "mean": self.mean, "sd": self.sd,
                "per_repeat": self.per_repeat}


def run_synthetic_campaign(store: CampaignStore, config: CampaignConfig,
                           iterations: int, repeats: int,
                           init_k: int = 10,
                           campaign_prefix: str | None = None) -> TrajectoryStats:
    """Repeat a full auto-ingested campaign and aggregate hypervolume series.

    Each repeat derives its own seed from the master seed, builds a fresh
    k-center initial set, and runs the loop to the iteration budget; the
    returned series is per-iteration mean and standard deviation across
    repeats.
    """
    if config.oracle is None:
        raise ValidationFailure("synthetic campaigns need an oracle in the config")
    method = config.method
    prefix = campaign_prefix or f"syn-{method}-{config.master_seed}"
    base_dict = config.to_dict()
    if base_dict.get("pool_limit") is not None and base_dict.get("pool_seed") is None:
        # all repeats (and methods sharing a master seed) see the same pool
        base_dict["pool_seed"] = config.master_seed
    series: list[list[float]] = []
    for r in range(repeats):
        campaign_id = f"{prefix}-r{r}"
        repeat_seed = derive_seed(config.master_seed, campaign_id, 0, ROLE_INIT)
        rep_config = CampaignConfig.from_dict({**base_dict,
                                               "iterations": iterations,
                                               "master_seed": repeat_seed})
        pool = campaign_pool(rep_config, campaign_id)
        initial = kcenter_initial(pool, init_k, rep_config.oracle,
                                  repeat_seed, campaign_id) if init_k else []
        state = create_campaign(store, rep_config, initial, campaign_id=campaign_id)
        while state.status == STATUS_READY:
            state, chosen = suggest(store, campaign_id)
            state = auto_ingest(store, state, chosen)
        series.append([m.hypervolume for m in state.metrics])
    arr = np.array(series)
    return TrajectoryStats(method=method, iterations=iterations, repeats=repeats,
                           mean=[float(v) for v in arr.mean(axis=0)],
                           sd=[float(v) for v in arr.std(axis=0, ddof=1)] if repeats > 1
                           else [0.0] * arr.shape[1],
                           per_repeat=[[float(v) for v in row] for row in series])
