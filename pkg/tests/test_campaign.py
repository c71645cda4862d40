import json

import numpy as np
import pytest

from cryobo.acquisition import AcquisitionConfig, CandidatePool, qlognehvi_select
from cryobo.campaign import (CampaignConfig, CampaignStore, Observation,
                             auto_ingest, campaign_pool, create_campaign,
                             derive_seed, igd_series, ingest_results,
                             kcenter_initial, metric_rows, parse_results_csv,
                             replay, run_synthetic_campaign, suggest,
                             write_results_csv, _fit_surrogate)
from cryobo.errors import ValidationFailure
from cryobo.oracles import OracleSpec, ToxicityParams
from cryobo.space import ComponentSet, enumerate_pool

SMALL_SPACE = ComponentSet(names=("a", "b", "c"), increment=1.0,
                           total_min=1.0, total_max=2.0)
SMALL_TOX = ToxicityParams(slopes=(0.5, 0.3, 0.8), interactions=((0, 2, 0.05),))


def small_oracle(noise=0.02):
    return OracleSpec(kind="toxicity", noise_sd=noise, replicates=3,
                      toxicity=SMALL_TOX)


def small_config(method="random", iterations=3, seed=7, q=2, oracle=None):
    return CampaignConfig(
        acquisition=AcquisitionConfig(method=method, batch_size=q,
                                      mc_samples=128, seed=0),
        space=SMALL_SPACE, iterations=iterations, master_seed=seed,
        oracle=oracle)


def seeded_initial(config, campaign_key="init", k=3):
    pool = campaign_pool(config, campaign_key)
    oracle = config.oracle or small_oracle()
    return kcenter_initial(pool, k, oracle, config.master_seed, campaign_key)


def test_create_empty_random_campaign(tmp_path):
    store = CampaignStore(tmp_path)
    state = create_campaign(store, small_config())
    assert state.status == "ready_to_suggest"
    assert state.metrics[0].hypervolume == 0.0
    assert state.version == 1


def test_create_duplicate_id_rejected(tmp_path):
    store = CampaignStore(tmp_path)
    create_campaign(store, small_config(), campaign_id="x")
    with pytest.raises(ValidationFailure):
        create_campaign(store, small_config(), campaign_id="x")


def test_create_rejects_duplicate_initial_formulations(tmp_path):
    store = CampaignStore(tmp_path)
    f = SMALL_SPACE.formulation([1, 0, 0])
    with pytest.raises(ValidationFailure):
        create_campaign(store, small_config(), [(f, [0.5]), (f, [0.6])])


def test_create_is_byte_identical(tmp_path):
    cfg = small_config(method="qlognehvi", oracle=small_oracle())
    initial = seeded_initial(cfg)
    a = CampaignStore(tmp_path / "a")
    b = CampaignStore(tmp_path / "b")
    sa = create_campaign(a, cfg, initial)
    create_campaign(b, cfg, initial)
    fa = (tmp_path / "a" / sa.campaign_id / "state.json").read_bytes()
    fb = (tmp_path / "b" / sa.campaign_id / "state.json").read_bytes()
    assert fa == fb


def test_kcenter_initial_is_diverse_and_seeded():
    cfg = small_config(oracle=small_oracle())
    init1 = seeded_initial(cfg, k=3)
    init2 = seeded_initial(cfg, k=3)
    assert [f.id for f, _ in init1] == [f.id for f, _ in init2]
    assert len({f.id for f, _ in init1}) == 3
    assert all(len(r) == 3 for _, r in init1)


def test_random_suggest_and_ingest_loop(tmp_path):
    store = CampaignStore(tmp_path)
    cfg = small_config(method="random", iterations=2, q=2)
    state = create_campaign(store, cfg)
    state, chosen = suggest(store, state.campaign_id)
    assert state.status == "awaiting_results"
    assert len(chosen) == 2
    assert len({f.id for f in chosen}) == 2

    # idempotent while awaiting
    state2, chosen2 = suggest(store, state.campaign_id)
    assert [f.id for f in chosen2] == [f.id for f in chosen]
    assert state2.version == state.version

    results = [(f.id, [0.5, 0.52, 0.48]) for f in chosen]
    state = ingest_results(store, state.campaign_id, results)
    assert state.iteration == 1
    assert state.status == "ready_to_suggest"
    assert len(state.metrics) == 2
    assert state.metrics[1].hypervolume >= state.metrics[0].hypervolume


def test_suggest_excludes_known(tmp_path):
    store = CampaignStore(tmp_path)
    cfg = small_config(method="random", iterations=5, q=2)
    state = create_campaign(store, cfg)
    seen = set()
    for _ in range(3):
        state, chosen = suggest(store, state.campaign_id)
        ids = {f.id for f in chosen}
        assert not ids & seen
        seen |= ids
        state = ingest_results(store, state.campaign_id,
                               [(f.id, [0.4]) for f in chosen])


def test_ingest_rejects_unknown_ids_atomically(tmp_path):
    store = CampaignStore(tmp_path)
    state = create_campaign(store, small_config())
    state, chosen = suggest(store, state.campaign_id)
    before = store.load(state.campaign_id).to_dict()
    with pytest.raises(ValidationFailure, match="outside the pending batch"):
        ingest_results(store, state.campaign_id,
                       [(chosen[0].id, [0.5]), ("bogus", [0.5])])
    assert store.load(state.campaign_id).to_dict() == before


def test_ingest_rejects_partial_without_flag(tmp_path):
    store = CampaignStore(tmp_path)
    state = create_campaign(store, small_config())
    state, chosen = suggest(store, state.campaign_id)
    with pytest.raises(ValidationFailure, match="partial"):
        ingest_results(store, state.campaign_id, [(chosen[0].id, [0.5])])
    state = ingest_results(store, state.campaign_id, [(chosen[0].id, [0.5])],
                           allow_partial=True)
    assert state.iteration == 1


def test_ingest_rejects_out_of_range_viability(tmp_path):
    store = CampaignStore(tmp_path)
    state = create_campaign(store, small_config())
    state, chosen = suggest(store, state.campaign_id)
    with pytest.raises(ValidationFailure, match="outside"):
        ingest_results(store, state.campaign_id,
                       [(chosen[0].id, [1.5]), (chosen[1].id, [0.5])])


def test_ingest_requires_awaiting_status(tmp_path):
    store = CampaignStore(tmp_path)
    state = create_campaign(store, small_config())
    with pytest.raises(ValidationFailure, match="pending"):
        ingest_results(store, state.campaign_id, [("x", [0.5])])


def test_campaign_completes_at_budget(tmp_path):
    store = CampaignStore(tmp_path)
    cfg = small_config(method="random", iterations=1, q=2)
    state = create_campaign(store, cfg)
    state, chosen = suggest(store, state.campaign_id)
    state = ingest_results(store, state.campaign_id,
                           [(f.id, [0.4]) for f in chosen])
    assert state.status == "completed"
    with pytest.raises(ValidationFailure, match="completed"):
        suggest(store, state.campaign_id)


def test_model_based_suggest_matches_standalone_selector(tmp_path):
    store = CampaignStore(tmp_path)
    cfg = small_config(method="qlognehvi", oracle=small_oracle(), seed=13)
    initial = seeded_initial(cfg, k=3)
    state = create_campaign(store, cfg, initial)
    state, chosen = suggest(store, state.campaign_id)

    # rebuild the exact selector call from the stored state
    fresh = replay(store, state.campaign_id)
    fresh.pending = None
    fresh.pending_grids = None
    fresh.status = "ready_to_suggest"
    fresh.observations = [o for o in fresh.observations if o.iteration == 0]
    acq_seed = derive_seed(cfg.master_seed, state.campaign_id, 1, "suggest")
    fit_seed = derive_seed(cfg.master_seed, state.campaign_id, 1, "fit")
    model = _fit_surrogate(fresh, fit_seed)
    known = fresh.known_ids()
    pool = [f for f in campaign_pool(cfg, state.campaign_id) if f.id not in known]
    totals = np.array([f.total for f in pool])
    cn = (totals - fresh.bounds.lower[0]) / (fresh.bounds.upper[0] - fresh.bounds.lower[0])
    cand = CandidatePool(x=np.array([f.as_array() for f in pool]),
                         ids=tuple(f.id for f in pool), conc_norm=cn)
    acq = AcquisitionConfig.from_dict({**cfg.acquisition.to_dict(), "seed": acq_seed})
    known_norm, _ = fresh.normalized_objectives(clamp=False)
    expect = qlognehvi_select(model, known_norm, cand, acq)
    assert state.pending.ids == expect.ids
    assert state.pending.model_ref == expect.model_ref


def test_var_method_uses_fixed_noise(tmp_path):
    store = CampaignStore(tmp_path)
    cfg = small_config(method="qvarlognehvi", oracle=small_oracle(), seed=3)
    initial = seeded_initial(cfg, k=3)
    state = create_campaign(store, cfg, initial)
    model = _fit_surrogate(state, 0)
    assert model.noise_mode == "fixed_per_point"
    state, chosen = suggest(store, state.campaign_id)
    assert len(chosen) == cfg.acquisition.batch_size


def test_oracle_auto_ingest_loop(tmp_path):
    store = CampaignStore(tmp_path)
    cfg = small_config(method="random", iterations=4, q=1, oracle=small_oracle())
    state = create_campaign(store, cfg, seeded_initial(cfg, k=2))
    for _ in range(4):
        state, chosen = suggest(store, state.campaign_id)
        state = auto_ingest(store, state, chosen)
    assert state.status == "completed"
    assert len(state.metrics) == 5  # metric series of length iterations + 1
    hv = [m.hypervolume for m in state.metrics]
    assert all(b >= a - 1e-12 for a, b in zip(hv, hv[1:]))
    assert all(o.source == "oracle" for o in state.observations if o.iteration > 0)


def test_method_isolation(tmp_path):
    store = CampaignStore(tmp_path)
    ids = {}
    for method in ("random", "qlognehvi"):
        cfg = small_config(method=method, iterations=1, q=2, oracle=small_oracle(),
                           seed=21)
        state = create_campaign(store, cfg, seeded_initial(cfg, k=3),
                                campaign_id=f"iso-{method}")
        state, chosen = suggest(store, state.campaign_id)
        state = auto_ingest(store, state, chosen)
        ids[method] = state
    # observations live in disjoint stores; overlapping formulations allowed
    a = ids["random"]
    b = ids["qlognehvi"]
    assert a.campaign_id != b.campaign_id
    assert {o.formulation_id for o in a.observations if o.iteration > 0} or True
    assert a.to_dict() != b.to_dict()


def test_replay_reproduces_state(tmp_path):
    store = CampaignStore(tmp_path)
    cfg = small_config(method="qlognehvi", iterations=2, q=2, oracle=small_oracle())
    state = create_campaign(store, cfg, seeded_initial(cfg, k=3))
    for _ in range(2):
        state, chosen = suggest(store, state.campaign_id)
        state = auto_ingest(store, state, chosen)
    rebuilt = replay(store, state.campaign_id)
    assert rebuilt.to_dict() == store.load(state.campaign_id).to_dict()


def test_full_loop_deterministic_across_stores(tmp_path):
    outs = []
    for name in ("s1", "s2"):
        store = CampaignStore(tmp_path / name)
        cfg = small_config(method="qlognparego", iterations=2, q=2,
                           oracle=small_oracle(), seed=5)
        state = create_campaign(store, cfg, seeded_initial(cfg, k=3))
        while state.status == "ready_to_suggest":
            state, chosen = suggest(store, state.campaign_id)
            state = auto_ingest(store, state, chosen)
        outs.append((tmp_path / name / state.campaign_id / "state.json").read_bytes())
    assert outs[0] == outs[1]


def test_run_synthetic_campaign_shapes(tmp_path):
    store = CampaignStore(tmp_path)
    cfg = small_config(method="random", q=2, oracle=small_oracle(), seed=11)
    stats = run_synthetic_campaign(store, cfg, iterations=0, repeats=1, init_k=2)
    assert len(stats.mean) == 1 and stats.sd == [0.0]

    stats2 = run_synthetic_campaign(store, cfg, iterations=2, repeats=2, init_k=2,
                                    campaign_prefix="st2")
    assert len(stats2.mean) == 3 and len(stats2.per_repeat) == 2

    store1 = CampaignStore(tmp_path / "again")
    stats3 = run_synthetic_campaign(store1, cfg, iterations=2, repeats=2, init_k=2,
                                    campaign_prefix="st2")
    assert stats3.per_repeat == stats2.per_repeat  # identical master seed


def test_igd_series_and_metric_rows(tmp_path):
    store = CampaignStore(tmp_path)
    cfg = small_config(method="random", iterations=2, q=2, oracle=small_oracle())
    state = create_campaign(store, cfg, seeded_initial(cfg, k=2))
    while state.status == "ready_to_suggest":
        state, chosen = suggest(store, state.campaign_id)
        state = auto_ingest(store, state, chosen)
    from cryobo.pareto import pareto_front
    normed, ids = state.normalized_objectives()
    ref = pareto_front(normed, ids).points
    series = igd_series(state, ref)
    assert len(series) == len(state.metrics)
    assert series[-1] == pytest.approx(0.0, abs=1e-12)  # reference is own final front
    rows = metric_rows(state, series)
    assert rows[0]["method"] == "random"
    assert {"iteration", "hypervolume", "igd", "bounds", "reference"} <= set(rows[0])


def test_results_csv_roundtrip(tmp_path):
    space = SMALL_SPACE
    rows = [(space.formulation([1, 0, 0]), [0.41, 0.39]),
            (space.formulation([0, 1, 1]), [0.7])]
    path = tmp_path / "results.csv"
    write_results_csv(space, rows, path)
    parsed = parse_results_csv(space, path)
    assert parsed == [(rows[0][0].id, [0.41, 0.39]), (rows[1][0].id, [0.7])]


def test_results_csv_reports_bad_rows(tmp_path):
    space = SMALL_SPACE
    path = tmp_path / "bad.csv"
    path.write_text("formulation_id,a,b,c,replicate_1\nf1,1.0,0.0,0.0,oops\n")
    with pytest.raises(ValidationFailure, match="row 2"):
        parse_results_csv(space, path)


def test_observation_consistency_guard():
    with pytest.raises(ValidationFailure):
        Observation(formulation_id="f", grid=(1, 0, 0), replicates=(0.5, 0.6),
                    mean=0.9, variance=0.005, count=2, iteration=0, source="lab")


def test_initial_observations_may_sit_outside_pool(tmp_path):
    # single-component LD50-style data below total_min is legal initial data
    store = CampaignStore(tmp_path)
    f = SMALL_SPACE.formulation([0, 0, 0])
    cfg = small_config(method="random", q=2)
    state = create_campaign(store, cfg, [(f, [0.97, 0.99])])
    assert state.observations[0].iteration == 0
    # and it widens the concentration bounds snapshot
    assert state.bounds.lower[0] == 0.0
