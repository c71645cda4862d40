import csv
import io
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from cryobo.cli import main

SMALL_CONFIG = {
    "method": "random",
    "batch_size": 2,
    "iterations": 2,
    "seed": 5,
    "mc_samples": 128,
    "space": {"names": ["a", "b", "c"], "increment": 1.0,
              "total_min": 1.0, "total_max": 2.0},
}


def write_config(tmp_path, doc=None, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc if doc is not None else SMALL_CONFIG))
    return str(path)


def run(tmp_path, *args, store=None):
    runner = CliRunner()
    return runner.invoke(main, ["--store", str(store or tmp_path / "store"), *args])


def test_init_prints_id_and_creates_state(tmp_path):
    cfg = write_config(tmp_path)
    res = run(tmp_path, "init", "--config", cfg)
    assert res.exit_code == 0, res.output
    campaign_id = res.output.strip()
    assert (tmp_path / "store" / campaign_id / "state.json").exists()
    assert (tmp_path / "store" / campaign_id / "events.jsonl").exists()


def test_init_unknown_method_exits_2(tmp_path):
    cfg = write_config(tmp_path, {**SMALL_CONFIG, "method": "galaxy"})
    res = run(tmp_path, "init", "--config", cfg)
    assert res.exit_code == 2
    assert "qlognehvi" in res.output  # message names valid methods


def test_init_missing_config_exits_1(tmp_path):
    res = run(tmp_path, "init", "--config", str(tmp_path / "nope.json"))
    assert res.exit_code == 1


def test_init_same_seed_identical_metrics(tmp_path):
    cfg = write_config(tmp_path)
    out = []
    for name in ("s1", "s2"):
        res = run(tmp_path, "init", "--config", cfg, store=tmp_path / name)
        cid = res.output.strip()
        m = run(tmp_path, "metrics", "--campaign", cid, "--format", "json",
                store=tmp_path / name)
        out.append(m.output)
    assert out[0] == out[1]


def test_suggest_ingest_metrics_front_cycle(tmp_path):
    cfg = write_config(tmp_path)
    cid = run(tmp_path, "init", "--config", cfg).output.strip()

    batch_path = tmp_path / "batch.csv"
    res = run(tmp_path, "suggest", "--campaign", cid, "--out", str(batch_path))
    assert res.exit_code == 0, res.output
    rows = list(csv.DictReader(batch_path.open()))
    assert len(rows) == 2

    results_path = tmp_path / "results.csv"
    with results_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["formulation_id", "a", "b", "c",
                         "replicate_1", "replicate_2", "replicate_3"])
        for i, row in enumerate(rows):
            writer.writerow([row["formulation_id"], row["a"], row["b"], row["c"],
                             0.6 + 0.1 * i, 0.61 + 0.1 * i, 0.59 + 0.1 * i])
    res = run(tmp_path, "ingest", "--campaign", cid, "--results",
              str(results_path), "--format", "json")
    assert res.exit_code == 0, res.output
    payload = json.loads(res.output)
    assert payload[0]["iteration"] == 1
    assert payload[0]["hypervolume"] >= 0.0

    res = run(tmp_path, "metrics", "--campaign", cid, "--format", "json")
    series = json.loads(res.output)
    assert [r["iteration"] for r in series] == [0, 1]

    res = run(tmp_path, "front", "--campaign", cid, "--format", "json")
    assert res.exit_code == 0
    front = json.loads(res.output)
    assert front and {"formulation_id", "viability"} <= set(front[0])


def test_ingest_malformed_row_reports_line(tmp_path):
    cfg = write_config(tmp_path)
    cid = run(tmp_path, "init", "--config", cfg).output.strip()
    run(tmp_path, "suggest", "--campaign", cid, "--out", str(tmp_path / "b.csv"))
    bad = tmp_path / "bad.csv"
    bad.write_text("formulation_id,a,b,c,replicate_1\nxyz,1.0,0.0,0.0,banana\n")
    res = run(tmp_path, "ingest", "--campaign", cid, "--results", str(bad))
    assert res.exit_code == 2
    assert "row 2" in res.output


def test_metrics_with_reference_front(tmp_path):
    cfg = write_config(tmp_path)
    cid = run(tmp_path, "init", "--config", cfg).output.strip()
    ref = tmp_path / "ref.json"
    ref.write_text(json.dumps({"points": [[1.0, 1.0]]}))
    res = run(tmp_path, "metrics", "--campaign", cid, "--reference", str(ref),
              "--format", "json")
    assert res.exit_code == 0
    series = json.loads(res.output)
    assert series[0]["igd"] is None  # empty campaign: no front yet


def test_unknown_campaign_exits_1(tmp_path):
    res = run(tmp_path, "metrics", "--campaign", "ghost")
    assert res.exit_code == 1


def test_enumerate_default_space_documents_discrepancy(tmp_path):
    res = run(tmp_path, "enumerate", "--format", "json")
    assert res.exit_code == 0, res.output
    payload = json.loads(res.output)[0]
    assert payload["count"] == 48_672
    assert "48198" in payload["note"].replace(",", "")


def test_enumerate_writes_pool_csv(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "pool.csv"
    res = run(tmp_path, "enumerate", "--config", cfg, "--out", str(out),
              "--format", "json")
    assert res.exit_code == 0
    payload = json.loads(res.output)[0]
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == payload["count"]
    assert set(rows[0]) == {"id", "a", "b", "c"}


def test_bench_rastrigin_row_count(tmp_path):
    res = run(tmp_path, "bench", "--kind", "rastrigin", "--repeats", "2",
              "--iterations", "2", "--q", "5", "--mc-samples", "64",
              "--format", "json")
    assert res.exit_code == 0, res.output
    rows = json.loads(res.output)
    assert len(rows) == 3  # iterations 0..2
    assert {"iteration", "mean_best_value", "sd"} <= set(rows[0])
    # best-so-far series never worsens for minimization
    means = [r["mean_best_value"] for r in rows]
    assert means[-1] <= means[0] + 1e-12


def test_bench_toxicity_small(tmp_path):
    res = run(tmp_path, "bench", "--kind", "toxicity", "--repeats", "1",
              "--iterations", "1", "--q", "2", "--method", "random",
              "--pool-limit", "50", "--init-k", "2", "--format", "json")
    assert res.exit_code == 0, res.output
    rows = json.loads(res.output)
    assert len(rows) == 2
    assert rows[1]["mean_hypervolume"] >= rows[0]["mean_hypervolume"]
