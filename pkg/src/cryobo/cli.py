"""Command-line front door for campaigns, benchmarks, and metrics.

Thin by design: every command parses arguments, delegates to the engine, and
formats the result.  Exit codes: 1 I/O, 2 validation, 3 numerical trouble.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import os
import sys
from pathlib import Path

import click

from . import campaign as eng
from .acquisition import AcquisitionConfig
from .bench import run_benchmark
from .errors import NumericalFailure, StoreError, ValidationFailure
from .oracles import OracleSpec
from .space import (ComponentSet, PUBLISHED_DEFAULT_POOL_COUNT, enumerate_pool,
                    pool_to_csv)

EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def engine_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationFailure as exc:
            _fail(EXIT_VALIDATION, str(exc))
        except NumericalFailure as exc:
            _fail(EXIT_NUMERICAL, str(exc))
        except StoreError as exc:
            _fail(EXIT_IO, str(exc))
        except OSError as exc:
            _fail(EXIT_IO, str(exc))
    return wrapper


def _atomic_write(path: str | Path, content: str) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(content)
    os.replace(tmp, path)


def _emit_rows(rows: list[dict], fmt: str, out=None) -> None:
    text = _format_rows(rows, fmt)
    if out:
        _atomic_write(out, text)
    else:
        click.echo(text, nl=False)


def _format_rows(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=2, sort_keys=True) + "\n"
    if not rows:
        return "\n"
    cols = list(rows[0].keys())
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(cols)
        for r in rows:
            writer.writerow([_cell(r.get(c)) for c in cols])
        return buf.getvalue()
    widths = {c: max(len(c), *(len(_cell(r.get(c))) for r in rows)) for c in cols}
    lines = ["  ".join(c.ljust(widths[c]) for c in cols)]
    for r in rows:
        lines.append("  ".join(_cell(r.get(c)).ljust(widths[c]) for c in cols))
    return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (dict, list, tuple)):
        return json.dumps(v)
    return str(v)


def _load_config_file(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise StoreError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationFailure(f"malformed config {path}: {exc}") from exc


def _campaign_config(doc: dict, seed_override: int | None) -> eng.CampaignConfig:
    seed = seed_override if seed_override is not None else int(doc.get("seed", 0))
    acq = AcquisitionConfig(
        method=doc.get("method", "qlognehvi"),
        batch_size=int(doc.get("batch_size", 10)),
        mc_samples=int(doc.get("mc_samples", 4096)),
        seed=seed,
        beta=float(doc.get("beta", 2.0)),
        rho=float(doc.get("rho", 0.05)))
    return eng.CampaignConfig(
        acquisition=acq,
        space=ComponentSet.from_dict(doc["space"]) if doc.get("space") else ComponentSet(),
        iterations=int(doc.get("iterations", 8)),
        master_seed=seed,
        pool_limit=doc.get("pool_limit"),
        pool_seed=doc.get("pool_seed"),
        viability_bounds=tuple(doc.get("viability_bounds", (0.0, 1.0))),
        oracle=OracleSpec.from_dict(doc["oracle"]) if doc.get("oracle") else None)


def _parse_initial_csv(space: ComponentSet, path: str):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        names = reader.fieldnames or []
        missing = [n for n in space.names if n not in names]
        if missing:
            raise ValidationFailure(f"initial CSV missing component columns: {missing}")
        rep_cols = [c for c in names if c.startswith("replicate_")]
        if not rep_cols:
            raise ValidationFailure("initial CSV needs replicate_N columns")
        for lineno, row in enumerate(reader, start=2):
            try:
                conc = [float(row[n]) for n in space.names]
            except (TypeError, ValueError) as exc:
                raise ValidationFailure(f"initial CSV row {lineno}: {exc}") from exc
            reps = []
            for c in rep_cols:
                cell = (row.get(c) or "").strip()
                if cell:
                    try:
                        reps.append(float(cell))
                    except ValueError as exc:
                        raise ValidationFailure(
                            f"initial CSV row {lineno}: bad replicate {cell!r}") from exc
            if not reps:
                raise ValidationFailure(f"initial CSV row {lineno}: no replicates")
            rows.append((space.formulation_from_molar(conc), reps))
    return rows


format_option = click.option("--format", "fmt",
                             type=click.Choice(["json", "csv", "table"]),
                             default="table", show_default=True)


@click.group()
@click.option("--store", envvar="CRYOBO_STORE", default="./campaigns",
              show_default=True, help="Campaign store directory "
              "(env: CRYOBO_STORE).")
@click.pass_context
def main(ctx: click.Context, store: str) -> None:
    """Batch multi-objective Bayesian optimization for formulation campaigns."""
    ctx.obj = {"store": store}


@main.command("init")
@click.option("--config", "config_path", required=True,
              help="Campaign config JSON file.")
@click.option("--initial", "initial_path", default=None,
              help="Initial observations CSV (component columns + replicate_N).")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--id", "campaign_id", default=None, help="Explicit campaign id.")
@click.pass_context
@engine_errors
def cmd_init(ctx, config_path, initial_path, seed, campaign_id):
    """Create a campaign from a config file; prints its id."""
    doc = _load_config_file(config_path)
    config = _campaign_config(doc, seed)
    initial = _parse_initial_csv(config.space, initial_path) if initial_path else []
    store = eng.CampaignStore(ctx.obj["store"])
    state = eng.create_campaign(store, config, initial,
                                campaign_id=campaign_id or doc.get("campaign_id"))
    click.echo(state.campaign_id)


@main.command("suggest")
@click.option("--campaign", required=True)
@click.option("--out", default=None, help="Write the batch sheet CSV here.")
@format_option
@click.pass_context
@engine_errors
def cmd_suggest(ctx, campaign, out, fmt):
    """Select (or return the pending) next batch; emits the batch sheet."""
    store = eng.CampaignStore(ctx.obj["store"])
    state, chosen = eng.suggest(store, campaign)
    assert state.pending is not None
    rows = []
    for f, fid, mu, sd, score in zip(chosen, state.pending.ids,
                                     state.pending.pred_mean,
                                     state.pending.pred_std, state.pending.scores):
        row = {"formulation_id": fid}
        row.update({name: c for name, c in zip(state.config.space.names,
                                               f.concentrations)})
        row.update({"pred_mean": mu, "pred_std": sd, "acq_score": score})
        rows.append(row)
    if out:
        _emit_rows(rows, "csv", out)
        click.echo(f"{len(rows)} candidates -> {out}")
    else:
        _emit_rows(rows, fmt)


@main.command("ingest")
@click.option("--campaign", required=True)
@click.option("--results", "results_path", required=True, help="Results CSV.")
@click.option("--allow-partial", is_flag=True, default=False)
@format_option
@click.pass_context
@engine_errors
def cmd_ingest(ctx, campaign, results_path, allow_partial, fmt):
    """Ingest a results CSV; prints the updated hypervolume."""
    store = eng.CampaignStore(ctx.obj["store"])
    state = store.load(campaign)
    rows = eng.parse_results_csv(state.config.space, results_path)
    state = eng.ingest_results(store, campaign, rows, allow_partial=allow_partial)
    record = state.metrics[-1]
    _emit_rows([{"iteration": record.iteration,
                 "hypervolume": record.hypervolume,
                 "status": state.status}], fmt)


@main.command("metrics")
@click.option("--campaign", required=True)
@click.option("--reference", "reference_path", default=None,
              help="JSON file with reference-front points for IGD.")
@click.option("--out", default=None)
@format_option
@click.pass_context
@engine_errors
def cmd_metrics(ctx, campaign, reference_path, out, fmt):
    """Per-iteration metric series {iteration, hypervolume, igd}."""
    store = eng.CampaignStore(ctx.obj["store"])
    state = store.load(campaign)
    igd_values = None
    if reference_path:
        doc = _load_config_file(reference_path)
        pts = doc["points"] if isinstance(doc, dict) else doc
        igd_values = eng.igd_series(state, pts)
    rows = eng.metric_rows(state, igd_values)
    _emit_rows(rows, fmt, out)


@main.command("front")
@click.option("--campaign", required=True)
@click.option("--out", default=None)
@format_option
@click.pass_context
@engine_errors
def cmd_front(ctx, campaign, out, fmt):
    """Pareto members with compositions."""
    store = eng.CampaignStore(ctx.obj["store"])
    state = store.load(campaign)
    rows = []
    for m in eng.front_members(state):
        row = {"formulation_id": m["formulation_id"]}
        row.update({name: c for name, c in zip(state.config.space.names,
                                               m["concentrations"])})
        row.update({"total_concentration": m["total_concentration"],
                    "viability": m["viability"],
                    "iteration": m["iteration"]})
        rows.append(row)
    _emit_rows(rows, fmt, out)


@main.command("enumerate")
@click.option("--config", "config_path", default=None,
              help="Config JSON with a space section (default cocktail space).")
@click.option("--out", default=None, help="Write the pool CSV here.")
@format_option
@click.pass_context
@engine_errors
def cmd_enumerate(ctx, config_path, out, fmt):
    """Enumerate the candidate pool; prints the count."""
    doc = _load_config_file(config_path) if config_path else {}
    space = ComponentSet.from_dict(doc["space"]) if doc.get("space") else ComponentSet()
    pool = enumerate_pool(space)
    if out:
        pool_to_csv(space, pool, out)
    summary = {"count": len(pool), "components": len(space.names),
               "total_min": space.total_min, "total_max": space.total_max,
               "increment": space.increment}
    if space == ComponentSet() and len(pool) != PUBLISHED_DEFAULT_POOL_COUNT:
        summary["note"] = (
            f"enumeration yields {len(pool)} formulations; a previously reported "
            f"figure for this space is {PUBLISHED_DEFAULT_POOL_COUNT}, which no "
            "documented constraint set reproduces, so the full enumeration is kept")
    _emit_rows([summary], fmt)


@main.command("bench")
@click.option("--kind", type=click.Choice(["one_d_sin_tanh", "rastrigin", "toxicity"]),
              required=True)
@click.option("--repeats", type=int, default=10, show_default=True)
@click.option("--iterations", type=int, default=8, show_default=True)
@click.option("--q", type=int, default=None, help="Batch size (kind-specific default).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--method", default="qlognehvi", show_default=True,
              help="Acquisition method (toxicity kind only).")
@click.option("--pool-limit", type=int, default=2000, show_default=True,
              help="Candidate pool subsample (toxicity kind only).")
@click.option("--mc-samples", type=int, default=512, show_default=True)
@click.option("--init-k", type=int, default=10, show_default=True)
@click.option("--noise-sd", type=float, default=0.05, show_default=True)
@click.option("--out", default=None)
@format_option
@click.pass_context
@engine_errors
def cmd_bench(ctx, kind, repeats, iterations, q, seed, method, pool_limit,
              mc_samples, init_k, noise_sd, out, fmt):
    """Synthetic benchmark: per-iteration mean±sd across seeded repeats."""
    if kind == "toxicity":
        import tempfile
        oracle = OracleSpec.toxicity_default(noise_sd=noise_sd)
        config = eng.CampaignConfig(
            acquisition=AcquisitionConfig(method=method, batch_size=q or 10,
                                          mc_samples=mc_samples, seed=seed),
            iterations=iterations, master_seed=seed, pool_limit=pool_limit,
            oracle=oracle)
        with tempfile.TemporaryDirectory() as tmp:
            stats = eng.run_synthetic_campaign(eng.CampaignStore(tmp), config,
                                               iterations, repeats, init_k=init_k)
        rows = [{"iteration": i, "mean_hypervolume": m, "sd": s}
                for i, (m, s) in enumerate(zip(stats.mean, stats.sd))]
    else:
        result = run_benchmark(kind, iterations=iterations, repeats=repeats,
                               q=q or (1 if kind == "one_d_sin_tanh" else 10),
                               seed=seed, mc_samples=max(mc_samples, 64),
                               init_low_region=(kind == "one_d_sin_tanh"))
        rows = [{"iteration": i, "mean_best_value": m, "sd": s}
                for i, (m, s) in enumerate(zip(result.mean, result.sd))]
    _emit_rows(rows, fmt, out)


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--token", default=None, help="Static auth token (optional).")
@click.pass_context
@engine_errors
def cmd_serve(ctx, host, port, token):
    """Run the HTTP service over this store."""
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(ctx.obj["store"], token=token), host=host, port=port)


if __name__ == "__main__":
    main()
