"""Command-line surface: pipeline stages, trajectory export, API server.

Each pipeline subcommand is a thin wrapper over gliotwin.pipeline; the
serve subcommand starts the HTTP service over a completed run directory.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click

from gliotwin.growth import PatientParameters, TreatmentRegimen, simulate
from gliotwin.pipeline import (
    ArtifactStore,
    ConfigHashMismatch,
    RunConfig,
    make_run_config,
    reproduce,
    stage_calibrate,
    stage_cohort,
    stage_optimize,
    stage_survival,
)

EXIT_BAD_INPUT = 2


def _load_config(config_path: str | None, seed: int | None, scale: str) -> RunConfig:
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            click.echo(f"error: config file not found: {path}", err=True)
            sys.exit(EXIT_BAD_INPUT)
        payload = json.loads(path.read_text())
        cfg = RunConfig.from_dict(payload.get("config", payload))
        if seed is not None:
            cfg = dataclasses.replace(cfg, master_seed=seed)
        return cfg
    if seed is not None:
        return make_run_config(scale=scale, master_seed=seed)
    return make_run_config(scale=scale)


@click.group()
@click.option("--config", "config_path", type=str, default=None, help="Run-config JSON file.")
@click.option("--seed", type=int, default=None, help="Master seed override.")
@click.option("--scale", type=click.Choice(["desk", "paper"]), default="desk", show_default=True)
@click.option("--out", "out_dir", type=str, default="runs/default", show_default=True, help="Run directory.")
@click.option("--threads", type=int, default=1, show_default=True, help="Worker threads for per-patient stages.")
@click.pass_context
def main(ctx, config_path, seed, scale, out_dir, threads):
    """Digital-twin pipeline for risk-aware radiotherapy planning."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = _load_config(config_path, seed, scale)
    ctx.obj["out_dir"] = Path(out_dir)
    ctx.obj["threads"] = threads


def _store(ctx) -> ArtifactStore:
    return ArtifactStore(ctx.obj["out_dir"], ctx.obj["config"])


@main.command("simulate")
@click.option("--rho", type=float, required=True, help="Proliferation rate, 1/day.")
@click.option("--capacity", "K", type=float, required=True, help="Carrying capacity, cells.")
@click.option("--initial", "N_initial", type=float, required=True, help="Initial burden, cells.")
@click.option("--alpha-rt", "alpha_RT", type=float, required=True, help="Radiosensitivity, 1/Gy.")
@click.option("--doses", type=str, default="2,2,2,2,2,2", show_default=True, help="Six weekly doses, Gy/day; 'none' disables treatment.")
@click.option("--out-file", type=str, default="trajectory.csv", show_default=True)
@click.option("--test-mode", is_flag=True, help="Admit boundary parameter values (e.g. rho=0).")
@click.pass_context
def cli_simulate(ctx, rho, K, N_initial, alpha_RT, doses, out_file, test_mode):
    """Simulate one trajectory and write it as CSV (t_days, N_cells)."""
    config: RunConfig = ctx.obj["config"]
    try:
        theta = PatientParameters(rho=rho, K=K, N_initial=N_initial, alpha_RT=alpha_RT)
        regimen = None
        if doses.strip().lower() != "none":
            regimen = TreatmentRegimen(weekly_doses=tuple(float(x) for x in doses.split(",")))
        traj = simulate(theta, config.fixed, regimen, config.grid, allow_boundary=test_mode)
    except (ValueError, KeyError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_BAD_INPUT)
    traj.write_csv(out_file)
    days, values = traj.day_boundaries()
    for d, v in zip(days, values):
        click.echo(f"day {int(d):3d}  N = {v:.6e}")
    click.echo(f"wrote {out_file} ({len(traj.times)} rows)")


@main.command("cohort")
@click.pass_context
def cli_cohort(ctx):
    """Generate the virtual cohort file for the current config."""
    patients = stage_cohort(ctx.obj["config"], _store(ctx))
    click.echo(f"wrote cohort of {len(patients)} patients to {_store(ctx).cohort_path}")


@main.command("calibrate")
@click.option("--patient", "patient_ids", multiple=True, help="Calibrate only these patient ids (default: all).")
@click.pass_context
def cli_calibrate(ctx, patient_ids):
    """Calibrate cohort patients and write posterior ensembles."""
    store = _store(ctx)
    try:
        ensembles = stage_calibrate(
            ctx.obj["config"],
            store,
            threads=ctx.obj["threads"],
            patient_ids=list(patient_ids) or None,
        )
    except (ConfigHashMismatch, FileNotFoundError, KeyError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_BAD_INPUT)
    click.echo(f"{'patient':<14}{'r_hat_max':>10}{'ess_min':>10}{'accept':>8}  converged")
    for pid, ens in ensembles.items():
        d = ens.diagnostics
        click.echo(
            f"{pid:<14}{max(d.r_hat.values()):>10.4f}{min(d.ess.values()):>10.0f}"
            f"{sum(d.acceptance) / len(d.acceptance):>8.3f}  {d.converged}"
        )


@main.command("optimize")
@click.option("--patient", "patient_ids", multiple=True, help="Optimize only these patient ids (default: all).")
@click.pass_context
def cli_optimize(ctx, patient_ids):
    """Compute each patient's dose/risk Pareto front."""
    store = _store(ctx)
    try:
        fronts = stage_optimize(
            ctx.obj["config"],
            store,
            threads=ctx.obj["threads"],
            patient_ids=list(patient_ids) or None,
        )
    except (ConfigHashMismatch, FileNotFoundError, KeyError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_BAD_INPUT)
    for pid, front in fronts.items():
        soc = front.soc_reference.ttp_superquantile
        best = front.points[-1].ttp_superquantile
        click.echo(f"{pid}: SOC tail TTP {soc:.1f} d, best front point {best:.1f} d")


@main.command("survival")
@click.option("--arm", "arms", multiple=True, help='Arms to analyze, e.g. "OUU:60" (default: all).')
@click.pass_context
def cli_survival(ctx, arms):
    """Survival curves and logrank tests for treatment arms vs SOC."""
    store = _store(ctx)
    try:
        results = stage_survival(ctx.obj["config"], store, arms=list(arms) or None)
    except (ConfigHashMismatch, FileNotFoundError, KeyError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_BAD_INPUT)
    for arm, p in results["logrank_p_vs_soc"].items():
        click.echo(f"logrank {arm} vs SOC: p = {p:.4g}")


@main.command("reproduce")
@click.pass_context
def cli_reproduce(ctx):
    """Run the entire study end to end and write summary.json."""
    summary = reproduce(ctx.obj["config"], ctx.obj["out_dir"], threads=ctx.obj["threads"])
    click.echo(json.dumps(summary["median_delta_ttp_vs_soc"], indent=2, sort_keys=True))
    click.echo(f"dose reduction medians: {json.dumps(summary['dose_reduction']['median'], sort_keys=True)}")
    click.echo(f"logrank p vs SOC: {json.dumps(summary['logrank_p_vs_soc'], sort_keys=True)}")
    click.echo(f"summary written to {_store(ctx).summary_path}")


@main.command("serve")
@click.option("--host", type=str, default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.pass_context
def cli_serve(ctx, host, port):
    """Serve calibrated twins over HTTP from a completed run directory."""
    import uvicorn

    from gliotwin.service.app import create_app

    app = create_app(ctx.obj["out_dir"], ctx.obj["config"])
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
