"""Command-line interface: run / validate / list-scenarios / export.

Exit codes: 0 success, 1 compute failure or budget refusal, 2 config
schema violation (with a line-anchored message).
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import harness


def _load(config_path):
    try:
        return harness.load_config(config_path)
    except harness.ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


@click.group()
def main():
    """Simulation harness for fault-tolerant four-legged-cat qubits."""


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="Override numerical.seed.")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--full", is_flag=True,
              help="Paper-scale working point (alpha 2.9, dim >= 60).")
@click.option("--force", is_flag=True, help="Ignore the budget guard.")
def run(config_path, out_dir, seed, workers, full, force):
    """Run the scenario in CONFIG and write results.csv / meta.json."""
    cfg = _load(config_path)
    cfg = harness.apply_overrides(cfg, seed=seed, full=full)
    try:
        est = harness.budget_guard(cfg, workers=workers, force=force)
        click.echo(f"scenario {cfg['scenario']}: estimated cost {est:.1f}s")
        record = harness.run_scenario(cfg, workers=workers)
        paths = harness.write_artifacts(record, out_dir)
    except harness.BudgetExceeded as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except Exception as exc:
        click.echo(f"error: compute failure: {type(exc).__name__}: {exc}",
                   err=True)
        sys.exit(1)
    for name in sorted(paths):
        click.echo(f"wrote {paths[name]}")
    if record.failures:
        for f in record.failures:
            click.echo(f"failure: {f}", err=True)
        sys.exit(1)


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
def validate(config_path):
    """Validate CONFIG against the shipped schema."""
    _load(config_path)
    click.echo(f"{config_path}: ok")


@main.command(name="list-scenarios")
def list_scenarios():
    """List available scenarios."""
    blurbs = {
        "teleport_sweep": "logical infidelity vs gamma/Omega "
                          "(teleportation-based EC)",
        "memory": "repeated parity rounds with periodic teleportation",
        "gadget_infidelity": "decoded infidelity table per gadget",
        "gpi_corpus": "path-independence certification of the model corpus",
        "fault_injection": "exhaustive single-fault sweep over gadgets",
    }
    for name in harness.SCENARIOS:
        click.echo(f"{name}: {blurbs[name]}")


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True,
              type=click.Path(file_okay=False))
def export(config_path, out_dir):
    """Write Wigner grids for the states in CONFIG's export block."""
    cfg = _load(config_path)
    try:
        grids = harness.export_states(cfg)
    except Exception as exc:
        click.echo(f"error: compute failure: {type(exc).__name__}: {exc}",
                   err=True)
        sys.exit(1)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for tag, (xs, grid) in sorted(grids.items()):
        path = out / f"wigner_{tag}.csv"
        path.write_bytes(
            harness.wigner_csv_text(xs, grid).encode("utf-8"))
        click.echo(f"wrote {path}")


if __name__ == "__main__":  # pragma: no cover
    main()
