"""catsim-plot: render figures from serialized catsim run artifacts."""

import sys

import click

from .artifacts import ArtifactError
from .render import FigureSpec, render


@click.command()
@click.option("--kind", type=click.Choice(["sweep", "memory"]), required=True,
              help="Figure kind to render.")
@click.option("--in", "run_dir", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Run directory holding results.csv and meta.json.")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Output image file (PNG).")
@click.option("--title", default=None, help="Figure title override.")
@click.option("--guide-slope", default=2.0, show_default=True,
              help="Slope of the log-log reference guide (sweep kind).")
def main(kind, run_dir, out_path, title, guide_slope):
    """Render a figure from a catsim run directory."""
    spec = FigureSpec(kind=kind, run_dir=run_dir, out_path=out_path,
                      title=title, guide_slope=guide_slope)
    try:
        render(spec)
    except ArtifactError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(out_path)


if __name__ == "__main__":  # pragma: no cover
    main()
