"""Figure rendering from validated run artifacts.

Two figure kinds:

- sweep: log-log teleportation infidelity versus gamma/Omega with MC error
  bars and a quadratic slope guide.
- memory: mean photon number versus parity round, with the Wigner snapshots
  (fresh / decayed / restored) as insets when present.

Rendering is deterministic: fixed style, fixed fonts, and PNG metadata
pinned so identical inputs give identical output bytes.
"""

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .artifacts import ArtifactError, RunArtifacts, load_run  # noqa: E402

_STYLE = {
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.family": "DejaVu Sans",
    "font.size": 9.0,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "catsim-plot",
}

_PNG_METADATA = {"Software": "catsim-plot"}


@dataclass(frozen=True)
class FigureSpec:
    kind: str  # "sweep" | "memory"
    run_dir: str
    out_path: str
    title: str | None = None
    guide_slope: float = 2.0
    style: dict = field(default_factory=dict)


def _render_sweep(run: RunArtifacts, spec: FigureSpec, ax):
    ratios, means, errs = [], [], []
    for x, y, e in zip(run.column("gamma_over_omega"),
                       run.column("infidelity"), run.column("stderr")):
        if y is None or y <= 0:
            continue
        ratios.append(float(x))
        means.append(float(y))
        errs.append(float(e or 0.0))
    if not ratios:
        raise ArtifactError(
            f"{spec.run_dir}/results.csv: no positive infidelity points "
            f"to plot")
    ratios, means, errs = map(np.asarray, (ratios, means, errs))
    order = np.argsort(ratios)
    ratios, means, errs = ratios[order], means[order], errs[order]
    ax.errorbar(ratios, means, yerr=errs, fmt="o-", capsize=3,
                color="#1f6fb4", label="teleportation EC")
    # quadratic guide anchored at the largest rate point
    guide_x = np.array([ratios[0] / 1.5, ratios[-1] * 1.5])
    guide_y = means[-1] * (guide_x / ratios[-1]) ** spec.guide_slope
    ax.plot(guide_x, guide_y, "--", color="#888888",
            label=f"slope {spec.guide_slope:g} guide")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"$\gamma/\Omega$")
    ax.set_ylabel("logical infidelity")
    ax.legend(frameon=False)
    ax.set_title(spec.title or "Teleportation error-correction sweep")


def _render_memory(run: RunArtifacts, spec: FigureSpec, fig, ax):
    rounds, means = [], []
    teleports = []
    for rnd, event, n in zip(run.column("round"), run.column("event"),
                             run.column("mean_n")):
        if event in ("init", "parity"):
            rounds.append(int(rnd))
            means.append(float(n))
        elif event == "teleport":
            teleports.append((int(rnd), float(n)))
    ax.plot(rounds, means, "o-", ms=3, color="#1f6fb4",
            label="parity rounds")
    if teleports:
        tx, ty = zip(*teleports)
        ax.plot(tx, ty, "s", ms=6, color="#c23b22", label="after teleport")
    ax.set_xlabel("parity round")
    ax.set_ylabel(r"$\langle n \rangle$")
    ax.legend(frameon=False, loc="lower left")
    ax.set_title(spec.title or "Cat-qubit memory under repeated parity checks")
    # Wigner insets across the top, in storyline order
    tags = [t for t in ("fresh", "decayed", "restored") if t in run.wigner]
    tags += [t for t in sorted(run.wigner) if t not in tags]
    for k, tag in enumerate(tags[:3]):
        xs, ps, grid = run.wigner[tag]
        sub = ax.inset_axes([0.08 + 0.32 * k, 0.62, 0.26, 0.33])
        lim = float(np.abs(grid).max()) or 1.0
        sub.imshow(grid.T, origin="lower", cmap="RdBu_r",
                   vmin=-lim, vmax=lim,
                   extent=(xs[0], xs[-1], ps[0], ps[-1]))
        sub.set_xticks([])
        sub.set_yticks([])
        sub.set_title(tag, fontsize=7, pad=2)


def render(spec: FigureSpec) -> str:
    """Validate the run directory and write the figure; returns out_path."""
    if spec.kind not in ("sweep", "memory"):
        raise ArtifactError(f"unknown figure kind {spec.kind!r}")
    run = load_run(spec.run_dir, spec.kind)
    if spec.kind == "memory" and run.wigner and len(run.wigner) < 3:
        # partial snapshot sets still render; full sets get the 3 insets
        pass
    with plt.rc_context({**_STYLE, **spec.style}):
        fig, ax = plt.subplots(figsize=(5.0, 3.4), layout="constrained")
        try:
            if spec.kind == "sweep":
                _render_sweep(run, spec, ax)
            else:
                _render_memory(run, spec, fig, ax)
            fig.savefig(spec.out_path, format="png",
                        metadata=dict(_PNG_METADATA))
        finally:
            plt.close(fig)
    return spec.out_path
