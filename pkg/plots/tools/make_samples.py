"""Regenerate the bundled sample artifacts from the simulation package.

Run from the repository root with the primary package installed:

    python plots/tools/make_samples.py

The plots package itself never imports catsim; this script is the recorded
provenance of the checked-in sample run directories.
"""

from pathlib import Path

from catsim import harness

SAMPLES = Path(__file__).resolve().parents[1] / "src/catsim_plots/samples"


def main():
    sweep_cfg = {
        "scenario": "teleport_sweep",
        "physical": {"alpha": 2.0, "dim": 32},
        "sweep": {"ratios": [3e-3, 1e-2, 3e-2, 1e-1]},
        "numerical": {"seed": 7, "n_traj": 24},
    }
    rec = harness.teleport_sweep(sweep_cfg, workers=1)
    harness.write_artifacts(rec, SAMPLES / "sweep")
    print("sweep:", [tuple(p[:2]) + (p[5],) for p in rec.points])

    memory_cfg = {
        "scenario": "memory",
        "physical": {"alpha": 2.0, "dim": 32},
        "rates": {"gamma": 0.02},
        "memory": {"rounds": 12, "teleport_after": [12], "wigner": True},
        "wigner": {"extent": 4.5, "resolution": 41},
        "numerical": {"seed": 5, "steps": 300},
    }
    rec = harness.memory_experiment(memory_cfg)
    harness.write_artifacts(rec, SAMPLES / "memory")
    print("memory rounds:", len(rec.points), "wigner:", sorted(rec.wigner))


if __name__ == "__main__":
    main()
