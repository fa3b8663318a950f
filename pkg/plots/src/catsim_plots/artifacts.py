"""Loading and validation of catsim run artifacts.

A run directory holds results.csv, meta.json (whose results_digest is the
SHA-256 of results.csv), and optionally wigner_<tag>.csv grids. All
validation errors carry the offending file and line so a corrupted artifact
is diagnosable from the CLI output alone.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ArtifactError(Exception):
    """Malformed or inconsistent run artifacts."""


@dataclass(frozen=True)
class RunArtifacts:
    scenario: str
    columns: tuple
    rows: list
    meta: dict
    wigner: dict = field(default_factory=dict)  # tag -> (x axis, p axis, grid)

    def column(self, name: str) -> list:
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]


def _parse_cell(cell: str):
    if cell == "":
        return None
    if cell in ("true", "false"):
        return cell == "true"
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return cell


def _require_float(value, path: Path, lineno: int, col: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ArtifactError(
            f"{path}, line {lineno}: column {col!r} expects a number, "
            f"got {value!r}")
    return float(value)


def _read_results(path: Path, required: tuple) -> tuple:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ArtifactError(f"{path}: {exc.strerror or exc}") from exc
    lines = text.rstrip("\n").split("\n")
    columns = tuple(lines[0].split(","))
    missing = [c for c in required if c not in columns]
    if missing:
        raise ArtifactError(
            f"{path}, line 1: header {columns} lacks required "
            f"column(s) {missing}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(columns):
            raise ArtifactError(
                f"{path}, line {lineno}: {len(cells)} cells for "
                f"{len(columns)} columns")
        rows.append(tuple(_parse_cell(c) for c in cells))
    if not rows:
        raise ArtifactError(f"{path}, line 2: no data rows")
    return text, columns, rows


def _read_wigner(path: Path) -> tuple:
    lines = path.read_text(encoding="utf-8").rstrip("\n").split("\n")
    head = lines[0].split(",")
    if not head or head[0] != "x\\p":
        raise ArtifactError(
            f"{path}, line 1: expected a 'x\\p' axis header, got {head[:1]}")
    try:
        ps = np.array([float(v) for v in head[1:]])
    except ValueError as exc:
        raise ArtifactError(f"{path}, line 1: non-numeric p axis ({exc})")
    xs, grid = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(ps) + 1:
            raise ArtifactError(
                f"{path}, line {lineno}: {len(cells)} cells for "
                f"{len(ps) + 1} columns")
        try:
            xs.append(float(cells[0]))
            grid.append([float(v) for v in cells[1:]])
        except ValueError as exc:
            raise ArtifactError(f"{path}, line {lineno}: non-numeric value "
                                f"({exc})")
    return np.array(xs), ps, np.array(grid)


_REQUIRED = {
    "sweep": ("gamma_over_omega", "infidelity", "stderr"),
    "memory": ("round", "event", "mean_n"),
}

_SCENARIOS = {"sweep": "teleport_sweep", "memory": "memory"}


def load_run(run_dir, kind: str) -> RunArtifacts:
    """Load and validate one run directory for the given figure kind."""
    run = Path(run_dir)
    results = run / "results.csv"
    meta_path = run / "meta.json"
    for p in (results, meta_path):
        if not p.is_file():
            raise ArtifactError(f"{p}: file not found")
    text, columns, rows = _read_results(results, _REQUIRED[kind])
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ArtifactError(
            f"{meta_path}, line {exc.lineno}: invalid JSON ({exc.msg})")
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    recorded = meta.get("results_digest")
    if recorded != digest:
        raise ArtifactError(
            f"{meta_path}: results_digest {recorded!r} does not match "
            f"results.csv ({digest})")
    scenario = meta.get("scenario")
    if scenario != _SCENARIOS[kind]:
        raise ArtifactError(
            f"{meta_path}: scenario {scenario!r} does not feed a "
            f"{kind!r} figure (expected {_SCENARIOS[kind]!r})")
    # numeric sanity of the columns the figure will draw
    for col in _REQUIRED[kind]:
        idx = columns.index(col)
        for off, row in enumerate(rows):
            v = row[idx]
            if col in ("event",):
                continue
            if v is not None:
                _require_float(v, results, off + 2, col)
    wigner = {}
    for p in sorted(run.glob("wigner_*.csv")):
        tag = p.stem[len("wigner_"):]
        wigner[tag] = _read_wigner(p)
    return RunArtifacts(scenario, columns, rows, meta, wigner)
