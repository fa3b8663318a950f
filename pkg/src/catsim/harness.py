"""Experiment orchestration: config ingestion, scenario runners, persistence.

Scenarios cover the headline experiments (teleportation sweeps, logical
memory with periodic teleportation, GPI certification of the shipped model
corpus, gadget infidelity tables, single-fault injection suites) plus
Wigner-grid export for downstream plotting.  Every run is deterministic
given (config, seed): Monte-Carlo streams are keyed by point and shot
index, and results are aggregated by index, never by completion order.
"""

from __future__ import annotations

import hashlib
import json
import math
import multiprocessing
import platform
import re
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import scipy
import yaml

from . import __version__
from .cat import build_cat, decoded_fidelity, default_error_family
from .engine import FAULT_KINDS, FaultInjection, MCEngine, UnitaryEngine
from .fock import coherent_state, fock_state, mode_operator
from .gadgets import (
    photon_loss_correction_ft,
    teleportation_ec,
    x_basis_measurement_ft,
    x_basis_prep_ft,
    x_rotation_ft,
    xx_rotation_ft,
    z_basis_measurement_ft,
    z_rotation_ft,
)
from .lindblad import evolve_master
from .models import (
    KET_E,
    KET_F,
    KET_G,
    KET_MINUS,
    KET_PLUS,
    AncillaSpec,
    NoiseParams,
    build_flagged_snap_model,
    build_parity_model,
    build_snap_model,
    snap_phases_z,
)
from .verify import check_finite_pi, check_gpi, check_gpi_flagged, \
    numeric_gpi_crosscheck

SCENARIOS = ("teleport_sweep", "memory", "gadget_infidelity", "gpi_corpus",
             "fault_injection")

GADGET_NAMES = ("z_rotation", "photon_loss_correction", "x_rotation",
                "xx_rotation", "x_prep", "z_measurement", "x_measurement",
                "teleportation")

_GEF = (("g", KET_G), ("e", KET_E), ("f", KET_F))
_PME = (("+", KET_PLUS), ("-", KET_MINUS), ("e", KET_E))


class ConfigError(Exception):
    """Configuration rejected by the schema (CLI exit code 2)."""


class BudgetExceeded(Exception):
    """Estimated cost above the configured budget (CLI exit code 1)."""


# ------------------------------------------------------------- configuration


def _schema() -> dict:
    text = resources.files("catsim").joinpath("configs/schema.json").read_text(
        encoding="utf-8")
    return json.loads(text)


def load_config(path) -> dict:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = (mark.line + 1) if mark is not None else 1
        raise ConfigError(f"{path}:{line}: not parseable: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}:1: top level must be a mapping")
    validate_config(cfg, source_text=text, source_name=str(path))
    return cfg


def _anchor_line(text: str, token) -> int:
    if text and token:
        for i, line in enumerate(text.splitlines(), start=1):
            if str(token) in line:
                return i
    return 1


def validate_config(cfg: dict, source_text: str = "",
                    source_name: str = "<config>") -> None:
    """Validate against the shipped schema; raise ConfigError with a
    line-anchored message on failure (unknown keys are rejected)."""
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.path))
    if not errors:
        return
    err = errors[0]
    token = err.path[-1] if err.path else None
    if token is None and "Additional properties" in err.message:
        # pull the offending key out of the validator message
        quoted = re.findall(r"'([^']+)'", err.message)
        token = quoted[0] if quoted else None
    line = _anchor_line(source_text, token)
    where = "/".join(str(p) for p in err.path) or "<root>"
    raise ConfigError(f"{source_name}:{line}: at {where}: {err.message}")


def apply_overrides(cfg: dict, seed: int | None = None,
                    full: bool = False) -> dict:
    """Return a copy with CLI overrides folded in; --full selects the
    paper-scale working point (alpha 2.9, dim >= 60)."""
    out = json.loads(json.dumps(cfg))
    if seed is not None:
        out.setdefault("numerical", {})["seed"] = int(seed)
    if full:
        phys = out.setdefault("physical", {})
        phys["alpha"] = 2.9
        phys["dim"] = max(int(phys.get("dim", 0)), 60)
    return out


def config_digest(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _phys(cfg):
    p = cfg.get("physical", {})
    return {
        "chi_f": float(p.get("chi_f", 1.0)),
        "omega": float(p.get("omega", 0.3)),
        "g_bs": float(p.get("g_bs", 2.0)),
        "dchi": float(p.get("dchi", 0.0)),
        "alpha": float(p.get("alpha", 2.0)),
        "dim": int(p.get("dim", 32)),
    }


def _num(cfg):
    n = cfg.get("numerical", {})
    return {
        "seed": int(n.get("seed", 7)),
        "n_traj": int(n.get("n_traj", 16)),
        "steps": int(n.get("steps", 400)),
    }


# ------------------------------------------------------------------ records


@dataclass
class RunRecord:
    """One completed experiment: per-point results keyed by index plus
    everything needed to reproduce them bit-for-bit."""

    scenario: str
    columns: tuple
    points: list
    config: dict
    seed: int
    wall_time_s: float = 0.0
    wigner: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def digest(self) -> str:
        return config_digest(self.config)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def results_csv_text(record: RunRecord) -> str:
    lines = [",".join(record.columns)]
    for row in record.points:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def parse_results_csv(text: str) -> tuple:
    """Loss-free parse-back of results_csv_text output."""
    lines = text.rstrip("\n").split("\n")
    cols = tuple(lines[0].split(","))
    rows = []
    for line in lines[1:]:
        row = []
        for cell in line.split(","):
            if cell == "":
                row.append(None)
            elif cell in ("true", "false"):
                row.append(cell == "true")
            else:
                try:
                    row.append(int(cell))
                except ValueError:
                    try:
                        row.append(float(cell))
                    except ValueError:
                        row.append(cell)
        rows.append(tuple(row))
    return cols, rows


def wigner_csv_text(xs: np.ndarray, grid: np.ndarray) -> str:
    """Row-major W(x, p) grid; first row/column carry the axes."""
    lines = ["x\\p," + ",".join(repr(float(p)) for p in xs)]
    for i, x in enumerate(xs):
        lines.append(repr(float(x)) + "," +
                     ",".join(repr(float(v)) for v in grid[i]))
    return "\n".join(lines) + "\n"


def write_artifacts(record: RunRecord, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_text = results_csv_text(record)
    (out / "results.csv").write_bytes(csv_text.encode("utf-8"))
    paths = {"results": out / "results.csv"}
    for tag, (xs, grid) in sorted(record.wigner.items()):
        p = out / f"wigner_{tag}.csv"
        p.write_bytes(wigner_csv_text(xs, grid).encode("utf-8"))
        paths[f"wigner_{tag}"] = p
    meta = {
        "scenario": record.scenario,
        "config": record.config,
        "config_digest": record.digest,
        "results_digest": hashlib.sha256(
            csv_text.encode("utf-8")).hexdigest(),
        "seed": record.seed,
        "wall_time_s": record.wall_time_s,
        "versions": {
            "catsim": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    (out / "meta.json").write_bytes(
        (json.dumps(meta, sort_keys=True, indent=2) + "\n").encode("utf-8"))
    paths["meta"] = out / "meta.json"
    return paths


# ------------------------------------------------------------------- wigner


def wigner_grid(state, extent: float, resolution: int):
    """W(x, p) via the displaced-parity expectation
    W(beta) = (2/pi) <D(beta) e^{i pi n} D^dag(beta)>, beta = (x + i p)/sqrt(2);
    normalized so the grid integral is ~1.  Accepts a ket or density matrix.

    The state is embedded in a padded Fock space sized so the displaced
    state at the grid corners still fits (truncation guard), and D(-beta)
    is factored into per-axis displacements so only 2*resolution matrix
    exponentials are needed (a global phase drops from the parity
    expectation)."""
    state = np.asarray(state, dtype=complex)
    dim = state.shape[0]
    if state.ndim == 2:
        w, v = np.linalg.eigh(state)
        comps = [(float(w[k]), v[:, k]) for k in range(dim)
                 if w[k] > 1e-9]
    else:
        comps = [(1.0, state / np.linalg.norm(state))]
    occ = np.max(np.abs(np.stack([c for _, c in comps])), axis=0)
    n_top = int(np.max(np.nonzero(occ > 1e-10)[0])) if np.any(occ > 1e-10) \
        else 0
    b_max = float(extent)  # |beta|^2 = (x^2 + p^2)/2 <= extent^2
    n_mean = (b_max + math.sqrt(n_top + 1.0)) ** 2
    dim_pad = max(dim, int(math.ceil(n_mean + 6.0 * math.sqrt(n_mean) + 10)))
    parity = np.power(-1.0, np.arange(dim_pad))
    xs = np.linspace(-extent, extent, int(resolution))
    # D(-beta) = D(-x/sqrt2) D(-i p/sqrt2) up to a global phase
    dx_ops = [mode_operator("displacement", dim_pad,
                            alpha=-x / math.sqrt(2.0)).matrix for x in xs]
    dp_ops = [mode_operator("displacement", dim_pad,
                            alpha=-1j * p / math.sqrt(2.0)).matrix
              for p in xs]
    padded = []
    for wk, c in comps:
        vec = np.zeros(dim_pad, dtype=complex)
        vec[:dim] = c
        padded.append((wk, vec))
    grid = np.zeros((len(xs), len(xs)))
    for j in range(len(xs)):
        mid = [(wk, dp_ops[j] @ vec) for wk, vec in padded]
        for i in range(len(xs)):
            val = 0.0
            for wk, vec in mid:
                shifted = dx_ops[i] @ vec
                val += wk * float(np.sum(parity * np.abs(shifted) ** 2))
            grid[i, j] = val / math.pi
    # truncation guard: the corner displacement must preserve the norm
    corner = dx_ops[0] @ (dp_ops[0] @ padded[0][1])
    if abs(np.linalg.norm(corner) - 1.0) > 1e-6:
        raise ValueError("truncation too small for the requested extent")
    # convention: integral over dx dp of W is 1, W_vac(0,0) = 1/pi
    return xs, grid


# --------------------------------------------------- shared scenario helpers


_DECODER_CACHE: dict = {}


def _decoder(alpha: float, dim: int):
    key = (alpha, dim)
    if key not in _DECODER_CACHE:
        code = build_cat(alpha, dim)
        _DECODER_CACHE[key] = (code, default_error_family(code))
    return _DECODER_CACHE[key]


def _frame_correction(frame, dim: int, code) -> np.ndarray:
    n = np.arange(dim)
    corr = np.diag(np.exp(-1j * frame.rotation * n)).astype(complex)
    if frame.pauli != "I":
        corr = corr @ code.pauli(frame.pauli).matrix
    return corr


def _teleport_logical_infidelity(res, code, errors) -> float:
    """1 - decoded fidelity of the reduced mode-b state against |+_L>,
    with the tracked frame applied first."""
    dim = code.dim
    joint = np.asarray(res.state, complex).reshape(dim, dim)
    rho_b = joint.T @ joint.conj()
    tr = float(np.trace(rho_b).real)
    if tr <= 0:
        return 1.0
    rho_b /= tr
    corr = _frame_correction(res.frame, dim, code)
    rho_b = corr @ rho_b @ corr.conj().T
    target = np.array([1.0, 1.0], dtype=complex) / math.sqrt(2.0)
    return 1.0 - decoded_fidelity(rho_b, target, code, errors)


def _teleport_shot(args):
    (idx, shot, alpha, dim, omega, dchi, gamma, seed, n_traj) = args
    code, errors = _decoder(alpha, dim)
    anc = AncillaSpec(chi_f=1.0, chi_e=1.0 - dchi, omega=omega)
    noise = NoiseParams.from_gamma(gamma) if gamma > 0 else NoiseParams()
    psi = code.plus.amplitudes
    eng = MCEngine(seed=seed, index=idx * n_traj + shot)
    try:
        res = teleportation_ec(psi, code, anc, noise, eng)
        return (idx, shot, _teleport_logical_infidelity(res, code, errors))
    except Exception as exc:  # aggregated; reported as a compute failure
        return (idx, shot, ("error", f"{type(exc).__name__}: {exc}"))


def _pool_map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with multiprocessing.Pool(processes=min(workers, len(tasks))) as pool:
        return pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers)))


# ------------------------------------------------------------ teleport sweep


def teleport_sweep(cfg: dict, workers: int = 1) -> RunRecord:
    """Logical infidelity of one round of teleportation-based error
    correction versus the ancilla decay rate (gamma_fe = gamma_eg = gamma,
    gamma_phi = gamma/4, kappa = gamma/10)."""
    phys, num = _phys(cfg), _num(cfg)
    ratios = [float(r) for r in cfg.get("sweep", {}).get(
        "ratios", [1e-4, 3e-4, 1e-3, 3e-3])]
    n_traj, seed = num["n_traj"], num["seed"]
    tasks = []
    for idx, ratio in enumerate(ratios):
        gamma = ratio * phys["omega"]
        for shot in range(n_traj if gamma > 0 else 1):
            tasks.append((idx, shot, phys["alpha"], phys["dim"],
                          phys["omega"], phys["dchi"], gamma, seed, n_traj))
    t0 = time.perf_counter()
    results = _pool_map(_teleport_shot, tasks, workers)
    failures = [r for r in results if isinstance(r[2], tuple)]
    per_point: dict = {}
    for idx, shot, infid in results:
        if not isinstance(infid, tuple):
            per_point.setdefault(idx, {})[shot] = infid
    points = []
    for idx, ratio in enumerate(ratios):
        shots = per_point.get(idx, {})
        vals = np.array([shots[k] for k in sorted(shots)])
        if len(vals) == 0:
            points.append((idx, ratio, ratio * phys["omega"], phys["dchi"],
                           0, None, None))
            continue
        mean = float(np.mean(vals))
        stderr = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) \
            if len(vals) > 1 else 0.0
        points.append((idx, ratio, ratio * phys["omega"], phys["dchi"],
                       len(vals), mean, stderr))
    return RunRecord(
        "teleport_sweep",
        ("index", "gamma_over_omega", "gamma", "dchi", "n_traj",
         "infidelity", "stderr"),
        points, cfg, seed, time.perf_counter() - t0,
        failures=[f[2][1] for f in failures])


# ------------------------------------------------------------------- memory


def _nonselective_parity_round(rho_mode, aao, steps: int) -> np.ndarray:
    """One lab-frame parity round applied as a channel: ancilla prepared,
    joint master evolution, then non-selective readout (partial trace)."""
    dim = rho_mode.shape[0]
    anc = np.outer(aao.ancilla_init, aao.ancilla_init.conj())
    rho = np.kron(anc, rho_mode)
    rho = evolve_master(aao.model, rho, steps)
    anc_dim = rho.shape[0] // dim
    rho4 = rho.reshape(anc_dim, dim, anc_dim, dim)
    return np.einsum("ambn->mn", rho4 * np.eye(anc_dim)[:, None, :, None])


def _teleport_channel(rho_mode, code, anc, noise) -> np.ndarray:
    """Teleportation applied to a mixed state through its eigenvectors,
    taking the greedy (most likely) outcome branch for each."""
    dim = code.dim
    w, v = np.linalg.eigh(rho_mode)
    out = np.zeros((dim, dim), dtype=complex)
    total = 0.0
    for k in range(dim - 1, -1, -1):
        if w[k] < 1e-4 or total > 1.0 - 1e-4:
            break
        eng = UnitaryEngine()
        res = teleportation_ec(v[:, k], code, anc, noise, eng)
        joint = res.state.reshape(dim, dim)
        rho_b = joint.T @ joint.conj()
        rho_b /= float(np.trace(rho_b).real)
        corr = _frame_correction(res.frame, dim, code)
        out += float(w[k]) * (corr @ rho_b @ corr.conj().T)
        total += float(w[k])
    return out / float(np.trace(out).real)


def memory_experiment(cfg: dict, workers: int = 1) -> RunRecord:
    """Repeated parity rounds under loss/ancilla noise with periodic
    teleportation; tracks <n> every round and decoded infidelity every
    second round (plus Wigner snapshots fresh/decayed/restored)."""
    phys, num = _phys(cfg), _num(cfg)
    mem = cfg.get("memory", {})
    rounds = int(mem.get("rounds", 40))
    teleport_after = sorted(int(r) for r in mem.get("teleport_after", [rounds]))
    want_wigner = bool(mem.get("wigner", True))
    wig = cfg.get("wigner", {})
    extent = float(wig.get("extent", 6.0))
    resolution = int(wig.get("resolution", 41))
    gamma = float(cfg.get("rates", {}).get("gamma", 0.02))
    noise = NoiseParams.from_gamma(gamma) if gamma > 0 else NoiseParams()
    anc = AncillaSpec(chi_f=1.0, chi_e=1.0 - phys["dchi"], omega=phys["omega"])
    code, errors = _decoder(phys["alpha"], phys["dim"])
    dim = phys["dim"]
    aao = build_parity_model(anc, noise, dim, picture="verify")
    n_op = np.arange(dim)
    target = np.array([1.0, 1.0], dtype=complex) / math.sqrt(2.0)

    def mean_n(rho):
        return float(np.real(np.sum(n_op * np.diag(rho))))

    def infid(rho):
        return 1.0 - decoded_fidelity(rho, target, code, errors)

    t0 = time.perf_counter()
    rho = np.outer(code.plus.amplitudes, code.plus.amplitudes.conj())
    points = [(0, 0, "init", mean_n(rho), infid(rho))]
    wigner = {}
    if want_wigner:
        wigner["fresh"] = wigner_grid(rho, extent, resolution)
    idx = 1
    for rnd in range(1, rounds + 1):
        rho = _nonselective_parity_round(rho, aao, num["steps"])
        rho /= float(np.trace(rho).real)
        points.append((idx, rnd, "parity", mean_n(rho),
                       infid(rho) if rnd % 2 == 0 else None))
        idx += 1
        if rnd in teleport_after:
            if want_wigner and "decayed" not in wigner:
                wigner["decayed"] = wigner_grid(rho, extent, resolution)
            rho = _teleport_channel(rho, code, anc, noise)
            points.append((idx, rnd, "teleport", mean_n(rho), infid(rho)))
            idx += 1
            if want_wigner and "restored" not in wigner:
                wigner["restored"] = wigner_grid(rho, extent, resolution)
    return RunRecord(
        "memory", ("index", "round", "event", "mean_n", "infidelity"),
        points, cfg, num["seed"], time.perf_counter() - t0, wigner=wigner)


# --------------------------------------------------------------- GPI corpus


DEFAULT_CORPUS = (
    {"kind": "snap", "dchi_t": 0.0},
    {"kind": "snap", "dchi_t": 0.4 * math.pi},
    {"kind": "snap", "dchi_t": 0.7 * math.pi},
    {"kind": "parity", "dchi_t": 0.4 * math.pi},
    {"kind": "flagged", "dchi_t": 0.7 * math.pi},
)


def _corpus_anc(kind: str, dchi_t: float, omega: float) -> AncillaSpec:
    T = math.pi if kind == "parity" else math.pi / (2.0 * omega)
    return AncillaSpec(chi_f=1.0, chi_e=1.0 - dchi_t / T, omega=omega)


def gpi_corpus(cfg: dict, workers: int = 1) -> RunRecord:
    """Certify each corpus model: PI if the finite path-independence check
    passes, GPI if only the graded check passes, fail otherwise; numeric
    crosscheck disagreements are collected as failures."""
    phys, num = _phys(cfg), _num(cfg)
    models = cfg.get("corpus", {}).get("models", list(DEFAULT_CORPUS))
    gamma = float(cfg.get("rates", {}).get("gamma", 1e-3))
    noise = NoiseParams(gamma_fe=gamma, gamma_eg=gamma, gamma_phi=gamma / 4.0)
    dim = phys["dim"]
    code, _ = _decoder(phys["alpha"], dim)
    s_matrix = snap_phases_z(0.7, dim)
    t0 = time.perf_counter()
    points, failures = [], []
    for idx, entry in enumerate(models):
        kind, dchi_t = entry["kind"], float(entry["dchi_t"])
        anc = _corpus_anc(kind, dchi_t, phys["omega"])
        cross = None
        if kind == "snap":
            aao = build_snap_model(s_matrix, anc, noise, dim)
            ok, _w = check_finite_pi(aao.model, list(_GEF), "g", 1)
            if ok:
                verdict, residual = "PI", 0.0
            else:
                rep = check_gpi(aao.model, code, list(_GEF), "g", 1)
                verdict = "GPI" if rep.verdict else "fail"
                residual = float(rep.worst_kl_residual)
            if verdict != "fail":
                cross = bool(numeric_gpi_crosscheck(
                    aao.model, code, list(_GEF), "g", 1)["pass"])
        elif kind == "parity":
            aao = build_parity_model(anc, noise, dim, picture="verify")
            rep = check_gpi(aao.model, code, list(_PME), KET_PLUS, 1)
            verdict = "GPI" if rep.verdict else "fail"
            residual = float(rep.worst_kl_residual)
            if verdict != "fail":
                cross = bool(numeric_gpi_crosscheck(
                    aao.model, code, list(_PME), KET_PLUS, 1)["pass"])
        elif kind == "flagged":
            flagged = build_flagged_snap_model(s_matrix, anc, noise, dim)
            rep = check_gpi_flagged(flagged["segments"], code, list(_GEF),
                                    "g", 1)
            verdict = "GPI" if rep.verdict else "fail"
            residual = float(rep.worst_kl_residual)
        else:  # pragma: no cover - schema forbids
            raise ValueError(f"unknown corpus kind {kind!r}")
        if cross is False:
            failures.append(
                f"model {idx} ({kind}, dchi_t={dchi_t:g}): numeric "
                f"crosscheck disagrees with the algebraic verdict")
        points.append((idx, kind, dchi_t, verdict, residual, cross))
    return RunRecord(
        "gpi_corpus",
        ("index", "model", "dchi_t", "verdict", "kl_residual", "crosscheck"),
        points, cfg, num["seed"], time.perf_counter() - t0,
        failures=failures)


# ------------------------------------------------- gadget runners (shared)


def _run_gadget(name: str, code, anc, noise, engine):
    """Run one gadget on its canonical input; returns (result, target
    logical ket or None for measurement gadgets, expected logical)."""
    plus = np.array([1.0, 1.0], dtype=complex) / math.sqrt(2.0)
    if name == "z_rotation":
        res = z_rotation_ft(code.plus.amplitudes, code, anc, noise, engine,
                            0.7)
        tgt = np.array([1.0, np.exp(1j * 0.7)], complex) / math.sqrt(2.0)
        return res, tgt, None
    if name == "photon_loss_correction":
        res = photon_loss_correction_ft(code.plus.amplitudes, code, anc,
                                        noise, engine)
        return res, plus, "+"
    if name == "x_rotation":
        res = x_rotation_ft(code.plus.amplitudes, code, anc, noise, engine,
                            0.4)
        return res, plus, None
    if name == "xx_rotation":
        joint = np.kron(code.plus.amplitudes, code.plus.amplitudes)
        res = xx_rotation_ft(joint, code, anc, noise, engine,
                             math.pi / 8.0)
        return res, None, None
    if name == "x_prep":
        res = x_basis_prep_ft(code, anc, noise, engine)
        return res, plus, None
    if name == "z_measurement":
        res = z_basis_measurement_ft(code.zero.amplitudes, code, anc, noise,
                                     engine)
        return res, None, 0
    if name == "x_measurement":
        res = x_basis_measurement_ft(code.plus.amplitudes, code, anc, noise,
                                     engine)
        return res, None, "+"
    if name == "teleportation":
        res = teleportation_ec(code.plus.amplitudes, code, anc, noise, engine)
        return res, plus, None
    raise ValueError(f"unknown gadget {name!r}")


def _gadget_fidelity(name: str, res, tgt, code, errors) -> float | None:
    dim = code.dim
    state = np.asarray(res.state, complex)
    if name == "xx_rotation":
        # XX(delta) leaves |+,+> fixed up to a global phase, so score each
        # mode's reduced state against |+_L>; a single correctable fault
        # mixes each mode within the decodable error family.
        joint = state.reshape(dim, dim)
        corr = _frame_correction(res.frame, dim, code)
        plus = np.array([1.0, 1.0], dtype=complex) / math.sqrt(2.0)
        fids = []
        for rho in (joint @ joint.conj().T, joint.T @ joint.conj()):
            tr = float(np.trace(rho).real)
            if tr <= 0:
                return 0.0
            rho = corr @ (rho / tr) @ corr.conj().T
            fids.append(decoded_fidelity(rho, plus, code, errors))
        return min(fids)
    if tgt is None:
        return None
    if name == "teleportation":
        return 1.0 - _teleport_logical_infidelity(res, code, errors)
    corr = _frame_correction(res.frame, dim, code)
    vec = corr @ state
    nrm = np.linalg.norm(vec)
    if nrm <= 0:
        return 0.0
    vec = vec / nrm
    return decoded_fidelity(np.outer(vec, vec.conj()), tgt, code, errors)


def _gadget_infid_task(args):
    name, alpha, dim, omega, dchi, gamma = args
    code, errors = _decoder(alpha, dim)
    anc = AncillaSpec(chi_f=1.0, chi_e=1.0 - dchi, omega=omega)
    noise = NoiseParams.from_gamma(gamma) if gamma > 0 else NoiseParams()
    eng = UnitaryEngine()
    try:
        res, tgt, want = _run_gadget(name, code, anc, noise, eng)
    except Exception as exc:
        return (name, ("error", f"{type(exc).__name__}: {exc}"), None, None)
    fid = _gadget_fidelity(name, res, tgt, code, errors)
    infid = None if fid is None else max(0.0, 1.0 - fid)
    correct = None if want is None else (res.logical == want)
    return (name, infid, correct, res.retries)


def gadget_infidelity(cfg: dict, workers: int = 1) -> RunRecord:
    """Decoded infidelity (or logical-outcome correctness, for measurement
    gadgets) of each gadget under the configured noise, greedy branch."""
    phys, num = _phys(cfg), _num(cfg)
    names = cfg.get("gadgets", list(GADGET_NAMES))
    gamma = float(cfg.get("rates", {}).get("gamma", 0.0))
    tasks = [(n, phys["alpha"], phys["dim"], phys["omega"], phys["dchi"],
              gamma) for n in names]
    t0 = time.perf_counter()
    results = _pool_map(_gadget_infid_task, tasks, workers)
    points, failures = [], []
    for idx, out in enumerate(results):
        if isinstance(out[1], tuple):
            failures.append(f"{out[0]}: {out[1][1]}")
            points.append((idx, out[0], None, None, None))
        else:
            name, infid, correct, retries = out
            points.append((idx, name, infid, correct, retries))
    return RunRecord(
        "gadget_infidelity",
        ("index", "gadget", "infidelity", "outcome_correct", "retries"),
        points, cfg, num["seed"], time.perf_counter() - t0,
        failures=failures)


# ------------------------------------------------------------ fault suites


def count_gadget_steps(name: str, code, anc, noise) -> int:
    """Number of engine steps in the fault-free greedy run of a gadget."""
    eng = UnitaryEngine()
    _run_gadget(name, code, anc, noise, eng)
    return eng._step + 1


def _fault_task(args):
    (name, loc, kind, t, alpha, dim, omega, dchi, gamma) = args
    code, errors = _decoder(alpha, dim)
    anc = AncillaSpec(chi_f=1.0, chi_e=1.0 - dchi, omega=omega)
    noise = NoiseParams.from_gamma(gamma) if gamma > 0 else NoiseParams()
    mode = 0
    eng = UnitaryEngine(fault=FaultInjection(loc, t, kind, mode))
    try:
        res, tgt, want = _run_gadget(name, code, anc, noise, eng)
    except ValueError as exc:
        return (name, loc, kind, t, "skipped", None, str(exc))
    except Exception as exc:
        return (name, loc, kind, t, "error", None,
                f"{type(exc).__name__}: {exc}")
    if not eng.fault_log:
        return (name, loc, kind, t, "not_reached", None, None)
    if tgt is None and want is not None:
        return (name, loc, kind, t, "ok",
                1.0 if res.logical == want else 0.0, None)
    fid = _gadget_fidelity(name, res, tgt, code, errors)
    return (name, loc, kind, t, "ok", fid, None)


def fault_injection(cfg: dict, workers: int = 1) -> RunRecord:
    """Exhaustive single-fault sweep: every (location, kind, time) over the
    configured gadgets, greedy branch, decoded fidelity per run."""
    phys, num = _phys(cfg), _num(cfg)
    fcfg = cfg.get("fault", {})
    names = fcfg.get("gadgets", ["z_rotation", "x_prep"])
    kinds = fcfg.get("kinds", list(FAULT_KINDS))
    n_times = int(fcfg.get("n_times", 4))
    times = [(i + 0.5) / n_times for i in range(n_times)]
    gamma = float(cfg.get("rates", {}).get("gamma", 0.0))
    code, _ = _decoder(phys["alpha"], phys["dim"])
    anc = AncillaSpec(chi_f=1.0, chi_e=1.0 - phys["dchi"],
                      omega=phys["omega"])
    noise = NoiseParams.from_gamma(gamma) if gamma > 0 else NoiseParams()
    tasks = []
    for name in names:
        n_steps = count_gadget_steps(name, code, anc, noise)
        for loc in range(n_steps):
            for kind in kinds:
                for t in times:
                    tasks.append((name, loc, kind, t, phys["alpha"],
                                  phys["dim"], phys["omega"], phys["dchi"],
                                  gamma))
    t0 = time.perf_counter()
    results = _pool_map(_fault_task, tasks, workers)
    points, failures = [], []
    for idx, row in enumerate(results):
        name, loc, kind, t, status, fid, note = row
        if status == "error":
            failures.append(f"{name} loc={loc} kind={kind} t={t:g}: {note}")
        points.append((idx, name, loc, kind, t, status, fid))
    return RunRecord(
        "fault_injection",
        ("index", "gadget", "location", "kind", "time", "status",
         "decoded_fidelity"),
        points, cfg, num["seed"], time.perf_counter() - t0,
        failures=failures)


# ---------------------------------------------------------- export / budget


def export_states(cfg: dict) -> dict:
    """Wigner grids for the states named in the config's export block."""
    exp = cfg.get("export", {})
    wig = cfg.get("wigner", {})
    extent = float(wig.get("extent", 6.0))
    resolution = int(wig.get("resolution", 121))
    out = {}
    for entry in exp.get("states", []):
        tag, kind = entry["tag"], entry["kind"]
        dim = int(entry.get("dim", 32))
        if kind == "vacuum":
            state = fock_state(0, dim).amplitudes
        elif kind == "fock":
            state = fock_state(int(entry.get("n", 1)), dim).amplitudes
        elif kind == "cat_plus":
            alpha = float(entry.get("alpha", 2.0))
            state = coherent_state(alpha, dim).amplitudes.copy()
            state[1::2] = 0.0
            state /= np.linalg.norm(state)
        else:  # pragma: no cover - schema forbids
            raise ValueError(f"unknown export kind {kind!r}")
        out[tag] = wigner_grid(state, extent, resolution)
    return out


def _probe_time(cfg: dict) -> float:
    """Time one representative unit of work for the configured scenario."""
    phys = _phys(cfg)
    scenario = cfg["scenario"]
    t0 = time.perf_counter()
    if scenario == "teleport_sweep":
        ratios = cfg.get("sweep", {}).get("ratios", [3e-3])
        gamma = max(float(r) for r in ratios) * phys["omega"]
        _teleport_shot((0, 0, phys["alpha"], phys["dim"], phys["omega"],
                        phys["dchi"], gamma, 0, 1))
    elif scenario == "memory":
        code, _ = _decoder(phys["alpha"], phys["dim"])
        gamma = float(cfg.get("rates", {}).get("gamma", 0.02))
        noise = NoiseParams.from_gamma(gamma) if gamma > 0 else NoiseParams()
        anc = AncillaSpec(1.0, 1.0 - phys["dchi"], phys["omega"])
        aao = build_parity_model(anc, noise, phys["dim"], picture="verify")
        rho = np.outer(code.plus.amplitudes, code.plus.amplitudes.conj())
        _nonselective_parity_round(rho, aao, _num(cfg)["steps"])
    elif scenario == "gadget_infidelity":
        _gadget_infid_task(("z_rotation", phys["alpha"], phys["dim"],
                            phys["omega"], phys["dchi"], 0.0))
    elif scenario == "fault_injection":
        _fault_task(("z_rotation", 0, "dephase", 0.5, phys["alpha"],
                     phys["dim"], phys["omega"], phys["dchi"], 0.0))
    else:  # gpi_corpus: one finite-PI check at the configured dim
        noise = NoiseParams(gamma_fe=1e-3, gamma_eg=1e-3, gamma_phi=2.5e-4)
        aao = build_snap_model(snap_phases_z(0.7, phys["dim"]),
                               _corpus_anc("snap", 0.0, phys["omega"]),
                               noise, phys["dim"])
        check_finite_pi(aao.model, list(_GEF), "g", 1)
    return time.perf_counter() - t0


def _unit_count(cfg: dict) -> int:
    scenario = cfg["scenario"]
    num = _num(cfg)
    if scenario == "teleport_sweep":
        ratios = cfg.get("sweep", {}).get("ratios", [1e-4, 3e-4, 1e-3, 3e-3])
        return sum(num["n_traj"] if float(r) > 0 else 1 for r in ratios)
    if scenario == "memory":
        mem = cfg.get("memory", {})
        rounds = int(mem.get("rounds", 40))
        # teleports and Wigner snapshots add roughly another half
        return rounds + rounds // 2 + 2
    if scenario == "gadget_infidelity":
        return len(cfg.get("gadgets", GADGET_NAMES))
    if scenario == "fault_injection":
        fcfg = cfg.get("fault", {})
        names = fcfg.get("gadgets", ["z_rotation", "x_prep"])
        kinds = fcfg.get("kinds", FAULT_KINDS)
        n_times = int(fcfg.get("n_times", 4))
        # ~8 engine steps per gadget on average
        return len(names) * 8 * len(kinds) * n_times
    return len(cfg.get("corpus", {}).get("models", DEFAULT_CORPUS)) * 3


def estimate_cost_s(cfg: dict, workers: int = 1) -> float:
    """Conservative wall-time estimate: one timed probe unit scaled by the
    unit count, plus per-worker warm-up (each process rebuilds its
    propagator caches), with a safety margin."""
    probe = _probe_time(cfg)
    units = _unit_count(cfg)
    workers = max(1, workers)
    return 2.0 * probe * (units / workers + min(workers, units))


def budget_guard(cfg: dict, workers: int = 1, force: bool = False) -> float:
    est = estimate_cost_s(cfg, workers)
    budget = float(cfg.get("budget_s", 1800.0))
    if est > budget and not force:
        raise BudgetExceeded(
            f"estimated cost {est:.1f}s exceeds budget {budget:.1f}s "
            f"(use --force to run anyway)")
    return est


_RUNNERS = {
    "teleport_sweep": teleport_sweep,
    "memory": memory_experiment,
    "gadget_infidelity": gadget_infidelity,
    "gpi_corpus": gpi_corpus,
    "fault_injection": fault_injection,
}


def run_scenario(cfg: dict, workers: int = 1) -> RunRecord:
    scenario = cfg["scenario"]
    return _RUNNERS[scenario](cfg, workers=workers)
