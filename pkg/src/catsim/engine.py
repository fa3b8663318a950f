"""Execution engines for gadget circuits.

A gadget is a sequence of steps: instantaneous unitaries, ancilla-assisted
segments (evolve, then measure the ancilla), and measurement-free evolutions
(beam splitters). Engines differ in how they realize a step:

- UnitaryEngine: dense no-jump evolution, outcomes chosen by a pluggable
  chooser (greedy for the deterministic path, enumerating for exhaustive
  branch analysis), with optional deterministic single-fault injection at a
  (step, time-fraction) location.
- MCEngine: quantum-jump Monte-Carlo trajectories with a per-shot random
  stream derived from (seed, shot index), so results are independent of
  worker count and execution order. Two-mode steps use the shared-stream
  Schmidt evolution: one trajectory realization drawn from the aggregate
  norm is applied linearly to every Schmidt component, preserving inter-mode
  coherence.

Ancilla measurements are instantaneous and perfect; displacements are
instantaneous and noiseless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fock import mode_operator
from .lindblad import (
    LindbladModel,
    NoJumpPropagator,
    _mc_one_trajectory,
    _traj_rng,
    schmidt_decompose,
)

__all__ = [
    "FaultInjection",
    "GreedyChooser",
    "SamplingChooser",
    "enumerate_branches",
    "UnitaryEngine",
    "MCEngine",
    "shared_schmidt_step",
]

FAULT_KINDS = ("a", "ef", "ge", "dephase")


@dataclass(frozen=True)
class FaultInjection:
    """Exactly one fault, injected deterministically at a gadget location.

    location: global step index within the run; time: fraction of that step's
    duration; kind: 'a' (photon loss), 'ef' (|e><f| decay), 'ge' (|g><e|
    decay) or 'dephase'; mode: target mode for 'a' in multi-mode steps.
    """

    location: int
    time: float
    kind: str
    mode: int = 0

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise ValueError(f"unknown fault kind {self.kind!r}")
        if not 0.0 <= self.time <= 1.0:
            raise ValueError("fault time must be a fraction in [0, 1]")


class GreedyChooser:
    """Always takes the most probable outcome (the deterministic path)."""

    def choose(self, probs: np.ndarray) -> int:
        return int(np.argmax(probs))


class SamplingChooser:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def choose(self, probs: np.ndarray) -> int:
        p = np.asarray(probs, dtype=float)
        return int(self.rng.choice(len(p), p=p / p.sum()))


class _EnumChooser:
    """Replays a forced outcome prefix, then records branch alternatives."""

    def __init__(self, prefix: tuple, floor: float):
        self.prefix = prefix
        self.floor = floor
        self.path: list = []
        self.prob = 1.0
        self.alternatives: list = []

    def choose(self, probs: np.ndarray) -> int:
        depth = len(self.path)
        viable = [i for i, p in enumerate(probs) if p > self.floor]
        if depth < len(self.prefix):
            k = self.prefix[depth]
        else:
            if not viable:
                k = int(np.argmax(probs))
            else:
                k = viable[0]
                for j in viable[1:]:
                    self.alternatives.append(tuple(self.path) + (j,))
        self.path.append(k)
        self.prob *= float(probs[k])
        return k


def enumerate_branches(run_fn, prob_floor: float = 1e-9, max_branches: int = 10000):
    """Depth-first enumeration of all outcome branches of a gadget run.

    ``run_fn(chooser)`` must execute the gadget with outcome decisions
    delegated to the chooser. Returns [(branch probability, result)] covering
    every branch whose decisions each exceed ``prob_floor``.
    """
    out = []
    stack = [()]
    while stack:
        prefix = stack.pop()
        ch = _EnumChooser(prefix, prob_floor)
        res = run_fn(ch)
        out.append((ch.prob, res))
        stack.extend(ch.alternatives)
        if len(out) + len(stack) > max_branches:
            raise RuntimeError("branch enumeration exceeded the guard")
    return out


_PROP_CACHE: dict = {}


def _shared_prop(model: LindbladModel) -> NoJumpPropagator:
    """Process-wide propagator cache, keyed by model identity.

    Model builders memoize their outputs, so repeated gadget runs hand the
    same model object to every engine; the stored model reference keeps
    id() keys from being recycled.
    """
    cached = _PROP_CACHE.get(id(model))
    if cached is None or cached[0] is not model:
        if len(_PROP_CACHE) >= 32:
            _PROP_CACHE.pop(next(iter(_PROP_CACHE)))
        cached = (model, NoJumpPropagator(model))
        _PROP_CACHE[id(model)] = cached
    return cached[1]


def _mode_loss_operator(model: LindbladModel, mode: int) -> np.ndarray:
    ops = []
    for k, d in enumerate(model.mode_dims):
        ops.append(mode_operator("annihilation", d).matrix if k == mode else np.eye(d))
    joint = ops[0]
    for o in ops[1:]:
        joint = np.kron(joint, o)
    return np.kron(np.eye(model.ancilla_dim), joint)


def _fault_operator(model: LindbladModel, kind: str, mode: int = 0,
                    delta_e: complex = 1.0, delta_f: complex = 2.0) -> np.ndarray:
    anc = model.ancilla_dim
    md = model.joint_dim // anc
    if kind == "a":
        return _mode_loss_operator(model, mode)
    if anc in (3, 6):
        if kind == "ef":
            op = np.zeros((3, 3), complex); op[1, 2] = 1.0
        elif kind == "ge":
            op = np.zeros((3, 3), complex); op[0, 1] = 1.0
        else:
            op = np.diag([0.0, delta_e, delta_f]).astype(complex)
        if anc == 6:  # flag qubit ⊗ three-level ancilla
            op = np.kron(np.eye(2), op)
    elif anc == 2:
        if kind == "ge":
            op = np.zeros((2, 2), complex); op[0, 1] = 1.0
        elif kind == "dephase":
            op = np.diag([0.0, delta_e]).astype(complex)
        else:
            raise ValueError(f"fault kind {kind!r} needs a three-level ancilla")
    else:
        raise ValueError(f"ancilla fault on a model without an ancilla")
    return np.kron(op, np.eye(md))


def _resolve_fault(model: LindbladModel, kind: str, mode: int,
                   t: float) -> np.ndarray:
    """Picture-correct fault operator: prefer the model's declared fault
    operators (which carry any rotating-frame windows), falling back to the
    bare lab-frame construction."""
    if kind == "a":
        return _mode_loss_operator(model, mode)
    declared = dict(model.fault_ops).get(kind)
    if declared is not None:
        return np.asarray(declared(t) if callable(declared) else declared,
                          dtype=complex)
    return _fault_operator(model, kind, mode)


class UnitaryEngine:
    """Dense no-jump engine with optional deterministic fault injection."""

    def __init__(self, chooser=None, fault: FaultInjection | None = None):
        self.chooser = chooser if chooser is not None else GreedyChooser()
        self.fault = fault
        self.fault_log: list = []
        self.prob = 1.0
        self._step = -1

    def next_step(self) -> int:
        self._step += 1
        return self._step

    def _prop(self, model: LindbladModel) -> NoJumpPropagator:
        return _shared_prop(model)

    def _segment_operator(self, model: LindbladModel, step: int) -> np.ndarray:
        """Full-step propagator, with the fault spliced in when it lands here."""
        prop = self._prop(model)
        if self.fault is not None and self.fault.location == step:
            t1 = self.fault.time * model.duration
            f = _resolve_fault(model, self.fault.kind, self.fault.mode, t1)
            self.fault_log.append(("injected", step, t1, self.fault.kind))
            return prop.at(model.duration - t1) @ f @ prop.at(t1)
        return prop.at(model.duration)

    def segment(self, model: LindbladModel, psi: np.ndarray) -> np.ndarray:
        """Vector path: applies the propagator in the eigenbasis, so the
        dense step matrix is never assembled (it is large for two modes)."""
        step = self.next_step()
        prop = self._prop(model)
        if self.fault is not None and self.fault.location == step:
            t1 = self.fault.time * model.duration
            f = _resolve_fault(model, self.fault.kind, self.fault.mode, t1)
            self.fault_log.append(("injected", step, t1, self.fault.kind))
            return prop.apply(model.duration - t1, f @ prop.apply(t1, psi))
        return prop.apply(model.duration, psi)

    def apply_unitary(self, state: np.ndarray, u: np.ndarray,
                      dims: tuple | None = None, mode: int = 0) -> np.ndarray:
        """Instantaneous (noiseless) unitary; still a fault location for 'a'."""
        step = self.next_step()
        if self.fault is not None and self.fault.location == step:
            if self.fault.kind != "a":
                raise ValueError("only photon-loss faults make sense at a "
                                 "displacement/unitary step")
            dims = dims if dims is not None else (len(state),)
            fake = LindbladModel(np.zeros((int(np.prod(dims)),) * 2), (), 1,
                                 tuple(dims), 1.0)
            state = _fault_operator(fake, "a", self.fault.mode) @ state
            self.fault_log.append(("injected", step, 0.0, "a"))
        return u @ state

    def _check_branch_total(self, total: float):
        if total > 0 and np.isfinite(total):
            return
        if self.fault_log:
            # e.g. an e->g decay fault on a branch that never populates the
            # e level: the event has probability zero, so the injected run
            # is undefined rather than failed
            raise ValueError(
                "injected fault amplitude vanishes on this branch "
                "(zero-probability fault event)")
        raise RuntimeError("all measurement branches have zero probability")

    def _measure(self, aao, psi: np.ndarray):
        model = aao.model
        anc = model.ancilla_dim
        md = model.joint_dim // anc
        m = psi.reshape(anc, md).copy()
        if aao.residual is not None:
            for row in range(1, anc):
                m[row] = aao.residual @ m[row]
        amps = [np.conj(vec) @ m for _, vec in aao.meas_basis]
        probs = np.array([float(np.vdot(a, a).real) for a in amps])
        total = probs.sum()
        self._check_branch_total(total)
        k = self.chooser.choose(probs / total)
        self.prob *= probs[k] / total
        out = amps[k] / np.linalg.norm(amps[k])
        return aao.meas_basis[k][0], out

    def run_aao(self, aao, state: np.ndarray):
        """One ancilla-assisted segment on a single-mode state."""
        psi = np.kron(np.asarray(aao.ancilla_init, complex), state)
        psi = self.segment(aao.model, psi)
        return self._measure(aao, psi)

    def _conditional_blocks(self, aao, step: int) -> list:
        """Per-outcome mode operators <r| W_step (|i> ⊗ ·), residual included."""
        model = aao.model
        anc = model.ancilla_dim
        md = model.joint_dim // anc
        w = self._segment_operator(model, step).reshape(anc, md, anc, md)
        i_vec = np.asarray(aao.ancilla_init, complex)
        rows = np.einsum("abcd,c->abd", w, i_vec)  # (anc, md, md)
        if aao.residual is not None:
            rows = rows.copy()
            for r in range(1, anc):
                rows[r] = aao.residual @ rows[r]
        return [np.einsum("a,abd->bd", np.conj(vec), rows)
                for _, vec in aao.meas_basis]

    def run_aao_on(self, aao, state2: np.ndarray, dims: tuple, mode: int):
        """Ancilla-assisted segment acting on one mode of a two-mode state."""
        da, db = dims
        kraus = self._conditional_blocks(aao, self.next_step())
        m = np.asarray(state2, complex).reshape(da, db)
        branches = [k @ m if mode == 0 else m @ k.T for k in kraus]
        probs = np.array([float(np.linalg.norm(b) ** 2) for b in branches])
        total = probs.sum()
        self._check_branch_total(total)
        k = self.chooser.choose(probs / total)
        self.prob *= probs[k] / total
        out = branches[k] / np.linalg.norm(branches[k])
        return aao.meas_basis[k][0], out.reshape(da * db)

    def run_evolution(self, model: LindbladModel, state: np.ndarray) -> np.ndarray:
        """Measurement-free segment (e.g. a beam splitter); renormalized."""
        psi = self.segment(model, np.asarray(state, complex))
        return psi / np.linalg.norm(psi)


class MCEngine(UnitaryEngine):
    """Quantum-jump Monte-Carlo engine; one trajectory per run instance."""

    def __init__(self, seed: int, index: int = 0,
                 fault: FaultInjection | None = None):
        self.rng = _traj_rng(seed, index)
        super().__init__(SamplingChooser(self.rng), fault)
        self.seed = seed
        self.index = index

    def segment(self, model: LindbladModel, psi: np.ndarray) -> np.ndarray:
        step = self.next_step()
        prop = self._prop(model)
        if self.fault is not None and self.fault.location == step:
            t1 = self.fault.time * model.duration
            f = _resolve_fault(model, self.fault.kind, self.fault.mode, t1)
            self.fault_log.append(("injected", step, t1, self.fault.kind))
            return prop.apply(model.duration - t1, f @ prop.apply(t1, psi))
        if not model.jumps:
            return prop.apply(model.duration, psi)
        nrm = np.linalg.norm(psi)
        out, rec = _mc_one_trajectory(self._prop(model), model, psi / nrm,
                                      self.rng, model.duration / 512.0)
        self.fault_log.extend(("jump", step, t, lbl) for t, lbl in rec)
        return out * nrm

    def run_aao_on(self, aao, state2: np.ndarray, dims: tuple, mode: int):
        model = aao.model
        if self.fault is not None or not model.jumps:
            return super().run_aao_on(aao, state2, dims, mode)
        da, db = dims
        anc = model.ancilla_dim
        md = model.joint_dim // anc
        m = np.asarray(state2, complex).reshape(da, db)
        if mode == 0:
            comps = schmidt_decompose(m.reshape(da * db), (da, db))
        else:
            comps = schmidt_decompose(np.ascontiguousarray(m.T).reshape(db * da),
                                      (db, da))
        active = [u for (_, u, _) in comps]    # components on the driven mode
        passive = [v for (_, _, v) in comps]   # spectator-mode partners
        cols = np.stack([math.sqrt(w) * np.kron(aao.ancilla_init, c)
                         for (w, _, _), c in zip(comps, active)], axis=1)
        step = self.next_step()
        cols, rec = shared_schmidt_step(self._prop(model), model, cols,
                                        self.rng, model.duration / 512.0)
        self.fault_log.extend(("jump", step, t, lbl) for t, lbl in rec)
        blocks = cols.reshape(anc, md, cols.shape[1]).copy()
        if aao.residual is not None:
            for r in range(1, anc):
                blocks[r] = aao.residual @ blocks[r]
        amps = [np.einsum("a,amk->mk", np.conj(vec), blocks)
                for _, vec in aao.meas_basis]
        probs = np.array([float(np.linalg.norm(a) ** 2) for a in amps])
        total = probs.sum()
        k = self.chooser.choose(probs / total)
        self.prob *= probs[k] / total
        chosen = amps[k]  # (md, n_comp): driven-mode components
        out = np.zeros((da, db), complex)
        for j, p in enumerate(passive):
            if mode == 0:
                out += np.outer(chosen[:, j], p)
            else:
                out += np.outer(p, chosen[:, j])
        out /= np.linalg.norm(out)
        return aao.meas_basis[k][0], out.reshape(da * db)


def shared_schmidt_step(prop: NoJumpPropagator, model: LindbladModel,
                        cols: np.ndarray, rng: np.random.Generator,
                        t_tol: float):
    """One jump-trajectory realization applied linearly to stacked components.

    ``cols`` holds joint (ancilla ⊗ active-mode) vectors as columns, weights
    folded in. Jump times and choices are drawn from the aggregate norm, so
    the realized operator is the same for every column — the update is linear
    and preserves coherence with the passive mode. Returns (columns, record).
    """
    t = 0.0
    T = model.duration
    cols = cols / np.linalg.norm(cols)
    record = []
    while t < T:
        r = rng.random()
        full = prop.apply(T - t, cols)
        if np.linalg.norm(full) ** 2 >= r:
            cols = full / np.linalg.norm(full)
            break
        lo, hi = 0.0, T - t
        while hi - lo > t_tol:
            mid = 0.5 * (lo + hi)
            v = prop.apply(mid, cols)
            if np.linalg.norm(v) ** 2 >= r:
                lo = mid
            else:
                hi = mid
        tj = t + 0.5 * (lo + hi)
        pre = prop.apply(tj - t, cols)
        weights = []
        posts = []
        for j in model.jumps:
            v = j.at(tj) @ pre
            weights.append(j.rate * np.linalg.norm(v) ** 2)
            posts.append(v)
        wsum = sum(weights)
        if wsum <= 0:
            raise RuntimeError("jump selection degenerate: all rates vanish at draw")
        pick = int(rng.choice(len(weights), p=np.asarray(weights) / wsum))
        cols = posts[pick] / np.linalg.norm(posts[pick])
        record.append((tj, model.jumps[pick].label or f"J{pick}"))
        t = tj
    return cols, tuple(record)
