"""Open-system dynamics: effective Hamiltonian, no-jump propagators, jump
(Dyson) expansion into Kraus form, conditional channels, a dense master-equation
oracle, and quantum-jump Monte-Carlo trajectories.

Model restrictions used throughout: the Hamiltonian is static (all gadget and
verification models are built in interaction pictures where this holds) while
jump operators may be time dependent with static J(t)†J(t) (phase-dressed
decay/dephasing). The no-jump propagator is therefore a one-parameter family
W(dt) = exp(-i H_eff dt), realized by eigendecomposition so trajectories can
evaluate it at arbitrary jump times in O(dim^2).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "JumpSpec",
    "LindbladModel",
    "KrausTerm",
    "KrausChannel",
    "TrajectoryEnsemble",
    "effective_hamiltonian",
    "NoJumpPropagator",
    "evolve_master",
    "jump_expansion",
    "conditional_channel",
    "mc_trajectories",
    "schmidt_decompose",
    "avg_infidelity",
]


@dataclass(frozen=True)
class JumpSpec:
    """A rated jump operator; ``operator`` is a matrix or a callable t -> matrix."""

    operator: object
    rate: float
    label: str = ""

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("jump rate must be >= 0")

    def at(self, t: float) -> np.ndarray:
        op = self.operator
        return np.asarray(op(t) if callable(op) else op, dtype=complex)


@dataclass(frozen=True)
class LindbladModel:
    hamiltonian: np.ndarray
    jumps: tuple
    ancilla_dim: int
    mode_dims: tuple
    duration: float
    # picture-correct operators for deterministic fault injection, keyed by
    # fault kind; needed because rotating-frame models carry their windows in
    # the (possibly rate-zero) jump operators: ((kind, matrix-or-callable), …)
    fault_ops: tuple = ()

    def __post_init__(self):
        h = np.asarray(self.hamiltonian, dtype=complex)
        d = self.joint_dim
        if h.shape != (d, d):
            raise ValueError(f"hamiltonian shape {h.shape} != joint dim {d}")
        if np.linalg.norm(h - h.conj().T) > 1e-10 * max(1.0, np.linalg.norm(h)):
            raise ValueError("hamiltonian is not Hermitian")
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "jumps", tuple(self.jumps))
        object.__setattr__(self, "mode_dims", tuple(int(m) for m in self.mode_dims))

    @property
    def joint_dim(self) -> int:
        d = self.ancilla_dim
        for m in self.mode_dims:
            d *= m
        return d


@dataclass(frozen=True)
class KrausTerm:
    operator: np.ndarray
    weight: float
    order: int
    labels: tuple = ()
    times: tuple = ()


@dataclass(frozen=True)
class KrausChannel:
    terms: tuple

    def apply(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rho, dtype=complex)
        for t in self.terms:
            out += t.weight * (t.operator @ rho @ t.operator.conj().T)
        return out

    def total_effect(self) -> np.ndarray:
        """Sum_K w K†K; <= I within tolerance for trace-non-increasing maps."""
        d = self.terms[0].operator.shape[0]
        out = np.zeros((d, d), dtype=complex)
        for t in self.terms:
            out += t.weight * (t.operator.conj().T @ t.operator)
        return out


@dataclass(frozen=True)
class TrajectoryEnsemble:
    final_states: np.ndarray  # (n_traj, dim)
    jump_records: tuple  # per-trajectory tuple of (time, label)
    seed: int
    n_traj: int

    def average_density(self) -> np.ndarray:
        dim = self.final_states.shape[1]
        rho = np.zeros((dim, dim), dtype=complex)
        for v in self.final_states:
            rho += np.outer(v, v.conj())
        return rho / self.n_traj


def effective_hamiltonian(model: LindbladModel, t: float) -> np.ndarray:
    """H - (i/2) sum_j gamma_j J_j†(t) J_j(t)."""
    h = model.hamiltonian.astype(complex).copy()
    for j in model.jumps:
        op = j.at(t)
        h -= 0.5j * j.rate * (op.conj().T @ op)
    return h


class NoJumpPropagator:
    """W(dt) = exp(-i H_eff dt) for a static effective Hamiltonian.

    Uses eigendecomposition of the (non-Hermitian) H_eff; falls back to direct
    scipy expm with a per-dt cache if the eigenbasis is ill-conditioned.
    """

    def __init__(self, model: LindbladModel):
        h0 = effective_hamiltonian(model, 0.0)
        h1 = effective_hamiltonian(model, model.duration / 2.0)
        if np.linalg.norm(h0 - h1) > 1e-9 * max(1.0, np.linalg.norm(h0)):
            raise ValueError("effective Hamiltonian is time dependent; static required")
        self.h_eff = h0
        self.dim = h0.shape[0]
        self._cache = {}
        if np.linalg.norm(h0 - h0.conj().T) <= 1e-12 * max(1.0, np.linalg.norm(h0)):
            w, v = scipy.linalg.eigh(h0)
            self._eig = (w.astype(complex), v, v.conj().T)
        else:
            try:
                w, v = scipy.linalg.eig(h0)
                vinv = np.linalg.inv(v)
                resid = np.linalg.norm((v * w) @ vinv - h0) / max(1.0, np.linalg.norm(h0))
                cond_ok = resid < 1e-10
            except np.linalg.LinAlgError:
                cond_ok = False
            self._eig = (w, v, vinv) if cond_ok else None

    def at(self, dt: float) -> np.ndarray:
        if dt == 0.0:
            return np.eye(self.dim, dtype=complex)
        key = round(dt, 15)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if self._eig is not None:
            w, v, vinv = self._eig
            out = (v * np.exp(-1j * w * dt)) @ vinv
        else:
            out = scipy.linalg.expm(-1j * self.h_eff * dt)
        if len(self._cache) >= 4:
            self._cache.pop(next(iter(self._cache)))
        self._cache[key] = out
        return out

    def apply(self, dt: float, vec: np.ndarray) -> np.ndarray:
        """W(dt) @ vec without forming the full propagator matrix.

        Accepts a vector or a stack of columns. O(dim^2) per call via the
        eigenbasis; matters for two-mode models where the dense propagator
        itself is expensive to assemble.
        """
        vec = np.asarray(vec, dtype=complex)
        if dt == 0.0:
            return vec
        if self._eig is None:
            return self.at(dt) @ vec
        w, v, vinv = self._eig
        phase = np.exp(-1j * w * dt)
        if vec.ndim > 1:
            phase = phase[:, None]
        return v @ (phase * (vinv @ vec))


def _lindblad_rhs(model: LindbladModel, rho: np.ndarray, t: float) -> np.ndarray:
    h = model.hamiltonian
    out = -1j * (h @ rho - rho @ h)
    for j in model.jumps:
        op = j.at(t)
        jr = op @ rho
        out += j.rate * (jr @ op.conj().T - 0.5 * (op.conj().T @ jr + rho @ op.conj().T @ op))
    return out


def evolve_master(model: LindbladModel, rho0: np.ndarray, steps: int) -> np.ndarray:
    """Fixed-step 4th-order (RK4) integration of the master equation.

    Serves as the in-repo oracle for channel and trajectory code. Raises if
    the trace drifts by more than 1e-6 (step count too small).
    """
    rho = np.asarray(rho0, dtype=complex).copy()
    tr0 = float(np.real(np.trace(rho)))
    h = model.duration / steps
    t = 0.0
    for _ in range(steps):
        k1 = _lindblad_rhs(model, rho, t)
        k2 = _lindblad_rhs(model, rho + 0.5 * h * k1, t + 0.5 * h)
        k3 = _lindblad_rhs(model, rho + 0.5 * h * k2, t + 0.5 * h)
        k4 = _lindblad_rhs(model, rho + h * k3, t + h)
        rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    drift = abs(float(np.real(np.trace(rho))) - tr0)
    if drift > 1e-6:
        raise RuntimeError(f"integration unstable: trace drift {drift:.2e}; increase steps")
    return rho


def _trapezoid_weights(n_points: int, h: float) -> np.ndarray:
    w = np.full(n_points, h)
    w[0] = w[-1] = h / 2.0
    return w


def jump_expansion(model: LindbladModel, n: int, time_grid: int = 64) -> KrausChannel:
    """Dyson/jump expansion of the channel up to ``n`` jumps as a Kraus set.

    Order-q terms are W(T, t_q) sqrt(g) J ... sqrt(g) J W(t_1, 0) over ordered
    time tuples on a uniform grid, with iterated trapezoid weights. Order 0 is
    the bare no-jump propagator.
    """
    if time_grid < 2:
        raise ValueError("time_grid must be >= 2")
    n_jumps = len(model.jumps)
    total = sum(
        n_jumps**q * math.comb(time_grid + q - 1, q) for q in range(1, n + 1)
    )
    if total > 10**6:
        raise ValueError(f"term-count guard exceeded: {total} Kraus terms")

    T = model.duration
    ts = np.linspace(0.0, T, time_grid)
    h = ts[1] - ts[0]
    prop = NoJumpPropagator(model)
    terms = [KrausTerm(prop.at(T), 1.0, 0)]

    # cache jump matrices at grid times (with the sqrt(rate) folded in)
    jmats = [
        [math.sqrt(j.rate) * j.at(t) for t in ts] for j in model.jumps
    ]
    labels = [j.label or f"J{idx}" for idx, j in enumerate(model.jumps)]

    def iter_weight(idxs):
        # iterated trapezoid: outermost over [0,T], each inner over [0, t_outer]
        w = 1.0
        upper = time_grid - 1
        for i in reversed(idxs):
            if upper == 0:
                return 0.0
            w *= h / 2.0 if (i == 0 or i == upper) else h
            upper = i
        return w

    for q in range(1, n + 1):
        for jseq in itertools.product(range(n_jumps), repeat=q):
            for idxs in itertools.combinations_with_replacement(range(time_grid), q):
                w = iter_weight(idxs)
                if w == 0.0:
                    continue
                op = prop.at(ts[idxs[0]])
                for pos in range(q):
                    op = jmats[jseq[pos]][idxs[pos]] @ op
                    t_next = ts[idxs[pos + 1]] if pos + 1 < q else T
                    op = prop.at(t_next - ts[idxs[pos]]) @ op
                terms.append(
                    KrausTerm(
                        op, w, q,
                        tuple(labels[j] for j in jseq),
                        tuple(float(ts[i]) for i in idxs),
                    )
                )
    return KrausChannel(tuple(terms))


def conditional_channel(model: LindbladModel, ancilla_init: np.ndarray,
                        outcome: np.ndarray, n: int, time_grid: int = 64) -> KrausChannel:
    """Bosonic-mode Kraus set <r|G^[n]|i> for ancilla start |i> and outcome |r>.

    Terms whose block norm falls below 1e-12 are pruned.
    """
    full = jump_expansion(model, n, time_grid)
    anc = model.ancilla_dim
    mode = model.joint_dim // anc
    i_vec = np.asarray(ancilla_init, dtype=complex)
    r_vec = np.asarray(outcome, dtype=complex)
    out = []
    for t in full.terms:
        k = t.operator.reshape(anc, mode, anc, mode)
        blk = np.einsum("a,abcd,c->bd", r_vec.conj(), k, i_vec)
        if np.linalg.norm(blk) * math.sqrt(t.weight) < 1e-12:
            continue
        out.append(KrausTerm(blk, t.weight, t.order, t.labels, t.times))
    return KrausChannel(tuple(out))


def _mc_one_trajectory(prop: NoJumpPropagator, model: LindbladModel, psi0: np.ndarray,
                       rng: np.random.Generator, t_tol: float):
    """Norm-threshold quantum-jump unraveling over [0, duration]."""
    psi = psi0.astype(complex)
    t = 0.0
    T = model.duration
    record = []
    while t < T:
        r = rng.random()
        full = prop.apply(T - t, psi)
        if np.vdot(full, full).real >= r:
            psi = full / np.linalg.norm(full)
            break
        # bisect for the jump time where the survival norm crosses r
        lo, hi = 0.0, T - t
        while hi - lo > t_tol:
            mid = 0.5 * (lo + hi)
            v = prop.apply(mid, psi)
            if np.vdot(v, v).real >= r:
                lo = mid
            else:
                hi = mid
        tj = t + 0.5 * (lo + hi)
        pre = prop.apply(tj - t, psi)
        weights = []
        posts = []
        for j in model.jumps:
            v = j.at(tj) @ pre
            weights.append(j.rate * np.vdot(v, v).real)
            posts.append(v)
        wsum = sum(weights)
        if wsum <= 0:
            raise RuntimeError("jump selection degenerate: all rates vanish at draw")
        pick = int(rng.choice(len(weights), p=np.asarray(weights) / wsum))
        psi = posts[pick] / np.linalg.norm(posts[pick])
        record.append((tj, model.jumps[pick].label or f"J{pick}"))
        t = tj
    return psi, tuple(record)


def _traj_rng(seed: int, index: int, salt: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(salt, index))
    return np.random.default_rng(ss)


def mc_trajectories(model: LindbladModel, psi0: np.ndarray, n_traj: int, seed: int,
                    mode: str = "independent", schmidt_tol: float = 1e-8) -> TrajectoryEnsemble:
    """Quantum-jump Monte Carlo ensemble.

    mode='independent': psi0 lives on the model's joint space; each trajectory
    uses a random stream derived from (seed, index), so results are identical
    regardless of execution order or worker count.

    mode='shared_seed_schmidt': psi0 is a two-mode bosonic state (no ancilla);
    the single-mode model is applied to each Schmidt component of each mode
    with one shared random stream per mode, preserving inter-mode coherence.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    t_tol = model.duration / 512.0
    if mode == "independent":
        prop = NoJumpPropagator(model)
        finals = np.empty((n_traj, model.joint_dim), dtype=complex)
        records = []
        for i in range(n_traj):
            rng = _traj_rng(seed, i)
            psi, rec = _mc_one_trajectory(prop, model, psi0, rng, t_tol)
            finals[i] = psi
            records.append(rec)
        return TrajectoryEnsemble(finals, tuple(records), seed, n_traj)
    if mode == "shared_seed_schmidt":
        raise ValueError(
            "shared_seed_schmidt requires the ancilla-aware driver; "
            "use catsim.engine.shared_schmidt_step"
        )
    raise ValueError(f"unknown mode {mode!r}")


def schmidt_decompose(state: np.ndarray, dims: tuple, tol: float = 1e-10) -> list:
    """Schmidt components of a two-mode pure state.

    Returns [(weight, u, v)] sorted by weight descending; components are kept
    until the discarded weight is below tol.
    """
    da, db = dims
    m = np.asarray(state, dtype=complex).reshape(da, db)
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    w = s**2
    out = []
    discarded = float(w.sum())
    for k in range(len(s)):
        if discarded <= tol:
            break
        out.append((float(w[k]), u[:, k].copy(), vh[k, :].copy()))
        discarded -= float(w[k])
    return out


def avg_infidelity(channel: KrausChannel, target: np.ndarray, projector: np.ndarray) -> float:
    """Qubit average infidelity 1 - (2 F_e + 1)/3 of a channel against a target
    unitary, both restricted to a rank-2 codespace projector."""
    p = np.asarray(projector, dtype=complex)
    t = np.asarray(target, dtype=complex)
    fe = 0.0
    for term in channel.terms:
        tr = np.trace(p @ t.conj().T @ term.operator @ p) / 2.0
        fe += term.weight * abs(tr) ** 2
    return 1.0 - (2.0 * fe + 1.0) / 3.0
