"""Fault-tolerant gadget library for the four-legged cat qubit.

Each gadget runs on an engine (see catsim.engine): noiselessly, under
Monte-Carlo noise, or under deterministic single-fault injection. Byproduct
Pauli/parity corrections are tracked in a FrameTracker and never applied
physically unless explicitly flushed.

Conventions: gadget ancilla segments use the interaction picture whose
Hamiltonian has no residual number term (the SNAP drive couples g<->f through
S; waits keep the dispersive coupling as the Hamiltonian), so heralded decay
outcomes carry the analytic rotation windows and feedback rotations are plain
number-phase pulses. The decode table for the Z-basis measurement is:
parity-even round {+ -> 0, - -> 1}; parity-odd round {- -> 0, + -> 1}
(the odd branch includes the extra ancilla phase e^{-i(pi/2)|f><f|}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import poisson

from .cat import CatCode
from .engine import FaultInjection, UnitaryEngine, enumerate_branches
from .fock import coherent_state, mode_operator
from .lindblad import JumpSpec, LindbladModel
from .models import (
    KET_G,
    AAOModel,
    AncillaSpec,
    NoiseParams,
    build_bs_model,
    build_flagged_snap_model,
    build_mod4_model,
    build_parity_model,
    build_snap_model,
    build_threshold_qubit_model,
    snap_lowpass,
    snap_phases_z,
)

__all__ = [
    "FrameTracker",
    "GadgetResult",
    "FaultInjection",
    "RetryGuardExceeded",
    "RETRY_GUARD",
    "select_threshold",
    "z_rotation_ft",
    "parity_measurement",
    "photon_loss_correction_ft",
    "x_rotation_ft",
    "xx_rotation_ft",
    "x_basis_prep_ft",
    "z_basis_measurement_ft",
    "x_basis_measurement_ft",
    "teleportation_ec",
    "flagged_snap",
]

RETRY_GUARD = 20

_PAULI_MUL = {
    ("I", "I"): "I", ("I", "X"): "X", ("I", "Y"): "Y", ("I", "Z"): "Z",
    ("X", "I"): "X", ("X", "X"): "I", ("X", "Y"): "Z", ("X", "Z"): "Y",
    ("Y", "I"): "Y", ("Y", "X"): "Z", ("Y", "Y"): "I", ("Y", "Z"): "X",
    ("Z", "I"): "Z", ("Z", "X"): "Y", ("Z", "Y"): "X", ("Z", "Z"): "I",
}


class RetryGuardExceeded(RuntimeError):
    pass


@dataclass
class FrameTracker:
    """Byproduct corrections still owed to the state: a parity bit, a logical
    Pauli, and a deterministic number-phase rotation. Composition is
    group-multiplicative (phases dropped); nothing is applied physically
    until flush."""

    parity: int = 0
    pauli: str = "I"
    rotation: float = 0.0

    def flip_parity(self):
        self.parity ^= 1

    def apply_pauli(self, p: str):
        self.pauli = _PAULI_MUL[(p, self.pauli)]

    def add_rotation(self, theta: float):
        self.rotation = math.fmod(self.rotation + theta, 2.0 * math.pi)

    def flush(self, state: np.ndarray, code: CatCode) -> np.ndarray:
        """Apply the Pauli and rotation corrections physically (codespace
        action); the parity bit is bookkeeping for decoding and stays."""
        out = np.asarray(state, complex)
        if self.pauli != "I":
            out = code.pauli(self.pauli).matrix @ out
        if self.rotation != 0.0:
            n = np.arange(code.dim)
            out = np.exp(-1j * self.rotation * n) * out
        self.pauli = "I"
        self.rotation = 0.0
        return out / np.linalg.norm(out)


@dataclass
class GadgetResult:
    outcomes: tuple
    state: np.ndarray
    frame: FrameTracker
    fault_log: tuple
    retries: int = 0
    prob: float = 1.0
    logical: int | str | None = None


def select_threshold(alpha: float, lam_target: float | None = None,
                     lam_other: float | None = None) -> int:
    """Photon-number threshold s for P_[s], minimizing the larger of the two
    Poisson misclassification tails.

    Defaults: the target leg may carry up to the worst f-map rotation pi/8
    (lam_target = 4 alpha^2 sin^2(pi/16)); the nearest populated leg sits one
    quarter turn away (lam_other = alpha^2).
    """
    lam1 = 4.0 * alpha**2 * math.sin(math.pi / 16.0) ** 2 \
        if lam_target is None else lam_target
    lam2 = alpha**2 if lam_other is None else lam_other
    best_s, best = 0, float("inf")
    for s in range(int(math.ceil(2.0 * lam2)) + 1):
        worst = max(float(poisson.sf(s, lam1)), float(poisson.cdf(s, lam2)))
        if worst < best:
            best_s, best = s, worst
    return best_s


def _majority(items):
    return max(set(items), key=lambda x: items.count(x))


def _rotation(dim: int, theta: float) -> np.ndarray:
    return np.diag(np.exp(1j * theta * np.arange(dim)))


def _embed(op: np.ndarray, dims: tuple, mode: int) -> np.ndarray:
    da, db = dims
    return np.kron(op, np.eye(db)) if mode == 0 else np.kron(np.eye(da), op)


def _run_aao(engine, aao, state, dims=None, mode=0):
    if dims is None:
        return engine.run_aao(aao, state)
    return engine.run_aao_on(aao, state, dims, mode)


def _apply(engine, state, op, dims=None, mode=0):
    if dims is None:
        return engine.apply_unitary(state, op)
    return engine.apply_unitary(state, _embed(op, dims, mode), dims, mode)


def _snap_until_done(engine, aao, anc, state, outcomes, dims=None, mode=0):
    """Loop-until-f SNAP execution: outcome g heralds dephasing (identity
    action) and retries; outcome e heralds a decay whose rotation window is
    re-centered by the feedback pulse e^{i dchi T n / 2}; outcome f is clean.
    Returns (state, retries)."""
    dim = aao.model.joint_dim // aao.model.ancilla_dim
    T = aao.model.duration
    for attempt in range(RETRY_GUARD):
        lbl, state = _run_aao(engine, aao, state, dims, mode)
        outcomes.append(("snap", lbl))
        if lbl == "f":
            return state, attempt
        if lbl == "e":
            fb = _rotation(dim, anc.dchi * T / 2.0)
            state = _apply(engine, state, fb, dims, mode)
            return state, attempt
        # outcome g: heralded dephasing, no bosonic action; retry
    raise RetryGuardExceeded("SNAP loop exceeded the retry guard")


def _wait_until_decided(engine, aao, anc, state, outcomes, tag, outcomes_ok,
                        dims=None, mode=0):
    """Loop-until-not-e for the drive-free waits (parity / mod-4 rounds).

    An e outcome heralds an f->e decay: the known phase e^{i chi_e T n} plus a
    window e^{i dchi t n} are undone by feedback (window centered), then the
    round retries. Returns (label, state, retries)."""
    dim = aao.model.joint_dim // aao.model.ancilla_dim
    T = aao.model.duration
    for attempt in range(RETRY_GUARD):
        lbl, state = _run_aao(engine, aao, state, dims, mode)
        outcomes.append((tag, lbl))
        if lbl in outcomes_ok:
            return lbl, state, attempt
        fb = _rotation(dim, -(anc.chi_e * T + anc.dchi * T / 2.0))
        state = _apply(engine, state, fb, dims, mode)
    raise RetryGuardExceeded(f"{tag} round exceeded the retry guard")


def z_rotation_ft(state, code: CatCode, anc: AncillaSpec, noise: NoiseParams,
                  engine, theta: float) -> GadgetResult:
    """1-FT Z(theta) via the error-transparent SNAP, loop-until-f."""
    if anc.dchi * anc.snap_time / 2.0 >= math.pi / 8.0:
        raise ValueError("dchi*T/2 must stay below pi/8 for the f-map")
    aao = build_snap_model(snap_phases_z(theta, code.dim), anc, noise,
                           code.dim, picture="verify")
    outcomes: list = []
    state, retries = _snap_until_done(engine, aao, anc, state, outcomes)
    return GadgetResult(tuple(outcomes), state, FrameTracker(),
                        tuple(engine.fault_log), retries, engine.prob)


def parity_measurement(state, code: CatCode, anc: AncillaSpec,
                       noise: NoiseParams, engine, dims=None, mode=0):
    """One parity wait; returns (outcome in {+,-,e}, post state). Outcome e
    feedback is the caller's job (see the loop-until helpers)."""
    aao = build_parity_model(anc, noise, code.dim, picture="verify")
    return _run_aao(engine, aao, state, dims, mode)


def photon_loss_correction_ft(state, code: CatCode, anc: AncillaSpec,
                              noise: NoiseParams, engine) -> GadgetResult:
    """1-FT photon-loss correction: three parity rounds, majority vote,
    parity-frame update on a minus vote."""
    aao = build_parity_model(anc, noise, code.dim, picture="verify")
    outcomes: list = []
    retries = 0
    votes = []
    for _ in range(3):
        lbl, state, r = _wait_until_decided(engine, aao, anc, state, outcomes,
                                            "parity", ("+", "-"))
        votes.append(lbl)
        retries += r
    frame = FrameTracker()
    vote = _majority(votes)
    if vote == "-":
        frame.flip_parity()
    return GadgetResult(tuple(outcomes), state, frame,
                        tuple(engine.fault_log), retries, engine.prob,
                        logical=vote)


def x_rotation_ft(state, code: CatCode, anc: AncillaSpec, noise: NoiseParams,
                  engine, phi: float, s: int | None = None,
                  snap_dchi: float = 0.0) -> GadgetResult:
    """X(phi) = D(alpha) S D(-2 alpha) S D(alpha) with the robust
    S = e^{i phi} P_[s] + (I - P_[s]); strict 1-FT uses dchi = 0 during the
    SNAPs (snap_dchi)."""
    dim, alpha = code.dim, abs(code.alpha)
    if float(poisson.sf(dim - 1, 4.0 * alpha**2)) > 1e-3:
        raise ValueError("truncation too small for the intermediate 2*alpha leg")
    if s is None:
        s = select_threshold(alpha, lam_target=0.0, lam_other=2.0 * alpha**2)
    snap_anc = AncillaSpec(anc.chi_f, anc.chi_f - snap_dchi, anc.omega)
    aao = build_snap_model(snap_lowpass(phi, s, dim), snap_anc, noise, dim,
                           picture="verify")
    d_in = mode_operator("displacement", dim, alpha=alpha).matrix
    d_mid = mode_operator("displacement", dim, alpha=-2.0 * alpha).matrix
    outcomes: list = []
    retries = 0
    state = engine.apply_unitary(state, d_in)
    state, r = _snap_until_done(engine, aao, snap_anc, state, outcomes)
    retries += r
    state = engine.apply_unitary(state, d_mid)
    state, r = _snap_until_done(engine, aao, snap_anc, state, outcomes)
    retries += r
    state = engine.apply_unitary(state, d_in)
    return GadgetResult(tuple(outcomes), state, FrameTracker(),
                        tuple(engine.fault_log), retries, engine.prob)


def xx_rotation_ft(state2, code: CatCode, anc: AncillaSpec,
                   noise: NoiseParams, engine, delta: float,
                   s: int | None = None, g_bs: float = 2.0,
                   snap_dchi: float = 0.0) -> GadgetResult:
    """XX(delta) = BS† (S ⊗ S) BS with S = e^{-i delta} P_[s] + (I - P_[s]);
    the two SNAPs run sequentially, each on its own ancilla."""
    dim, alpha = code.dim, abs(code.alpha)
    if float(poisson.sf(dim - 1, 2.0 * alpha**2)) > 1e-3:
        raise ValueError("truncation too small for the sqrt(2)*alpha legs")
    if s is None:
        s = select_threshold(alpha, lam_target=0.0)
    dims = (dim, dim)
    snap_anc = AncillaSpec(anc.chi_f, anc.chi_f - snap_dchi, anc.omega)
    aao = build_snap_model(snap_lowpass(-delta, s, dim), snap_anc, noise, dim,
                           picture="verify")
    outcomes: list = []
    retries = 0
    state2 = engine.run_evolution(build_bs_model(g_bs, noise, dims), state2)
    for mode in (0, 1):
        state2, r = _snap_until_done(engine, aao, snap_anc, state2, outcomes,
                                     dims=dims, mode=mode)
        retries += r
    state2 = engine.run_evolution(
        build_bs_model(g_bs, noise, dims, theta=-math.pi / 2), state2)
    return GadgetResult(tuple(outcomes), state2, FrameTracker(),
                        tuple(engine.fault_log), retries, engine.prob)


def x_basis_prep_ft(code: CatCode, anc: AncillaSpec, noise: NoiseParams,
                    engine) -> GadgetResult:
    """1-FT |+_L> preparation: coherent |alpha> then a parity round; a minus
    outcome is recorded as a parity-frame flip."""
    state = coherent_state(code.alpha, code.dim).amplitudes
    aao = build_parity_model(anc, noise, code.dim, picture="verify")
    outcomes: list = []
    lbl, state, retries = _wait_until_decided(engine, aao, anc, state,
                                              outcomes, "parity", ("+", "-"))
    frame = FrameTracker()
    if lbl == "-":
        frame.flip_parity()
    return GadgetResult(tuple(outcomes), state, frame,
                        tuple(engine.fault_log), retries, engine.prob)


def z_basis_measurement_ft(state, code: CatCode, anc: AncillaSpec,
                           noise: NoiseParams, engine,
                           dims=None, mode=0) -> GadgetResult:
    """1-FT Z-basis measurement: three rounds of parity + conditioned mod-4
    discrimination, majority vote over the per-round decodes."""
    parity_aao = build_parity_model(anc, noise, code.dim, picture="verify")
    mod4 = {
        "+": build_mod4_model(anc, noise, code.dim, picture="verify"),
        "-": build_mod4_model(anc, noise, code.dim, picture="verify",
                              f_phase=math.pi / 2.0),
    }
    decode = {"+": {"+": 0, "-": 1}, "-": {"-": 0, "+": 1}}
    outcomes: list = []
    retries = 0
    bits = []
    for _ in range(3):
        pa, state, r = _wait_until_decided(engine, parity_aao, anc, state,
                                           outcomes, "parity", ("+", "-"),
                                           dims, mode)
        retries += r
        ob, state, r = _wait_until_decided(engine, mod4[pa], anc, state,
                                           outcomes, "mod4", ("+", "-"),
                                           dims, mode)
        retries += r
        bits.append(decode[pa][ob])
    return GadgetResult(tuple(outcomes), state, FrameTracker(),
                        tuple(engine.fault_log), retries, engine.prob,
                        logical=_majority(bits))


def x_basis_measurement_ft(state, code: CatCode, anc: AncillaSpec,
                           noise: NoiseParams, engine, s: int | None = None,
                           g_bs: float = 2.0) -> GadgetResult:
    """1-FT X-basis measurement: interfere with a fresh |alpha> on a balanced
    beam splitter, then test each output mode for <= s photons (three-fold
    majority per mode). Outcome + iff exactly one mode is empty."""
    dim, alpha = code.dim, abs(code.alpha)
    if s is None:
        s = select_threshold(alpha, lam_target=0.0)
    dims = (dim, dim)
    ref = coherent_state(alpha, dim).amplitudes
    joint = np.kron(np.asarray(state, complex), ref)
    joint = engine.run_evolution(build_bs_model(g_bs, noise, dims), joint)
    thr = build_threshold_qubit_model(s, anc, noise, dim)
    outcomes: list = []
    empties = []
    for mode in (0, 1):
        votes = []
        for _ in range(3):
            lbl, joint = engine.run_aao_on(thr, joint, dims, mode)
            outcomes.append((f"thr{mode}", lbl))
            votes.append(lbl)
        empties.append(_majority(votes) == "e")
    # fault-free patterns: one empty output ("+", the legs interfere onto a
    # single port) or none ("-", both ports stay occupied). An interrogation
    # fault can fabricate a spurious vacuum herald (it post-selects the
    # exponentially small low-photon component of an occupied port) but can
    # never de-herald a genuinely empty one, so a double vacuum can only be
    # "+" plus one fault and is decoded accordingly.
    logical = "-" if not any(empties) else "+"
    return GadgetResult(tuple(outcomes), joint, FrameTracker(),
                        tuple(engine.fault_log), 0, engine.prob,
                        logical=logical)


def teleportation_ec(state, code: CatCode, anc: AncillaSpec,
                     noise: NoiseParams, engine, g_bs: float = 2.0,
                     s: int | None = None) -> GadgetResult:
    """Knill-type teleportation error correction onto a fresh mode.

    Circuit: prepare |+_L> on b; X(pi/2) on a; Z(pi/2) on both; XX(pi/2);
    Z-basis measurement of a. The logical content moves a -> b up to the
    byproduct frame X̄ (always) and Z̄ (on outcome 1).
    """
    dim = code.dim
    dims = (dim, dim)
    # the fresh mode is prepared offline: discard odd-parity preparations
    # (probability ~1/2 for a coherent input) instead of carrying an
    # odd-sector frame through gates built for the even sector
    prep_retries = 0
    prep = x_basis_prep_ft(code, anc, noise, engine)
    while prep.frame.parity != 0:
        prep_retries += 1
        if prep_retries > 32:
            raise RuntimeError("x-basis preparation kept heralding odd parity")
        prep = x_basis_prep_ft(code, anc, noise, engine)
    res_x = x_rotation_ft(state, code, anc, noise, engine, math.pi / 2.0, s=s)
    res_za = z_rotation_ft(res_x.state, code, anc, noise, engine, math.pi / 2.0)
    res_zb = z_rotation_ft(prep.state, code, anc, noise, engine, math.pi / 2.0)
    joint = np.kron(res_za.state, res_zb.state)
    res_xx = xx_rotation_ft(joint, code, anc, noise, engine, math.pi / 2.0,
                            s=s, g_bs=g_bs)
    meas = z_basis_measurement_ft(res_xx.state, code, anc, noise, engine,
                                  dims=dims, mode=0)
    frame = prep.frame
    frame.apply_pauli("X")
    if meas.logical == 1:
        frame.apply_pauli("Z")
    outcomes = (prep.outcomes + res_x.outcomes + res_za.outcomes +
                res_zb.outcomes + res_xx.outcomes + meas.outcomes)
    retries = (prep_retries + prep.retries + res_x.retries + res_za.retries +
               res_zb.retries + res_xx.retries + meas.retries)
    return GadgetResult(outcomes, meas.state, frame,
                        tuple(engine.fault_log), retries, engine.prob,
                        logical=meas.logical)


def _lift_flag(model: LindbladModel) -> LindbladModel:
    """Tensor an idle flag qubit onto an ancilla-3 model (flag ⊗ ancilla)."""
    eye2 = np.eye(2)
    jumps = []
    for j in model.jumps:
        if callable(j.operator):
            op = j.operator
            jumps.append(JumpSpec(lambda t, op=op: np.kron(eye2, op(t)),
                                  j.rate, j.label))
        else:
            jumps.append(JumpSpec(np.kron(eye2, j.operator), j.rate, j.label))
    faults = tuple(
        (k, (lambda t, op=op: np.kron(eye2, op(t))) if callable(op)
         else np.kron(eye2, op))
        for k, op in model.fault_ops)
    return LindbladModel(np.kron(eye2, model.hamiltonian), tuple(jumps), 6,
                         model.mode_dims, model.duration, faults)


def flagged_snap(state, code: CatCode, anc: AncillaSpec, noise: NoiseParams,
                 engine, phases: np.ndarray) -> GadgetResult:
    """SNAP with a flag qubit: CNOTs (flag flips iff ancilla in e) at T/2 and
    T confine a heralded decay to a half window. Outcome labels are
    "<ancilla>|<flag>"; decays in [0, T/2) end flag g, decays in [T/2, T)
    end flag e."""
    dim = code.dim
    parts = build_flagged_snap_model(np.asarray(phases, complex), anc, noise,
                                     dim)
    seg1, seg2 = (_lift_flag(m) for m in parts["segments"])
    cnot = np.kron(parts["flag_cnot"], np.eye(dim))
    flag_g = np.array([1.0, 0.0], dtype=complex)
    anc6 = np.kron(flag_g, parts["ancilla_init"])
    basis = []
    for anc_lbl, avec in (("f", (0, 0, 1)), ("e", (0, 1, 0)), ("g", (1, 0, 0))):
        for fl_lbl, fvec in (("g", (1, 0)), ("e", (0, 1))):
            basis.append((f"{anc_lbl}|{fl_lbl}",
                          np.kron(np.asarray(fvec, complex),
                                  np.asarray(avec, complex))))
    outcomes: list = []
    T = parts["segments"][0].duration * 2.0
    for attempt in range(RETRY_GUARD):
        psi = np.kron(anc6, state)
        psi = engine.segment(seg1, psi)
        psi = engine.apply_unitary(psi, cnot)
        psi = engine.segment(seg2, psi)
        psi = engine.apply_unitary(psi, cnot)
        aao6 = AAOModel(seg2, anc6, tuple(basis), None, None, "flagged-snap")
        lbl, out = engine._measure(aao6, psi)
        outcomes.append(("flagged", lbl))
        anc_lbl, fl_lbl = lbl.split("|")
        if anc_lbl == "f" and fl_lbl == "g":
            return GadgetResult(tuple(outcomes), out, FrameTracker(),
                                tuple(engine.fault_log), attempt, engine.prob,
                                logical=lbl)
        if anc_lbl == "e":
            # decay window center: T/4 for flag g, 3T/4 for flag e
            center = 0.25 * T if fl_lbl == "g" else 0.75 * T
            fb = _rotation(dim, anc.dchi * center)
            out = engine.apply_unitary(out, fb)
            return GadgetResult(tuple(outcomes), out, FrameTracker(),
                                tuple(engine.fault_log), attempt, engine.prob,
                                logical=lbl)
        state = out  # heralded dephasing or flag-only event: retry
    raise RetryGuardExceeded("flagged SNAP exceeded the retry guard")
