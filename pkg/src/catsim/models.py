"""Builders for the ancilla-assisted-operation (AAO) Lindblad models.

Ancilla basis order is (g, e, f) = indices (0, 1, 2). Two interaction pictures
are provided, both with static Hamiltonians:

- picture='verify': rotating frame of the full dispersive coupling
  -(chi_f |f><f| + chi_e |e><e|) ⊗ n. The SNAP drive becomes
  Omega(|f><g| ⊗ S + h.c.) with no residual number term; the f->e decay picks
  up the time-dependent phase e^{-i dchi t n}. This is the picture whose
  conditional channels have simple closed forms, used by the certification
  module.

- picture='sim': rotating frame of -chi_f(|f><f| + |e><e|) ⊗ n. The SNAP
  Hamiltonian gains a static dchi |e><e| ⊗ n term, the f->e decay is static,
  and the e->g decay carries e^{i chi_f t n} (or the conservative fixed
  e^{i pi n / 4} option). The frame change leaves a residual rotation
  e^{i chi_f T n} on the e/f ancilla levels which must be applied physically
  before measurement; builders return it alongside the model. For a parity
  round (chi_f T = pi) that residual is exactly the parity kick.

Rates and frequencies are in angular units of chi_f (dimensionless time
t * chi_f) unless the caller chooses otherwise; only ratios enter results.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .fock import check_dim, mode_operator
from .lindblad import JumpSpec, LindbladModel

__all__ = [
    "AncillaSpec",
    "NoiseParams",
    "AAOModel",
    "snap_phases_z",
    "snap_lowpass",
    "build_snap_model",
    "build_parity_model",
    "build_mod4_model",
    "build_idle_model",
    "build_threshold_qubit_model",
    "build_bs_model",
    "build_flagged_snap_model",
    "KET_G",
    "KET_E",
    "KET_F",
    "KET_PLUS",
    "KET_MINUS",
]

KET_G = np.array([1.0, 0.0, 0.0], dtype=complex)
KET_E = np.array([0.0, 1.0, 0.0], dtype=complex)
KET_F = np.array([0.0, 0.0, 1.0], dtype=complex)
KET_PLUS = np.array([1.0, 0.0, 1.0], dtype=complex) / math.sqrt(2)
KET_MINUS = np.array([1.0, 0.0, -1.0], dtype=complex) / math.sqrt(2)

_PG = np.diag([1.0, 0.0, 0.0]).astype(complex)
_PE = np.diag([0.0, 1.0, 0.0]).astype(complex)
_PF = np.diag([0.0, 0.0, 1.0]).astype(complex)
_FG = np.zeros((3, 3), complex); _FG[2, 0] = 1.0  # |f><g|
_EF = np.zeros((3, 3), complex); _EF[1, 2] = 1.0  # |e><f|
_GE = np.zeros((3, 3), complex); _GE[0, 1] = 1.0  # |g><e|


@dataclass(frozen=True)
class AncillaSpec:
    """Three-level ancilla with dispersive shifts chi_e, chi_f and drive Omega."""

    chi_f: float = 1.0
    chi_e: float = 1.0
    omega: float = 0.3

    def __post_init__(self):
        if self.omega > 0.5 * self.chi_f:
            raise ValueError("drive too strong: Omega must be <= 0.5 chi_f")

    @property
    def dchi(self) -> float:
        return self.chi_f - self.chi_e

    @property
    def snap_time(self) -> float:
        return math.pi / (2.0 * self.omega)

    @property
    def parity_time(self) -> float:
        return math.pi / self.chi_f


@dataclass(frozen=True)
class NoiseParams:
    kappa: float = 0.0
    gamma_fe: float = 0.0
    gamma_eg: float = 0.0
    gamma_phi: float = 0.0
    delta_e: complex = 1.0
    delta_f: complex = 2.0

    def __post_init__(self):
        for r in (self.kappa, self.gamma_fe, self.gamma_eg, self.gamma_phi):
            if r < 0:
                raise ValueError("rates must be >= 0")

    @classmethod
    def from_gamma(cls, gamma: float) -> "NoiseParams":
        """Standard ratio set: gamma_fe = gamma_eg = gamma, gamma_phi = gamma/4,
        kappa = gamma/10."""
        return cls(kappa=gamma / 10.0, gamma_fe=gamma, gamma_eg=gamma,
                   gamma_phi=gamma / 4.0)


@dataclass(frozen=True)
class AAOModel:
    """A Lindblad model plus the measurement/bookkeeping data a gadget needs."""

    model: LindbladModel
    ancilla_init: np.ndarray
    meas_basis: tuple  # ordered tuple of (label, ancilla vector)
    residual: np.ndarray | None = None  # mode rotation on e/f before measurement
    ideal_unitary: np.ndarray | None = None  # target bosonic action (success branch)
    description: str = ""


def snap_phases_z(theta: float, dim: int) -> np.ndarray:
    """S = P0 + P3 + e^{i theta}(P1 + P2): error-transparent Z(theta) phases."""
    n = np.arange(dim)
    ph = np.where((n % 4 == 1) | (n % 4 == 2), theta, 0.0)
    return np.diag(np.exp(1j * ph))


def snap_lowpass(phi: float, s: int, dim: int) -> np.ndarray:
    """S = e^{i phi} P_[s] + (I - P_[s]): phase on the <= s photon subspace."""
    n = np.arange(dim)
    ph = np.where(n <= s, phi, 0.0)
    return np.diag(np.exp(1j * ph))


def _mode_jumps(noise: NoiseParams, anc_dim: int, dim: int) -> list:
    out = []
    if noise.kappa > 0:
        a = mode_operator("annihilation", dim).matrix
        out.append(JumpSpec(np.kron(np.eye(anc_dim), a), noise.kappa, "loss"))
    return out


def _dephase_op(noise: NoiseParams, dim: int, anc_dim: int = 3) -> np.ndarray:
    if anc_dim == 3:
        d = noise.delta_e * _PE + noise.delta_f * _PF
    else:
        d = np.diag([0.0, noise.delta_e]).astype(complex)
    return np.kron(d, np.eye(dim))


def build_snap_model(s_matrix: np.ndarray, anc: AncillaSpec, noise: NoiseParams,
                     dim: int, picture: str = "verify",
                     conservative_eg_phase: bool = False) -> AAOModel:
    """SNAP gate model: drive g<->f through S, duration T = pi/(2 Omega).

    Noiseless runs end in |f> with bosonic action S; the f measurement basis
    is (f, e, g). In picture='sim' the returned residual e^{i chi_f T n} on
    the e/f levels must be applied before measurement.
    """
    dim = check_dim(dim)
    s = np.asarray(s_matrix, dtype=complex)
    T = anc.snap_time
    nvec = np.arange(dim)
    eye = np.eye(dim)
    drive = anc.omega * (np.kron(_FG, s) + np.kron(_FG.conj().T, s.conj().T))
    jumps = _mode_jumps(noise, 3, dim)
    residual = None
    if picture == "verify":
        h = drive
        dchi, chi_e = anc.dchi, anc.chi_e
        ef_op = lambda t, dchi=dchi: np.kron(
            _EF, np.diag(np.exp(-1j * dchi * t * nvec)))
        ge_op = lambda t, chi_e=chi_e: np.kron(
            _GE, np.diag(np.exp(1j * chi_e * t * nvec)))
        if noise.gamma_fe > 0:
            jumps.append(JumpSpec(ef_op, noise.gamma_fe, "decay_fe"))
        if noise.gamma_eg > 0:
            jumps.append(JumpSpec(ge_op, noise.gamma_eg, "decay_eg"))
    elif picture == "sim":
        h = anc.dchi * np.kron(_PE, np.diag(nvec.astype(float))) + drive
        ef_op = np.kron(_EF, eye)
        if conservative_eg_phase:
            ph = np.diag(np.exp(1j * np.pi * nvec / 4.0))
            ge_op = np.kron(_GE, ph)
        else:
            chi_f = anc.chi_f
            ge_op = lambda t, chi_f=chi_f: np.kron(
                _GE, np.diag(np.exp(1j * chi_f * t * nvec)))
        if noise.gamma_fe > 0:
            jumps.append(JumpSpec(ef_op, noise.gamma_fe, "decay_fe"))
        if noise.gamma_eg > 0:
            jumps.append(JumpSpec(ge_op, noise.gamma_eg, "decay_eg"))
        residual = np.diag(np.exp(1j * anc.chi_f * T * nvec))
    else:
        raise ValueError(f"unknown picture {picture!r}")
    deph_op = _dephase_op(noise, dim)
    if noise.gamma_phi > 0:
        jumps.append(JumpSpec(deph_op, noise.gamma_phi, "dephase"))
    fault_ops = (("ef", ef_op), ("ge", ge_op), ("dephase", deph_op))
    model = LindbladModel(h, tuple(jumps), 3, (dim,), T, fault_ops)
    basis = (("f", KET_F), ("e", KET_E), ("g", KET_G))
    return AAOModel(model, KET_G, basis, residual, s, "snap")


def _wait_model(anc: AncillaSpec, noise: NoiseParams, dim: int, T: float,
                picture: str) -> tuple:
    """Shared structure of the drive-free parity/mod-4 discrimination waits."""
    nvec = np.arange(dim)
    eye = np.eye(dim)
    jumps = _mode_jumps(noise, 3, dim)
    residual = None
    if picture == "verify":
        # lab frame: the dispersive coupling itself is the Hamiltonian
        h = -np.kron(anc.chi_f * _PF + anc.chi_e * _PE, np.diag(nvec.astype(float)))
        ef_op = np.kron(_EF, eye)
        ge_op = np.kron(_GE, eye)
        if noise.gamma_fe > 0:
            jumps.append(JumpSpec(ef_op, noise.gamma_fe, "decay_fe"))
        if noise.gamma_eg > 0:
            jumps.append(JumpSpec(ge_op, noise.gamma_eg, "decay_eg"))
    elif picture == "interaction":
        # rotating frame of the dispersive coupling: H vanishes and the decay
        # jumps carry the heralded-rotation phases; used by algebraic checks
        h = np.zeros((3 * dim, 3 * dim))
        dchi, chi_e = anc.dchi, anc.chi_e
        ef_op = lambda t, dchi=dchi: np.kron(
            _EF, np.diag(np.exp(1j * dchi * t * nvec)))
        ge_op = lambda t, chi_e=chi_e: np.kron(
            _GE, np.diag(np.exp(1j * chi_e * t * nvec)))
        if noise.gamma_fe > 0:
            jumps.append(JumpSpec(ef_op, noise.gamma_fe, "decay_fe"))
        if noise.gamma_eg > 0:
            jumps.append(JumpSpec(ge_op, noise.gamma_eg, "decay_eg"))
    elif picture == "sim":
        h = anc.dchi * np.kron(_PE, np.diag(nvec.astype(float)))
        ef_op = np.kron(_EF, eye)
        chi_f = anc.chi_f
        ge_op = lambda t, chi_f=chi_f: np.kron(
            _GE, np.diag(np.exp(1j * chi_f * t * nvec)))
        if noise.gamma_fe > 0:
            jumps.append(JumpSpec(ef_op, noise.gamma_fe, "decay_fe"))
        if noise.gamma_eg > 0:
            jumps.append(JumpSpec(ge_op, noise.gamma_eg, "decay_eg"))
        residual = np.diag(np.exp(1j * anc.chi_f * T * nvec))
    else:
        raise ValueError(f"unknown picture {picture!r}")
    deph_op = _dephase_op(noise, dim)
    if noise.gamma_phi > 0:
        jumps.append(JumpSpec(deph_op, noise.gamma_phi, "dephase"))
    fault_ops = (("ef", ef_op), ("ge", ge_op), ("dephase", deph_op))
    return LindbladModel(h, tuple(jumps), 3, (dim,), T, fault_ops), residual


def build_parity_model(anc: AncillaSpec, noise: NoiseParams, dim: int,
                       picture: str = "verify") -> AAOModel:
    """Parity measurement: ancilla |+>, wait T = pi/chi_f, measure {+, -, e}.

    Ideal conditional actions are the even/odd photon-number projectors.
    """
    dim = check_dim(dim)
    model, residual = _wait_model(anc, noise, dim, anc.parity_time, picture)
    basis = (("+", KET_PLUS), ("-", KET_MINUS), ("e", KET_E))
    parity = mode_operator("parity", dim).matrix
    return AAOModel(model, KET_PLUS, basis, residual, None, "parity")


def build_mod4_model(anc: AncillaSpec, noise: NoiseParams, dim: int,
                     picture: str = "verify", f_phase: float = 0.0) -> AAOModel:
    """Mod-4 discrimination wait: T = pi/(2 chi_f), optional extra ancilla
    phase e^{-i f_phase |f><f|} folded into the initial state."""
    dim = check_dim(dim)
    model, residual = _wait_model(anc, noise, dim, anc.parity_time / 2.0, picture)
    init = KET_PLUS.copy()
    init[2] *= np.exp(-1j * f_phase)
    basis = (("+", KET_PLUS), ("-", KET_MINUS), ("e", KET_E))
    return AAOModel(model, init, basis, residual, None, "mod4")


def build_idle_model(dim: int, T: float = 1.0) -> AAOModel:
    """Idle ancilla: no Hamiltonian, no jumps."""
    dim = check_dim(dim)
    model = LindbladModel(np.zeros((3 * dim, 3 * dim)), (), 3, (dim,), T)
    basis = (("g", KET_G), ("e", KET_E), ("f", KET_F))
    return AAOModel(model, KET_G, basis, None, np.eye(dim, dtype=complex), "idle")


def build_threshold_qubit_model(s: int, anc: AncillaSpec, noise: NoiseParams,
                                dim: int) -> AAOModel:
    """Photon-number threshold test with a two-level ancilla.

    H = Omega(|e><g| ⊗ P_[s] + h.c.), T = pi/(2 Omega): the ancilla flips to
    |e> iff the mode holds at most s photons. Written directly in its own
    rotating frame (no residual).
    """
    dim = check_dim(dim)
    p_s = mode_operator("lowpass_projector", dim, s=s).matrix
    sp = np.zeros((2, 2), complex); sp[1, 0] = 1.0  # |e><g|
    h = anc.omega * (np.kron(sp, p_s) + np.kron(sp.conj().T, p_s))
    jumps = _mode_jumps(noise, 2, dim)
    ge_op = np.kron(sp.conj().T, np.eye(dim))
    deph_op = _dephase_op(noise, dim, anc_dim=2)
    if noise.gamma_eg > 0:
        jumps.append(JumpSpec(ge_op, noise.gamma_eg, "decay_eg"))
    if noise.gamma_phi > 0:
        jumps.append(JumpSpec(deph_op, noise.gamma_phi, "dephase"))
    model = LindbladModel(h, tuple(jumps), 2, (dim,), anc.snap_time,
                          (("ge", ge_op), ("dephase", deph_op)))
    e2 = np.array([0.0, 1.0], dtype=complex)
    g2 = np.array([1.0, 0.0], dtype=complex)
    return AAOModel(model, g2, (("e", e2), ("g", g2)), None, p_s, "threshold")


@functools.lru_cache(maxsize=8)
def build_bs_model(g_bs: float, noise: NoiseParams, dims: tuple,
                   theta: float = math.pi / 2) -> LindbladModel:
    """Balanced beam-splitter segment with cavity loss on both modes.

    H = i g_bs (a†b - a b†); evolving for t = |theta|/(2 g_bs) realizes
    BS(theta) in the convention of fock.beam_splitter, with the Hamiltonian
    sign flipped for theta < 0 (the inverse splitter). No ancilla
    (ancilla_dim 1).
    """
    da, db = dims
    da, db = check_dim(da), check_dim(db)
    a = np.kron(mode_operator("annihilation", da).matrix, np.eye(db))
    b = np.kron(np.eye(da), mode_operator("annihilation", db).matrix)
    h = math.copysign(1.0, theta) * 1j * g_bs * (a.conj().T @ b - a @ b.conj().T)
    theta = abs(theta)
    jumps = []
    if noise.kappa > 0:
        jumps.append(JumpSpec(a, noise.kappa, "loss_a"))
        jumps.append(JumpSpec(b, noise.kappa, "loss_b"))
    return LindbladModel(h, tuple(jumps), 1, (da, db), theta / (2.0 * g_bs))


def build_flagged_snap_model(s_matrix: np.ndarray, anc: AncillaSpec,
                             noise: NoiseParams, dim: int) -> dict:
    """Flagged SNAP: the three-level ancilla plus a flag qubit, with a
    flag-CNOT (controlled on ancilla |e>) at T/2 and at T.

    Returned as two half-duration segments plus the CNOT unitary; the flag
    confines an f->e decay to a half-interval: decay in [0, T/2) flips the
    flag twice (ends g), decay in [T/2, T) flips it once (ends e), halving
    the heralded dephasing window.
    """
    base = build_snap_model(s_matrix, anc, noise, dim, picture="verify")
    T2 = base.model.duration / 2.0
    half = LindbladModel(base.model.hamiltonian, base.model.jumps, 3, (dim,),
                         T2, base.model.fault_ops)
    # second half: time-dependent jumps and fault operators shift by T/2
    def _shift(op):
        if callable(op):
            return lambda t, op=op: op(t + T2)
        return op

    shifted = [JumpSpec(_shift(j.operator), j.rate, j.label)
               for j in base.model.jumps]
    shifted_faults = tuple((k, _shift(op)) for k, op in base.model.fault_ops)
    half2 = LindbladModel(base.model.hamiltonian, tuple(shifted), 3, (dim,),
                          T2, shifted_faults)
    cnot = np.kron(np.eye(2), np.diag([1.0, 0.0, 1.0])) + np.kron(
        np.array([[0, 1], [1, 0]], dtype=float), np.diag([0.0, 1.0, 0.0])
    )  # flag ⊗ ancilla, flips flag iff ancilla in e
    return {
        "segments": (half, half2),
        "flag_cnot": cnot.astype(complex),
        "ideal_unitary": np.asarray(s_matrix, dtype=complex),
        "ancilla_init": KET_G,
        "anc": anc,
    }
