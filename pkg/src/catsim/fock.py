"""Truncated Fock-space linear algebra.

States, operators and two-mode composition on a finite photon-number ladder
|0>..|dim-1>. The top level is an absorbing boundary: commutator identities such
as [a, a†] = I hold exactly only on the first dim-1 levels, and every assertion
elsewhere in the package excludes the boundary row/column.

Tensor index order for two-mode objects is mode-A-major: the joint basis vector
with index i corresponds to |n_A> ⊗ |n_B> with i = n_A * dimB + n_B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

__all__ = [
    "FockState",
    "FockOperator",
    "TwoModeOperator",
    "TruncationWarning",
    "mode_operator",
    "coherent_state",
    "beam_splitter",
    "truncation_check",
    "check_dim",
]


class TruncationWarning(UserWarning):
    """Raised/attached when a constructed state leaks past the truncation."""


def check_dim(dim: int) -> int:
    if not isinstance(dim, (int, np.integer)) or dim < 2:
        raise ValueError(f"Fock truncation must be an integer >= 2, got {dim!r}")
    return int(dim)


@dataclass(frozen=True)
class FockState:
    """Pure state of one truncated mode.

    ``tail_mass`` records probability lost to truncation by the constructor
    (before renormalization); 0.0 for exact finite-support states.
    """

    amplitudes: np.ndarray
    dim: int
    tail_mass: float = 0.0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.dim,):
            raise ValueError(f"amplitude vector shape {amps.shape} != ({self.dim},)")
        if not np.all(np.isfinite(amps.view(float))):
            raise ValueError("non-finite amplitudes")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def vec(self) -> np.ndarray:
        return self.amplitudes

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "FockState":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize zero vector")
        return FockState(self.amplitudes / n, self.dim, self.tail_mass)

    def overlap(self, other: "FockState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


def fock_state(n: int, dim: int) -> FockState:
    dim = check_dim(dim)
    if not 0 <= n < dim:
        raise ValueError(f"level {n} outside 0..{dim - 1}")
    v = np.zeros(dim, dtype=complex)
    v[n] = 1.0
    return FockState(v, dim)


@dataclass(frozen=True)
class FockOperator:
    """Dense operator on one truncated mode."""

    matrix: np.ndarray
    dim: int

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.dim, self.dim):
            raise ValueError(f"matrix shape {m.shape} != ({self.dim}, {self.dim})")
        object.__setattr__(self, "matrix", m)

    @property
    def mat(self) -> np.ndarray:
        return self.matrix

    def dag(self) -> "FockOperator":
        return FockOperator(self.matrix.conj().T, self.dim)

    def __matmul__(self, other):
        if isinstance(other, FockOperator):
            return FockOperator(self.matrix @ other.matrix, self.dim)
        if isinstance(other, FockState):
            return FockState(self.matrix @ other.amplitudes, self.dim)
        return NotImplemented

    def apply(self, state: FockState) -> FockState:
        return FockState(self.matrix @ state.amplitudes, self.dim)


@dataclass(frozen=True)
class TwoModeOperator:
    """Dense operator on two modes, mode-A-major index order."""

    matrix: np.ndarray
    dims: tuple

    def __post_init__(self):
        da, db = self.dims
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (da * db, da * db):
            raise ValueError(f"matrix shape {m.shape} != ({da * db}, {da * db})")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dims", (int(da), int(db)))

    @property
    def mat(self) -> np.ndarray:
        return self.matrix

    def dag(self) -> "TwoModeOperator":
        return TwoModeOperator(self.matrix.conj().T, self.dims)


def _annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)


def mode_operator(kind: str, dim: int, **params) -> FockOperator:
    """Standard single-mode operators.

    kind: one of 'annihilation', 'number', 'parity', 'phase_rotation' (theta),
    'displacement' (alpha), 'lowpass_projector' (s), 'mod4_projector' (j).
    Deterministic and reproducible bit-for-bit given (kind, dim, params).
    """
    dim = check_dim(dim)
    n = np.arange(dim)
    if kind == "annihilation":
        m = _annihilation(dim)
    elif kind == "number":
        m = np.diag(n.astype(complex))
    elif kind == "parity":
        m = np.diag(np.exp(1j * np.pi * n))
    elif kind == "phase_rotation":
        theta = float(params.pop("theta"))
        m = np.diag(np.exp(1j * theta * n))
    elif kind == "displacement":
        alpha = complex(params.pop("alpha"))
        a = _annihilation(dim)
        m = expm(alpha * a.conj().T - np.conj(alpha) * a)
    elif kind == "lowpass_projector":
        s = int(params.pop("s"))
        if not 0 <= s < dim:
            raise ValueError(f"lowpass threshold s={s} outside 0..{dim - 1}")
        m = np.diag((n <= s).astype(complex))
    elif kind == "mod4_projector":
        j = int(params.pop("j"))
        if not 0 <= j <= 3:
            raise ValueError(f"mod-4 residue j={j} outside 0..3")
        m = np.diag((n % 4 == j).astype(complex))
    else:
        raise ValueError(f"unknown operator kind {kind!r}")
    if params:
        raise ValueError(f"unexpected parameters for {kind!r}: {sorted(params)}")
    return FockOperator(m, dim)


def coherent_state(alpha: complex, dim: int) -> FockState:
    """Truncated coherent state |alpha>, renormalized.

    The reported tail_mass is 1 - sum |c_n|^2 of the untruncated coefficients
    kept, i.e. the probability beyond level dim-1. Log-domain evaluation keeps
    the coefficients accurate for large |alpha|^2.
    """
    dim = check_dim(dim)
    alpha = complex(alpha)
    if alpha == 0:
        return fock_state(0, dim)
    n = np.arange(dim)
    # c_n = e^{-|a|^2/2} a^n / sqrt(n!): modulus in log domain, phase separately
    log_mod = -abs(alpha) ** 2 / 2 + n * math.log(abs(alpha)) - 0.5 * np.cumsum(
        np.concatenate(([0.0], np.log(np.arange(1, dim))))
    )
    phase = np.exp(1j * n * np.angle(alpha))
    c = np.exp(log_mod) * phase
    kept = float(np.sum(np.abs(c) ** 2))
    tail = max(0.0, 1.0 - kept)
    state = FockState(c / math.sqrt(kept), dim, tail_mass=tail)
    return state


_BS_CACHE: dict = {}


def beam_splitter(theta: float, dims: tuple) -> TwoModeOperator:
    """BS(theta) = exp[theta/2 (a† b - a b†)] on two equal-dim modes.

    Sign convention chosen so BS(pi/2) sends |alpha, beta> to
    |(alpha+beta)/sqrt2, (alpha-beta)/sqrt2> up to truncation tail.

    The generator conserves total photon number, so the exponential is
    taken block by block on the fixed-(na+nb) subspaces; the result is
    cached per (theta, dims) since the matrix is large at working dims.
    """
    da, db = dims
    da, db = check_dim(da), check_dim(db)
    if da != db:
        raise ValueError("beam splitter requires equal mode dimensions")
    key = (float(theta), da, db)
    cached = _BS_CACHE.get(key)
    if cached is None:
        a = np.kron(_annihilation(da), np.eye(db))
        b = np.kron(np.eye(da), _annihilation(db))
        gen = a.conj().T @ b - a @ b.conj().T
        full = np.zeros((da * db, da * db), dtype=complex)
        na = np.repeat(np.arange(da), db)
        nb = np.tile(np.arange(db), da)
        for total in range(da + db - 1):
            idx = np.flatnonzero(na + nb == total)
            block = gen[np.ix_(idx, idx)]
            full[np.ix_(idx, idx)] = expm(0.5 * float(theta) * block)
        full.setflags(write=False)
        cached = _BS_CACHE[key] = full
    return TwoModeOperator(cached, (da, db))


def truncation_check(state: FockState, eps: float):
    """Pass iff probability mass in the top 10% of levels is <= eps.

    Returns (ok, top_mass).
    """
    k = max(1, state.dim // 10)
    p = np.abs(state.amplitudes) ** 2
    total = float(p.sum())
    top = float(p[state.dim - k:].sum()) / total if total > 0 else 0.0
    return top <= eps, top


# --- joint-space helpers used across the package ---------------------------


def kron_all(*mats) -> np.ndarray:
    out = np.asarray(mats[0], dtype=complex)
    for m in mats[1:]:
        out = np.kron(out, np.asarray(m, dtype=complex))
    return out


def embed_ancilla_mode(anc_op: np.ndarray, mode_op: np.ndarray) -> np.ndarray:
    """anc_op ⊗ mode_op on the ancilla-major joint space."""
    return np.kron(np.asarray(anc_op, complex), np.asarray(mode_op, complex))


def partial_trace_ancilla(rho: np.ndarray, anc_dim: int, mode_dim: int) -> np.ndarray:
    r = rho.reshape(anc_dim, mode_dim, anc_dim, mode_dim)
    return np.trace(r, axis1=0, axis2=2)


def partial_trace_mode_b(rho: np.ndarray, dims: tuple) -> np.ndarray:
    da, db = dims
    r = rho.reshape(da, db, da, db)
    return np.trace(r, axis1=1, axis2=3)
