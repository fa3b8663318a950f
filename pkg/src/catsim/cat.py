"""Four-legged cat code: codewords, QEC matrix, sweet spots, error-size algebra.

The code is spanned by |mu_L> ∝ |a> + |-a> + (-1)^mu (|ia> + |-ia>), mu = 0, 1.
|0_L> is supported exactly on photon numbers n ≡ 0 (mod 4) and |1_L> on
n ≡ 2 (mod 4), which makes single photon loss perfectly detectable by parity
and gives P_c a P_c = 0 exactly.

Logical Paulis are defined from the exact finite-amplitude codewords
(Z = |0_L><0_L| - |1_L><1_L|, X = |0_L><1_L| + |1_L><0_L|), not from
asymptotic coherent-state approximations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .fock import FockOperator, FockState, check_dim, coherent_state, mode_operator, truncation_check

__all__ = [
    "CatCode",
    "QecMatrix",
    "ErrorSize",
    "FMap",
    "build_cat",
    "qec_matrix",
    "kl_check",
    "sweet_spot_scan",
    "size_leq",
    "f_eval",
    "ideal_decode",
    "decoded_fidelity",
]


@dataclass(frozen=True)
class CatCode:
    alpha: complex
    dim: int
    codewords: tuple  # (|0_L>, |1_L>)
    projector: FockOperator  # P_c
    legs: int = 4

    @property
    def zero(self) -> FockState:
        return self.codewords[0]

    @property
    def one(self) -> FockState:
        return self.codewords[1]

    @property
    def plus(self) -> FockState:
        v = (self.zero.amplitudes + self.one.amplitudes) / np.sqrt(2)
        return FockState(v, self.dim)

    @property
    def minus(self) -> FockState:
        v = (self.zero.amplitudes - self.one.amplitudes) / np.sqrt(2)
        return FockState(v, self.dim)

    def logical(self, which: str) -> FockState:
        """Cardinal logical states: 0, 1, +, -, +i, -i."""
        z0, z1 = self.zero.amplitudes, self.one.amplitudes
        table = {
            "0": z0,
            "1": z1,
            "+": (z0 + z1) / np.sqrt(2),
            "-": (z0 - z1) / np.sqrt(2),
            "+i": (z0 + 1j * z1) / np.sqrt(2),
            "-i": (z0 - 1j * z1) / np.sqrt(2),
        }
        return FockState(table[which], self.dim)

    def pauli(self, which: str) -> FockOperator:
        z0 = self.zero.amplitudes[:, None]
        z1 = self.one.amplitudes[:, None]
        if which == "I":
            m = z0 @ z0.conj().T + z1 @ z1.conj().T
        elif which == "Z":
            m = z0 @ z0.conj().T - z1 @ z1.conj().T
        elif which == "X":
            m = z0 @ z1.conj().T + z1 @ z0.conj().T
        elif which == "Y":
            m = -1j * z0 @ z1.conj().T + 1j * z1 @ z0.conj().T
        else:
            raise ValueError(f"unknown Pauli {which!r}")
        return FockOperator(m, self.dim)

    def mean_photon(self) -> float:
        """Codespace-averaged photon number (n0 + n1)/2."""
        n = np.arange(self.dim)
        n0 = float(np.sum(n * np.abs(self.zero.amplitudes) ** 2))
        n1 = float(np.sum(n * np.abs(self.one.amplitudes) ** 2))
        return 0.5 * (n0 + n1)

    def delta_n(self) -> float:
        """Photon-number difference <0_L|n|0_L> - <1_L|n|1_L>."""
        n = np.arange(self.dim)
        n0 = float(np.sum(n * np.abs(self.zero.amplitudes) ** 2))
        n1 = float(np.sum(n * np.abs(self.one.amplitudes) ** 2))
        return n0 - n1


@dataclass(frozen=True)
class QecMatrix:
    """Coefficients of P_c E_j† E_k P_c = c P_c + x X + y Y + z Z."""

    c: complex
    x: complex
    y: complex
    z: complex

    def offdiag(self) -> float:
        return abs(self.x) + abs(self.y) + abs(self.z)


@dataclass(frozen=True, order=False)
class ErrorSize:
    """(losses k, dephasing magnitude theta) with the cone partial order."""

    k: int
    theta: float

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("loss count must be >= 0")
        if not 0 <= self.theta <= np.pi:
            raise ValueError("dephasing magnitude must lie in [0, pi]")


@dataclass(frozen=True)
class FMap:
    """Fault-propagation bound f(m) = (m, m*theta0 mod pi), valid for m <= t."""

    theta0: float
    t: int


def build_cat(alpha: complex, dim: int) -> CatCode:
    """Construct the four-legged cat code at amplitude alpha."""
    dim = check_dim(dim)
    alpha = complex(alpha)
    comps = [coherent_state(a, dim) for a in (alpha, -alpha, 1j * alpha, -1j * alpha)]
    for c in comps:
        ok, top = truncation_check(c, 1e-6)
        if not ok:
            raise ValueError(
                f"truncation too small for |alpha|={abs(alpha):.3f}: "
                f"top-level mass {top:.2e} at dim {dim}"
            )
    words = []
    for mu in (0, 1):
        v = comps[0].amplitudes + comps[1].amplitudes + (-1) ** mu * (
            comps[2].amplitudes + comps[3].amplitudes
        )
        # exact mod-4 support: clip numerically-zero residue classes
        n = np.arange(dim)
        v = np.where(n % 4 == 2 * mu, v, 0.0)
        words.append(FockState(v / np.linalg.norm(v), dim))
    z0, z1 = words
    proj = (
        z0.amplitudes[:, None] @ z0.amplitudes[None, :].conj()
        + z1.amplitudes[:, None] @ z1.amplitudes[None, :].conj()
    )
    return CatCode(alpha, dim, (z0, z1), FockOperator(proj, dim))


def qec_matrix(code: CatCode, e_j: FockOperator, e_k: FockOperator) -> QecMatrix:
    """Decompose P_c E_j† E_k P_c in the logical Pauli basis (exact algebra)."""
    if e_j.dim != code.dim or e_k.dim != code.dim:
        raise ValueError("operator dimension does not match the code")
    z0, z1 = code.zero.amplitudes, code.one.amplitudes
    m = e_j.matrix.conj().T @ e_k.matrix
    m00 = complex(z0.conj() @ m @ z0)
    m01 = complex(z0.conj() @ m @ z1)
    m10 = complex(z1.conj() @ m @ z0)
    m11 = complex(z1.conj() @ m @ z1)
    c = (m00 + m11) / 2
    z = (m00 - m11) / 2
    x = (m01 + m10) / 2
    y = (1j * m01 - 1j * m10) / 2
    return QecMatrix(c, x, y, z)


def kl_check(code: CatCode, errors: list, tol: float) -> dict:
    """Knill-Laflamme check over all ordered pairs of the error list.

    Passes iff the worst off-diagonal residual |x|+|y|+|z| over pairs is <= tol.
    Returns a report dict with the residual and the violating pair indices.
    """
    if not errors:
        raise ValueError("error list must be nonempty")
    worst = 0.0
    worst_pair = (0, 0)
    for j, ej in enumerate(errors):
        for k, ek in enumerate(errors):
            r = qec_matrix(code, ej, ek).offdiag()
            if r > worst:
                worst, worst_pair = r, (j, k)
    return {"residual": worst, "pair": worst_pair, "pass": worst <= tol}


def sweet_spot_scan(alpha_range: tuple, dim: int, grid: float = 1e-3) -> list:
    """Roots of delta_n(alpha) on [lo, hi], located by bracketing + bisection.

    delta_n oscillates, so a fine pre-scan grid brackets each sign change
    before bisecting to 1e-4 in alpha.
    """
    lo, hi = float(alpha_range[0]), float(alpha_range[1])

    def dn(a):
        return build_cat(a, dim).delta_n()

    xs = np.arange(lo, hi + grid / 2, grid)
    vals = [dn(x) for x in xs]
    roots = []
    for i in range(len(xs) - 1):
        if vals[i] == 0.0:
            roots.append(float(xs[i]))
            continue
        if vals[i] * vals[i + 1] < 0:
            a, b = float(xs[i]), float(xs[i + 1])
            fa = vals[i]
            while b - a > 1e-4:
                m = 0.5 * (a + b)
                fm = dn(m)
                if fa * fm <= 0:
                    b = m
                else:
                    a, fa = m, fm
            roots.append(0.5 * (a + b))
    return roots


def size_leq(a: ErrorSize, b: ErrorSize) -> str:
    """Cone partial order: one of 'equal', 'less-equal', 'greater', 'incomparable'."""
    dk, dth = b.k - a.k, b.theta - a.theta
    if dk == 0 and dth == 0:
        return "equal"
    if dk >= 0 and dth >= 0:
        return "less-equal"
    if dk <= 0 and dth <= 0:
        return "greater"
    return "incomparable"


def f_eval(f: FMap, m: int) -> ErrorSize:
    if m < 0:
        raise ValueError("fault count must be >= 0")
    return ErrorSize(m, (m * f.theta0) % np.pi)


# --- ideal decoder ---------------------------------------------------------


def default_error_family(code: CatCode, theta_max: float = np.pi / 8, n_theta: int = 9):
    """Declared correctable error set {a^k e^{-i theta n}}, k in {0,1}."""
    a = mode_operator("annihilation", code.dim)
    eye = np.eye(code.dim, dtype=complex)
    nvec = np.arange(code.dim)
    ops = []
    thetas = np.linspace(-theta_max, theta_max, n_theta)
    for k in (0, 1):
        ak = eye if k == 0 else a.matrix
        for th in thetas:
            ops.append(ak @ np.diag(np.exp(-1j * th * nvec)))
    return ops


def _recovery_kraus(code: CatCode, errors: list) -> list:
    """Transpose-channel recovery R_k = P_c E_k† N^{-1/2} for the error set."""
    p = code.projector.matrix
    n_op = np.zeros((code.dim, code.dim), dtype=complex)
    for e in errors:
        n_op += e @ p @ e.conj().T
    w, v = np.linalg.eigh(n_op)
    inv_sqrt = np.zeros_like(w)
    good = w > 1e-12 * max(w.max(), 1.0)
    inv_sqrt[good] = 1.0 / np.sqrt(w[good])
    n_inv_half = (v * inv_sqrt) @ v.conj().T
    return [p @ e.conj().T @ n_inv_half for e in errors]


def ideal_decode(state, code: CatCode, errors: list | None = None) -> np.ndarray:
    """Recover a (possibly errored) bosonic state to an unnormalized logical 2x2
    density matrix in the {|0_L>, |1_L>} basis.

    Applies the transpose-channel recovery for the declared error family, then
    reads out logical components. The trace of the result is the recovery
    success probability; values near 1 mean the input lay within the family's
    correctable neighborhood of the codespace.
    """
    if errors is None:
        errors = default_error_family(code)
    rec = _recovery_kraus(code, errors)
    if isinstance(state, FockState):
        rho = np.outer(state.amplitudes, state.amplitudes.conj())
    else:
        rho = np.asarray(state, dtype=complex)
    z0, z1 = code.zero.amplitudes, code.one.amplitudes
    basis = np.vstack([z0, z1])  # 2 x dim
    out = np.zeros((2, 2), dtype=complex)
    for r in rec:
        blk = basis.conj() @ r @ rho @ r.conj().T @ basis.T
        out += blk
    return out


def decoded_fidelity(state, target_logical: np.ndarray, code: CatCode,
                     errors: list | None = None) -> float:
    """Fidelity of the ideal-decoded state against a logical qubit target.

    target_logical: length-2 vector (pure) or 2x2 density matrix in the
    logical basis. The decoded matrix is normalized before comparison, so the
    value measures logical content; use ideal_decode directly to see leakage.
    """
    rho = ideal_decode(state, code, errors)
    tr = float(np.real(np.trace(rho)))
    if tr <= 0:
        return 0.0
    rho = rho / tr
    t = np.asarray(target_logical, dtype=complex)
    if t.ndim == 1:
        t = t / np.linalg.norm(t)
        return float(np.real(t.conj() @ rho @ t))
    # mixed target: Uhlmann fidelity
    sq = scipy.linalg.sqrtm(t)
    inner = scipy.linalg.sqrtm(sq @ rho @ sq)
    return float(np.real(np.trace(inner)) ** 2)
