"""Tests for the four-legged cat code module.

Oracles: direct vector normalization of the coherent superposition (for the
closed-form normalization constants), direct QEC-matrix evaluation (for KL
verdicts), and exact arithmetic for the error-size algebra.
"""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from catsim.cat import (
    ErrorSize,
    FMap,
    build_cat,
    decoded_fidelity,
    f_eval,
    ideal_decode,
    kl_check,
    qec_matrix,
    size_leq,
    sweet_spot_scan,
)
from catsim.fock import FockOperator, coherent_state, mode_operator


def test_codeword_mod4_support():
    code = build_cat(2.0, 40)
    n = np.arange(40)
    assert np.all(code.zero.amplitudes[n % 4 != 0] == 0)
    assert np.all(code.one.amplitudes[n % 4 != 2] == 0)


def test_codewords_orthonormal():
    code = build_cat(2.0, 40)
    assert abs(code.zero.norm() - 1) < 1e-10
    assert abs(code.one.norm() - 1) < 1e-10
    assert abs(code.zero.overlap(code.one)) < 1e-10


def test_plus_logical_approaches_even_cat():
    code = build_cat(3.0, 60)
    even_cat = coherent_state(3.0, 60).amplitudes + coherent_state(-3.0, 60).amplitudes
    even_cat = even_cat / np.linalg.norm(even_cat)
    assert abs(np.vdot(even_cat, code.plus.amplitudes)) >= 0.999


def test_normalization_constants_closed_form():
    alpha, dim = 1.0, 20
    code = build_cat(alpha, dim)
    a2 = alpha**2
    for mu, word in enumerate(code.codewords):
        c_mu = 1.0 / (
            2 * math.sqrt(2 * math.exp(-a2) * (math.cosh(a2) + (-1) ** mu * math.cos(a2)))
        )
        # oracle: un-normalized coherent superposition scaled by c_mu
        raw = (
            coherent_state(alpha, dim).amplitudes
            + coherent_state(-alpha, dim).amplitudes
            + (-1) ** mu
            * (coherent_state(1j * alpha, dim).amplitudes + coherent_state(-1j * alpha, dim).amplitudes)
        )
        rebuilt = c_mu * raw
        phase = np.vdot(rebuilt, word.amplitudes)
        assert abs(abs(phase) - 1) < 1e-8
        assert np.allclose(rebuilt * phase / abs(phase), word.amplitudes, atol=1e-8)


def test_projector_rank_two():
    code = build_cat(2.0, 40)
    p = code.projector.matrix
    assert np.linalg.norm(p @ p - p) < 1e-10
    assert np.linalg.norm(p - p.conj().T) < 1e-10
    assert abs(np.trace(p) - 2) < 1e-10


def test_logical_pauli_algebra():
    code = build_cat(2.0, 40)
    z = code.pauli("Z")
    x = code.pauli("X")
    assert np.allclose(z.apply(code.zero).amplitudes, code.zero.amplitudes, atol=1e-10)
    assert np.allclose(z.apply(code.one).amplitudes, -code.one.amplitudes, atol=1e-10)
    assert np.allclose(x.apply(code.zero).amplitudes, code.one.amplitudes, atol=1e-10)
    anti = x.matrix @ z.matrix + z.matrix @ x.matrix
    p = code.projector.matrix
    assert np.linalg.norm(p @ anti @ p) < 1e-10


def test_qec_matrix_identity_pair():
    code = build_cat(2.0, 40)
    eye = FockOperator(np.eye(40, dtype=complex), 40)
    q = qec_matrix(code, eye, eye)
    assert abs(q.c - 1) < 1e-10 and q.offdiag() < 1e-10


def test_qec_matrix_loss_detectable():
    code = build_cat(2.3, 44)
    eye = FockOperator(np.eye(44, dtype=complex), 44)
    a = mode_operator("annihilation", 44)
    q = qec_matrix(code, eye, a)
    assert abs(q.c) < 1e-10 and q.offdiag() < 1e-10


def test_qec_matrix_loss_backaction():
    code = build_cat(2.0, 40)
    a = mode_operator("annihilation", 40)
    q = qec_matrix(code, a, a)
    assert abs(q.c - code.mean_photon()) < 1e-10
    assert abs(q.z - code.delta_n() / 2) < 1e-10
    assert abs(q.x) < 1e-10 and abs(q.y) < 1e-10


def test_qec_c_is_average_expectation():
    code = build_cat(1.7, 36)
    a = mode_operator("annihilation", 36)
    q = qec_matrix(code, a, a)
    n = np.arange(36)
    avg = 0.5 * (
        np.sum(n * np.abs(code.zero.amplitudes) ** 2)
        + np.sum(n * np.abs(code.one.amplitudes) ** 2)
    )
    assert abs(q.c.imag) < 1e-10
    assert abs(q.c.real - avg) < 1e-10


def test_kl_identity_loss_passes_at_sweet_spot():
    code = build_cat(2.9, 60)
    eye = FockOperator(np.eye(60, dtype=complex), 60)
    a = mode_operator("annihilation", 60)
    rep = kl_check(code, [eye, a], 1e-2)
    assert rep["pass"]


def test_kl_quarter_rotation_fails():
    dim = 64
    code = build_cat(3.0, dim)
    r1 = mode_operator("phase_rotation", dim, theta=0.0)
    r2 = mode_operator("phase_rotation", dim, theta=np.pi / 2)
    rep = kl_check(code, [r1, r2], 1e-2)
    assert not rep["pass"]
    assert rep["residual"] > 0.5  # O(1) z residual


def test_kl_double_loss_fails():
    dim = 60
    code = build_cat(2.9, dim)
    eye = FockOperator(np.eye(dim, dtype=complex), dim)
    a = mode_operator("annihilation", dim)
    a2 = FockOperator(a.matrix @ a.matrix, dim)
    rep = kl_check(code, [eye, a, a2], 1e-2)
    assert not rep["pass"]
    # oracle: the worst pair involves a^2 (two losses map 0-mod-4 onto 2-mod-4)
    assert 2 in rep["pair"]


def test_kl_rotation_family_monotone_in_alpha():
    theta_m = np.pi / 4 - 0.05
    residuals = []
    for alpha in (1.5, 2.0, 2.5, 3.0):
        dim = 64
        code = build_cat(alpha, dim)
        fam = [
            mode_operator("phase_rotation", dim, theta=t)
            for t in np.linspace(-theta_m, theta_m, 7)
        ]
        residuals.append(kl_check(code, fam, 1e-2)["residual"])
    assert all(residuals[i] > residuals[i + 1] for i in range(3))


def test_sweet_spot_near_29():
    roots = sweet_spot_scan((2.5, 3.3), 60)
    assert any(abs(r - 2.9) < 0.15 for r in roots)


def test_sweet_spot_bracketing_contract():
    roots = sweet_spot_scan((2.5, 3.3), 60)
    for r in roots:
        lo = build_cat(r - 5e-4, 60).delta_n()
        hi = build_cat(r + 5e-4, 60).delta_n()
        assert lo * hi <= 0


def test_delta_n_asymptotic_suppression():
    assert abs(build_cat(4.5, 110).delta_n()) < abs(build_cat(1.5, 30).delta_n())


def test_sweet_spot_empty_when_no_sign_change():
    assert sweet_spot_scan((2.95, 3.05), 60) == []


def test_size_order_examples():
    assert size_leq(ErrorSize(1, np.pi / 8), ErrorSize(1, np.pi / 4)) == "less-equal"
    assert size_leq(ErrorSize(2, 0.0), ErrorSize(1, np.pi / 4)) == "incomparable"
    assert size_leq(ErrorSize(0, 0.0), ErrorSize(3, 1.0)) == "less-equal"
    assert size_leq(ErrorSize(1, 0.5), ErrorSize(1, 0.5)) == "equal"


@given(
    st.integers(0, 4), st.floats(0, np.pi), st.integers(0, 4), st.floats(0, np.pi)
)
def test_size_order_is_partial_order(k1, t1, k2, t2):
    a, b = ErrorSize(k1, t1), ErrorSize(k2, t2)
    ab, ba = size_leq(a, b), size_leq(b, a)
    assert size_leq(a, a) == "equal"  # reflexive
    if ab == "less-equal":
        assert ba in ("greater", "equal")  # antisymmetric up to equality
    if ab == "incomparable":
        assert ba == "incomparable"


def test_f_eval():
    f = FMap(theta0=0.3, t=1)
    assert f_eval(f, 1) == ErrorSize(1, 0.3)
    assert f_eval(f, 0) == ErrorSize(0, 0.0)
    g = FMap(theta0=0.4 * np.pi, t=3)
    out = f_eval(g, 3)
    assert out.k == 3 and abs(out.theta - 0.2 * np.pi) < 1e-12


def test_f_additivity_within_budget():
    f = FMap(theta0=0.2, t=3)
    a, b = f_eval(f, 1), f_eval(f, 2)
    tot = f_eval(f, 3)
    assert tot.k == a.k + b.k and abs(tot.theta - (a.theta + b.theta)) < 1e-12


def test_ideal_decode_codewords():
    code = build_cat(2.9, 60)
    rho = ideal_decode(code.zero, code)
    tr = np.real(np.trace(rho))
    assert tr > 1 - 1e-3
    assert np.real(rho[0, 0]) / tr > 1 - 1e-6


def test_ideal_decode_corrects_single_loss():
    code = build_cat(2.9, 60)
    a = mode_operator("annihilation", 60)
    errored = a.apply(code.logical("+")).normalized()
    f = decoded_fidelity(errored, np.array([1, 1]) / np.sqrt(2), code)
    assert f > 1 - 1e-3


def test_ideal_decode_corrects_small_rotation():
    code = build_cat(2.9, 60)
    rot = mode_operator("phase_rotation", 60, theta=-0.08)
    errored = rot.apply(code.logical("+i"))
    f = decoded_fidelity(errored, np.array([1, 1j]) / np.sqrt(2), code)
    assert f > 1 - 1e-3


def test_build_cat_refuses_bad_truncation():
    with pytest.raises(ValueError):
        build_cat(3.0, 12)
