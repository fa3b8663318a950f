"""Acceptance suite: one test per acceptance criterion, each emitting a
single pass/fail line on the real stdout (bypassing capture) so the verdicts
are visible in any pytest run.

Ordering: cheap deterministic checks first; the Monte-Carlo scaling sweep
runs last because it dominates the wall time.
"""

import math

import numpy as np
import pytest

from catsim import harness
from catsim.cat import build_cat, sweet_spot_scan
from catsim.engine import MCEngine, UnitaryEngine
from catsim.fock import coherent_state, mode_operator
from catsim.gadgets import select_threshold, xx_rotation_ft
from catsim.lindblad import NoJumpPropagator, conditional_channel, evolve_master, schmidt_decompose
from catsim.models import (
    KET_E,
    KET_F,
    KET_G,
    KET_MINUS,
    KET_PLUS,
    AncillaSpec,
    NoiseParams,
    build_parity_model,
    build_snap_model,
    snap_phases_z,
)
from catsim.verify import check_gpi, subspace_kl_residual


_CAPSYS = None


@pytest.fixture(autouse=True)
def _live_verdicts(capsys):
    global _CAPSYS
    _CAPSYS = capsys
    yield
    _CAPSYS = None


def _verdict(name: str, ok: bool, detail: str = ""):
    line = f"[{name}] {'PASS' if ok else 'FAIL'}" + (f": {detail}" if detail else "")
    if _CAPSYS is not None:
        with _CAPSYS.disabled():
            print(line, flush=True)
    else:  # pragma: no cover - direct invocation outside pytest
        print(line, flush=True)
    assert ok, line


# --------------------------------------------------- criterion 5: code facts


def test_criterion_5_code_facts():
    # (a) single-photon loss is exactly detectable: P_c a P_c = 0
    worst_pap = 0.0
    for a in (1.3, 2.0, 2.9):
        code = build_cat(a, 48)
        p = code.projector.matrix
        aop = mode_operator("annihilation", 48).matrix
        worst_pap = max(worst_pap, float(np.abs(p @ aop @ p).max()))
    ok_pap = worst_pap <= 1e-10

    # (b) a delta-n sweet spot sits near amplitude 2.9
    roots = sweet_spot_scan((2.7, 3.1), 60, grid=5e-3)
    near = min((abs(r - 2.9) for r in roots), default=np.inf)
    ok_root = near <= 0.15

    # (c) rotation pairs: theta separation pi/2 violates KL at O(1), while
    # staying inside the pi/4 cone gives residuals that shrink with alpha
    def resid(alpha, dim, th1, th2):
        code = build_cat(alpha, dim)
        n = np.arange(dim)
        ops = [np.diag(np.exp(-1j * th * n)) for th in (th1, th2)]
        states = [code.zero.amplitudes, code.one.amplitudes]
        return subspace_kl_residual(states, ops)

    big = resid(2.0, 32, 0.0, math.pi / 2.0)
    th_m = math.pi / 4.0 - 0.05
    small = [resid(a, 48, -th_m, th_m) for a in (1.5, 2.0, 2.5, 3.0)]
    ok_kl = big >= 0.5 and all(b < a for a, b in zip(small, small[1:]))

    _verdict(
        "criterion 5: code facts",
        ok_pap and ok_root and ok_kl,
        f"PcaPc {worst_pap:.1e}, root offset {near:.3f}, "
        f"pi/2 residual {big:.2f}, cone residuals {['%.3f' % r for r in small]}")


# ------------------------------------------------ criterion 8: XX phase table


def test_criterion_8_xx_phase_table():
    alpha, dim = 2.9, 60
    code = build_cat(alpha, dim)
    anc = AncillaSpec(1.0, 1.0, 0.3)
    noise = NoiseParams()
    delta = math.pi / 8.0
    s = select_threshold(alpha, lam_target=0.0)
    legs = [alpha, -alpha, 1j * alpha, -1j * alpha]
    overlaps = {}
    eng = UnitaryEngine()
    for a in legs:
        for b in legs:
            pair = np.kron(coherent_state(a, dim).amplitudes,
                           coherent_state(b, dim).amplitudes)
            res = xx_rotation_ft(pair, code, anc, noise, eng, delta, s=s)
            overlaps[(a, b)] = complex(np.vdot(pair, res.state))
    # the rule phase is -delta when the legs coincide or are opposite;
    # remove one global phase shared by all sixteen pairs
    def expect(a, b):
        return -delta if (a == b or a == -b) else 0.0

    zs = [ov * np.exp(-1j * expect(a, b)) for (a, b), ov in overlaps.items()]
    g = np.mean(zs)
    g /= abs(g)
    fids = [float(np.real(z * np.conj(g))) for z in zs]
    worst = min(fids)
    _verdict("criterion 8: XX phase table", worst >= 1.0 - 1e-4,
             f"worst per-pair fidelity {worst:.7f} over 16 coherent pairs")


# ------------------------------------------------ criterion 2: GPI boundary


def test_criterion_2_gpi_boundary():
    alpha, dim, omega = 2.9, 60, 0.3
    code, _ = harness._decoder(alpha, dim)
    noise = NoiseParams(gamma_fe=1e-3, gamma_eg=1e-3, gamma_phi=2.5e-4)
    s_matrix = snap_phases_z(0.7, dim)

    def passes(dchi_t):
        anc = harness._corpus_anc("snap", dchi_t, omega)
        aao = build_snap_model(s_matrix, anc, noise, dim)
        return bool(check_gpi(aao.model, code, list(harness._GEF), "g", 1).verdict)

    lo, hi = 0.40 * math.pi, 0.60 * math.pi
    ok_bracket = passes(lo) and not passes(hi)
    for _ in range(6):
        mid = 0.5 * (lo + hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
    flip = 0.5 * (lo + hi)
    ok_flip = ok_bracket and abs(flip - math.pi / 2.0) <= 0.05 * math.pi

    # algebraic and numeric checkers agree across the model corpus
    rec = harness.gpi_corpus({"scenario": "gpi_corpus",
                              "physical": {"alpha": alpha, "dim": dim},
                              "rates": {"gamma": 1e-3}})
    ok_corpus = not rec.failures and all(
        row[5] in (None, True) for row in rec.points)
    _verdict("criterion 2: GPI boundary", ok_flip and ok_corpus,
             f"verdict flips at dchi*T = {flip / math.pi:.3f}*pi; corpus "
             f"verdicts {[row[3] for row in rec.points]}, crosschecks agree")


# ----------------------------------- criterion 3: conditional-channel oracles


def test_criterion_3_conditional_channel_oracles():
    dim, omega, dchi = 24, 0.3, 0.1
    grid = 128
    anc = AncillaSpec(chi_f=1.0, chi_e=1.0 - dchi, omega=omega)
    n = np.arange(dim)
    eye = np.eye(dim)
    worst = 0.0
    checked = 0

    def compare(model, init, outcomes, analytic):
        nonlocal worst, checked
        for lbl, vec in outcomes:
            ch = conditional_channel(model, init, vec, 1, time_grid=grid)
            ana = analytic(lbl)
            for term in ch.terms:
                key = ("",) if term.order == 0 else (
                    term.labels[0], round(term.times[0], 12))
                assert key in ana, (lbl, key)
                worst = max(worst, float(np.linalg.norm(
                    term.operator - ana.pop(key), 2)))
                checked += 1
            # every analytic term with nonvanishing support must be realized
            for op in ana.values():
                assert np.linalg.norm(op) < 1e-9

    # SNAP segment: damped Rabi on the g-f pair, spectator e level
    t_snap = math.pi / (2.0 * omega)
    gam = 1e-2 / t_snap  # p = gamma * T = 1e-2
    noise = NoiseParams(gamma_fe=gam, gamma_eg=gam, gamma_phi=gam / 4.0)
    gf = noise.gamma_fe + abs(noise.delta_f) ** 2 * noise.gamma_phi
    ge = noise.gamma_eg + abs(noise.delta_e) ** 2 * noise.gamma_phi
    mu = math.sqrt(omega ** 2 - gf ** 2 / 16.0)
    sq_pd, sq_fe = math.sqrt(noise.gamma_phi), math.sqrt(noise.gamma_fe)

    def u_gg(t):
        return math.exp(-gf * t / 4) * (math.cos(mu * t) + gf / (4 * mu) * math.sin(mu * t))

    def u_ff(t):
        return math.exp(-gf * t / 4) * (math.cos(mu * t) - gf / (4 * mu) * math.sin(mu * t))

    def u_fg(t):
        return math.exp(-gf * t / 4) * (-1j * omega / mu * math.sin(mu * t))

    aao = build_snap_model(snap_phases_z(0.7, dim), anc, noise, dim,
                           picture="verify")
    s_diag = np.diag(np.exp(1j * np.angle(np.diag(
        aao.model.hamiltonian.reshape(3, dim, 3, dim)[2, :, 0, :]))))
    T = aao.model.duration
    ts = [round(t, 12) for t in np.linspace(0.0, T, grid)]

    def snap_analytic(lbl):
        if lbl == "f":
            out = {("",): u_fg(T) * s_diag}
            out.update({("dephase", t): 2 * sq_pd * u_ff(T - t) * u_fg(t) * s_diag
                        for t in ts})
        elif lbl == "g":
            out = {("",): u_gg(T) * eye}
            out.update({("dephase", t): 2 * sq_pd * u_fg(T - t) * u_fg(t) * eye
                        for t in ts})
        else:
            out = {("decay_fe", t):
                   sq_fe * math.exp(-ge * (T - t) / 2) * u_fg(t)
                   * np.diag(np.exp(-1j * dchi * t * n)) @ s_diag
                   for t in ts}
        return out

    compare(aao.model, KET_G, (("f", KET_F), ("e", KET_E), ("g", KET_G)),
            snap_analytic)

    # parity wait: pure dispersive phases with level decay
    t_par = math.pi  # chi_f = 1
    gam_p = 1e-2 / t_par
    noise_p = NoiseParams(gamma_fe=gam_p, gamma_eg=gam_p, gamma_phi=gam_p / 4.0)
    gfp = noise_p.gamma_fe + 4.0 * noise_p.gamma_phi
    gep = noise_p.gamma_eg + noise_p.gamma_phi
    sq_pd_p, sq_fe_p = math.sqrt(noise_p.gamma_phi), math.sqrt(noise_p.gamma_fe)
    p_aao = build_parity_model(anc, noise_p, dim, picture="verify")
    Tp = p_aao.model.duration
    tps = [round(t, 12) for t in np.linspace(0.0, Tp, grid)]

    def e_f(t):
        return np.exp(1j * anc.chi_f * t * n - gfp * t / 2)

    def e_e(t):
        return np.exp(1j * anc.chi_e * t * n - gep * t / 2)

    def parity_analytic(lbl):
        if lbl in ("+", "-"):
            sgn = 1.0 if lbl == "+" else -1.0
            out = {("",): np.diag(0.5 * (1.0 + sgn * e_f(Tp)))}
            out.update({("dephase", t): np.diag(sgn * sq_pd_p * e_f(Tp))
                        for t in tps})
            return out
        return {("decay_fe", t):
                np.diag(sq_fe_p / math.sqrt(2.0) * e_f(t) * e_e(Tp - t))
                for t in tps}

    compare(p_aao.model, KET_PLUS,
            (("+", KET_PLUS), ("-", KET_MINUS), ("e", KET_E)), parity_analytic)

    _verdict("criterion 3: conditional-channel oracles", worst <= 1e-3,
             f"worst per-Kraus operator-norm error {worst:.2e} over "
             f"{checked} terms (six channels, {grid}-point grids)")


# --------------------------------------------- criterion 6: engine equivalence


def test_criterion_6_engine_equivalence():
    dim = 16
    anc = AncillaSpec(chi_f=1.0, chi_e=0.96, omega=0.3)
    noise = NoiseParams(gamma_fe=5e-2, gamma_eg=5e-2, gamma_phi=1e-2)
    code = build_cat(1.5, dim)
    n_traj = 256
    bound = 3.0 / math.sqrt(n_traj)
    dists = []
    for aao in (build_snap_model(snap_phases_z(0.7, dim), anc, noise, dim,
                                 picture="verify"),
                build_parity_model(anc, noise, dim, picture="verify")):
        model = aao.model
        psi0 = np.kron(np.asarray(aao.ancilla_init, complex),
                       code.plus.amplitudes)
        psi0 /= np.linalg.norm(psi0)
        rho_mc = np.zeros((model.joint_dim, model.joint_dim), complex)
        for i in range(n_traj):
            out = MCEngine(seed=11, index=i).segment(model, psi0.copy())
            rho_mc += np.outer(out, out.conj())
        rho_mc /= n_traj
        rho_ref = evolve_master(model, np.outer(psi0, psi0.conj()), steps=600)
        evals = np.linalg.eigvalsh(rho_mc - rho_ref)
        dists.append(0.5 * float(np.abs(evals).sum()))
    ok_mc = all(d <= bound for d in dists)

    # shared-stream Schmidt validity: at the sweet-spot amplitude the jump
    # observable <J dag J> along the no-jump flow is component independent,
    # so one trajectory realization serves every large-weight component
    dim_s = 48
    alpha = sweet_spot_scan((2.8, 3.0), dim_s)[0]
    code_s = build_cat(alpha, dim_s)
    aao_s = build_parity_model(AncillaSpec(1.0, 1.0, 0.3),
                               NoiseParams(kappa=1e-3), dim_s,
                               picture="verify")
    model_s = aao_s.model
    prop = NoJumpPropagator(model_s)
    loss = model_s.jumps[0]
    jj = loss.at(0.0).conj().T @ loss.at(0.0)
    ent = (np.kron(code_s.zero.amplitudes, code_s.zero.amplitudes)
           + np.kron(code_s.one.amplitudes, code_s.one.amplitudes))
    comps = schmidt_decompose(ent / np.linalg.norm(ent), (dim_s, dim_s))
    curves = []
    for w, u, _v in comps:
        if w < 0.05:
            continue
        psi = np.kron(aao_s.ancilla_init, u)
        vals = []
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            v = prop.apply(frac * model_s.duration, psi)
            v /= np.linalg.norm(v)
            vals.append(float(np.real(np.vdot(v, jj @ v))))
        curves.append(vals)
    spread = max(abs(a - b) for row_a in curves for row_b in curves
                 for a, b in zip(row_a, row_b))
    scale = max(max(row) for row in curves)
    ok_schmidt = len(curves) >= 2 and spread <= 1e-3 * scale
    _verdict(
        "criterion 6: engine equivalence", ok_mc and ok_schmidt,
        f"trace distances {['%.3f' % d for d in dists]} <= {bound:.3f}; "
        f"component <JdagJ> relative spread {spread / scale:.1e}")


# ------------------------------------------------ criterion 7: memory decay


def test_criterion_7_memory_experiment():
    cfg = {
        "scenario": "memory",
        "physical": {"alpha": 2.0, "dim": 32},
        "rates": {"gamma": 0.02},
        "memory": {"rounds": 40, "teleport_after": [40], "wigner": False},
        "numerical": {"seed": 5, "steps": 300},
    }
    rec = harness.memory_experiment(cfg)
    series = [row[3] for row in rec.points if row[2] in ("init", "parity")]
    ok_decay = len(series) == 41 and all(
        b < a for a, b in zip(series, series[1:]))
    fresh = series[0]
    restored = [row for row in rec.points if row[2] == "teleport"][0][3]
    ok_restore = abs(restored - fresh) <= 0.05 * fresh
    _verdict(
        "criterion 7: memory experiment", ok_decay and ok_restore,
        f"<n> {series[0]:.3f} -> {series[-1]:.3f} strictly decreasing over 40 "
        f"rounds; teleport restores {restored:.3f} vs fresh {fresh:.3f}")


# -------------------------------------------- criterion 4: single-fault sweep


def test_criterion_4_single_fault_exhaustion():
    names = ["z_rotation", "photon_loss_correction", "x_rotation",
             "xx_rotation", "x_prep", "z_measurement", "x_measurement"]
    cfg = {
        "scenario": "fault_injection",
        "physical": {"alpha": 2.9, "dim": 60},
        "fault": {"gadgets": names, "kinds": ["a", "ef", "ge", "dephase"],
                  "n_times": 16},
    }
    rec = harness.fault_injection(cfg, workers=1)
    ok_rows = [row for row in rec.points if row[5] == "ok"]
    errors = [row for row in rec.points if row[5] == "error"]
    bad = [row for row in ok_rows
           if row[6] is None or not np.isfinite(row[6])
           or row[6] < 1.0 - 1e-3]
    covered = {(row[1], row[3]) for row in ok_rows}
    # a (gadget, kind) pair with no landed injection is exhausted vacuously
    # only if every attempt was impossible there: zero-probability fault
    # events (e.g. e->g decay on branches that never populate e) or steps
    # that carry no ancilla are "skipped", unreached branches "not_reached"
    vacuous = {(row[1], row[3]) for row in rec.points
               if row[5] in ("skipped", "not_reached")}
    full_cover = all((n, k) in covered or (n, k) in vacuous
                     for n in names for k in ("a", "ef", "ge", "dephase"))
    landed_somewhere = all(any((n, k) in covered for n in names)
                           for k in ("a", "ef", "ge", "dephase"))
    full_cover = full_cover and landed_somewhere
    ok = (not rec.failures and not errors and not bad and full_cover
          and len(ok_rows) > 0)
    worst = min((row[6] for row in ok_rows), default=0.0)
    _verdict(
        "criterion 4: single-fault exhaustion",
        ok,
        f"{len(ok_rows)} injected runs decodable (worst fidelity {worst:.6f}),"
        f" {len(errors)} errors, {len(bad)} below threshold, "
        f"coverage {'complete' if full_cover else 'incomplete'}")


# ---------------------------------------------- criterion 1: scaling law (MC)


def test_criterion_1_teleport_scaling():
    alpha, dim, omega = 2.0, 32, 0.3
    ratios = (1e-4, 3e-4, 1e-3, 3e-3)
    n_shots = 1000
    seed = 20260823
    # common-random-numbers estimator: shot j uses the same trajectory stream
    # at every noise level, and the reference level carries an infinitesimal
    # rate so that its draw pattern matches (a strictly zero-rate model
    # consumes no jump draws and would decohere the pairing); the per-shot
    # difference then isolates the noise-induced infidelity from the
    # decoder floor
    levels = [1e-12] + [r for r in ratios]
    means, sems = [], []
    vals = {}
    for ratio in levels:
        gamma = ratio * omega
        out = np.array(
            [harness._teleport_shot((0, j, alpha, dim, omega, 0.0, gamma,
                                     seed, 1))[2] for j in range(n_shots)],
            dtype=float)
        vals[ratio] = out
    ref = vals[1e-12]
    for ratio in ratios:
        d = vals[ratio] - ref
        means.append(float(d.mean()))
        sems.append(float(d.std(ddof=1) / math.sqrt(n_shots)))
    usable = [i for i in range(len(ratios))
              if means[i] > 2.0 * sems[i] and means[i] > 0.0]
    detail = "; ".join(
        f"{r:g}: {m:.2e}+-{s:.2e}" for r, m, s in zip(ratios, means, sems))
    if len(usable) < 2:
        _verdict("criterion 1: teleport scaling", False,
                 f"insufficient signal to fit a slope at {n_shots} shots "
                 f"per point ({detail})")
        return
    x = np.log([ratios[i] for i in usable])
    y = np.log([means[i] for i in usable])
    w = np.array([(means[i] / sems[i]) ** 2 for i in usable])
    a = np.vstack([x, np.ones_like(x)]).T
    slope = float(np.linalg.lstsq(a * np.sqrt(w)[:, None],
                                  y * np.sqrt(w), rcond=None)[0][0])
    _verdict("criterion 1: teleport scaling", 1.6 <= slope <= 2.4,
             f"fitted log-log slope {slope:.2f} over "
             f"{len(usable)} resolvable points ({detail})")
