"""Acceptance criteria 1-11, one test each, at the stated tolerances and time limits.

Each test prints a single ``PASS``/``FAIL`` line with the measured values.
"""

import json
import time

import numpy as np
import pytest

from vanishing_mass import envelopes as env
from vanishing_mass import integrands as ig
from vanishing_mass import laminate as lam
from vanishing_mass import michell as mi
from vanishing_mass import mollify as mo
from vanishing_mass.cli import run
from vanishing_mass.tensor import eigvals_ordered, frob2, random_rotations, random_sym, wave_cone_batch

N_RANDOM = 100_000


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, text: str, elapsed: float):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {text} ({elapsed:.2f} s)")
    return emit


def test_criterion_01_two_bar(report, capsys):
    capsys.readouterr()
    t0 = time.perf_counter()
    code = run(["michell", "solve", "examples/two_bar.json"])
    elapsed = time.perf_counter() - t0
    p = json.loads(capsys.readouterr().out)["payload"]
    w = sorted((b["w"] for b in p["bars"]), reverse=True)
    werr = max(abs(w[0] - 0.5), abs(w[1] - 0.5), sum(w[2:]))
    axis = {(b["a"], b["b"]) for b in p["bars"] if b["w"] > 0.25}
    ok = (code == 0 and abs(p["kappa"] - 2) <= 1e-9 and abs(p["compliance"] - 2) <= 1e-9
          and werr <= 1e-9 and elapsed < 0.1)
    report(1, ok, f"kappa={p['kappa']!r} compliance={p['compliance']!r} weight_err={werr:.1e} "
                  f"loaded bars={sorted(axis)}", elapsed)
    assert ok


def test_criterion_02_compliance_family(report):
    t0 = time.perf_counter()
    gs, lc = mi.two_bar_problem()
    sol = mi.solve_michell_lp(gs, lc)
    deltas = np.arange(1, 10) / 10
    vals, err = [], 0.0
    for d in deltas:
        w = np.zeros(len(gs.bars))
        w[0], w[1] = d, 1 - d
        c = mi.weighted_shape(sol, w).compliance
        vals.append(c)
        err = max(err, abs(c - (1 / (2 * d) + 1 / (2 * (1 - d)))))
    elapsed = time.perf_counter() - t0
    argmin = float(deltas[int(np.argmin(vals))])
    ok = err <= 1e-12 and argmin == 0.5 and elapsed < 0.1
    report(2, ok, f"max family error={err:.1e}, argmin delta={argmin}", elapsed)
    assert ok


def test_criterion_03_integrand_identities(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = {"wave": 0.0, "half": 0.0, "qmax": 0.0, "sandwich": np.inf, "lemma": -np.inf}
    for n in (2, 3):
        w = wave_cone_batch(n, 100 + n, N_RANDOM)
        worst["wave"] = max(worst["wave"], float(np.abs(ig.j_bar_star(w) - ig.j_star(w)).max()))
        t = random_sym(n, rng, N_RANDOM)
        rp, _ = ig.rho_polar_batch(t)
        worst["half"] = max(worst["half"], float(np.abs(ig.j_bar_star(t) - 0.5 * rp**2).max()))
        if n == 2:
            qmax = np.maximum(ig.q_alpha(t, -1.0), ig.q_alpha(t, 1.0))
            worst["qmax"] = float(np.abs(qmax - ig.j_bar_star(t)).max())
        xi = random_sym(n, rng, N_RANDOM)
        jb, n2 = ig.j_bar(xi), frob2(xi)
        worst["sandwich"] = min(worst["sandwich"], float((jb - n2 / (2 * n)).min()),
                                float((0.5 * n2 - jb).min()))
        # diagonal entries 2..n in a random frame against the n-1 largest |eigenvalues|
        rot = random_rotations(n, rng, N_RANDOM)
        d = np.diagonal(rot @ xi @ np.swapaxes(rot, -1, -2), axis1=-2, axis2=-1)
        ev = eigvals_ordered(xi)
        slack = np.sum(d[:, 1:] ** 2, -1) - np.sum(ev[:, 1:] ** 2, -1)
        worst["lemma"] = max(worst["lemma"], float(slack.max()))
    elapsed = time.perf_counter() - t0
    ok = (worst["wave"] <= 1e-10 and worst["half"] <= 1e-12 and worst["qmax"] <= 1e-12
          and worst["sandwich"] >= 0.0 and worst["lemma"] <= 1e-12 and elapsed < 10)
    report(3, ok, "wave-cone={wave:.1e} half-rho-sq={half:.1e} q-alpha={qmax:.1e} "
                  "sandwich-min={sandwich:.1e} diagonal-slack={lemma:.1e}".format(**worst), elapsed)
    assert ok


def test_criterion_04_polar_oracle(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    err = 0.0
    for n in (2, 3):
        for tau in random_sym(n, rng, 1000):
            exact = ig.rho_polar(tau).value
            err = max(err, abs(exact - ig.rho_polar_bruteforce(tau, grid_n=2048)) / exact)
    elapsed = time.perf_counter() - t0
    ok = err <= 5e-3 and elapsed < 60
    report(4, ok, f"max relative error vs brute force={err:.2e}", elapsed)
    assert ok


def test_criterion_05_q_xi_convexity(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst, control = np.inf, -np.inf
    for n in (2, 3):
        xis = random_sym(n, rng, 1000)
        r = np.asarray(ig.rho(xis))
        xis = xis * (rng.uniform(0, 1, 1000) / np.maximum(r, 1e-300))[:, None, None]
        for k, xi in enumerate(xis):
            sig = wave_cone_batch(n, 1000 * n + k, 1000)
            worst = min(worst, float(np.min(ig.Q_xi(xi, sig))))
        ctl = ig.lambda_div_convexity_check(lambda s: -0.5 * frob2(s), n, 5, 1000)
        control = max(control, ctl.min_value)
    elapsed = time.perf_counter() - t0
    ok = worst >= -1e-10 and control < -1e-10 and elapsed < 30
    report(5, ok, f"min Q_xi on cone={worst:.2e}, negative-definite control min={control:.2e}", elapsed)
    assert ok


def test_criterion_06_envelopes(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    agree, excess = 0.0, -np.inf
    for n in (2, 3):
        t = random_sym(n, rng, N_RANDOM, scale=2.0)
        p = env.KSParams(rng.uniform(0.1, 10, N_RANDOM), rng.uniform(0.1, 10, N_RANDOM))
        agree = max(agree, float(np.abs(env.q_div_h_general(t, p) - env.q_div_h_explicit(t, p)).max()))
        rp, _ = ig.rho_polar_batch(t)
        n2 = frob2(t)
        for eps in (1e-2, 1e-3, 1e-4):
            e = np.abs(env.q_div_h_eps(t, eps) - rp) - eps * (n2 + rp**2)
            excess = max(excess, float(e.max()))
    elapsed = time.perf_counter() - t0
    ok = agree <= 1e-10 and excess <= 0.0 and elapsed < 10
    report(6, ok, f"general vs explicit={agree:.1e}, max(error - eps(|t|^2+rho^2))={excess:.2e}", elapsed)
    assert ok


def test_criterion_07_laminate_energies(report):
    t0 = time.perf_counter()
    eps = [1e-1, 1e-2, 1e-3, 1e-4]
    st2 = lam.convergence_study((1.0, 2.0), eps)
    e2 = max(abs(r.energy - 4.5) for r in st2.rows)
    st_i = lam.convergence_study((1.0, 1.0, 3.0), eps)
    st_ii = lam.convergence_study((1.0, 1.0, 1.0), eps)
    fi = max(abs(r.error - 9 / 8 * r.eps) for r in st_i.rows)
    fii = max(abs(r.error - 0.375 * r.eps) for r in st_ii.rows)
    elapsed = time.perf_counter() - t0
    ok = (e2 <= 1e-12 and fi <= 1e-10 and fii <= 1e-10
          and abs(st_i.rows[0].limit - 6.5) <= 1e-12 and abs(st_ii.rows[0].limit - 2.25) <= 1e-12
          and 0.99 <= st_i.slope <= 1.01 and 0.99 <= st_ii.slope <= 1.01 and elapsed < 5)
    report(7, ok, f"2D |E-4.5|={e2:.1e}; case I |err-9/8 eps|={fi:.1e} slope={st_i.slope:.4f}; "
                  f"case II |err-3/8 eps|={fii:.1e} slope={st_ii.slope:.4f}", elapsed)
    assert ok


def test_criterion_08_laminate_divergence(report):
    t0 = time.perf_counter()
    res, ctl = 0.0, np.inf
    for a in ((1.0, 2.0), (1.0, 1.0, 3.0), (1.0, 1.0, 1.0)):
        c = lam.build_construction(a, 0.2, 5)
        res = max(res, lam.weak_divergence_residual(c))
        ctl = min(ctl, lam.weak_divergence_residual(lam.corrupt_construction(c)))
    elapsed = time.perf_counter() - t0
    ok = res <= 1e-10 and ctl > 1e-3 and elapsed < 5
    report(8, ok, f"max weak residual={res:.1e}, min corrupted residual={ctl:.2e}", elapsed)
    assert ok


def test_criterion_09_compensated_compactness(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    margin, zero = np.inf, 0.0
    for a in ((1.0, 2.0), (1.0, 1.0, 3.0), (1.0, 1.0, 1.0)):
        n = len(a)
        bound = 10.0 * float(np.sum(np.square(a))) ** 2
        xis = random_sym(n, rng, 100)
        r = np.asarray(ig.rho(xis))
        xis = xis * (rng.uniform(0, 1, 100) / r)[:, None, None]
        for eps in (1e-1, 1e-2, 1e-3, 1e-4):
            c = lam.build_construction(a, eps)
            zero = max(zero, abs(lam.cc_check(c, np.zeros((n, n))) - lam.energy_eps(c)))
            for xi in xis:
                margin = min(margin, lam.cc_check(c, xi) + bound * eps)
    elapsed = time.perf_counter() - t0
    ok = margin >= 0.0 and zero == 0.0 and elapsed < 30
    report(9, ok, f"min(cc + 10 eps (sum a^2)^2)={margin:.3e}, |cc(0) - E_eps|={zero:.1e}", elapsed)
    assert ok


def test_criterion_10_mollifier(report):
    t0 = time.perf_counter()
    dom = mo.unit_disk()
    delta = 0.0075
    exp = mo.check_expansion(dom, delta, 360)
    exp_err = abs(exp.min_distance - 3 * delta)
    mass = [mo.mass_check(mo.DiscreteMeasure(scalar=True).add_atom((0.1, 0.2), 1.0), delta, dom),
            mo.mass_check(mo.DiscreteMeasure(scalar=True).add_box((-0.5, -0.5), (0.5, 0.5), 1.0),
                          delta, dom)]
    rng = np.random.default_rng(10)
    mu = mo.DiscreteMeasure(scalar=True)
    pts = rng.uniform(-0.7, 0.7, (10, 2))
    pts[0] = (1.0, 0.0)
    for p in pts:
        mu.add_atom(p, 0.1)
    mass.append(mo.mass_check(mu, delta, dom))
    div = []
    for m in (mo.square_truss(), mo.braced_cross(), mo.airy_bump()):
        src, res = mo.divergence_preservation_check(m, delta, dom)
        div.append(max(src, res))
    sup = mo.support_check(mo.mollify(mu, delta, dom))
    elapsed = time.perf_counter() - t0
    ok = (exp.passed and exp_err <= 1e-12 and max(mass) <= 1e-6 and max(div) <= 1e-6
          and sup.passed and elapsed < 60)
    report(10, ok, f"expansion dist={exp.min_distance:.6g} (3 delta={3 * delta:g}), "
                   f"mass errors={[float(f'{m:.1e}') for m in mass]}, "
                   f"divergence residuals={[float(f'{d:.1e}') for d in div]}, "
                   f"collar max |field|={sup.max_abs} at width {sup.collar:.4g}", elapsed)
    assert ok


def test_criterion_11_entropy_and_duality(report):
    t0 = time.perf_counter()
    problems = {"two_bar": mi.two_bar_problem()}
    single = mi.complete_ground_structure([[0.0, 0.0], [1.0, 0.0]])
    problems["single_bar"] = (single, mi.LoadCase({0: np.array([-1.0, 0.0]), 1: np.array([1.0, 0.0])}))
    problems["cantilever"] = (mi.build_grid_ground_structure(3, 2, connectivity_radius=np.sqrt(2.0)),
                              mi.LoadCase({2: np.array([0.0, -1.0]), 0: np.array([2.0, 0.5]),
                                           3: np.array([-2.0, 0.5])}))
    cube = mi.build_grid_ground_structure(2, 2, 2, connectivity_radius=np.sqrt(3.0))
    d = cube.positions[7] - cube.positions[0]
    problems["cube_diagonal"] = (cube, mi.LoadCase({0: -d, 7: d}))
    worst_entropy, worst_gap, worst_dual = 0.0, 0.0, 0.0
    for gs, lc in problems.values():
        sol = mi.solve_michell_lp(gs, lc)
        shape = mi.extract_limit_shape(sol)
        k2 = sol.objective**2
        worst_entropy = max(worst_entropy, mi.verify_entropy_condition(shape) / k2)
        worst_gap = max(worst_gap, sol.dual_gap)
        # dual certificate: |u_a - u_b| . e_ab <= l_ab for every bar, and f . u = kappa
        b = gs.equilibrium_matrix()
        f = lc.vector(len(gs.positions), gs.dim)
        u = np.asarray(sol.displacement).ravel()
        viol = max(0.0, float(np.max(np.abs(b.T @ u) - gs.lengths)))
        worst_dual = max(worst_dual, viol, abs(float(f @ u) - sol.objective))
    elapsed = time.perf_counter() - t0
    ok = worst_entropy <= 1e-8 and worst_gap <= 1e-8 and worst_dual <= 1e-8
    report(11, ok, f"entropy/kappa^2={worst_entropy:.1e}, duality gap={worst_gap:.1e}, "
                   f"dual certificate violation={worst_dual:.1e} over {len(problems)} problems", elapsed)
    assert ok
