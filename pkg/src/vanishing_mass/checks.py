"""Property suites across all modules, used by ``vm check``.

Every suite returns :class:`~vanishing_mass.io.CheckResult` records; a
suite never raises on a failed property, it reports it.
"""

from __future__ import annotations

import logging
import time
from typing import Callable

import numpy as np

from . import envelopes as env
from . import integrands as ig
from . import laminate as lam
from . import michell as mi
from . import mollify as mo
from .io import CheckResult
from .tensor import eigen_ordered, eigvals_ordered, frob2, random_rotations, random_sym, wave_cone_batch

log = logging.getLogger(__name__)


def _le(name: str, value: float, threshold: float) -> CheckResult:
    return CheckResult(name, float(value), float(threshold), bool(value <= threshold), "<=")


def _ge(name: str, value: float, threshold: float) -> CheckResult:
    return CheckResult(name, float(value), float(threshold), bool(value >= threshold), ">=")


def _gt(name: str, value: float, threshold: float) -> CheckResult:
    return CheckResult(name, float(value), float(threshold), bool(value > threshold), ">")


def tensor_suite(seed: int = 0, count: int = 10_000) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    for n in (2, 3):
        a = random_sym(n, rng, count)
        rec = orth = det = 0.0
        for m in a[:2000]:
            sp = eigen_ordered(m)
            rec = max(rec, np.abs(sp.recompose() - m).max())
            orth = max(orth, np.abs(sp.rotation.T @ sp.rotation - np.eye(n)).max())
            det = max(det, abs(np.linalg.det(sp.rotation) - 1.0))
        ref = np.sort(np.abs(np.linalg.eigvalsh(a)), axis=-1)
        ev = np.abs(eigvals_ordered(a))
        out += [
            _le(f"tensor.recompose_{n}d", rec, 1e-12),
            _le(f"tensor.orthogonality_{n}d", orth, 1e-12),
            _le(f"tensor.eigvals_vs_lapack_{n}d", np.abs(ev - ref).max(), 1e-12),
            _le(f"tensor.det_rotation_{n}d", det, 1e-12),
        ]
    return out


def integrand_suite(seed: int = 0, count: int = 10_000, oracle_count: int = 100) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    for n in (2, 3):
        t = random_sym(n, rng, count)
        rp, _ = ig.rho_polar_batch(t)
        out.append(_le(f"integrands.jbarstar_half_rho_polar_sq_{n}d",
                       np.abs(ig.j_bar_star(t) - 0.5 * rp**2).max(), 1e-12))
        w = wave_cone_batch(n, seed + n, count)
        out.append(_le(f"integrands.jbarstar_eq_jstar_wave_cone_{n}d",
                       np.abs(ig.j_bar_star(w) - ig.j_star(w)).max(), 1e-10))
        xi = random_sym(n, rng, count)
        jb = ig.j_bar(xi)
        n2 = frob2(xi)
        out.append(_ge(f"integrands.jbar_sandwich_{n}d",
                       min((jb - n2 / (2 * n)).min(), (0.5 * n2 - jb).min()), 0.0))
        out.append(_le(f"integrands.jbar_half_rho_sq_{n}d",
                       np.abs(jb - 0.5 * ig.rho(xi) ** 2).max(), 1e-12))
        # diagonal entries in a random frame against the n-1 largest |eigenvalues|
        rot = random_rotations(n, rng, count)
        xr = rot @ xi @ np.swapaxes(rot, -1, -2)
        d = np.diagonal(xr, axis1=-2, axis2=-1)
        ev = eigvals_ordered(xi)
        slack = np.sum(d[..., 1:] ** 2, -1) - np.sum(ev[..., 1:] ** 2, -1)
        out.append(_le(f"integrands.diagonal_eigen_bound_{n}d", slack.max(), 1e-12))
        s = rng.uniform(0.1, 10.0, count)
        hom = np.abs(ig.rho_polar_batch(s[:, None, None] * t)[0] - s * rp) / np.maximum(s * rp, 1e-300)
        out.append(_le(f"integrands.rho_polar_homogeneity_{n}d", hom.max(), 1e-12))
        err = 0.0
        for tau in t[:oracle_count]:
            exact = ig.rho_polar(tau).value
            err = max(err, abs(exact - ig.rho_polar_bruteforce(tau)) / max(exact, 1e-300))
        out.append(_le(f"integrands.rho_polar_oracle_{n}d", err, 5e-3))
    t2 = random_sym(2, rng, count)
    qmax = np.maximum(ig.q_alpha(t2, -1.0), ig.q_alpha(t2, 1.0))
    out.append(_le("integrands.max_q_alpha_eq_jbarstar", np.abs(qmax - ig.j_bar_star(t2)).max(), 1e-12))
    # both closed forms on the thin/fat boundary |t1| + |t2| = |t3|
    a = rng.uniform(0.0, 1.0, (count, 2))
    s12 = a.sum(1)
    thin = np.hypot(s12, s12)
    fat = 2.0 * s12 / np.sqrt(2.0)
    out.append(_le("integrands.branch_continuity", np.abs(thin - fat).max(), 1e-10))
    ev = np.concatenate([a, s12[:, None]], axis=1)
    out.append(_le("integrands.branch_boundary_value",
                   np.abs(ig.rho_polar_from_eigs(ev)[0] - thin).max(), 1e-10))
    return out


def convexity_suite(seed: int = 0, xi_count: int = 100, samples: int = 1000) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    for n in (2, 3):
        worst = np.inf
        xis = random_sym(n, rng, xi_count)
        for k, xi in enumerate(xis):
            r = ig.rho(xi)
            xi = xi / max(r, 1.0) * rng.uniform(0.2, 1.0) if r > 0 else xi
            rep = ig.lambda_div_convexity_check(lambda s, x=xi: ig.Q_xi(x, s), n, seed + 17 * k, samples)
            worst = min(worst, rep.min_value)
        out.append(_ge(f"integrands.Q_xi_wave_cone_min_{n}d", worst, -1e-10))
        ctl = ig.lambda_div_convexity_check(lambda s: -0.5 * frob2(s), n, seed, samples)
        out.append(_le(f"integrands.negative_control_min_{n}d", ctl.min_value, -1e-10))
        tar = ig.lambda_div_convexity_check(ig.tartar_form, n, seed, samples)
        out.append(_ge(f"integrands.tartar_form_min_{n}d", tar.min_value, -1e-10))
    return out


def envelope_suite(seed: int = 0, count: int = 10_000) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    for n in (2, 3):
        t = random_sym(n, rng, count, scale=2.0)
        p = env.KSParams(rng.uniform(0.1, 3.0, count), rng.uniform(0.1, 3.0, count))
        diff = np.abs(env.q_div_h_general(t, p) - env.q_div_h_explicit(t, p))
        out.append(_le(f"envelopes.general_vs_explicit_{n}d", diff.max(), 1e-10))
        rp, _ = ig.rho_polar_batch(t)
        n2 = frob2(t)
        worst = -np.inf
        for eps in (1e-2, 1e-3, 1e-4):
            excess = np.abs(env.q_div_h_eps(t, eps) - rp) - eps * (n2 + rp**2)
            worst = max(worst, float(excess.max()))
        out.append(_le(f"envelopes.h_eps_to_rho_polar_{n}d", worst, 0.0))
        lo = env.q_div_h_general(t, p) - env.ks_h(t, p)
        out.append(_le(f"envelopes.envelope_below_h_{n}d", lo.max(), 1e-12))
    return out


def michell_suite(seed: int = 0) -> list[CheckResult]:
    out = []
    gs, lc = mi.two_bar_problem()
    sol = mi.solve_michell_lp(gs, lc)
    shape = mi.extract_limit_shape(sol)
    out.append(_le("michell.two_bar_kappa", abs(sol.objective - 2.0), 1e-9))
    out.append(_le("michell.two_bar_compliance", abs(shape.compliance - 2.0), 1e-9))
    w = np.sort(shape.mu_weights)[::-1]
    out.append(_le("michell.two_bar_weights", np.abs(w[:2] - 0.5).max() + w[2:].sum(), 1e-9))
    deltas = np.arange(1, 10) / 10.0
    err = 0.0
    for d in deltas:
        wts = np.zeros(len(gs.bars))
        wts[0], wts[1] = d, 1.0 - d
        c = mi.weighted_shape(sol, wts).compliance
        err = max(err, abs(c - (1 / (2 * d) + 1 / (2 * (1 - d)))))
    out.append(_le("michell.two_bar_family", err, 1e-12))
    rng = np.random.default_rng(seed)
    for name, (g, l) in {
        "two_bar": (gs, lc),
        "cantilever": _cantilever(),
        "random_grid": _random_grid_problem(rng),
    }.items():
        s = mi.solve_michell_lp(g, l)
        sh = mi.extract_limit_shape(s)
        k2 = s.objective**2
        out.append(_le(f"michell.{name}_entropy", mi.verify_entropy_condition(sh), 1e-8 * k2))
        out.append(_le(f"michell.{name}_dual_gap", s.dual_gap, 1e-8 * max(1.0, s.objective)))
        out.append(_le(f"michell.{name}_dual_feasibility", s.dual_violation, 1e-8))
        out.append(_le(f"michell.{name}_equilibrium", s.equilibrium_residual, 1e-9))
    return out


def _cantilever():
    gs = mi.build_grid_ground_structure(3, 2, connectivity_radius=np.sqrt(2.0))
    lc = mi.LoadCase({2: np.array([0.0, -1.0]), 0: np.array([2.0, 0.5]),
                      3: np.array([-2.0, 0.5])})
    return gs, lc


def _random_grid_problem(rng: np.random.Generator):
    gs = mi.build_grid_ground_structure(4, 3, connectivity_radius=np.sqrt(5.0))
    n = len(gs.positions)
    nodes = rng.choice(n, size=3, replace=False)
    f = rng.normal(size=(3, 2))
    # balance force and moment by solving for the last two nodes' loads
    x = gs.positions[nodes]
    a = np.zeros((3, 4))
    a[0, [0, 2]] = 1.0
    a[1, [1, 3]] = 1.0
    a[2] = [-x[1, 1], x[1, 0], -x[2, 1], x[2, 0]]
    rhs = -np.array([f[0, 0], f[0, 1], x[0, 0] * f[0, 1] - x[0, 1] * f[0, 0]])
    sol = np.linalg.lstsq(a, rhs, rcond=None)[0]
    f[1], f[2] = sol[:2], sol[2:]
    return gs, mi.LoadCase({int(j): f[i] for i, j in enumerate(nodes)})


LAMINATE_CASES = {"2D": (1.0, 2.0), "3D-I": (1.0, 1.0, 3.0), "3D-II": (1.0, 1.0, 1.0)}


def laminate_suite(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    eps_list = [1e-1, 1e-2, 1e-3, 1e-4]
    st = lam.convergence_study(LAMINATE_CASES["2D"], eps_list)
    out.append(_le("laminate.2d_exact_energy", max(abs(r.energy - 4.5) for r in st.rows), 1e-12))
    for name, coef, limit in (("3D-I", 9 / 8, 6.5), ("3D-II", 0.375, 2.25)):
        st = lam.convergence_study(LAMINATE_CASES[name], eps_list)
        out.append(_le(f"laminate.{name}_error_formula",
                       max(abs(r.error - coef * r.eps) for r in st.rows), 1e-10))
        out.append(_le(f"laminate.{name}_limit", abs(st.rows[0].limit - limit), 1e-12))
        out.append(_le(f"laminate.{name}_slope_deviation", abs(st.slope - 1.0), 0.01))
    for name, a in LAMINATE_CASES.items():
        c = lam.build_construction(a, 0.2, 5)
        out.append(_le(f"laminate.{name}_weak_residual", lam.weak_divergence_residual(c), 1e-10))
        out.append(_gt(f"laminate.{name}_corrupt_residual",
                       lam.weak_divergence_residual(lam.corrupt_construction(c)), 1e-3))
        bound = 10.0 * float(np.sum(np.square(a))) ** 2
        worst = np.inf
        zero = 0.0
        for eps in (1e-1, 1e-2, 1e-3, 1e-4):
            c = lam.build_construction(a, eps)
            zero = max(zero, abs(lam.cc_check(c, np.zeros((len(a), len(a)))) - lam.energy_eps(c)))
            for xi in _admissible_xis(len(a), rng, 100):
                worst = min(worst, lam.cc_check(c, xi) + bound * eps)
        out.append(_ge(f"laminate.{name}_cc_lower_bound", worst, 0.0))
        out.append(_le(f"laminate.{name}_cc_at_zero", zero, 0.0))
    return out


def _admissible_xis(n: int, rng: np.random.Generator, count: int) -> np.ndarray:
    xi = random_sym(n, rng, count)
    r = np.asarray(ig.rho(xi))
    scale = rng.uniform(0.0, 1.0, count) / np.maximum(r, 1e-300)
    return xi * scale[:, None, None]


def mollify_suite(seed: int = 0, delta: float = 0.0075, full: bool = False) -> list[CheckResult]:
    dom = mo.unit_disk()
    out = []
    rep = mo.check_expansion(dom, delta)
    out.append(_gt("mollify.expansion_min_distance", rep.min_distance, rep.threshold))
    out.append(_le("mollify.normal_residual", mo.normal_residual(dom), 1e-8))
    out.append(_le("mollify.jacobian_symmetry", mo.jacobian_symmetry_residual(dom, delta, seed=seed), 0.0))
    inj = mo.injectivity_check(dom, delta, seed=seed)
    out.append(_ge("mollify.injectivity_slack", inj.min_slack, 0.0))
    out.append(_le("mollify.mass_single_atom",
                   mo.mass_check(mo.DiscreteMeasure(scalar=True).add_atom((0.1, 0.2), 1.0), delta, dom), 1e-6))
    rng = np.random.default_rng(seed)
    mu = mo.DiscreteMeasure(scalar=True)
    pts = rng.uniform(-0.7, 0.7, (10, 2))
    pts[0] = (1.0, 0.0)
    for p in pts:
        mu.add_atom(p, 0.1)
    out.append(_le("mollify.mass_random_atoms", mo.mass_check(mu, delta, dom), 1e-6))
    sup = mo.support_check(mo.mollify(mu, delta, dom))
    out.append(_le("mollify.support_collar_max", sup.max_abs, 0.0))
    if full:
        box = mo.DiscreteMeasure(scalar=True).add_box((-0.5, -0.5), (0.5, 0.5), 1.0)
        out.append(_le("mollify.mass_box", mo.mass_check(box, delta, dom), 1e-6))
        for name, m in (("square_truss", mo.square_truss()), ("braced_cross", mo.braced_cross()),
                        ("airy", mo.airy_bump())):
            src, res = mo.divergence_preservation_check(m, delta, dom)
            out.append(_le(f"mollify.{name}_source_residual", src, 1e-12))
            out.append(_le(f"mollify.{name}_divergence_residual", res, 1e-6))
        tv = mo.total_variation_check(mo.square_truss(), delta, dom)
        out.append(_le("mollify.total_variation", tv.field_tv, tv.bound * (1 + 1e-6)))
    return out


SUITES: dict[str, Callable[..., list[CheckResult]]] = {
    "tensor": tensor_suite,
    "integrands": integrand_suite,
    "convexity": convexity_suite,
    "envelopes": envelope_suite,
    "michell": michell_suite,
    "laminate": laminate_suite,
    "mollify": mollify_suite,
}


def run_all(seed: int = 0, full: bool = False, suites=None) -> list[CheckResult]:
    """Run the named suites (all by default) and concatenate their results."""
    out = []
    for name in suites or SUITES:
        t0 = time.perf_counter()
        fn = SUITES[name]
        res = fn(seed=seed, full=full) if name == "mollify" else fn(seed=seed)
        log.info("suite %s: %d checks, %.2f s", name, len(res), time.perf_counter() - t0)
        out += res
    return out
