"""Command-line entry point ``vm``.

Every subcommand prints a result envelope (JSON) to stdout.  With ``--out``
it also writes ``result.json`` plus the delimited tables and SVG figures
selected by ``--format``.

Options are resolved as command-line flag, then the ``--config`` TOML file
(top-level keys, overridden by a table named after the subcommand), then the
built-in default.

Exit codes: 0 ok, 1 a property check failed, 2 infeasible, 3 invalid input,
4 unbalanced load, 5 internal error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .envelopes import KSParams, q_div_h_explicit, q_div_h_general, ks_h
from .errors import InfeasibleError, InputError, PreconditionError, UnbalancedLoadError
from .integrands import j, j_bar, j_bar_star, j_star, rho, rho_polar
from .io import (CheckResult, SchemaError, dumps, load_config, load_measure, load_problem,
                 make_envelope, parse_json_text, resolve_problem_path, write_csv, write_json)
from .tensor import as_matrix

log = logging.getLogger("vanishing_mass")

EXIT_OK, EXIT_CHECK, EXIT_INFEASIBLE, EXIT_SCHEMA, EXIT_UNBALANCED, EXIT_INTERNAL = 0, 1, 2, 3, 4, 5

DEFAULTS = {
    "seed": 0,
    "out": None,
    "format": "json,csv,svg",
    "tol": [],
    "delta": 0.005,
    "grid": 101,
    "measure": "square",
    "alphas": "1,1,3",
    "eps": "1e-1,1e-2,1e-3",
    "periods": None,
    "full": False,
    "suites": None,
}


@dataclass
class RunConfig:
    """Resolved options of one invocation."""

    command: str
    input: str | None = None
    out: Path | None = None
    seed: int = 0
    tolerances: dict[str, float] = field(default_factory=dict)
    formats: tuple[str, ...] = ("json", "csv", "svg")
    options: dict = field(default_factory=dict)

    def echo(self) -> dict:
        return {"command": self.command, "input": self.input,
                "out": None if self.out is None else str(self.out), "seed": self.seed,
                "tolerances": self.tolerances, "formats": list(self.formats),
                "options": self.options}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_SCHEMA, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output directory for result files")
    p.add_argument("--format", help="comma list from json,csv,svg (default all)")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--tol", action="append", metavar="NAME=VALUE",
                   help="override the threshold of a reported check")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="vm", description="Vanishing-mass compliance toolkit.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--config", help="TOML file with option defaults")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("integrand", help="evaluate j, j*, j_bar, j_bar*, rho, rho°")
    p.add_argument("--tau", required=True, help="row-major JSON matrix")
    p.add_argument("--dim", type=int, help="expected dimension (2 or 3)")
    _common(p)

    p = sub.add_parser("envelope", help="Kohn-Strang integrand and its envelope")
    p.add_argument("--tau", required=True, help="row-major JSON matrix")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--eps", dest="env_eps", type=float, help="use alpha = eps/2, beta = 1/(2 eps)")
    _common(p)

    p = sub.add_parser("michell", help="ground-structure Michell problem")
    msub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    s = msub.add_parser("solve", help="solve a problem file")
    s.add_argument("problem", help="problem JSON (bundled names such as two_bar.json also work)")
    _common(s)

    p = sub.add_parser("laminate", help="laminate constructions")
    lsub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    s = lsub.add_parser("study", help="energy convergence study")
    s.add_argument("--alphas", help="comma list of diagonal stress entries")
    s.add_argument("--eps", help="comma list of decreasing eps values")
    s.add_argument("--periods", type=int, help="fixed period count (default ceil(eps^-1/2))")
    _common(s)

    p = sub.add_parser("mollify", help="support-preserving mollification")
    msub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    s = msub.add_parser("demo", help="mollify a measure on the unit disk and report its properties")
    s.add_argument("--measure", help="measure JSON, or one of square, cross, airy, atoms")
    s.add_argument("--delta", type=float, help="mollification scale (default 0.005)")
    s.add_argument("--grid", type=int, help="samples per axis for the field table")
    _common(s)

    p = sub.add_parser("check", help="run the property suites")
    p.add_argument("--full", action="store_true", default=None,
                   help="include the slow mollifier quadrature checks")
    p.add_argument("--suites", help="comma list of suites (default all)")
    _common(p)
    return ap


def _resolve(args: argparse.Namespace, config: dict) -> dict:
    section = config.get(args.command, {}) if isinstance(config.get(args.command), dict) else {}
    out = {}
    for key, default in DEFAULTS.items():
        cli = getattr(args, key, None)
        if cli is not None:
            out[key] = cli
        elif key in section:
            out[key] = section[key]
        elif key in config and not isinstance(config[key], dict):
            out[key] = config[key]
        else:
            out[key] = default
    return out


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"cannot parse number list {text!r}") from exc


def _parse_tols(items) -> dict[str, float]:
    tols = {}
    if isinstance(items, dict):
        return {str(k): float(v) for k, v in items.items()}
    for item in items or []:
        name, sep, val = str(item).partition("=")
        if not sep:
            raise InputError(f"--tol expects NAME=VALUE, got {item!r}")
        tols[name.strip()] = float(val)
    return tols


def _apply_tols(checks: list[CheckResult], tols: dict[str, float]) -> list[CheckResult]:
    out = []
    for c in checks:
        thr = tols.get(c.name, c.threshold)
        ok = {"<=": c.value <= thr, ">=": c.value >= thr, ">": c.value > thr}[c.relation]
        out.append(CheckResult(c.name, c.value, thr, bool(ok), c.relation))
    return out


def _prepare_out(out) -> Path | None:
    if out is None:
        return None
    p = Path(out)
    if p.exists() and not p.is_dir():
        raise InputError(f"output path {p} exists and is not a directory")
    p.mkdir(parents=True, exist_ok=True)
    if not os.access(p, os.W_OK):
        raise InputError(f"output directory {p} is not writable")
    return p


def _matrix_arg(text: str, dim: int | None) -> np.ndarray:
    doc = parse_json_text(text, "--tau")
    try:
        a = as_matrix(doc)
    except InputError as exc:
        raise SchemaError(f"--tau: {exc}") from exc
    if dim is not None and a.shape[0] != dim:
        raise SchemaError(f"--tau: expected a {dim}x{dim} matrix")
    return a


# ---------------------------------------------------------------- commands


def cmd_integrand(cfg: RunConfig):
    tau = _matrix_arg(cfg.options["tau"], cfg.options.get("dim"))
    rp = rho_polar(tau)
    payload = {
        "tau": tau, "dim": tau.shape[0],
        "j": j(tau), "j_star": j_star(tau), "j_bar": j_bar(tau),
        "j_bar_star": {"value": j_bar_star(tau), "branch": rp.branch},
        "rho": rho(tau), "rho_polar": {"value": rp.value, "branch": rp.branch},
    }
    checks = [CheckResult("j_bar_star_half_rho_polar_sq",
                          abs(payload["j_bar_star"]["value"] - 0.5 * rp.value**2), 1e-12,
                          abs(payload["j_bar_star"]["value"] - 0.5 * rp.value**2) <= 1e-12)]
    return payload, checks, {}


def cmd_envelope(cfg: RunConfig):
    tau = _matrix_arg(cfg.options["tau"], None)
    o = cfg.options
    if o.get("env_eps") is not None:
        p = KSParams.from_eps(o["env_eps"])
    elif o.get("alpha") is not None and o.get("beta") is not None:
        p = KSParams(o["alpha"], o["beta"])
    else:
        raise InputError("give --eps or both --alpha and --beta")
    gen = q_div_h_general(tau, p)
    exp = q_div_h_explicit(tau, p)
    rp = rho_polar(tau)
    payload = {"tau": tau, "alpha": float(p.alpha), "beta": float(p.beta),
               "h": ks_h(tau, p), "q_div_h_general": gen, "q_div_h_explicit": exp,
               "rho_polar": rp.value, "branch": rp.branch,
               "rho_hat": p.rho_hat_scale * rp.value, "relaxed": bool(p.rho_hat_scale * rp.value < 1.0)}
    checks = [CheckResult("general_vs_explicit", abs(gen - exp), 1e-10, abs(gen - exp) <= 1e-10)]
    return payload, checks, {}


def cmd_michell(cfg: RunConfig):
    from .checks import _le
    from .michell import extract_limit_shape, solve_michell_lp, verify_entropy_condition

    gs, lc = load_problem(cfg.input)
    sol = solve_michell_lp(gs, lc)
    shape = extract_limit_shape(sol)
    bars = [{"a": b.a, "b": b.b, "length": b.length, "q": float(q), "w": float(w),
             "stress": float(s)}
            for b, q, w, s in zip(gs.bars, sol.q, shape.mu_weights, shape.sigma_scale)]
    entropy = verify_entropy_condition(shape)
    payload = {"kappa": sol.objective, "compliance": shape.compliance, "lp_status": sol.lp_status,
               "iterations": sol.iterations, "nodes": gs.positions, "bars": bars,
               "displacement": sol.displacement, "dual_gap": sol.dual_gap,
               "dual_violation": sol.dual_violation,
               "equilibrium_residual": sol.equilibrium_residual, "entropy_residual": entropy}
    k2 = sol.objective**2
    checks = [
        _le("entropy_condition", entropy, 1e-8 * k2),
        _le("dual_gap", sol.dual_gap, 1e-8 * max(1.0, sol.objective)),
        _le("dual_feasibility", sol.dual_violation, 1e-8),
        _le("equilibrium_residual", sol.equilibrium_residual, 1e-9),
    ]

    def write(out: Path, formats):
        files = []
        if "csv" in formats:
            files.append(write_csv(out / "bars.csv", ["a", "b", "length", "q", "w", "stress"],
                                   [[r["a"], r["b"], r["length"], r["q"], r["w"], r["stress"]]
                                    for r in bars]))
        if "svg" in formats and gs.dim == 2:
            from .plotting import plot_truss
            files.append(plot_truss(sol, out / "truss.svg"))
        return files

    return payload, checks, {"write": write}


def cmd_laminate(cfg: RunConfig):
    from .checks import _le
    from .laminate import build_construction, convergence_study, default_periods

    alphas = _floats(cfg.options["alphas"])
    eps = _floats(cfg.options["eps"])
    k = cfg.options.get("periods")
    rule = default_periods if k is None else (lambda e, k=int(k): k)
    st = convergence_study(alphas, eps, rule)
    payload = {"alphas": st.alphas, "case": st.case, "slope": st.slope,
               "rows": [{"eps": r.eps, "periods": r.periods, "energy": r.energy, "limit": r.limit,
                         "error": r.error, "bound": r.bound} for r in st.rows]}
    checks = [_le("error_minus_bound", max(r.error - r.bound for r in st.rows), 1e-12)]

    def write(out: Path, formats):
        files = []
        if "csv" in formats:
            files.append(write_csv(out / "convergence.csv",
                                   ["eps", "periods", "energy", "limit", "error", "bound"],
                                   [[r.eps, r.periods, r.energy, r.limit, r.error, r.bound]
                                    for r in st.rows]))
        if "svg" in formats:
            from .plotting import plot_convergence, plot_laminate
            files.append(plot_convergence(st, out / "convergence.svg"))
            files.append(plot_laminate(build_construction(alphas, eps[0], rule(eps[0])),
                                       out / "laminate.svg"))
        return files

    return payload, checks, {"write": write}


def _builtin_measure(name: str):
    from . import mollify as mo

    if name == "square":
        return mo.square_truss()
    if name == "cross":
        return mo.braced_cross()
    if name == "airy":
        return mo.airy_bump()
    if name == "atoms":
        mu = mo.DiscreteMeasure(scalar=True)
        for p in ([0.0, 0.0], [0.5, 0.3], [-0.4, 0.6], [1.0, 0.0]):
            mu.add_atom(p, 0.25)
        return mu
    return None


def cmd_mollify(cfg: RunConfig):
    from . import mollify as mo
    from .checks import _gt, _le

    name = str(cfg.options["measure"])
    lam = _builtin_measure(name)
    if lam is None:
        path = Path(name)
        if not path.is_file():
            raise InputError(f"measure file not found: {path}")
        lam = load_measure(path)
    delta = float(cfg.options["delta"])
    dom = mo.unit_disk()
    f = mo.mollify(lam, delta, dom)
    exp = mo.check_expansion(dom, delta)
    sup = mo.support_check(f)
    checks = [
        _gt("expansion_min_distance", exp.min_distance, exp.threshold),
        _le("normal_residual", mo.normal_residual(dom), 1e-8),
        _le("support_collar_max", sup.max_abs, 0.0),
    ]
    if lam.scalar:
        total = lam.total_variation()
        if lam.boxes or lam.atoms or lam.segments:
            x, w = f.quadrature()
            mass = float(w @ f(x))
            checks.append(_le("mass_error", abs(mass - total), 1e-6 * max(1.0, total)))
    else:
        src, res = mo.divergence_preservation_check(lam, delta, dom)
        checks.append(_le("source_divergence_residual", src, 1e-10))
        checks.append(_le("divergence_residual", res, 1e-6))
    n = int(cfg.options["grid"])
    g = np.linspace(-1.05, 1.05, n)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    pts = np.stack([xx, yy], -1).reshape(-1, 2)
    vals = f(pts)
    payload = {"measure": name, "delta": delta, "delta_0": dom.delta_0, "c_k": dom.c_k,
               "eps_delta": dom.eps_delta(delta), "support_collar": sup.collar,
               "jacobian_inverse_M": mo.jacobian_inverse_constant(dom, delta),
               "grid": n, "field_max_abs": float(np.abs(vals).max())}

    def write(out: Path, formats):
        files = []
        if "csv" in formats:
            if lam.scalar:
                header, cols = ["x", "y", "value"], [vals]
            else:
                header = ["x", "y", "l11", "l12", "l21", "l22"]
                cols = [vals[:, 0, 0], vals[:, 0, 1], vals[:, 1, 0], vals[:, 1, 1]]
            rows = np.column_stack([pts] + cols)
            files.append(write_csv(out / "field.csv", header, rows.tolist()))
        if "svg" in formats:
            from .plotting import plot_mollified
            files.append(plot_mollified(f, out / "field.svg"))
        return files

    return payload, checks, {"write": write}


def cmd_check(cfg: RunConfig):
    from .checks import SUITES, run_all

    suites = cfg.options.get("suites")
    names = None
    if suites:
        names = [s.strip() for s in (suites if isinstance(suites, list) else str(suites).split(","))]
        unknown = [s for s in names if s not in SUITES]
        if unknown:
            raise InputError(f"unknown suites: {', '.join(unknown)}")
    checks = run_all(cfg.seed, bool(cfg.options.get("full")), names)
    payload = {"suites": names or list(SUITES), "count": len(checks),
               "failed": [c.name for c in checks if not c.passed]}
    return payload, checks, {}


OPTION_KEYS = {
    "integrand": ("tau", "dim"),
    "envelope": ("tau", "alpha", "beta", "env_eps"),
    "michell": (),
    "laminate": ("alphas", "eps", "periods"),
    "mollify": ("measure", "delta", "grid"),
    "check": ("full", "suites"),
}

COMMANDS = {"integrand": cmd_integrand, "envelope": cmd_envelope, "michell": cmd_michell,
            "laminate": cmd_laminate, "mollify": cmd_mollify, "check": cmd_check}


def _setup_logging() -> None:
    level = os.environ.get("VM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def run(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else {}
        opts = _resolve(args, config)
        extra = {k: v for k, v in vars(args).items()
                 if k not in DEFAULTS and k not in ("command", "action", "config", "problem")}
        for k, v in list(extra.items()):
            section = config.get(args.command, {})
            if v is None and isinstance(section, dict) and k in section:
                extra[k] = section[k]
        formats = tuple(s.strip() for s in str(opts["format"]).split(",") if s.strip())
        bad = [s for s in formats if s not in ("json", "csv", "svg")]
        if bad:
            raise InputError(f"unknown output format(s): {', '.join(bad)}")
        cfg = RunConfig(
            command=args.command + (f" {args.action}" if getattr(args, "action", None) else ""),
            input=None, out=_prepare_out(opts["out"]), seed=int(opts["seed"]),
            tolerances=_parse_tols(opts["tol"]), formats=formats,
            options={k: v for k, v in {**opts, **extra}.items() if k in OPTION_KEYS[args.command]},
        )
        if getattr(args, "problem", None) is not None:
            cfg.input = str(resolve_problem_path(args.problem))
        payload, checks, hooks = COMMANDS[args.command](cfg)
    except UnbalancedLoadError as exc:
        rep = exc.report
        print(dumps({"error": "unbalanced load", "force_residual": rep.force_residual,
                     "moment_residual": rep.moment_residual, "scale": rep.scale}), end="")
        print(f"vm: {exc}", file=sys.stderr)
        return EXIT_UNBALANCED
    except InfeasibleError as exc:
        print(dumps({"error": "infeasible", "certificate": exc.certificate}), end="")
        print(f"vm: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InputError, PreconditionError) as exc:
        print(f"vm: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"vm: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL

    checks = _apply_tols(checks, cfg.tolerances)
    env = make_envelope(cfg.echo(), payload, checks)
    text = dumps(env)
    sys.stdout.write(text)
    if cfg.out is not None:
        try:
            if "json" in cfg.formats:
                write_json(cfg.out / "result.json", env)
            if "write" in hooks:
                for f in hooks["write"](cfg.out, cfg.formats):
                    log.info("wrote %s", f)
        except OSError as exc:
            print(f"vm: cannot write output: {exc}", file=sys.stderr)
            return EXIT_INTERNAL
    return EXIT_OK if env.passed else EXIT_CHECK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
