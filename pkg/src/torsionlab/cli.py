"""Command-line front end.

Exit codes: 0 success, 1 a checked criterion failed (the report is still
written), 2 invalid configuration, 3 solver failure, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from fractions import Fraction
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__, experiments as ex
from . import io as tio
from . import kernel as kn
from .exceptions import (
    GeometryError, HypothesisError, LevelError, NumericalError, PrerequisiteError,
    QuadratureError, ResolutionError, SingularityError,
)
from .geometry import from_config, length_scale
from .pde import locate_max, solve_ground_state, solve_torsion, write_field_binary, write_field_csv

log = logging.getLogger("torsionlab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3, 4
DEFAULT_OUT = "torsionlab_out"


class ConfigError(Exception):
    pass


def parse_h(text) -> float:
    """Exact rational or decimal spacing, e.g. ``1/64``."""
    try:
        h = Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError) as err:
        raise ConfigError(f"cannot parse spacing {text!r}") from err
    if not 0 < h <= Fraction(1, 16):
        raise ConfigError(f"spacing {text} must lie in (0, 1/16]")
    return float(h)


def parse_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(t) for t in text]
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError as err:
        raise ConfigError(f"cannot parse list {text!r}") from err


def _point(text) -> tuple[float, float]:
    vals = parse_list(text)
    if len(vals) != 2:
        raise ConfigError(f"expected 'x,y', got {text!r}")
    return vals[0], vals[1]


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

_FLAG_KEYS = ("domain", "N", "h", "out", "N_list", "M", "x_stretch", "threads")


def merged_config(args) -> dict:
    """Config file values overridden by explicit flags."""
    cfg: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {args.config}: {err}") from err
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    dom = dict(cfg.get("domain", {})) if isinstance(cfg.get("domain"), dict) else {}
    for key in ("kind", "N", "vertices", "normalize"):
        if key in cfg and key not in dom:
            dom[key] = cfg[key]
    if isinstance(cfg.get("domain"), str):
        dom["kind"] = cfg["domain"]
    if getattr(args, "domain", None):
        dom["kind"] = args.domain
    if getattr(args, "N", None) is not None:
        dom["N"] = args.N
    out = {k: v for k, v in cfg.items() if k not in ("domain", "kind", "N", "vertices", "normalize")}
    out["domain"] = dom
    for key in _FLAG_KEYS[2:]:
        val = getattr(args, key, None)
        if val is not None:
            out[key] = val
    out.setdefault("out", os.environ.get("TORSIONLAB_OUT", DEFAULT_OUT))
    if "h" in out:
        out["h"] = str(out["h"])
        parse_h(out["h"])
    return out


def _h(cfg: dict, default: float) -> float:
    """Configured spacing, or the command's default when none was given."""
    return parse_h(cfg["h"]) if "h" in cfg else default


def _domain(cfg: dict):
    try:
        return from_config(cfg["domain"])
    except GeometryError as err:
        raise ConfigError(str(err)) from err


def _out_dir(cfg: dict) -> Path:
    path = Path(cfg["out"])
    path.mkdir(parents=True, exist_ok=True)
    # probe writability up front so failures map to the I/O exit code
    with tempfile.TemporaryFile(dir=path):
        pass
    return path


def _echo_config(out: Path, cfg: dict, command: str) -> None:
    tio.write_json(out / "config.json", {"command": command, "version": __version__, **cfg})


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_solve(cfg: dict, args) -> int:
    domain = _domain(cfg)
    out = _out_dir(cfg)
    _echo_config(out, cfg, "solve")
    fld = solve_torsion(domain, _h(cfg, ex.DEFAULT_H), x_stretch=float(cfg.get("x_stretch", 1.0)))
    mx = locate_max(fld)
    write_field_csv(fld, out / "torsion_field.csv")
    if getattr(args, "binary", False):
        write_field_binary(fld, out / "torsion_field.bin")
    tio.write_json(out / "max_report.json", {**mx.to_dict(), "domain": domain.describe(),
                                             "solver": fld.meta})
    print(f"v* = {mx.v_star:.8f} at ({mx.x_star:.6f}, {mx.y_star:.6f}); "
          f"{fld.meta['unknowns']} unknowns, {fld.meta['iterations']} CG iterations -> {out}")
    return EXIT_OK


def cmd_eigen(cfg: dict, args) -> int:
    domain = _domain(cfg)
    out = _out_dir(cfg)
    _echo_config(out, cfg, "eigen")
    fld, rep = solve_ground_state(domain, _h(cfg, ex.DEFAULT_H), method=getattr(args, "method", "lanczos"),
                                  x_stretch=float(cfg.get("x_stretch", 1.0)))
    ls = length_scale(domain)
    write_field_csv(fld, out / "eigenfunction_field.csv")
    if getattr(args, "binary", False):
        write_field_binary(fld, out / "eigenfunction_field.bin")
    data = {"lambda": rep.lam, "x1": rep.x1, "y1": rep.y1, "L": ls.L, "I": list(ls.I),
            "I_prime": list(ls.I_prime), "x1_in_I_prime": ls.I_prime[0] <= rep.x1 <= ls.I_prime[1],
            "domain": domain.describe(), "solver": fld.meta}
    tio.write_json(out / "eigen_report.json", data)
    print(f"lambda = {rep.lam:.8f}, max at ({rep.x1:.6f}, {rep.y1:.6f}); "
          f"I' = [{ls.I_prime[0]:.4f}, {ls.I_prime[1]:.4f}] -> {out}")
    return EXIT_OK


def cmd_kernel(cfg: dict, args) -> int:
    out = _out_dir(cfg)
    _echo_config(out, cfg, f"kernel {args.action}")
    if args.action == "eval":
        domain = _domain(cfg)
        xt = args.x_tilde if args.x_tilde is not None else domain.thickest_point
        ctx = kn.KernelContext.at(domain, xt)
        p, q = _point(args.p), _point(args.q)
        val = kn.approx_green(domain, ctx, p, q)
        tio.write_json(out / "kernel_eval.json", {"x_tilde": xt, "h_tilde": ctx.h_tilde,
                                                  "d_tilde": ctx.d_tilde, "p": p, "q": q, "value": val})
        print(f"G = {val:.15g}")
        return EXIT_OK
    rep = _poisson_report(parse_list(args.a), args.xi, args.m_cutoff)
    rep.write(out)
    print(rep.summary())
    return EXIT_OK if rep.passed else EXIT_FAIL


def _poisson_report(a_list, xi: float = 0.0, m_cutoff: int = 1_000_000):
    rep = ex.ExperimentReport(name="poisson_identity", params={"a": a_list, "xi": xi, "m_cutoff": m_cutoff},
                              domains=[], calibration_version=ex.calibration.version())
    rows = []
    for a in a_list:
        closed = kn.poisson_closed_form(a) if xi == 0 else None
        rhs = kn.poisson_rhs(a, xi)
        lhs = kn.poisson_lhs(a, xi, m_cutoff)
        lhs_acc = kn.poisson_lhs(a, xi, m_cutoff, accelerate=True)
        ref = closed if closed is not None else rhs
        rows.append({"a": a, "rhs": rhs, "lhs": lhs, "lhs_richardson": lhs_acc,
                     "rhs_error": abs(rhs - ref), "lhs_error": abs(lhs - ref),
                     "lhs_tail_bound": kn.poisson_lhs_tail_bound(m_cutoff)})
        if closed is not None:
            rep.add(f"exponential side vs closed form, a={a:g}", abs(rhs - closed), "<=", 1e-10)
        rep.add(f"truncated polynomial side within its tail bound, a={a:g}", abs(lhs - ref), "<=",
                kn.poisson_lhs_tail_bound(m_cutoff))
    rep.series["poisson"] = rows
    return rep


def _kernel_report():
    rep = _poisson_report([0.5, 1.0, 5.0])
    rep.name = "verify_kernel"
    s = kn.check_structure()
    rep.metrics["structure"] = s
    rep.add("f_n ODE residual (relative)", s["ode_residual"], "<=", 1e-5)
    rep.add("normalised derivative jump - 1", s["jump_defect"], "<=", 1e-6)
    rep.add("f_n asymmetry", s["asymmetry"], "<=", 1e-10)
    rep.add("boundary value / (lattice tail + rounding floor)", s["boundary_ratio"], "<=", 1.0)
    return rep


def _run_reports(reports, out: Path) -> int:
    ok = True
    for rep in reports:
        rep.write(out)
        print(rep.summary())
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_FAIL


def _n_list(cfg, default):
    return [int(n) if float(n).is_integer() else n for n in parse_list(cfg.get("N_list", default))]


def cmd_verify(cfg: dict, args) -> int:
    out = _out_dir(cfg)
    _echo_config(out, cfg, f"verify {args.suite}")
    kind = cfg["domain"].get("kind")
    reports = []
    suites = ["kernel", "approx", "hessian", "maxima"] if args.suite == "all" else [args.suite]
    for suite in suites:
        if suite == "kernel":
            reports.append(_kernel_report())
        elif suite == "approx":
            reports.append(ex.exp_approx_convergence(kind or "omega2", _n_list(cfg, "16,32,64"),
                                                     _h(cfg, ex.DEFAULT_H)))
        elif suite == "hessian":
            if kind not in (None, "omega2"):
                raise ConfigError("the hessian suite runs on the omega2 family")
            reports.append(ex.exp_hessian_scaling(_n_list(cfg, "32,64,128"), _h(cfg, ex.HESSIAN_H),
                                                  float(cfg.get("x_stretch", 4.0))))
        elif suite == "maxima":
            reports.append(ex.exp_maxima_separation(_n_list(cfg, "16,32,64"), _h(cfg, ex.DEFAULT_H),
                                                    kind or "omega1"))
    return _run_reports(reports, out)


def cmd_experiment(cfg: dict, args) -> int:
    out = _out_dir(cfg)
    _echo_config(out, cfg, f"experiment {args.name}")
    kind = cfg["domain"].get("kind")
    N = cfg["domain"].get("N")
    h = _h(cfg, ex.DEFAULT_H)
    M = float(cfg.get("M", 8.0))
    name = args.name
    if name == "cons1":
        rep = ex.exp_maxima_separation(_n_list(cfg, "16,32,64"), h, kind or "omega1")
    elif name == "cons2":
        rep = ex.exp_torsion_near_eigenmax(kind or "omega2", float(N or 64), h)
    elif name == "cons3":
        rep = ex.exp_hessian_scaling(_n_list(cfg, "32,64,128"), _h(cfg, ex.HESSIAN_H),
                                     float(cfg.get("x_stretch", 4.0)))
    elif name == "sandwich":
        rep = ex.exp_max_value_sandwich(float(N or 64), kind or "omega2", M, h)
    elif name == "directional":
        try:
            rep = ex.exp_directional_hessian(float(N or 64), M, _h(cfg, ex.HESSIAN_H),
                                             float(cfg.get("x_stretch", 4.0)))
        except PrerequisiteError as err:
            if err.report is not None:
                err.report.write(out)
                print(err.report.summary())
            print(f"prerequisite missing: {err}", file=sys.stderr)
            return EXIT_FAIL
    else:  # argparse restricts the choices
        raise ConfigError(f"unknown experiment {name!r}")
    return _run_reports([rep], out)


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, need_domain: bool = False) -> None:
    p.add_argument("--config", help="JSON run configuration; flags override its values")
    p.add_argument("--domain", choices=["rectangle", "ellipse", "omega1", "omega2", "piecewise_linear"])
    p.add_argument("--N", type=float, help="domain length parameter")
    p.add_argument("--h", help="target grid spacing, e.g. 1/64 (default 1/64)")
    p.add_argument("--out", help="output directory (default $TORSIONLAB_OUT or ./torsionlab_out)")
    p.add_argument("--threads", type=int, help="cap on BLAS/solver threads")
    p.add_argument("--x-stretch", dest="x_stretch", type=float,
                   help="x spacing as a multiple of the y spacing (N >= 64 only)")
    p.set_defaults(_need_domain=need_domain)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="torsionlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the torsion problem and locate its maximum")
    _common(p, need_domain=True)
    p.add_argument("--binary", action="store_true", help="also write the binary field dump")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eigen", help="principal Dirichlet eigenpair")
    _common(p, need_domain=True)
    p.add_argument("--binary", action="store_true")
    p.add_argument("--method", choices=["lanczos", "inverse"], default="lanczos")
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser("kernel", help="kernel probes")
    p.add_argument("action", choices=["eval", "check-poisson"])
    _common(p)
    p.add_argument("--x-tilde", dest="x_tilde", type=float)
    p.add_argument("--p", help="x,y of the first point")
    p.add_argument("--q", help="x,y of the second point")
    p.add_argument("--a", default="0.5,1,5", help="comma-separated decay parameters")
    p.add_argument("--xi", type=float, default=0.0)
    p.add_argument("--m-cutoff", dest="m_cutoff", type=int, default=1_000_000)
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("verify", help="run invariant suites and experiments")
    p.add_argument("suite", choices=["kernel", "approx", "hessian", "maxima", "all"])
    _common(p)
    p.add_argument("--N-list", dest="N_list")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("experiment", help="run one experiment")
    p.add_argument("name", choices=["cons1", "cons2", "cons3", "sandwich", "directional"])
    _common(p)
    p.add_argument("--N-list", dest="N_list")
    p.add_argument("--M", type=float, help="flatness window half-width (default 8)")
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = merged_config(args)
        if args._need_domain and not cfg["domain"].get("kind"):
            raise ConfigError("a domain is required (--domain or --config)")
        if args._need_domain and cfg["domain"].get("kind") != "piecewise_linear" and "N" not in cfg["domain"]:
            raise ConfigError("--N is required for this domain")
        if args.command == "kernel" and args.action == "eval" and (args.p is None or args.q is None):
            raise ConfigError("kernel eval needs --p and --q")
        threads = cfg.get("threads")
        with threadpool_limits(limits=int(threads) if threads else None):
            return args.func(cfg, args)
    except (ConfigError, GeometryError, HypothesisError, SingularityError, LevelError,
            ResolutionError, ValueError) as err:
        ap.print_usage(sys.stderr)
        print(f"torsionlab: error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, QuadratureError) as err:
        print(f"torsionlab: solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as err:
        print(f"torsionlab: I/O failure: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
