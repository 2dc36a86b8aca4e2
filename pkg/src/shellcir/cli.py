"""Command line front end.

    shellcir <busch|spectrum|hyper|fidelity|acmap|density> [options]

Every command writes its tables plus manifest.json into ``--out``.
Exit status: 0 success, 1 invalid configuration, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np
from scipy import linalg

from .busch import BracketError, solve_busch_roots
from .coupled import DimensionError, EigenSolverError, ExactSolver
from .hyperspherical import ChiGridError, InterpolationRangeError, adiabatic_curves, solve_hyperradial
from .io import (ConfigMismatch, RunManifest, SweepConfig, SweepInterrupted, _ensure_dir, a0_value,
                 fmt, parse_range, read_config_file, run_sweep, write_acs_csv, write_csv,
                 write_fidelity_csv, write_matrix_csv, write_spectrum_csv)
from .model import ConfigError, ModelParams, Truncation, validate
from .observables import conditional_density, rR_density
from .radial import GridTooCoarse
from .resonance import branch_labels, characterize_acs, detect_acs

log = logging.getLogger("shellcir")

NUMERICAL_ERRORS = (EigenSolverError, GridTooCoarse, BracketError, ChiGridError,
                    InterpolationRangeError, linalg.LinAlgError, FloatingPointError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError([message])


def _common(p: argparse.ArgumentParser, interaction=True, trunc=True):
    p.add_argument("--config", help="key=value file with defaults for any flag")
    p.add_argument("--out", help="output directory (default: ./out)")
    p.add_argument("--workers", type=int, help="worker processes (default: $SHELLCIR_WORKERS or 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    if interaction:
        g = p.add_mutually_exclusive_group()
        g.add_argument("--a0", type=float, help="scattering length in a_ho")
        g.add_argument("--inv-a0", type=float, help="a_ho/a0 (0 = unitarity, -inf = no interaction)")
    if trunc:
        p.add_argument("--J", type=int)
        p.add_argument("--parity", type=int)
        p.add_argument("--n-rel", type=int, help="relative basis functions per channel")
        p.add_argument("--n-com", type=int, help="centre-of-mass basis functions per channel")
        p.add_argument("--l-max", type=int)
        p.add_argument("--k-max", type=int)
        p.add_argument("--order", type=int, help="polynomial order of the radial elements")
        p.add_argument("--h-max", type=float, help="largest radial element")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="shellcir", description="Two bosons in a spherical shell trap.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("busch", help="relative s-wave energies of the isotropic trap")
    _common(p, trunc=False)
    p.add_argument("--n", type=int, help="number of roots (default 4)")

    p = sub.add_parser("spectrum", help="exact coupled-channel energies over r0")
    _common(p)
    p.add_argument("--r0", type=float)
    p.add_argument("--r0-scan", help="start:stop:step")
    p.add_argument("--n-states", type=int)
    p.add_argument("--resume", action="store_true")

    p = sub.add_parser("hyper", help="adiabatic hyperspherical curves and energies")
    _common(p, trunc=False)
    p.add_argument("--r0", type=float)
    p.add_argument("--L", type=int)
    p.add_argument("--l", type=int)
    p.add_argument("--n-chi", type=int)
    p.add_argument("--n-xi", type=int)
    p.add_argument("--xi-points", type=int)

    p = sub.add_parser("fidelity", help="fidelity change over r0 and avoided crossings")
    _common(p)
    p.add_argument("--r0-scan")
    p.add_argument("--delta-r0", type=float)
    p.add_argument("--n-states", type=int)
    p.add_argument("--noise-factor", type=float)
    p.add_argument("--no-labels", action="store_true", help="skip adiabatic labelling")
    p.add_argument("--resume", action="store_true")

    p = sub.add_parser("acmap", help="avoided crossings over the (a0, r0) plane")
    _common(p, interaction=False)
    p.add_argument("--a0-scan", help="start:stop:step of a0")
    p.add_argument("--r0-scan")
    p.add_argument("--delta-r0", type=float)
    p.add_argument("--n-states", type=int)
    p.add_argument("--noise-factor", type=float)
    p.add_argument("--resume", action="store_true")

    p = sub.add_parser("density", help="conditional or (r, R) density of one eigenstate")
    _common(p)
    p.add_argument("--state", type=int)
    p.add_argument("--r0", type=float)
    p.add_argument("--kind", choices=("conditional", "rR"))
    p.add_argument("--extent", type=float, help="half-size of the (rho2, z2) window beyond r0")
    p.add_argument("--points", type=int, help="grid points per axis")
    return ap


DEFAULTS = {
    "out": "out", "n": 4, "n_states": 14, "r0": 0.0, "r0_scan": "0:3:0.01", "delta_r0": 1e-3,
    "noise_factor": 10.0, "a0_scan": "0.4:0.7:0.05", "L": 0, "l": 0, "n_chi": 6, "n_xi": 8,
    "xi_points": 400, "state": 0, "kind": "conditional", "extent": 4.0, "points": 81, "J": 0,
    "parity": 1,
}


def parse_args(argv):
    ap = build_parser()
    args = ap.parse_args(argv)
    if not args.command:
        raise ConfigError(["missing subcommand (one of busch, spectrum, hyper, fidelity, acmap, density)"])
    if args.config:
        conf = read_config_file(args.config)
        sub = ap._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        unknown = sorted(k for k in conf if k not in known or k in ("config", "help"))
        if unknown:
            raise ConfigError([f"unknown config keys: {', '.join(unknown)}"])
        for k, v in conf.items():
            if getattr(args, k, None) in (None, False):
                a = known[k]
                if a.type is not None:
                    v = a.type(v)
                elif isinstance(a, argparse._StoreTrueAction):
                    v = v.lower() in ("1", "true", "yes", "on")
                setattr(args, k, v)
    for k, v in DEFAULTS.items():
        if getattr(args, k, None) is None and hasattr(args, k):
            setattr(args, k, v)
    return args


def _inv_a0(args) -> float:
    if getattr(args, "a0", None) is not None:
        if args.a0 == 0:
            raise ConfigError(["a0 must be nonzero"])
        return 1.0 / args.a0
    if getattr(args, "inv_a0", None) is not None:
        return float(args.inv_a0)
    raise ConfigError(["one of --a0 / --inv-a0 is required"])


def _trunc(args) -> Truncation:
    t = Truncation()
    kw = {}
    for flag, name in (("n_rel", "n_rel_max"), ("n_com", "n_com_max"), ("l_max", "l_max"),
                       ("k_max", "k_max"), ("order", "order"), ("h_max", "h_max"),
                       ("xi_points", "xi_points")):
        v = getattr(args, flag, None)
        if v is not None:
            kw[name] = v
    return Truncation(**{**t.__dict__, **kw})


def _r0_grid(args) -> np.ndarray:
    if getattr(args, "r0_scan", None) and not (args.command == "spectrum" and args.r0_scan == DEFAULTS["r0_scan"]
                                               and args.r0 != DEFAULTS["r0"]):
        return parse_range(args.r0_scan)
    return np.array([args.r0])


def _manifest(args, config: dict, outputs, t0, **extra) -> RunManifest:
    m = RunManifest(args.command, config, wall_clock=time.time() - t0,
                    outputs=[Path(o).name for o in outputs], **extra)
    m.write(args.out)
    return m


def cmd_busch(args, t0):
    inv = _inv_a0(args)
    if args.n < 1:
        raise ConfigError(["--n must be >= 1"])
    roots = solve_busch_roots(inv, args.n)
    out = Path(args.out)
    f = write_csv(out / "busch.csv", ["n_chi", "energy"], [[r.n_chi, r.energy] for r in roots])
    _manifest(args, {"inv_a0": fmt(inv), "n": args.n}, [f], t0)


def _sweep_config(args, kind, inv_list, r0) -> SweepConfig:
    trunc = _trunc(args)
    step = float(np.min(np.diff(r0))) if len(r0) > 1 else None
    for inv in inv_list:
        validate(ModelParams(inv_a0=inv, r0=float(r0.max()), delta_r0=getattr(args, "delta_r0", 1e-3),
                             J=args.J, parity=args.parity), trunc, step if kind == "fidelity" else None)
    if np.any(r0 < 0):
        raise ConfigError(["r0 values must be >= 0"])
    return SweepConfig(kind, tuple(float(x) for x in inv_list), tuple(float(x) for x in r0),
                       args.n_states, float(getattr(args, "delta_r0", 1e-3)), args.J, args.parity, trunc)


def cmd_spectrum(args, t0):
    cfg = _sweep_config(args, "spectrum", [_inv_a0(args)], _r0_grid(args))
    res = run_sweep(args.out, cfg, args.workers, args.resume, command="spectrum")
    write_spectrum_csv(Path(args.out) / "spectrum.csv", res)
    _finish_manifest(args, ["spectrum.csv"])


def _finish_manifest(args, outputs, **extra):
    m = RunManifest.load(args.out)
    m.outputs = outputs
    for k, v in extra.items():
        setattr(m, k, v)
    m.write(args.out)


def cmd_hyper(args, t0):
    inv = _inv_a0(args)
    if args.r0 < 0:
        raise ConfigError(["r0 must be >= 0"])
    if args.l % 2:
        raise ConfigError(["l must be even"])
    xi0 = math.sqrt(2.0) * args.r0
    curves = adiabatic_curves(inv, args.r0, args.L, args.l, args.n_chi, xi0 + 10.0, args.xi_points)
    spec = solve_hyperradial(curves, xi0, args.n_xi)
    out = Path(args.out)
    f1 = write_csv(out / "lambda.csv", ["xi"] + [f"lambda{c}" for c in range(args.n_chi)],
                   [[x, *lam] for x, lam in zip(curves.xi, curves.lam)])
    f2 = write_csv(out / "hyper_energies.csv", ["n_xi", "n_chi", "energy"],
                   [[nx, nc, e] for e, nx, nc in spec.levels()])
    _manifest(args, {"inv_a0": fmt(inv), "r0": args.r0, "L": args.L, "l": args.l, "n_chi": args.n_chi,
                     "n_xi": args.n_xi, "xi_points": args.xi_points}, [f1, f2], t0,
              failures=[] if curves.min_overlap > 0.5 else
              [f"branch tracking overlap fell to {curves.min_overlap:.3g}"])


def _detect(res, cfg, inv, args, labels=True):
    scan = res.scan(inv)
    acs, unpaired = detect_acs(scan, args.noise_factor)
    if labels and acs:
        characterize_acs(acs, cfg.params(inv), cfg.n_states, cfg.resolved_trunc(),
                         r0_limits=(min(cfg.r0), max(cfg.r0)))
    return acs, unpaired


def cmd_fidelity(args, t0):
    inv = _inv_a0(args)
    cfg = _sweep_config(args, "fidelity", [inv], parse_range(args.r0_scan))
    res = run_sweep(args.out, cfg, args.workers, args.resume, command="fidelity")
    out = Path(args.out)
    write_fidelity_csv(out / "fidelity.csv", res)
    acs, unpaired = _detect(res, cfg, inv, args, not args.no_labels)
    write_acs_csv(out / "acs.csv", [(inv, a) for a in acs])
    _finish_manifest(args, ["fidelity.csv", "acs.csv"],
                     failures=[f"unpaired feature: state {u.n} at r0={fmt(u.r0)}" for u in unpaired])


def cmd_acmap(args, t0):
    a0s = parse_range(args.a0_scan)
    if np.any(a0s == 0):
        raise ConfigError(["a0 grid must not contain 0"])
    invs = [1.0 / a for a in a0s]
    cfg = _sweep_config(args, "fidelity", invs, parse_range(args.r0_scan))
    res = run_sweep(args.out, cfg, args.workers, args.resume, command="acmap")
    rows, failures = [], []
    for inv in invs:
        try:
            acs, _ = _detect(res, cfg, inv, args)
        except NUMERICAL_ERRORS as exc:
            failures.append(f"a0={fmt(a0_value(inv))}: {exc}")
            continue
        rows += [(inv, a) for a in acs]
    out = Path(args.out)
    write_acs_csv(out / "acmap.csv", rows)
    _finish_manifest(args, ["acmap.csv"], failures=failures)


def cmd_density(args, t0):
    inv = _inv_a0(args)
    trunc = _trunc(args)
    params = ModelParams(inv_a0=inv, r0=args.r0, J=args.J, parity=args.parity)
    validate(params, trunc)
    if args.state < 0 or args.points < 2:
        raise ConfigError(["--state must be >= 0 and --points >= 2"])
    spec = ExactSolver(params, trunc).solve(args.r0, args.state + 1)
    out = Path(args.out)
    if args.kind == "rR":
        d = rR_density(spec, args.state)
    else:
        e = args.extent
        rho = np.linspace(0.0, args.r0 + e, args.points)
        z = np.linspace(-(args.r0 + e), args.r0 + e, 2 * args.points - 1)
        d = conditional_density(spec, args.state, rho, z)
    f = write_matrix_csv(out / "density.csv", d.axes[0], d.x, d.axes[1], d.y, d.values)
    _manifest(args, {"inv_a0": fmt(inv), "r0": args.r0, "state": args.state, "kind": args.kind,
                     "energy": float(spec.energies[args.state]), "trunc": trunc.__dict__}, [f], t0)


COMMANDS = {"busch": cmd_busch, "spectrum": cmd_spectrum, "hyper": cmd_hyper,
            "fidelity": cmd_fidelity, "acmap": cmd_acmap, "density": cmd_density}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        _ensure_dir(Path(args.out))
        COMMANDS[args.command](args, time.time())
    except (ConfigError, ConfigMismatch, DimensionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except SweepInterrupted as exc:
        print(f"interrupted: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
