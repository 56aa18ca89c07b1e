"""Command-line front end.

Exit status is 0 on success, 1 for invalid input and 2 when a numerical
consistency check fails. Errors go to standard error as ``CODE: message``.
Angles are radians; directions are ``theta,phi`` pairs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .exceptions import BoltzGreenError, InputError, NumericalConsistencyError, NumericalError
from .fourier_kernel import psi_bar_matrix_route
from .inversion import PROFILE_ENV, QuadratureSpec, energy_density, invert_bessel, invert_full
from .montecarlo import McConfig, simulate
from .spectral import mode_table
from .types import Direction, FourierPoint, PhaseFunction

FLOAT_FORMAT = "%.16e"  # 17 significant digits round-trip a double
MODE_TOLERANCE = 1e-9
DENSITY_HEADER = ["r", "u_uncollided", "u_scattered", "u_total", "err"]


class UsageError(InputError):
    code = "E_USAGE"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# argument types


def _floats(text):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _direction(text):
    return Direction.parse(text)


def _vectors(text):
    out = []
    for part in str(text).split(";"):
        v = _floats(part)
        if len(v) != 3:
            raise UsageError(f"positions are 'x,y,z' separated by ';', got {part!r}")
        out.append(v)
    return out


def _directions(text):
    return [Direction.parse(p) for p in str(text).split(";")]


def _fmt(x):
    return FLOAT_FORMAT % x


# --------------------------------------------------------------------------
# configuration


def _load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read config {path!r}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"config {path!r} is not valid JSON: {exc}") from None
    if isinstance(data, dict) and "config" in data:
        data = data["config"]
    if not isinstance(data, dict):
        raise InputError("config must be a JSON object or a previous output with a 'config' key")
    return data


def _apply_config(args, config):
    """Fill options left unset on the command line from a config dict."""
    for key, value in config.items():
        if key in ("command", "quadrature"):
            continue
        if not hasattr(args, key):
            raise InputError(f"unknown config key {key!r} for command {args.command!r}")
        if getattr(args, key) is None:
            setattr(args, key, value)
    if args.quadrature is None and "quadrature" in config:
        args.quadrature = config["quadrature"]


def _phase(args):
    if args.c is None:
        raise UsageError("--c is required")
    beta = args.beta if args.beta is not None else [1.0]
    if isinstance(beta, str):
        beta = _floats(beta)
    return PhaseFunction(float(args.c), tuple(float(b) for b in beta))


def _quadrature(args):
    if args.quadrature is not None:
        q = dict(args.quadrature)
        return QuadratureSpec(**q)
    overrides = {}
    for name in ("k_max", "n_k", "n_mu", "n_phi", "lmax"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return QuadratureSpec.from_env(**overrides)


def _as_direction(value, default=None):
    if value is None:
        return default
    if isinstance(value, Direction):
        return value
    if isinstance(value, str):
        return Direction.parse(value)
    return Direction(*value)


def _threads(args):
    n = 1 if args.threads is None else int(args.threads)
    if n < 1:
        raise UsageError(f"--threads must be at least 1, got {n}")
    return n


# --------------------------------------------------------------------------
# output


def _write(args, text):
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _table(header, rows, fmt):
    if fmt == "json":
        return json.dumps([dict(zip(header, r)) for r in rows], indent=1) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


# --------------------------------------------------------------------------
# commands


def _cmd_density(args):
    if args.r is None:
        raise UsageError("--r is required")
    phase = _phase(args)
    quad = _quadrature(args)
    r = _floats(args.r) if isinstance(args.r, str) else [float(x) for x in args.r]
    res = energy_density(np.array(r), phase, quad, method=args.method or "spectral")
    rows = [(float(r[i]), float(res.u_uncollided[i]), float(res.u_scattered[i]), float(res.u_total[i]),
             float(res.error[i])) for i in range(len(r))]
    _write(args, _table(DENSITY_HEADER, rows, args.format or "csv"))


def _cmd_angular_flux(args):
    if args.position is None or args.omega is None:
        raise UsageError("--position and --omega are required")
    phase = _phase(args)
    quad = _quadrature(args)
    positions = _vectors(args.position) if isinstance(args.position, str) else [list(p) for p in args.position]
    omegas = _directions(args.omega) if isinstance(args.omega, str) else [_as_direction(o) for o in args.omega]
    if len(omegas) == 1:
        omegas = omegas * len(positions)
    if len(omegas) != len(positions):
        raise UsageError("give one --omega or one per position")
    omega0 = _as_direction(args.omega0, Direction(0.0, 0.0))
    route = args.route or "matrix"
    if route not in ("spectral", "matrix", "bessel"):
        raise UsageError(f"--route must be spectral, matrix or bessel, got {route!r}")

    def one(i):
        if route == "bessel":
            return invert_bessel(positions[i], omegas[i], omega0, phase, quad)
        return invert_full(positions[i], omegas[i], omega0, phase, quad, route=route)

    idx = range(len(positions))
    threads = _threads(args)
    if threads > 1 and len(positions) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, idx))
    else:
        results = [one(i) for i in idx]
    header = ["x", "y", "z", "theta", "phi", "psi_smooth", "err", "once_collided_weight"]
    rows = []
    for p, om, res in zip(positions, omegas, results):
        once = [t.weight for t in res.singular if t.kind == "once_collided"]
        rows.append((*map(float, p), om.theta, om.phi, res.smooth, res.quadrature_error,
                     float(once[0]) if once else float("nan")))
    _write(args, _table(header, rows, args.format or "csv"))


def _cmd_fourier_modes(args):
    if args.k is None:
        raise UsageError("--k is required")
    phase = _phase(args)
    khat = _as_direction(args.khat, Direction(0.0, 0.0))
    omega0 = _as_direction(args.omega0, Direction(0.0, 0.0))
    kp = FourierPoint(float(args.k), khat)
    table = mode_table(kp, omega0, phase, args.lmax)
    for m in range(-phase.L, phase.L + 1):
        ref = psi_bar_matrix_route(m, kp, omega0, phase)
        got = table.psibar[abs(m): phase.L + 1, m + table.lmax]
        gap = np.max(np.abs(ref - got) / np.maximum(np.abs(ref), 1e-300))
        if gap > MODE_TOLERANCE:
            raise NumericalConsistencyError(f"spectral and matrix moments disagree at m = {m} (relative {gap:.3e})")
    modes = [
        {"l": l, "m": m, "re_psibar": p.real, "im_psibar": p.imag, "re_kappa": q.real, "im_kappa": q.imag}
        for l, m, p, q in table.rows()
    ]
    config = {
        "c": phase.c, "beta": list(phase.beta), "k": kp.k,
        "khat": [khat.theta, khat.phi], "omega0": [omega0.theta, omega0.phi], "lmax": table.lmax,
    }
    if (args.format or "json") == "csv":
        header = ["l", "m", "re_psibar", "im_psibar", "re_kappa", "im_kappa"]
        _write(args, _table(header, [tuple(d.values()) for d in modes], "csv"))
    else:
        _write(args, json.dumps({"command": "fourier-modes", "config": config, "modes": modes}, indent=1) + "\n")


def _mc_shells(args):
    if args.edges is not None:
        edges = _floats(args.edges) if isinstance(args.edges, str) else [float(e) for e in args.edges]
        return edges, list(range(len(edges) - 1))
    r = _floats(args.r) if isinstance(args.r, str) else [float(x) for x in (args.r or [0.5, 1.0, 2.0])]
    h = 0.05 if args.half_width is None else float(args.half_width)
    if h <= 0:
        raise UsageError("--half-width must be positive")
    edges = []
    for x in r:
        edges += [x - h, x + h]
    for a, b in zip(edges, edges[1:]):
        if b < a:
            raise UsageError("radii must be increasing and their shells must not overlap")
    # touching shells share an edge
    merged = [edges[0]]
    keep, shell = [], 0
    for i in range(len(r)):
        lo, hi = edges[2 * i], edges[2 * i + 1]
        if lo != merged[-1]:
            merged.append(lo)
            shell += 1
        keep.append(shell)
        merged.append(hi)
        shell += 1
    return merged, keep


def _cmd_mc(args):
    phase = _phase(args)
    edges, keep = _mc_shells(args)
    source = args.source or "isotropic_point"
    cfg = McConfig(
        histories=int(args.histories if args.histories is not None else 1_000_000),
        seed=int(args.seed if args.seed is not None else 0),
        shells=tuple(edges),
        source=source,
        omega0=_as_direction(args.omega0, Direction(0.0, 0.0)),
        max_scatter_order=int(args.max_order if args.max_order is not None else -1),
    )
    est = simulate(phase, cfg, threads=_threads(args))
    mid = cfg.midpoints
    rows = [(float(mid[i]), float(est.by_order[0][i]), float(est.scattered[i]), float(est.mean[i]),
             float(est.scattered_error[i]), float(est.std_error[i])) for i in keep]
    _write(args, _table(DENSITY_HEADER + ["std_error"], rows, args.format or "csv"))


def _cmd_verify(args):
    from . import verify

    results = verify.run_suite()
    lines = [r.line() for r in results]
    failed = [r for r in results if not r.passed]
    lines.append(f"{len(results) - len(failed)}/{len(results)} checks passed")
    _write(args, "\n".join(lines) + "\n")
    if failed:
        raise NumericalConsistencyError("verification failed: " + ", ".join(r.name for r in failed))


# --------------------------------------------------------------------------
# parser


def build_parser():
    p = _Parser(prog="boltzgreen", description=__doc__.splitlines()[0]
                + f" Quadrature presets via {PROFILE_ENV}=fast|accurate.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp):
        sp.add_argument("--config", help="JSON config (or a previous JSON output) supplying unset options")
        sp.add_argument("--c", type=float, help="single-scattering albedo, 0 < c < 1")
        sp.add_argument("--beta", type=_floats, help="Legendre coefficients beta_0..beta_L, beta_0 = 1")
        sp.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
        sp.add_argument("--output", "-o", help="output file (default standard output)")
        sp.add_argument("--format", choices=("csv", "json"))

    def quad(sp, angular=False):
        sp.add_argument("--k-max", dest="k_max", type=float)
        sp.add_argument("--n-k", dest="n_k", type=int)
        sp.add_argument("--lmax", type=int)
        if angular:
            sp.add_argument("--n-mu", dest="n_mu", type=int)
            sp.add_argument("--n-phi", dest="n_phi", type=int)

    sp = sub.add_parser("density", help="energy density of an isotropic point source")
    common(sp)
    quad(sp)
    sp.add_argument("--r", type=_floats, help="radii, comma separated")
    sp.add_argument("--method", choices=("spectral", "matrix"))

    sp = sub.add_parser("angular-flux", help="smooth angular flux of a beam source")
    common(sp)
    quad(sp, angular=True)
    sp.add_argument("--position", type=_vectors, help="'x,y,z' positions separated by ';'")
    sp.add_argument("--omega", type=_directions, help="flux direction(s) 'theta,phi'")
    sp.add_argument("--omega0", type=_direction, help="source direction 'theta,phi' (default +z)")
    sp.add_argument("--route", choices=("spectral", "matrix", "bessel"))

    sp = sub.add_parser("fourier-modes", help="transformed-flux moments and expansion coefficients")
    common(sp)
    sp.add_argument("--k", type=float, help="wave number")
    sp.add_argument("--khat", type=_direction, help="wave-vector direction 'theta,phi'")
    sp.add_argument("--omega0", type=_direction, help="source direction 'theta,phi'")
    sp.add_argument("--lmax", type=int)

    sp = sub.add_parser("mc", help="Monte Carlo shell densities")
    common(sp)
    sp.add_argument("--r", type=_floats, help="shell centres (default 0.5,1,2)")
    sp.add_argument("--half-width", dest="half_width", type=float, help="shell half-width (default 0.05)")
    sp.add_argument("--edges", type=_floats, help="explicit shell edges; overrides --r")
    sp.add_argument("--histories", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--source", choices=("isotropic_point", "beam"))
    sp.add_argument("--omega0", type=_direction, help="beam direction 'theta,phi'")
    sp.add_argument("--max-order", dest="max_order", type=int, help="last collision order followed (-1: all)")

    sp = sub.add_parser("verify", help="run the invariant suite")
    sp.add_argument("--threads", type=int)
    sp.add_argument("--output", "-o")
    return p


COMMANDS = {
    "density": _cmd_density,
    "angular-flux": _cmd_angular_flux,
    "fourier-modes": _cmd_fourier_modes,
    "mc": _cmd_mc,
    "verify": _cmd_verify,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.quadrature = None
        if getattr(args, "config", None):
            _apply_config(args, _load_config(args.config))
        COMMANDS[args.command](args)
    except InputError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 2
    except BoltzGreenError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    return run(argv)
