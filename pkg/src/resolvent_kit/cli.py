"""Command-line front end: ``resolvent-kit <command> ...``.

Exit codes: 0 when every requested check passes its tier, 1 when a check
fails, 2 on usage errors and violated hypotheses.  Reports are JSON with a
``schema`` field and are written atomically.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from . import bundles, funceq
from .errors import HypothesisError, ResolventKitError
from .extension import METHODS, extend
from .families import (
    Generator,
    default_probes,
    format_complex,
    make_family,
    parse_complex,
    read_family_csv,
    volterra_residual,
)
from .kernels import Grid, format_kernel, parse_kernel
from .report import ResidualReport, _jsonable
from .special import ml_eval

SCHEMA = 1
TIERS = {"strict": 1e-8, "default": 1e-4, "coarse": 1e-2}
GRID_SCALE = {"strict": 2.0, "default": 1.0, "coarse": 0.5}
DEFAULT_SEED = 0x5EED


@dataclass
class RunConfig:
    """Parsed global options of one invocation."""

    command: str
    tier: str = "default"
    grid: Grid | None = None
    seed: int = DEFAULT_SEED
    out: str | None = None

    @property
    def tolerance(self) -> float:
        return TIERS[self.tier]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Parser that raises instead of exiting, so ``run`` owns the exit code."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\nusage: {self.format_usage().split(':', 1)[1].strip()}")


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=folder)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_report(payload: dict) -> str:
    return json.dumps(_jsonable({"schema": SCHEMA, **payload}), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# parser


def _add_family_args(p):
    p.add_argument("--family", help="family CSV written by 'extend --out'")
    p.add_argument("--pair", help="named pair, e.g. semigroup, frac(0.5,0), frac_aa(0.5)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--generator", help="generator matrix file")
    p.add_argument("--grid", help="grid T:n")


def _add_common(p):
    p.add_argument("--tier", choices=sorted(TIERS), default="default")
    p.add_argument("--seed", type=lambda s: int(s, 0), default=DEFAULT_SEED)
    p.add_argument("--out", help="write the JSON report here")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="resolvent-kit", description="Resolvent-family verification toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ml", help="Mittag-Leffler function value with error estimate")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--z", required=True, help="argument, e.g. 1, -2.5, 1+2i")
    _add_common(p)

    p = sub.add_parser("kernel", help="kernel algebra: eval, conv, pow")
    ksub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = ksub.add_parser("eval")
    q.add_argument("kernel")
    q.add_argument("--t", type=float, nargs="+", required=True)
    q = ksub.add_parser("conv")
    q.add_argument("f")
    q.add_argument("g")
    q.add_argument("--t", type=float, nargs="*")
    q = ksub.add_parser("pow")
    q.add_argument("kernel")
    q.add_argument("n", type=int)
    q.add_argument("--t", type=float, nargs="*")

    p = sub.add_parser("verify", help="residual checks")
    vsub = p.add_subparsers(dest="what", required=True, parser_class=_Parser)
    q = vsub.add_parser("volterra")
    _add_family_args(q)
    _add_common(q)
    q = vsub.add_parser("funceq")
    q.add_argument("--equation", required=True, choices=funceq.EQUATIONS)
    q.add_argument("--perturb", type=float, default=0.0, help="check S + EPS I instead (negative control)")
    q.add_argument("--skip", type=int, default=0, help="drop lattice pairs with min(i, j) <= SKIP")
    _add_family_args(q)
    _add_common(q)
    q = vsub.add_parser("identities")
    _add_common(q)

    p = sub.add_parser("identities", help="convolution, transform and inversion identities")
    _add_common(p)

    p = sub.add_parser("extend", help="extend a family to a longer interval")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--T", type=float, help="length of the local interval (default: the grid's)")
    p.add_argument("--b", help="kernel b (sharp) or inner kernel (nojump_a1a)")
    p.add_argument("--c", help="kernel c")
    _add_family_args(p)
    _add_common(p)

    p = sub.add_parser("suite", help="acceptance bundles")
    p.add_argument("name", help="one of: " + ", ".join(bundles.SUITES))
    _add_common(p)
    return parser


# ---------------------------------------------------------------------------
# helpers


def _config(args) -> RunConfig:
    grid = Grid.parse(args.grid) if getattr(args, "grid", None) else None
    return RunConfig(args.command, getattr(args, "tier", "default"), grid, getattr(args, "seed", DEFAULT_SEED),
                     getattr(args, "out", None))


def _default_pair(args):
    if args.pair:
        return args.pair
    if args.alpha is None:
        raise UsageError("give --pair or --alpha (with --beta)")
    method = getattr(args, "method", None)
    if method == "nojump_aa":
        return f"frac_aa({args.alpha:g})"
    return f"frac({args.alpha:g},{(args.beta or 0.0):g})"


def _family(args):
    if args.family:
        return read_family_csv(args.family)
    missing = [f for f in ("generator", "grid") if not getattr(args, f)]
    if missing:
        raise UsageError("--" + " and --".join(missing) + " required unless --family is given")
    params = {k: v for k, v in (("alpha", args.alpha), ("beta", args.beta)) if v is not None}
    return make_family(_default_pair(args), Generator.read(args.generator), Grid.parse(args.grid), **params)


def _emit(cfg: RunConfig, payload: dict):
    text = dump_report(payload)
    if cfg.out:
        atomic_write(cfg.out, text)
    return text


def _probes(fam, seed):
    return default_probes(fam.d, seed)


def _num(x: complex) -> str:
    x = complex(x)
    return repr(x.real) if x.imag == 0 else format_complex(x)


# ---------------------------------------------------------------------------
# commands


def cmd_ml(args, cfg):
    z = parse_complex(args.z)
    v = ml_eval(args.alpha, args.beta, z)
    print(_num(v.value))
    print(f"# error {v.error:.3e} regime {v.regime}")
    _emit(cfg, {"command": "ml", "alpha": args.alpha, "beta": args.beta, "z": [z.real, z.imag],
                "value": [v.value.real, v.value.imag], "error": v.error, "regime": v.regime})
    return 0


def cmd_kernel(args, cfg):
    if args.action == "eval":
        k = parse_kernel(args.kernel)
        out = k
    elif args.action == "conv":
        out = parse_kernel(f"conv({args.f},{args.g})").canonical()
    else:
        out = parse_kernel(f"pow({args.kernel},{args.n})").canonical()
    print(format_kernel(out))
    ts = args.t or []
    if ts:
        vals = np.asarray(out(np.asarray(ts, dtype=float)), dtype=complex)
        for t, v in zip(ts, vals):
            print(f"{t!r}\t{_num(v)}")
    return 0


def _report_payload(rep: ResidualReport, extra: dict) -> dict:
    d = rep.to_dict()
    d.update(extra)
    return d


def cmd_verify_volterra(args, cfg):
    fam = _family(args)
    rep = volterra_residual(fam, _probes(fam, cfg.seed), tol=cfg.tolerance)
    print(rep.summary())
    _emit(cfg, _report_payload(rep, {"command": "verify volterra", "tier": cfg.tier, "grid": fam.grid.text(),
                                      "pair": [fam.a.text(), fam.k.text()]}))
    return 0 if rep.passed else 1


def cmd_verify_funceq(args, cfg):
    fam = _family(args)
    target = fam.perturbed(args.perturb) if args.perturb else fam
    kw = dict(tol=cfg.tolerance, skip=args.skip)
    rep = funceq.check(args.equation, target, _probes(fam, cfg.seed), **kw)
    try:
        order = funceq.refinement_order(args.equation, target, **kw) if fam.grid.n % 2 == 0 else None
    except ResolventKitError:
        order = None
    print(rep.summary() + (f" flags={','.join(rep.flags)}" if rep.flags else ""))
    payload = {
        "command": "verify funceq",
        "equation": args.equation,
        "pair": [fam.a.text(), fam.k.text()],
        "grid": fam.grid.text(),
        "max_residual": rep.max,
        "argmax": rep.argmax,
        "tolerance": cfg.tolerance,
        "pass": rep.passed,
        "refinement_order": order,
        "perturbation": args.perturb,
        "flags": rep.flags,
        "tier": cfg.tier,
    }
    _emit(cfg, payload)
    return 0 if rep.passed else 1


def cmd_identities(args, cfg):
    return _run_suite("paper-identities", cfg)


def cmd_extend(args, cfg):
    fam = _family(args)
    b = parse_kernel(args.b) if args.b else None
    c = parse_kernel(args.c) if args.c else None
    out = extend(fam, args.method, args.n, args.T, b=b, c=c)
    if cfg.out:
        out.write_csv(cfg.out)
    rep = volterra_residual(out, _probes(out, cfg.seed), tol=cfg.tolerance) if out.generator is not None else None
    print(f"extended {args.method} n={args.n}: grid {out.grid.text()} pair ({out.a.text()}, {out.k.text()})")
    if rep is not None:
        print(rep.summary())
    return 0


def _run_suite(name: str, cfg: RunConfig) -> int:
    if name not in bundles.SUITES:
        raise UsageError(f"unknown suite {name!r}; known: {', '.join(bundles.SUITES)}")
    scale = GRID_SCALE[cfg.tier]
    rows, payload_items = [], []
    ok_all = True
    for item_name in bundles.SUITES[name]:
        rep, dt = bundles.run_item(item_name, scale)
        ok = rep.passed
        ok_all &= ok
        rows.append((item_name, rep.max, rep.tolerance, "PASS" if ok else "FAIL", dt))
        d = rep.to_dict()
        d["runtime"] = dt
        payload_items.append(d)
    _print_table(rows)
    _emit(cfg, {"command": "suite", "suite": name, "tier": cfg.tier, "grid_scale": scale, "pass": ok_all,
                "items": payload_items})
    return 0 if ok_all else 1


def _print_table(rows):
    head = ("identity", "residual", "tolerance", "verdict", "runtime")
    w = max(len(head[0]), *(len(r[0]) for r in rows))
    print(f"{head[0]:<{w}}  {head[1]:>10}  {head[2]:>9}  {head[3]:>7}  {head[4]:>8}")
    for name, res, tol, verdict, dt in rows:
        print(f"{name:<{w}}  {res:>10.3e}  {tol:>9.1e}  {verdict:>7}  {dt:>7.2f}s")


def cmd_suite(args, cfg):
    return _run_suite(args.name, cfg)


_DISPATCH = {
    "ml": cmd_ml,
    "kernel": cmd_kernel,
    "identities": cmd_identities,
    "extend": cmd_extend,
    "suite": cmd_suite,
}


def run(argv=None) -> int:
    """Parse ``argv`` and run the command; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _config(args)
        if args.command == "verify":
            fn = {"volterra": cmd_verify_volterra, "funceq": cmd_verify_funceq, "identities": cmd_identities}[args.what]
        else:
            fn = _DISPATCH[args.command]
        return fn(args, cfg)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except HypothesisError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ResolventKitError as exc:
        print(f"check failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))
