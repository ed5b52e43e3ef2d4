"""Command line interface: ``hflow <subcommand> ...``.

Exit codes: 0 ok, 1 a checked identity or property failed, 2 bad input,
3 the run aborted.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .fields import CheckpointError
from .flow import FlowAborted, read_csv, theta_from_density, torsion_field, torsion_norm2, load_state
from .harness import (
    ExperimentConfig,
    blowup_sweep,
    inner_product_constants,
    run_experiment,
    tau_decreasing,
    verify_algebra,
)
from .models import HKind, model, verify_model

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_ABORT = 0, 1, 2, 3
DEFAULT_KINDS = ("trivial4", "u2", "u3", "su2", "su3", "su4", "g2", "spin7")

log = logging.getLogger("hflow")


class InputError(Exception):
    pass


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def parse_overrides(extra: list[str]) -> dict:
    """``--key value`` pairs (or ``--key=value``) into a dict with TOML-typed values."""
    out = {}
    i = 0
    keys = set(ExperimentConfig.keys())
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise InputError(f"unexpected argument {tok!r}")
        key, eq, val = tok[2:].partition("=")
        key = key.replace("-", "_")
        if not eq:
            if i + 1 >= len(extra):
                raise InputError(f"missing value for --{key}")
            val = extra[i + 1]
            i += 1
        if key not in keys:
            raise InputError(f"unknown configuration key {key!r}")
        out[key] = _parse_value(val)
        i += 1
    return out


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"config file {p} not found")
    try:
        data = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"{p}: {exc}") from exc
    data.update(overrides or {})
    try:
        return ExperimentConfig.from_dict(data)
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"{p}: {exc}") from exc


def _kind(text: str) -> HKind:
    try:
        return HKind.parse(text)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


# ---------------------------------------------------------------- subcommands


def cmd_verify_algebra(args, extra) -> int:
    if extra:
        raise InputError(f"unexpected arguments {extra}")
    dims = [_kind(args.kind).n] if args.kind else ([args.n] if args.n else [4, 7, 8])
    worst = 0.0
    for n in dims:
        res = verify_algebra(n, args.trials, args.seed)
        for k, v in res.items():
            print(f"n={n} {k:16s} {v:.3e}")
        worst = max(worst, max(res.values()))
    print(f"max residual {worst:.3e}")
    return EXIT_OK if worst < args.tol else EXIT_FAIL


def cmd_verify_model(args, extra) -> int:
    if extra:
        raise InputError(f"unexpected arguments {extra}")
    kinds = [_kind(k) for k in args.kind] if args.kind else [HKind.parse(k) for k in DEFAULT_KINDS]
    ok = True
    for kind in kinds:
        hm = model(kind)
        rep = verify_model(hm)
        for line in rep.lines():
            print(line)
        consts = inner_product_constants(hm, args.trials, args.seed)
        expected = {"c": hm.c} if hm.single_c else {"lambda1": hm.c[0], "lambda2": hm.c[1]}
        for key, (lo, hi) in consts.items():
            err = max(abs(lo - expected[key]), abs(hi - expected[key]))
            print(f"{kind}: {key} measured in [{lo:.15g}, {hi:.15g}], expected {expected[key]:g}")
            ok &= err < 1e-10
        ok &= rep.ok(1e-12)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_flow(args, extra) -> int:
    cfg = load_config(args.config, parse_overrides(extra))
    out = args.out or Path(args.config).with_suffix("").name + "_out"
    if args.resume and not Path(args.resume).is_file():
        raise InputError(f"checkpoint {args.resume} not found")
    try:
        rep = run_experiment(cfg, out, resume=args.resume)
    except CheckpointError as exc:
        raise InputError(str(exc)) from exc
    print(json.dumps(rep.summary, indent=2))
    return EXIT_OK


def cmd_blowup_sweep(args, extra) -> int:
    cfg = load_config(args.config, parse_overrides(extra))
    try:
        radii = [float(x) for x in args.radii.split(",") if x.strip()]
    except ValueError as exc:
        raise InputError(f"bad --radii {args.radii!r}") from exc
    if not radii:
        raise InputError("--radii needs at least one value")
    out = args.out or Path(args.config).with_suffix("").name + "_sweep"
    sums = blowup_sweep(cfg, radii, out)
    for s in sums:
        print(json.dumps({k: s[k] for k in ("r", "outcome", "tau_observed", "D0", "sup_T0")}))
    print(f"all blew up with tau decreasing in r: {'yes' if tau_decreasing(sums) else 'no'}")
    return EXIT_OK


def cmd_theta(args, extra) -> int:
    if extra:
        raise InputError(f"unexpected arguments {extra}")
    d = Path(args.ckpt_dir)
    files = sorted(d.glob("*.hstf")) if d.is_dir() else []
    if not files:
        raise InputError(f"no checkpoints in {d}")
    try:
        x0 = [float(v) for v in args.x0.split(",")]
    except ValueError as exc:
        raise InputError(f"bad --x0 {args.x0!r}") from exc
    rows = []
    for f in files:
        try:
            state, _ = load_state(f)
        except CheckpointError as exc:
            raise InputError(str(exc)) from exc
        if len(x0) != state.grid.n:
            raise InputError(f"--x0 has {len(x0)} coordinates, the torus has dimension {state.grid.n}")
        if state.t >= args.t0:
            print(f"t={state.t:.17g} skipped (t >= t0)")
            continue
        T2 = torsion_norm2(torsion_field(state.field, args.order))
        th = theta_from_density(T2, state.grid, x0, args.t0, state.t, args.images)
        rows.append((state.t, th))
        print(f"t={state.t:.17g} theta={th:.17g}")
    rows.sort()
    mono = all(b[1] <= a[1] * (1 + args.tol) for a, b in zip(rows, rows[1:]))
    print(f"theta non-increasing (rel tol {args.tol:g}): {'yes' if mono else 'no'}")
    return EXIT_OK


def cmd_report(args, extra) -> int:
    if extra:
        raise InputError(f"unexpected arguments {extra}")
    p = Path(args.csv)
    if not p.is_file():
        raise InputError(f"{p} not found")
    try:
        rows = read_csv(p)
    except (ValueError, KeyError) as exc:
        raise InputError(f"{p}: {exc}") from exc
    if not rows:
        raise InputError(f"{p} has no records")
    t = np.array([r["t"] for r in rows])
    D = np.array([r["D"] for r in rows])
    E = np.array([r["E"] for r in rows])
    supT = np.array([r["sup_T"] for r in rows])
    print(f"records        {len(rows)}")
    print(f"t range        [{t[0]:.6g}, {t[-1]:.6g}]")
    print(f"E first/last   {E[0]:.6g} / {E[-1]:.6g}")
    print(f"D first/last   {D[0]:.6g} / {D[-1]:.6g}")
    print(f"D monotone     {'yes' if np.all(np.diff(D) <= 1e-10 * max(D[0], 1e-300)) else 'no'}")
    print(f"sup|T| max     {supT.max():.6g}")
    for key in ("orbit_residual", "bochner_ratio", "bianchi_linf"):
        vals = np.array([r[key] for r in rows])
        vals = vals[np.isfinite(vals)]
        if vals.size:
            print(f"{key:14s} max {vals.max():.6g}")
    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(3, 1, figsize=(6, 8), sharex=True)
        for a, y, name in zip(ax, (E, D, supT), ("E", "D", "sup|T|")):
            a.semilogy(t, np.maximum(y, 1e-300))
            a.set_ylabel(name)
        ax[-1].set_xlabel("t")
        fig.tight_layout()
        fig.savefig(args.plot)
        print(f"plot written to {args.plot}")
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hflow", description="H-structures and harmonic flow on flat tori",
                                 allow_abbrev=False)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-algebra", allow_abbrev=False, help="run the diamond identity suite")
    p.add_argument("--kind")
    p.add_argument("--n", type=int)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_verify_algebra)

    p = sub.add_parser("verify-model", allow_abbrev=False, help="check model tensors and inner-product constants")
    p.add_argument("--kind", action="append")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify_model)

    p = sub.add_parser("flow", allow_abbrev=False, help="run one experiment from a TOML config; --key value overrides")
    p.add_argument("--config", required=True)
    p.add_argument("--resume")
    p.add_argument("--out")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("blowup-sweep", allow_abbrev=False, help="run a config at several bump radii")
    p.add_argument("--config", required=True)
    p.add_argument("--radii", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_blowup_sweep)

    p = sub.add_parser("theta", allow_abbrev=False, help="evaluate Theta on a directory of checkpoints")
    p.add_argument("--ckpt-dir", required=True)
    p.add_argument("--x0", required=True)
    p.add_argument("--t0", type=float, required=True)
    p.add_argument("--images", type=int, default=1)
    p.add_argument("--order", type=int, default=2, choices=(2, 4))
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(func=cmd_theta)

    p = sub.add_parser("report", allow_abbrev=False, help="summarise a diagnostics CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--plot")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args, extra = ap.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if extra and args.command not in ("flow", "blowup-sweep"):
        ap.print_usage(sys.stderr)
        print(f"hflow: error: unrecognized arguments: {' '.join(extra)}", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args, extra)
    except InputError as exc:
        ap.print_usage(sys.stderr)
        print(f"hflow: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FlowAborted as exc:
        print(f"hflow: run aborted: {exc}; last checkpoint {exc.checkpoint}", file=sys.stderr)
        return EXIT_ABORT
    except OSError as exc:
        print(f"hflow: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
