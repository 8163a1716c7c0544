"""Command line front end.

Every subcommand accepts ``--config file.json`` whose keys mirror the long
flag names (``t_max`` or ``t-max``); flags given explicitly win. The
effective configuration is written next to the outputs so a run can be
repeated with ``--config``. RULED_CALABI_OUT sets the default output
directory.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .calabi import energy_report, minimizer_calabi
from .extremal import (
    check_optimality,
    classify,
    closed_form_minimizer,
    cubic,
    minimizer,
    quartic,
    solve_k1,
    solve_k2,
)
from .flow import FlowConfig, FlowStagnation, default_initial, run
from .futaki import ConvexityError, lower_bound_sweep
from .profile import (
    Profile,
    ProfileError,
    make_grid,
    read_csv,
    read_json,
    write_csv,
    write_json,
)

OUT_ENV = "RULED_CALABI_OUT"
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


class UsageError(ValueError):
    pass


def _out_root() -> Path:
    return Path(os.environ.get(OUT_ENV, "."))


def _positive(name: str, value: float) -> float:
    if not np.isfinite(value) or value <= 0:
        raise UsageError(f"--{name} must be a positive number, got {value}")
    return float(value)


def _nodes(n: int, minimum: int = 3) -> int:
    if n < minimum:
        raise UsageError(f"--n must be at least {minimum}, got {n}")
    return int(n)


def _k_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        items = list(text)
    else:
        items = [s for s in str(text).split(",") if s.strip()]
    try:
        ks = [int(k) for k in items]
    except ValueError:
        raise UsageError(f"--k-list must be comma separated integers, got {text!r}") from None
    if not ks or min(ks) < 2:
        raise UsageError("--k-list entries must be at least 2")
    return ks


def _echo_config(args: argparse.Namespace, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    skip = {"func", "config", "verbose"}
    cfg = {k: v for k, v in vars(args).items() if k not in skip}
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()}
    (directory / f"{args.command}_config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True))


def _load_profile(path: Path) -> Profile:
    if path.suffix == ".json":
        return read_json(path)
    return read_csv(path)


def cmd_constants(args) -> int:
    k1, k2 = solve_k1(), solve_k2()
    out = {
        "k1": k1,
        "k2": k2,
        "k2_times_k2_plus_2": k2 * (k2 + 2),
        "quartic_residual": abs(float(quartic(k1))),
        "cubic_residual": abs(float(cubic(k2))),
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_minimize(args) -> int:
    m = _positive("m", args.m)
    n = _nodes(args.n)
    out = Path(args.out) if args.out else _out_root() / f"minimizer_m{m:g}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    case = classify(m)
    phi = minimizer(m, make_grid(m, n))
    write_csv(phi, out)
    write_json(phi, out.with_suffix(".json"))
    report = {
        "m": m,
        "n": n,
        "regime": case.regime.value,
        "junctions": list(case.junctions),
        "calabi": minimizer_calabi(m),
        "optimality": check_optimality(phi).as_dict(),
        "profile_csv": str(out),
    }
    out.with_name(out.stem + "_report.json").write_text(json.dumps(report, indent=2))
    _echo_config(args, out.parent)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_report(args) -> int:
    if args.profile:
        phi = _load_profile(Path(args.profile))
        if args.m is not None and abs(phi.m - args.m) > 1e-9 * max(1.0, args.m):
            raise UsageError(f"profile lives on [0, {phi.m}] but --m is {args.m}")
    else:
        if args.m is None:
            raise UsageError("give --m or --profile")
        m = _positive("m", args.m)
        phi = minimizer(m, make_grid(m, _nodes(args.n)))
    phi.validate(slope_tol=args.slope_tol)
    rep = energy_report(phi).as_dict()
    rep["m"] = phi.m
    rep["n"] = phi.grid.n
    text = json.dumps(rep, indent=2)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
        _echo_config(args, Path(args.out).parent)
    print(text)
    return EXIT_OK


def cmd_futaki(args) -> int:
    m = _positive("m", args.m)
    ks = _k_list(args.k_list)
    rows = lower_bound_sweep(closed_form_minimizer(m), ks)
    out = Path(args.out) if args.out else _out_root() / f"futaki_m{m:g}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    fields = ["k", "F", "norm", "ratio", "limit", "slack"]
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for r in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.as_dict().items()})
    _echo_config(args, out.parent)
    print(json.dumps([r.as_dict() for r in rows], indent=2))
    return EXIT_OK


def cmd_flow(args) -> int:
    m = _positive("m", args.m)
    n = _nodes(args.n, minimum=33)
    t_max = _positive("t-max", args.t_max)
    grid = make_grid(m, n)
    if args.initial:
        initial = _load_profile(Path(args.initial))
        if initial.grid != grid:
            raise UsageError(f"initial profile grid ({initial.m}, {initial.grid.n}) != ({m}, {n})")
    else:
        initial = default_initial(m, grid)
    initial.validate()
    try:
        config = FlowConfig(t_max=t_max, dt_init=args.dt_init, dt_min=args.dt_min, dt_max=args.dt_max,
                            conv_tol=args.conv_tol, scheme=args.scheme)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out_dir = Path(args.out_dir) if args.out_dir else _out_root() / f"flow_m{m:g}_n{n}"
    _echo_config(args, out_dir)
    result = run(m, initial, config, out_dir=out_dir)
    summary = result.summary()
    print(json.dumps(summary, indent=2))
    if result.status.startswith("stagnated"):
        print(f"flow stagnated: {result.status}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ruled-calabi", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    p.subcommands = {}

    def add(name, func, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", type=Path, help="JSON file with defaults for the flags")
        sp.set_defaults(func=func)
        p.subcommands[name] = sp
        return sp

    add("constants", cmd_constants, "print the critical constants k1, k2")

    sp = add("minimize", cmd_minimize, "sample the Calabi minimizer and check optimality")
    sp.add_argument("--m", type=float)
    sp.add_argument("--n", type=int, default=2049)
    sp.add_argument("--out", help="profile CSV path")

    sp = add("report", cmd_report, "Calabi, Mabuchi, F and L functionals of a profile")
    sp.add_argument("--m", type=float)
    sp.add_argument("--n", type=int, default=2049)
    sp.add_argument("--profile", help="profile CSV or JSON; default is the minimizer")
    sp.add_argument("--slope-tol", type=float, default=None)
    sp.add_argument("--out")

    sp = add("futaki", cmd_futaki, "Futaki lower-bound sweep for the minimizer")
    sp.add_argument("--m", type=float)
    sp.add_argument("--k-list", default="10,50,200")
    sp.add_argument("--out")

    sp = add("flow", cmd_flow, "run the Calabi flow from a profile")
    sp.add_argument("--m", type=float)
    sp.add_argument("--n", type=int, default=513)
    sp.add_argument("--t-max", type=float, default=1e5)
    sp.add_argument("--dt-init", type=float, default=1e-4)
    sp.add_argument("--dt-min", type=float, default=1e-14)
    sp.add_argument("--dt-max", type=float, default=1e4)
    sp.add_argument("--conv-tol", type=float, default=1e-4)
    sp.add_argument("--scheme", choices=["semi_implicit", "explicit"], default="semi_implicit")
    sp.add_argument("--initial", help="initial profile CSV or JSON; default is the parabola")
    sp.add_argument("--out-dir")
    return p


def _apply_config(parser, argv, args):
    """Re-parse with the config file's values as defaults."""
    data = json.loads(Path(args.config).read_text())
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    cmd = data.pop("command", args.command)
    if cmd != args.command:
        raise UsageError(f"config is for '{cmd}', not '{args.command}'")
    sp = parser.subcommands[args.command]
    known = {a.dest for a in sp._actions}
    defaults = {}
    for key, value in data.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise UsageError(f"unknown config key '{key}'")
        defaults[dest] = value
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "config", None) is not None:
            args = _apply_config(parser, argv, args)
        if getattr(args, "m", 0) is None and args.command in ("minimize", "futaki", "flow"):
            raise UsageError("--m is required")
        return args.func(args)
    except (ConvexityError, FlowStagnation, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UsageError, ProfileError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
