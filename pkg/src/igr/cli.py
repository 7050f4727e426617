"""Command-line driver for fitting relaxations to target pmfs.

Subcommands: fit (one temperature), sweep (temperature grid with
discrete-side selection), target (print the exact target pmf), check-grad
(finite-difference audit of every registered pullback).  Exit codes: 0
success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import fitting, gradcheck
from .errors import ConfigError
from .targets import build_target, parse_target

_CONFIG_FLAGS = (
    "model",
    "target",
    "k",
    "rho",
    "tau",
    "tau_grid",
    "steps",
    "batch",
    "seed",
    "lr",
    "out",
)


def _tau_grid(text: str) -> tuple:
    return tuple(float(part) for part in text.split(","))


def _add_run_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--model", choices=fitting.MODELS)
    sub.add_argument("--target", help="family:params, e.g. poisson:50 or custom:0.2,0.8")
    sub.add_argument("--k", type=int, help="categories for finite models")
    sub.add_argument("--rho", type=float, help="truncation mass threshold for igr-sb")
    sub.add_argument("--tau", type=float, help="temperature for a single fit")
    sub.add_argument("--tau-grid", type=_tau_grid, dest="tau_grid",
                     help="comma-separated temperatures for sweep")
    sub.add_argument("--steps", type=int)
    sub.add_argument("--batch", type=int)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--lr", type=float)
    sub.add_argument("--out", help="directory for results.json and pmf.csv")
    sub.add_argument("--config", help="JSON config file; explicit flags override it")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="igr", description="Fit simplex relaxations to discrete target pmfs."
    )
    subs = parser.add_subparsers(dest="command", required=True)
    _add_run_flags(subs.add_parser("fit", help="one fit at a single temperature"))
    _add_run_flags(subs.add_parser("sweep", help="fit per grid temperature, pick best by tv"))
    t = subs.add_parser("target", help="print the exact target pmf")
    t.add_argument("--target", required=True)
    t.add_argument("--out", help="directory to write target.json into")
    subs.add_parser("check-grad", help="finite-difference audit of all pullbacks")
    return parser


def _load_config(args: argparse.Namespace) -> fitting.RunConfig:
    merged: dict = {}
    if args.config is not None:
        try:
            with open(args.config) as handle:
                loaded = json.load(handle)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        merged.update(loaded)
    for name in _CONFIG_FLAGS:
        value = getattr(args, name)
        if value is not None:
            merged[name] = value
    if "model" not in merged or "target" not in merged:
        raise ConfigError("--model and --target are required (flag or config file)")
    return fitting.RunConfig.from_dict(merged)


def _finish(result, out) -> int:
    if out is not None:
        fitting.emit(result, out)
    else:
        if isinstance(result, fitting.FitReport):
            payload = result.to_json()
        else:
            best, reports, failures = result
            payload = {"best": best.to_json(), "runs": [r.to_json() for r in reports]}
            if failures:
                payload["failures"] = failures
        print(json.dumps(payload, sort_keys=True, indent=2))
    return 0


def _cmd_fit(args: argparse.Namespace) -> int:
    config = _load_config(args)
    return _finish(fitting.fit(config), config.out)


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_config(args)
    return _finish(fitting.sweep(config), config.out)


def _cmd_target(args: argparse.Namespace) -> int:
    spec = parse_target(args.target)
    pmf = build_target(spec)
    payload = {"target": spec.label(), "probs": pmf.probs.tolist()}
    text = json.dumps(payload, sort_keys=True, indent=2)
    if args.out is not None:
        from pathlib import Path

        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "target.json").write_text(text + "\n")
    else:
        print(text)
    return 0


def _cmd_check_grad(_args: argparse.Namespace) -> int:
    worst_by_name = gradcheck.run_pullback_checks(n_points=20, seed=0)
    failed = False
    for name, worst in worst_by_name:
        ok = worst <= gradcheck.DEFAULT_TOL
        failed |= not ok
        status = "PASS" if ok else "FAIL"
        print(f"{status} {name}: max deviation {worst:.3e} (tol {gradcheck.DEFAULT_TOL:g})")
    return 2 if failed else 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems; those are configuration errors.
        return 0 if exc.code in (0, None) else 1
    handlers = {
        "fit": _cmd_fit,
        "sweep": _cmd_sweep,
        "target": _cmd_target,
        "check-grad": _cmd_check_grad,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary maps failures to exit 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
