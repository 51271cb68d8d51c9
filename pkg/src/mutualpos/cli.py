"""Command-line front end.

Subcommands: fit, mc, roc, oracle and run (replay a run manifest).
Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import AttackConfig, AttackMode
from .config import (ConfigError, load_fit_spec, load_sim_config, sim_config_from_dict,
                     sim_config_to_dict)
from .core import rng_stream
from .error_model import (ErrorSurface, FitError, FitSpec, fit_from_spec,
                          sample_delta_error)
from .sim import (Estimator, SimConfig, aggregate_convergence, curve_rows, detection_stats,
                  roc_rows, roc_sweep, run_mc, to_csv)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
DEFAULT_XI_GRID = (0.5, 0.7, 0.9, 0.95, 0.99, 0.999)
MANIFEST_SCHEMA = "mutualpos.run_manifest/1"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_IO) from None


def _write_text(path, text: str) -> None:
    try:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}", EXIT_IO) from None


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


# -- surface handling ------------------------------------------------------

def _surface_for(args) -> tuple[ErrorSurface, dict]:
    """Load the cached surface or fit the default one; returns (surface, manifest ref)."""
    if args.surface:
        text = _read_text(args.surface)
        try:
            surface = ErrorSurface.from_dict(json.loads(text))
        except (ValueError, KeyError, TypeError) as exc:
            raise CliError(f"{args.surface}: invalid error-surface file ({exc})", EXIT_CONFIG) from None
        return surface, {"path": str(args.surface), "sha256": _sha256(text)}
    spec = FitSpec()
    surface = fit_from_spec(spec)
    return surface, {"fit": _fit_spec_dict(spec)}


def _surface_from_ref(ref: dict) -> ErrorSurface:
    if "path" in ref:
        text = _read_text(ref["path"])
        if _sha256(text) != ref["sha256"]:
            raise CliError(f"{ref['path']} changed since the run was recorded", EXIT_CONFIG)
        return ErrorSurface.from_dict(json.loads(text))
    f = ref["fit"]
    return fit_from_spec(FitSpec(tuple(f["d_grid"]), tuple(f["s_grid"]),
                                 int(f["samples_per_cell"]), int(f["seed"])))


def _fit_spec_dict(spec: FitSpec) -> dict:
    return {"d_grid": list(spec.d_grid), "s_grid": list(spec.s_grid),
            "samples_per_cell": spec.samples_per_cell, "seed": spec.seed}


# -- config resolution -----------------------------------------------------

def _resolve_config(args, command: str) -> SimConfig:
    if args.config:
        cfg = load_sim_config(_read_text(args.config), str(args.config))
    else:
        cfg = SimConfig()
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.trials is not None:
        kw["trials"] = args.trials
    if args.estimator is not None:
        kw["estimator"] = Estimator(args.estimator)
    attack = cfg.attack
    if args.attack == "none":
        attack = None
    elif args.attack is not None and (attack is None or attack.mode.value != args.attack):
        # a new mode takes its default attack vector but keeps the other settings
        base = attack or AttackConfig(AttackMode(args.attack))
        attack = AttackConfig(AttackMode(args.attack), None, base.num_compromised,
                              base.penetration, base.coordinated)
    elif args.attack is None and command == "roc" and attack is None:
        attack = AttackConfig(AttackMode.BIAS)
    if attack is not None and args.coordinated is not None:
        attack = replace(attack, coordinated=args.coordinated)
    kw["attack"] = attack
    try:
        return replace(cfg, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _parse_xi_grid(text: str | None) -> list[float]:
    if text is None:
        return list(DEFAULT_XI_GRID)
    try:
        grid = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--xi-grid: cannot parse {text!r}") from None
    if not grid:
        raise ConfigError("--xi-grid is empty")
    bad = [v for v in grid if not 0 < v < 1]
    if bad:
        raise ConfigError(f"--xi-grid values must lie in (0, 1), got {bad}")
    return grid


def _default_out(command: str, fmt: str) -> Path:
    return Path(f"{command}.{fmt}")


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


# -- executors shared by fresh runs and replays ----------------------------

def _execute_mc(cfg: SimConfig, surface: ErrorSurface, fmt: str, threads: int):
    records = run_mc(cfg, surface, threads)
    curve = aggregate_convergence(records)
    rows = curve_rows(curve)
    summary = {"final_mean_error": curve.final_mean, "final_rmse": curve.rmse[-1],
               "final_p10_p50_p90": list(curve.final_percentiles),
               "mean_raw_error": float(np.mean([r.raw_error for r in records]))}
    if cfg.estimator is Estimator.RDAD:
        ds = detection_stats(records)
        summary.update(r_fa=ds.r_fa, r_md=ds.r_md)
    if fmt == "csv":
        text = to_csv(rows)
    else:
        text = json.dumps({"curve": rows, "summary": summary}, indent=2) + "\n"
    return text, summary


def _execute_roc(cfg: SimConfig, surface: ErrorSurface, grid, fmt: str, threads: int):
    roc = roc_sweep(cfg, grid, surface, threads)
    rows = roc_rows(roc)
    for row, p in zip(rows, roc.points):
        row["dominates_blind_guess"] = p.stats.dominates_blind_guess()
    summary = {"near_blind": roc.near_blind}
    if fmt == "csv":
        text = to_csv(rows)
    else:
        text = json.dumps({"points": rows, "summary": summary}, indent=2) + "\n"
    return text, summary, roc


def _write_manifest(out: Path, command: str, cfg: SimConfig, surface_ref: dict, fmt: str,
                    xi_grid=None) -> Path:
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "command": command,
        "config": sim_config_to_dict(cfg),
        "seed": cfg.seed,
        "format": fmt,
        "surface": surface_ref,
        "outputs": {"result": str(out)},
        "version": __version__,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    if xi_grid is not None:
        manifest["xi_grid"] = list(xi_grid)
    path = _manifest_path(out)
    _write_text(path, json.dumps(manifest, indent=2) + "\n")
    return path


def _print_roc(roc, near_blind: bool) -> None:
    print(f"{'xi':>8} {'r_fa':>8} {'r_md':>8} {'err':>8}  below blind line")
    for p in roc.points:
        fa = "nan" if p.r_fa is None else f"{p.r_fa:.4f}"
        md = "nan" if p.r_md is None else f"{p.r_md:.4f}"
        flag = "yes" if p.stats.dominates_blind_guess() else "no"
        print(f"{p.xi:>8.4g} {fa:>8} {md:>8} {p.mean_error:>8.4f}  {flag}")
    if near_blind:
        print("near-blind: detection is no better than a blind guess for this attack")


# -- subcommands -----------------------------------------------------------

def cmd_fit(args) -> int:
    spec = load_fit_spec(_read_text(args.config), str(args.config)) if args.config else FitSpec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    try:
        surface = fit_from_spec(spec)
    except FitError as exc:
        raise CliError(f"fit failed: {exc}", EXIT_NUMERIC) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out or "error_surface.json")
    _write_text(out, surface.dumps())
    q = surface.fit_quality
    print(f"wrote {out}  R^2 mu={q['mu']:.4f} sigma={q['sigma']:.4f}")
    return EXIT_OK


def cmd_mc(args) -> int:
    cfg = _resolve_config(args, "mc")
    surface, ref = _surface_for(args)
    out = Path(args.out) if args.out else _default_out("mc", args.format)
    text, summary = _execute_mc(cfg, surface, args.format, args.threads)
    _write_text(out, text)
    manifest = _write_manifest(out, "mc", cfg, ref, args.format)
    print(f"wrote {out} and {manifest}")
    for key, value in summary.items():
        print(f"  {key}: {value}")
    return EXIT_OK


def cmd_roc(args) -> int:
    cfg = _resolve_config(args, "roc")
    grid = _parse_xi_grid(args.xi_grid)
    surface, ref = _surface_for(args)
    out = Path(args.out) if args.out else _default_out("roc", args.format)
    text, summary, roc = _execute_roc(cfg, surface, grid, args.format, args.threads)
    _write_text(out, text)
    manifest = _write_manifest(out, "roc", replace(cfg, estimator=Estimator.RDAD), ref,
                               args.format, grid)
    _print_roc(roc, summary["near_blind"])
    print(f"wrote {out} and {manifest}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    if args.n < 1:
        raise ConfigError("-n must be >= 1")
    if args.distance < 0 or args.sigma_p < 0:
        raise ConfigError("distance and sigma_p must be non-negative")
    seed = 0 if args.seed is None else args.seed
    x = sample_delta_error(args.distance, args.sigma_p ** 2, args.n,
                           rng_stream(seed, "oracle"))
    surface, _ = _surface_for(args)
    std = float(x.std(ddof=1)) if x.size > 1 else 0.0
    print(f"{'':10} {'oracle':>12} {'surface':>12}")
    print(f"{'mean':10} {float(x.mean()):>12.6f} {surface.mu(args.distance, args.sigma_p):>12.6f}")
    print(f"{'std':10} {std:>12.6f} {surface.sigma(args.distance, args.sigma_p):>12.6f}")
    if not surface.fit_domain.contains(args.distance, args.sigma_p):
        print("note: input lies outside the surface fit domain; surface values are clamped")
    return EXIT_OK


def cmd_run(args) -> int:
    """Replay a manifest written by mc or roc."""
    try:
        manifest = json.loads(_read_text(args.manifest))
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, exc.lineno, str(args.manifest)) from None
    if manifest.get("schema") != MANIFEST_SCHEMA:
        raise ConfigError("not a run manifest", None, str(args.manifest))
    cfg = sim_config_from_dict(manifest["config"])
    surface = _surface_from_ref(manifest["surface"])
    fmt = manifest["format"]
    out = Path(args.out or manifest["outputs"]["result"])
    if manifest["command"] == "mc":
        text, _ = _execute_mc(cfg, surface, fmt, args.threads)
    elif manifest["command"] == "roc":
        text, _, _ = _execute_roc(cfg, surface, manifest["xi_grid"], fmt, args.threads)
    else:
        raise ConfigError(f"cannot replay command {manifest['command']!r}", None, str(args.manifest))
    _write_text(out, text)
    print(f"replayed {manifest['command']} into {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--config", type=Path, default=None, help="JSON config file")
    common.add_argument("--out", type=Path, default=None, help="output file")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--threads", type=int, default=1, help="worker processes for trials")
    common.add_argument("--surface", type=Path, default=None,
                        help="error-surface cache file (default: fit the default grid)")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--estimator", choices=[e.value for e in Estimator], default=None)
    sim.add_argument("--attack", choices=["none"] + [m.value for m in AttackMode], default=None)
    coord = sim.add_mutually_exclusive_group()
    coord.add_argument("--coordinated", dest="coordinated", action="store_true", default=None)
    coord.add_argument("--uncoordinated", dest="coordinated", action="store_false")
    sim.add_argument("--trials", type=int, default=None)

    parser = argparse.ArgumentParser(prog="mutualpos",
                                     description="Robust and secure UAV mutual positioning")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit and cache the error surface")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("mc", parents=[common, sim], help="Monte-Carlo convergence run")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("roc", parents=[common, sim], help="RDAD confidence sweep")
    p.add_argument("--xi-grid", default=None, help="comma-separated confidence levels")
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("oracle", parents=[common], help="brute-force extra-error statistics")
    p.add_argument("-d", "--distance", type=float, required=True)
    p.add_argument("--sigma-p", type=float, required=True)
    p.add_argument("-n", type=int, default=1_000_000)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("run", parents=[common], help="replay a run manifest")
    p.add_argument("manifest", type=Path)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (FitError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
