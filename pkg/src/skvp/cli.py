"""Command-line entry point: ``skvp <subcommand> --config FILE --out DIR``."""
from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import hashlib
import json
import sys
from pathlib import Path

from . import io
from .experiments import (
    EXPERIMENTS,
    ConfigError,
    ExperimentConfig,
    FixtureMissing,
    build_profile,
    calibrate_fixtures,
    default_fixture_path,
    load_fixtures,
    packaged_config,
    run,
)
from .profile import load_spec, validate
from .sampler import sample_coupling

EXIT_OK, EXIT_ASSERT, EXIT_ERROR = 0, 1, 2

ALIASES = {"fixed-point": "fixed_point", "free-energy": "free_energy_gap", "amp": "amp_accuracy"}


def _common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, help="JSON config document")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config's master seed (u64)")
    p.add_argument("--assert", dest="check", action="store_true", help="exit nonzero if any check fails")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--fixtures", default=None, help="fixture file (defaults to the bundled one)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skvp", description="SK model with a variance profile: experiments and oracles.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="build a profile from a spec; export triplets and the assumption report")
    p.add_argument("--config", required=True, help="profile spec JSON (kind + parameters)")
    p.add_argument("--out", default=".")
    p.add_argument("--t", type=float, default=None, help="t for the high-temperature check")

    p = sub.add_parser("sample", help="draw one coupling matrix and export it as triplets")
    _common(p)
    p.add_argument("--replica", type=int, default=0)

    for alias in ALIASES:
        _common(sub.add_parser(alias, help=f"run the {ALIASES[alias]} experiment"))

    p = sub.add_parser("experiment", help="run a named experiment")
    p.add_argument("name", choices=EXPERIMENTS)
    _common(p, config_required=False)

    p = sub.add_parser("fixtures", help="fixture maintenance")
    p.add_argument("action", choices=["calibrate"])
    p.add_argument("--out", default=None, help="fixture file to write (defaults to the bundled one)")
    p.add_argument("--jobs", type=int, default=1)
    return parser


def _load_config(args, expected: str | None) -> ExperimentConfig:
    if args.config is None:
        cfg = packaged_config(expected)
    else:
        cfg = ExperimentConfig.load(args.config)
    if expected is not None and cfg.experiment != expected:
        raise ConfigError(f"config is for {cfg.experiment!r}, expected {expected!r}")
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _meta(cfg: ExperimentConfig) -> dict:
    doc = json.dumps(dataclasses.asdict(cfg), sort_keys=True)
    return {
        "generated": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config_sha256": hashlib.sha256(doc.encode()).hexdigest(),
    }


def _cmd_profile(args) -> int:
    prof = load_spec(args.config)
    out = Path(args.out)
    io.write_profile(out / "profile.csv", prof)
    doc = {"n": prof.n, "k_scale": prof.k_scale, "c_s": prof.c_s, "row_norm": prof.row_norm,
           "max_row_support": prof.max_row_support, "c_card": prof.c_card, "profile_id": prof.profile_id}
    if args.t is not None:
        doc["assumptions"] = dataclasses.asdict(validate(prof, args.t))
    io.write_json(out / "profile.json", doc)
    print(f"wrote {out / 'profile.csv'} and {out / 'profile.json'}")
    return EXIT_OK


def _cmd_sample(args) -> int:
    cfg = _load_config(args, None)
    n, k = cfg.cells()[0]
    prof = build_profile(cfg.profile, n, k, cfg.seed)
    w = sample_coupling(prof, cfg.model.t, cfg.seed, args.replica)
    path = Path(args.out) / "coupling.csv"
    io.write_triplets(path, w.n, w.w, name="w_ij")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_experiment(args, name: str) -> int:
    cfg = _load_config(args, name)
    fixtures = load_fixtures(args.fixtures) if args.check and cfg.fixture_key else None
    try:
        result = run(cfg, jobs=args.jobs, fixtures=fixtures)
    except (RuntimeError, ValueError, FloatingPointError, AssertionError) as exc:
        out = Path(args.out)
        io.write_json(out / f"{cfg.experiment}_error.json", {"experiment": cfg.experiment, "error": f"{type(exc).__name__}: {exc}"})
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    path = result.write(args.out, cfg.output, _meta(cfg))
    io.write_json(path.with_name(f"{path.stem}_summary.json"), {
        "experiment": cfg.experiment,
        "summary": result.summary,
        "checks": [dataclasses.asdict(c) for c in result.checks],
    })
    for check in result.checks:
        print(check.line())
    print(f"wrote {path}")
    if args.check and not result.passed:
        return EXIT_ASSERT
    return EXIT_OK


def _cmd_fixtures(args) -> int:
    doc = calibrate_fixtures(jobs=args.jobs, log=lambda s: print(s, flush=True))
    path = Path(args.out) if args.out else default_fixture_path()
    io.write_json(path, doc)
    print(f"wrote {path}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "profile":
            return _cmd_profile(args)
        if args.command == "sample":
            return _cmd_sample(args)
        if args.command == "fixtures":
            return _cmd_fixtures(args)
        name = args.name if args.command == "experiment" else ALIASES[args.command]
        return _cmd_experiment(args, name)
    except (ConfigError, FixtureMissing, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
