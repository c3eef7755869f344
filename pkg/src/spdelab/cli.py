"""Command line entry point: ``spdelab simulate | oracle | verify-assumptions | analyze``.

Exit codes: 0 on success or a passing verdict, 2 when a verdict or
assumption check fails, 1 on any error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from spdelab import __version__
from spdelab.config import ConfigError, ExperimentConfig, load, loads, preset_path
from spdelab import experiments as ex
from spdelab.regularity import DataError

log = logging.getLogger("spdelab")

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def resolve_config(arg: str) -> ExperimentConfig:
    """A TOML file, a bundle manifest, a bundle directory, or a shipped preset name."""
    path = Path(arg)
    if path.is_dir():
        path = path / "manifest.json"
    if path.suffix == ".json":
        man = json.loads(path.read_text())
        return loads(man["config_toml"], source=str(path))
    if path.exists():
        return load(path)
    return load(preset_path(arg))


def _with_traj(cfg: ExperimentConfig, traj: int | None) -> ExperimentConfig:
    if traj is None:
        return cfg
    if traj < 1:
        raise ConfigError("--traj must be positive")
    return replace(cfg, run=replace(cfg.run, n_traj=traj))


def _out_dir(args, cfg: ExperimentConfig, suffix: str) -> Path:
    return Path(args.out) if args.out else Path("runs") / f"{cfg.name}-{suffix}"


def cmd_simulate(args) -> int:
    cfg = _with_traj(resolve_config(args.config), args.traj)
    t0 = time.perf_counter()
    res = ex.simulate(cfg, workers=args.workers)
    wall = time.perf_counter() - t0
    out = _out_dir(args, cfg, "simulate")
    ex.write_bundle(out, cfg, "simulate", res.moment_rows, res.increment_rows, wall,
                    {"n_diverged": res.n_diverged, "workers": args.workers})
    print(f"wrote {len(res.moment_rows)} moment rows to {out} ({wall:.1f} s)")
    if res.n_diverged:
        print(f"{res.n_diverged} trajectories diverged and were excluded", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = resolve_config(args.config)
    t0 = time.perf_counter()
    rows, inc_rows = ex.oracle_tables(cfg, stationary=args.stationary)
    wall = time.perf_counter() - t0
    out = _out_dir(args, cfg, "oracle")
    ex.write_bundle(out, cfg, "oracle", rows, inc_rows, wall)
    print(f"wrote {len(rows)} oracle rows to {out} ({wall:.1f} s)")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = resolve_config(args.config)
    report = ex.verify_assumptions(cfg, quick=args.quick)
    text = json.dumps(report, indent=2, default=float)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "assumptions.json").write_text(text + "\n")
    for key, value in report.items():
        if isinstance(value, dict) and "pass" in value:
            print(f"{key:24s} {'pass' if value['pass'] else 'FAIL'}")
    for g in report["growth_bound"]["checks"]:
        tag = "certified" if g["certified"] else "outside certified range"
        print(f"  alpha={g['alpha']:.2f} slope={g['slope']:+.3f} ({tag})")
    print(f"{'overall':24s} {'pass' if report['pass'] else 'FAIL'}")
    return EXIT_OK if report["pass"] else EXIT_FAIL


def cmd_analyze(args) -> int:
    bundles = [ex.read_bundle(p) for p in args.bundles]
    verdicts = ex.analyze(bundles)
    payload = verdicts[0] if len(verdicts) == 1 else verdicts
    text = json.dumps(payload, indent=2, default=float)
    out = Path(args.out) if args.out else Path(args.bundles[0])
    out.mkdir(parents=True, exist_ok=True)
    (out / "verdict.json").write_text(text + "\n")
    for v in verdicts:
        est = v["estimated_gamma_star"]
        est_s = "n/a" if est is None else f"{est:.3f}"
        print(f"{v['preset']} [{v['source']}]: predicted {v['predicted_gamma_star']:.3f}, "
              f"estimated {est_s} -> {'pass' if v['pass'] else 'FAIL'}")
    return EXIT_OK if all(v["pass"] for v in verdicts) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spdelab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"spdelab {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Monte Carlo moments for a config")
    p.add_argument("config", help="TOML file, manifest.json, bundle directory or preset name")
    p.add_argument("--out", help="bundle directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--traj", type=int, help="override run.n_traj")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="exact moment series for additive presets")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--stationary", action="store_true", help="add t = inf rows")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("verify-assumptions", help="numerical checks of the model hypotheses")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--quick", action="store_true", help="smaller equivalence samples")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("analyze", help="regularity verdicts from result bundles")
    p.add_argument("bundles", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be positive", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except (ConfigError, ex.ExperimentError, DataError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
