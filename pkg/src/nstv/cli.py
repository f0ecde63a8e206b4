"""Command line entry point: ``nstv weights|solve|verify|experiment|sweep``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import experiments as ex


def _load_config(args) -> dict:
    cfg = {}
    if getattr(args, "preset", None):
        cfg = {"preset": args.preset}
    if getattr(args, "config", None):
        cfg.update(json.loads(Path(args.config).read_text()))
    if args.seed is not None:
        cfg["seed"] = args.seed
    for key in ("n", "noise_level"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


_IN_MEMORY = ("config", "reconstruction", "truth")


def _summary(res: dict) -> dict:
    return {k: v for k, v in res.items() if k not in _IN_MEMORY}


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=ex._json_default))


def cmd_weights(args) -> int:
    cfg = _load_config(args)
    cfg["kind"] = "weights"
    if args.p is not None:
        cfg.setdefault("weights", {})["p"] = args.p
    res = ex.run_experiment(cfg, args.out, dry_run=args.dry_run)
    _print(res if args.dry_run else _summary(res))
    return 0


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    res = ex.run_experiment(cfg, args.out, dry_run=args.dry_run)
    _print(res if args.dry_run else _summary(res))
    return 0


def cmd_verify(args) -> int:
    from .verify import run_checks

    report = run_checks(args.check or None, seed=args.seed or 0)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(report, indent=2, sort_keys=True, default=ex._json_default))
    _print(report)
    return 0 if report["passed"] else 1


def cmd_experiment(args) -> int:
    if args.list:
        for fig, names in ex.FIGURE_MANIFEST.items():
            for name in names:
                print(f"{fig:16s} {name:32s} {ex.PRESETS[name]['description']}")
        return 0
    if not args.preset and not args.config:
        raise SystemExit("experiment needs --preset, --config or --list")
    return cmd_solve(args)


def _sweep_one(job):
    cfg, out = job
    try:
        res = ex.run_experiment(cfg, out)
        return {"name": res["config"]["name"], "ok": True, "metrics": res["metrics"],
                "stop_reason": res["stop_reason"]}
    except ex.ExperimentError as exc:
        return {"name": cfg.get("name", cfg.get("preset")), "ok": False, "stage": exc.stage,
                "error": str(exc)}


def cmd_sweep(args) -> int:
    if args.figure:
        names = ex.FIGURE_MANIFEST.get(args.figure)
        if names is None:
            raise SystemExit(f"unknown figure {args.figure!r}")
    else:
        names = list(ex.PRESETS)
    names = [n for n in names if ex.PRESETS[n].get("kind", "reconstruction") == "reconstruction"]
    base = Path(args.out or "runs")
    jobs = []
    for name in names:
        cfg = {"preset": name}
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.n is not None:
            cfg["n"] = args.n
        jobs.append((cfg, str(base / name)))
    if args.dry_run:
        _print([ex.resolve_config(c) for c, _ in jobs])
        return 0
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    base.mkdir(parents=True, exist_ok=True)
    (base / "sweep.json").write_text(json.dumps(results, indent=2, default=ex._json_default))
    _print(results)
    return 0 if all(r["ok"] for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nstv", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (merged over the defaults)")
        p.add_argument("--preset", help="named preset, see `nstv experiment --list`")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--n", type=int, default=None, help="override the grid size")
        p.add_argument("--dry-run", action="store_true", help="print the resolved config only")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("weights", help="compute and save TV weights")
    common(p)
    p.add_argument("--p", choices=["1", "2", "inf"], default=None)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("solve", help="reconstruct a source from simulated data")
    common(p)
    p.add_argument("--noise-level", dest="noise_level", type=float, default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="run the analytical self-checks, JSON report")
    p.add_argument("--check", action="append", help="run only this check (repeatable)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="also write the report to this file")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("experiment", help="run a preset or list them")
    common(p)
    p.add_argument("--list", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("sweep", help="run every preset (or one figure's presets)")
    p.add_argument("--figure", help="restrict to one figure label")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--out", help="base output directory (default runs/)")
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ex.ExperimentError, KeyError, ValueError) as exc:
        print(f"nstv: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
