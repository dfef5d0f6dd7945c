"""Command-line entry point: ``cccpol {drift,reset,sweep,validate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from .config import PACKAGED_CONFIGS, ConfigError, load_config
from .scenarios import (run_drift_experiment, run_reset_experiment, run_trajectory_sweep,
                        write_record, write_sweep)

EXIT_CONFIG = 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cccpol", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("drift", "long-duration drift experiment"),
                       ("reset", "dynamic-range reset experiment"),
                       ("sweep", "Stokes trajectory sweep with circle fits"),
                       ("validate", "validate a config and print its hash")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", default=None,
                       help=f"YAML file or a packaged config: {', '.join(PACKAGED_CONFIGS)}")
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--duration", type=float, default=None, help="simulated seconds")
        s.add_argument("--control", choices=("on", "off"), default=None)
        s.add_argument("--out", default=None, help="output directory")
    return p


def _overrides(args) -> dict:
    o: dict = {}
    if args.seed is not None:
        o["seed"] = args.seed
    run = {}
    if getattr(args, "duration", None) is not None:
        run["duration"] = args.duration
    if getattr(args, "control", None) is not None:
        run["control"] = args.control == "on"
    if run:
        o["run"] = run
    if getattr(args, "out", None) is not None:
        o["output"] = {"dir": args.out}
    return o


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    config_name = args.config or ("drift" if args.command == "validate" else args.command)
    try:
        cfg = load_config(config_name, _overrides(args))
        if args.command == "validate":
            print(json.dumps({"ok": True, "scenario": cfg.scenario, "seed": cfg.seed,
                              "config_hash": cfg.config_hash()}))
            return 0
        t0 = time.perf_counter()
        if args.command == "sweep":
            res = run_trajectory_sweep(cfg)
            files = write_sweep(res, cfg.output.dir, cfg.output.prefix)
            report = {name: {"radius": f.radius, "rms_residual": f.rms_residual,
                             "degenerate": f.degenerate} for name, f in res.fits.items()}
            report["crosspoints"] = {"/".join(k): len(v) for k, v in res.intersections.items()}
        else:
            runner = run_reset_experiment if args.command == "reset" else run_drift_experiment
            rec = runner(cfg)
            files = write_record(rec, cfg.output.dir, cfg.output.prefix)
            report = dict(rec.summary)
            if "resets" in rec.metadata:
                report["resets"] = rec.metadata["resets"]
    except ConfigError as exc:
        print(exc.to_json(), file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(json.dumps({"error": "config_not_found", "details": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    report["wall_s"] = round(time.perf_counter() - t0, 2)
    report["files"] = files
    print(json.dumps(report, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
