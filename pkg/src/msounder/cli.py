"""Command-line front end for the simulate/process/localize/report chain.

Exit codes: 0 on success, 2 on scenario/argument validation errors, 3 on
missing or corrupted data files.
"""

from __future__ import annotations

import argparse
import sys

from .capture_io import DataError
from .scenario import ScenarioError, load_scenario
from . import pipeline


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="msounder",
        description="multistatic sounding simulator and radar processing chain")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="synthesize captures + telemetry")
    sim.add_argument("--scenario", required=True, help="scenario YAML file")
    sim.add_argument("--out", required=True, help="output run directory")
    sim.add_argument("--seed", type=int, default=None,
                     help="override the scenario seed")

    proc = sub.add_parser("process", help="captures -> detections and tracks")
    proc.add_argument("--captures", required=True, help="captures directory")
    proc.add_argument("--out", required=True, help="output run directory")
    proc.add_argument("--cpi", type=int, default=None,
                      help="override symbols per CPI")
    proc.add_argument("--alpha", type=float, default=None,
                      help="background forgetting factor")
    proc.add_argument("--pfa", type=float, default=None,
                      help="CFAR false-alarm probability")

    loc = sub.add_parser("localize", help="tracks -> position fixes")
    loc.add_argument("--tracks", required=True,
                     help="processing output directory")
    loc.add_argument("--scenario", required=True, help="scenario YAML file")
    loc.add_argument("--out", required=True, help="output run directory")

    rep = sub.add_parser("report", help="consolidated summary document")
    rep.add_argument("--out", required=True,
                     help="run directory holding prior stage outputs")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            scn = load_scenario(args.scenario)
            manifest = pipeline.simulate(scn, args.out, seed=args.seed)
            print(f"wrote {len(manifest['captures'])} captures to "
                  f"{manifest['captures_dir']}")
        elif args.command == "process":
            overrides = {"cpi_symbols": args.cpi,
                         "background_alpha": args.alpha,
                         "cfar_pfa": args.pfa}
            manifest = pipeline.process(args.captures, args.out, overrides)
            n = sum(1 for _ in manifest["receivers"])
            print(f"processed {n} receiver streams into {args.out}/processing")
        elif args.command == "localize":
            scn = load_scenario(args.scenario)
            manifest = pipeline.localize_cmd(args.tracks, scn, args.out)
            s = manifest["summary"]
            rmse = s["rmse_3d_m"]
            print(f"{s['n_fixes']} fixes ({100 * s['fix_rate']:.0f}% of CPIs)"
                  + (f", 3D RMSE {rmse:.2f} m" if rmse is not None else ""))
        elif args.command == "report":
            path = pipeline.report(args.out)
            print(f"report at {path}")
    except ScenarioError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
