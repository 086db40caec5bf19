"""Headless command-line runner.

Subcommands: validate, mission, serve, scenario. Outputs are deterministic
for a fixed (spec, seed, script); timing is reported in sim seconds.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import sys
from pathlib import Path

from .mission import full_mode, partial_mode, tag_search_mode, visual_inspection_mode
from .runtime import Simulation, run_headless, run_scenario
from .scan import SensorNoiseModel
from .telemetry import ServeConfig, serve
from .warehouse import Face, SlotAddress, load_spec_file, validate_spec

DEFAULT_SPEC = Path(__file__).parent / "data" / "warehouse.json"
DEFAULT_SCRIPT = Path(__file__).parent / "data" / "visual_inspection_pilot.ndjson"


def _parse_target(text: str) -> SlotAddress:
    rack, side, section, tier = text.split(",")
    return SlotAddress(int(rack), side, int(section), int(tier))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="warevr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a warehouse spec file")
    p.add_argument("spec", type=Path)

    p = sub.add_parser("mission", help="run one mission headless")
    p.add_argument("spec", type=Path)
    p.add_argument("--mode", required=True, choices=["full", "partial", "tagsearch", "inspect"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--tag", default=None, help="barcode for tagsearch")
    p.add_argument("--target", default=None, help="rack,side,section,tier for inspect")
    p.add_argument("--rack", type=int, default=0, help="rack index for partial")
    p.add_argument("--side", default="front", help="face side for partial")
    p.add_argument("--fill", type=int, default=None, help="occupied slot count")
    p.add_argument("--noiseless", action="store_true", help="perfect sensors")
    p.add_argument("--time-limit", type=float, default=3600.0)

    p = sub.add_parser("serve", help="run the live telemetry endpoint")
    p.add_argument("spec", type=Path)
    p.add_argument("--listen", default="127.0.0.1:8787")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fill", type=int, default=None)
    p.add_argument("--time-scale", type=float, default=1.0,
                   help="sim seconds per wall second")

    p = sub.add_parser("scenario", help="replay a scripted operator run")
    p.add_argument("kind", choices=["visual-inspection"])
    p.add_argument("spec", type=Path)
    p.add_argument("--targets", type=int, default=5)
    p.add_argument("--script", type=Path, default=DEFAULT_SCRIPT)
    p.add_argument("--record", action="store_true",
                   help="regenerate the script with the built-in pilot")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("WAREVR_LOG", "WARNING").upper())
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    if args.command == "validate":
        spec, _ = load_spec_file(args.spec)
        report = validate_spec(spec)
        if report.ok:
            print("spec ok")
            return 0
        for v in report.violations:
            print(f"{v.code}: {v.message}", file=sys.stderr)
        return 1

    if args.command == "mission":
        spec, extras = load_spec_file(args.spec)
        if args.mode == "full":
            mode = full_mode()
        elif args.mode == "partial":
            mode = partial_mode((Face(args.rack, args.side),))
        elif args.mode == "tagsearch":
            if not args.tag:
                print("error: --tag required for tagsearch", file=sys.stderr)
                return 1
            mode = tag_search_mode(args.tag)
        else:
            if not args.target:
                print("error: --target required for inspect", file=sys.stderr)
                return 1
            mode = visual_inspection_mode(_parse_target(args.target))
        noise = SensorNoiseModel(1.0, 0.0, 1.0) if args.noiseless else None
        summary = run_headless(
            spec, extras, mode, args.seed, out_dir=args.out,
            fill_count=args.fill, noise=noise, time_limit_s=args.time_limit,
        )
        print(json.dumps(summary, sort_keys=True))
        return 0 if summary["phase"] == "done" else 2

    if args.command == "serve":
        host, _, port = args.listen.rpartition(":")
        spec, extras = load_spec_file(args.spec)
        sim = Simulation(spec, extras, seed=args.seed, fill_count=args.fill,
                         spec_name=args.spec.stem)
        server = serve(sim, ServeConfig(host=host or "127.0.0.1", port=int(port),
                                        time_scale=args.time_scale))

        async def announce_and_run():
            # scripts need the resolved port when asked to bind port 0
            task = asyncio.ensure_future(server.run())
            while server.bound_port is None:
                if task.done():
                    task.result()
                await asyncio.sleep(0.01)
            print(f"listening on {server.config.host}:{server.bound_port}", flush=True)
            await task

        asyncio.run(announce_and_run())
        return 0

    spec, extras = load_spec_file(args.spec)
    script = None
    if not args.record and args.script and Path(args.script).exists():
        script = [json.loads(line) for line in Path(args.script).read_text().splitlines() if line.strip()]
    report, recorded = run_scenario(
        spec, extras, seed=args.seed, targets_n=args.targets,
        script=script, record=args.record,
    )
    if args.record:
        out_script = Path(args.script)
        out_script.write_text("".join(json.dumps(e, sort_keys=True) + "\n" for e in recorded))
        print(f"recorded {len(recorded)} steps to {out_script}", file=sys.stderr)
    doc = report.to_dict()
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "scenario.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(json.dumps(doc, sort_keys=True))
    return 0 if report.completed else 2


if __name__ == "__main__":
    sys.exit(main())
