"""Command-line entry points: serve, replay, eval, simulate."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .config import load_config
from .evaluation import read_run_log, run_study
from .session import replay_log, snapshot
from .simulate import load_study_spec, run_headless, scenarios_for


def _add_config_arg(p):
    p.add_argument("--config", default=None, help="JSON config file (or env CARMGUIDE_CONFIG)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carmguide",
        description="Simulator and guidance engine for C-arm repositioning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the WebSocket session service")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--record", default=None, help="record the session event stream here")
    serve.add_argument("--frontend", default=None, help="static UI directory to serve")
    _add_config_arg(serve)

    replay = sub.add_parser("replay", help="replay a recorded session log")
    replay.add_argument("--log", required=True)
    replay.add_argument("--report", default=None, help="CSV of per-view X-ray counts")
    _add_config_arg(replay)

    evalp = sub.add_parser("eval", help="evaluate a run log against a scenario")
    evalp.add_argument("--log", required=True)
    evalp.add_argument("--scenario", required=True)
    evalp.add_argument("--out", required=True, help="per-view CSV; JSON summary lands beside it")
    _add_config_arg(evalp)

    sim = sub.add_parser("simulate", help="run a scripted study headlessly")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--headless", action="store_true", default=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out-dir", default="simulate_out")
    _add_config_arg(sim)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = load_config(args.config)

    if args.command == "serve":
        import uvicorn

        from .service import create_app

        app = create_app(config, record_path=args.record, frontend_dir=args.frontend)
        uvicorn.run(app, host=args.host, port=args.port)
        return 0

    if args.command == "replay":
        state = replay_log(args.log, config)
        snap = snapshot(state)
        if args.report:
            with open(args.report, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["view", "xray_count"])
                for view, count in snap["xray_counts"].items():
                    w.writerow([view, count])
        slim = {k: v for k, v in snap.items() if k not in ("live_cloud", "shown_cloud")}
        print(json.dumps(slim, sort_keys=True))
        return 0

    if args.command == "eval":
        spec = load_study_spec(args.scenario)
        log = read_run_log(args.log)
        report = run_study(
            scenarios_for(spec, config),
            log,
            exclude_runs=spec.exclude_runs,
            expected_xrays_per_view=spec.expected_xrays_per_view,
        )
        out = Path(args.out)
        report.write_csv(out)
        report.write_json(out.with_suffix(".json"))
        print(json.dumps(report.summary_dict(), sort_keys=True))
        return 0

    if args.command == "simulate":
        paths = run_headless(args.scenario, config, args.seed, args.out_dir)
        print(json.dumps(paths, sort_keys=True))
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
