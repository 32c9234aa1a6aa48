"""Command line entry point.

    balsa run --scenario obstacles.yaml --controller rob --seed 3 --out runs/
    balsa sweep --scenario obstacles.yaml --controllers pd,balsa --learners none,gp --seeds 0-4
    balsa summarize runs/

``--scenario`` takes a YAML file or the name of a built-in preset.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
from pathlib import Path

from balsa import presets
from balsa.controller import ControllerKind
from balsa.harness import LEARNERS, Scenario, run, summarize, summary_from_telemetry

log = logging.getLogger("balsa")


def load_scenario(arg: str) -> Scenario:
    path = Path(arg)
    if path.exists():
        return Scenario.load(path)
    if arg in presets.PRESETS:
        return presets.get(arg)
    raise SystemExit(f"scenario {arg!r} is neither a file nor a preset ({', '.join(presets.PRESETS)})")


def _seeds(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _overrides(args) -> dict:
    kw = {}
    for key in ("controller", "learner", "seed", "duration"):
        val = getattr(args, key, None)
        if val is not None:
            kw[key] = val
    if getattr(args, "timing", False):
        kw["timing"] = True
    return kw


def _run_one(sc: Scenario, out: Path):
    rec = run(sc)
    path = rec.write(out)
    s = rec.summary()
    log.info("%s: err %.4f (60-120 s: %.4f) min_h %.4f events %d",
             path.name, s["mean_err_0_60"], s["mean_err_60_120"], s["min_h_overall"], len(rec.events))
    return rec


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario).replace(**_overrides(args))
    rec = _run_one(sc, Path(args.out))
    print(summarize([rec]), end="")
    return 0


def cmd_sweep(args) -> int:
    base = load_scenario(args.scenario).replace(**_overrides(args))
    out = Path(args.out)
    records = []
    grid = itertools.product(args.controllers.split(","), args.learners.split(","), _seeds(args.seeds))
    for ctrl, learner, seed in grid:
        if ctrl in ("pd", "qp", "rob") and learner != "none":
            continue  # these kinds ignore the learned model
        records.append(_run_one(base.replace(controller=ctrl, learner=learner, seed=seed), out))
    text = summarize(records, out / "summary.csv")
    print(text, end="")
    return 0


def cmd_summarize(args) -> int:
    d = Path(args.dir)
    files = sorted(p for p in d.glob("*.csv") if p.name != "summary.csv")
    if not files:
        print(f"no telemetry CSV files in {d}", file=sys.stderr)
        return 1
    text = summarize([summary_from_telemetry(p) for p in files], d / "summary.csv")
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="balsa", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", required=True, help="YAML file or preset name")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--duration", type=float)
        sp.add_argument("--out", default="runs")
        sp.add_argument("--timing", action="store_true", help="record step_ms (breaks byte-identical output)")

    r = sub.add_parser("run", help="one closed-loop run")
    common(r)
    r.add_argument("--controller", choices=[k.value for k in ControllerKind])
    r.add_argument("--learner", choices=LEARNERS)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="controller x learner x seed grid")
    common(s)
    s.add_argument("--controllers", default="pd,ad,qp,rob,balsa")
    s.add_argument("--learners", default="none,gp")
    s.add_argument("--seeds", default="0", help="e.g. 0-4 or 1,3,7")
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("summarize", help="summary CSV for a directory of telemetry files")
    m.add_argument("dir")
    m.set_defaults(func=cmd_summarize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
