"""Command-line front end.

Exit codes: 0 ok, 2 invalid input, 3 simulation fault.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import lumped, report
from .errors import SimulationError, SimulationFault, ValidationError
from .results import FORMATS, load_results, persist_results
from .scenario import calibrate, load_scenario, run_case


def _overrides(args):
    over = {}
    if getattr(args, "gas_substep", None) is not None:
        over.setdefault("controller", {})["gas_substep_s"] = args.gas_substep
    if getattr(args, "curtail_mode", None):
        over.setdefault("controller", {})["curtail_mode"] = args.curtail_mode
    if getattr(args, "no_detail", False):
        over.setdefault("controller", {})["record_detail"] = False
    return over


def cmd_run(args):
    sc = load_scenario(args.scenario, _overrides(args))
    try:
        res = run_case(sc, args.case, eta_p2g=args.eta)
    except SimulationFault as exc:
        if exc.partial is not None and args.out:
            persist_results(exc.partial, args.out, args.format)
            print(f"partial trace written to {args.out}", file=sys.stderr)
        raise
    persist_results(res, args.out, args.format)
    s = report.summarize_seasonal(res)
    print(format_summary(s))
    return 0


def cmd_summarize(args):
    s = report.summarize_seasonal(load_results(args.trace))
    if args.json:
        print(json.dumps({"case": s.case, "config_hash": s.config_hash,
                          "non_heating_months": list(s.non_heating_months),
                          "cells": _str_keys(s.cells)}, indent=1))
    else:
        print(format_summary(s))
    return 0


def cmd_compare(args):
    ref = report.summarize_seasonal(load_results(args.ref))
    var = report.summarize_seasonal(load_results(args.variant))
    deltas = report.compare_cases(ref, var)
    if not args.all:
        deltas = [d for d in deltas if d.headline]
    print(f"{'season':<12} {'metric':<34} {'reference':>10} {'variant':>10} {'delta':>9} {'ratio':>7}")
    for d in deltas:
        delta = f"{100 * d.delta:+8.1f}%" if d.defined else "  undef."
        ratio = f"{d.ratio:7.3f}" if d.defined else "  undef"
        print(f"{d.season:<12} {d.metric:<34} {d.reference:10.3f} {d.variant:10.3f} {delta} {ratio}")
    return 0


def cmd_plotdata(args):
    window = (args.start, args.end) if args.start or args.end else None
    if window is not None and None in window:
        raise ValidationError("--from and --to must be given together")
    df = report.emit_plotdata(load_results(args.trace), args.view, window)
    df.to_csv(args.out or sys.stdout, index=False, lineterminator="\n")
    return 0


def cmd_calibrate(args):
    eta = calibrate(load_scenario(args.scenario, _overrides(args)))
    print(f"{eta:.10f}")
    return 0


def format_summary(s):
    lines = [f"case: {s.case}   config: {s.config_hash[:16]}   (GWh, layout v{report.LAYOUT_VERSION})"]
    for group, metrics in (("plants", report.PLANT_METRICS), ("transformers", report.TR_METRICS),
                           ("gas", report.GAS_METRICS)):
        ents = list(s.cells["year"][group])
        head = "".join(f"{str(e)[:9]:>10}" for e in ents)
        lines.append("")
        lines.append(f"[{group}]")
        for season in report.SEASONS:
            lines.append(f"  {season:<22}{head}")
            for m in metrics:
                row = "".join(f"{s.cells[season][group][e][m]:10.3f}" for e in ents)
                lines.append(f"    {m:<20}{row}")
    return "\n".join(lines)


def _str_keys(d):
    return {str(k): _str_keys(v) if isinstance(v, dict) else v for k, v in d.items()}


def build_parser():
    p = argparse.ArgumentParser(prog="p2gsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one case and write its trace")
    r.add_argument("--scenario", required=True)
    r.add_argument("--case", choices=lumped.CASES, default=lumped.REFERENCE)
    r.add_argument("--out", required=True)
    r.add_argument("--format", choices=FORMATS, default="csv")
    r.add_argument("--eta", type=float, help="fixed P2G efficiency for lpp2g (default: calibrate)")
    r.add_argument("--gas-substep", type=float, help="gas integration sub-step in seconds")
    r.add_argument("--curtail-mode", choices=("partial", "block"))
    r.add_argument("--no-detail", action="store_true", help="skip per-bus/node/pipe tables")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("summarize", help="seasonal energy tables of a trace")
    s.add_argument("--trace", required=True)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_summarize)

    c = sub.add_parser("compare", help="deltas of a variant trace against a reference trace")
    c.add_argument("--ref", required=True)
    c.add_argument("--variant", required=True)
    c.add_argument("--all", action="store_true", help="every metric, not just the headline four")
    c.set_defaults(func=cmd_compare)

    d = sub.add_parser("plotdata", help="plot-ready series for one view")
    d.add_argument("--trace", required=True)
    d.add_argument("--view", required=True, help="|".join(report.VIEWS))
    d.add_argument("--from", dest="start")
    d.add_argument("--to", dest="end")
    d.add_argument("--out")
    d.set_defaults(func=cmd_plotdata)

    k = sub.add_parser("calibrate", help="yearly-average P2G efficiency from a Reference run")
    k.add_argument("--scenario", required=True)
    k.add_argument("--gas-substep", type=float)
    k.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"simulation fault: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
