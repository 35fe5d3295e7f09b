"""Run all four cases on one scenario, write traces, and print seasonal deltas.

    python scripts/run_comparison.py --scenario four_weeks.json --out runs/
"""
import argparse
import time
from pathlib import Path

from p2gsim import lumped, report
from p2gsim.cli import format_summary
from p2gsim.results import persist_results
from p2gsim.scenario import calibrate, load_scenario, run_case


def main():
    ap = argparse.ArgumentParser(description="all-case comparison")
    ap.add_argument("--scenario", default="four_weeks.json")
    ap.add_argument("--out", type=Path, default=Path("runs"))
    ap.add_argument("--all-metrics", action="store_true")
    args = ap.parse_args()

    sc = load_scenario(args.scenario)
    summaries = {}
    t0 = time.perf_counter()
    ref = run_case(sc, lumped.REFERENCE)
    eta = calibrate(sc, ref)
    print(f"calibrated P2G efficiency: {eta:.4f}")
    for case in lumped.CASES:
        res = ref if case == lumped.REFERENCE else run_case(sc, case, eta_p2g=eta)
        persist_results(res, args.out / case)
        summaries[case] = report.summarize_seasonal(res)
        print(format_summary(summaries[case]), end="\n\n")
    print(f"simulated {len(lumped.CASES)} cases in {time.perf_counter() - t0:.1f} s\n")

    for case in (lumped.LPEN, lumped.LPGN, lumped.LPP2G):
        deltas = report.compare_cases(summaries[lumped.REFERENCE], summaries[case])
        df = report.deltas_frame(d for d in deltas if args.all_metrics or d.headline)
        print(f"== {case} vs reference")
        print(df[["season", "metric", "reference", "variant", "delta", "ratio"]]
              .to_string(index=False, float_format=lambda v: f"{v:.4f}"), end="\n\n")


if __name__ == "__main__":
    main()
