"""Regenerate the bundled synthetic example under data/example (deterministic)."""
import argparse
from pathlib import Path

from p2gsim import synthetic

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=Path(__file__).resolve().parents[1] / "data" / "example", type=Path)
    args = ap.parse_args()
    synthetic.write_example(args.out)
    print(f"wrote example data to {args.out}")
