#!/usr/bin/env python3
"""Print the bottom of the Dirichlet spectrum with series bookkeeping.

    python scripts/spectrum_table.py --cutoff 5000
"""
import argparse

from gasket_szego import decimation


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--cutoff", type=float, default=5000.0)
    args = parser.parse_args()

    table = decimation.enumerate_spectrum(args.cutoff)
    print("  value              series birth mult branches")
    for rec in table.records:
        print(
            f"  {rec.value:<18.12g} {rec.series:<6d} {rec.birth:<5d} "
            f"{rec.multiplicity:<4d} {''.join(rec.branches) or '(all contracting)'}"
        )
    print(f"counting function d_Lambda = {table.d_lambda}")


if __name__ == "__main__":
    main()
