"""Tabulate the critical exponents over a range of ellipticity ratios.

    python3 scripts/exponent_table.py --ratios 1 1.5 2 4 8 -o exponents.csv
"""
import argparse
import time

from slitfb.elliptic import EllipticityPair
from slitfb.exponents import ExponentPair, write_exponent_table


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ratios", type=float, nargs="+", default=[1.0, 1.05, 1.1, 1.2, 1.5, 2.0, 4.0, 8.0])
    ap.add_argument("--lambda", dest="lam", type=float, default=1.0)
    ap.add_argument("--tol", type=float, default=1e-10)
    ap.add_argument("-o", "--output", default="exponents.csv")
    args = ap.parse_args()

    pairs = []
    for r in args.ratios:
        t0 = time.perf_counter()
        pair = ExponentPair.compute(EllipticityPair(args.lam, args.lam * r), tol=args.tol)
        row = pair.as_row()
        print(f"Lambda/lambda={r:<6g} beta1={row['beta1']:.10f} beta2={row['beta2']:.10f} "
              f"({time.perf_counter() - t0:.1f} s)")
        pairs.append(pair)
    print("wrote", write_exponent_table(pairs, args.output))


if __name__ == "__main__":
    main()
