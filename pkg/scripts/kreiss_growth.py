#!/usr/bin/env python3
"""Sampled circle Kreiss constant of a Jordan block against the (1/delta)^(d-1) bound.

Prints CSV: d, delta, sampled K, bound, ratio.
"""

import argparse
import csv
import sys

from resolvex.kreiss import jordan_kreiss_bound, kreiss_circle
from resolvex.matgen import jordan_block


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dims", default="1,2,3,4")
    ap.add_argument("--deltas", default="0.5,0.2,0.1,0.05,0.02")
    ap.add_argument("--lam", type=complex, default=0.9j, help="eigenvalue inside the unit disc")
    args = ap.parse_args()

    out = csv.writer(sys.stdout)
    out.writerow(["d", "delta", "sampled", "bound", "ratio"])
    for d in (int(x) for x in args.dims.split(",")):
        for delta in (float(x) for x in args.deltas.split(",")):
            K = kreiss_circle(jordan_block(args.lam, d), delta).value
            bound = jordan_kreiss_bound(1.0, d, delta)
            out.writerow([d, delta, f"{K:.6g}", f"{bound:.6g}", f"{K / bound:.4f}"])


if __name__ == "__main__":
    main()
