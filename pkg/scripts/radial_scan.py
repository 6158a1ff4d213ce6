#!/usr/bin/env python3
"""Radial circle sweep on a matrix with eigenvalues at several magnitudes.

Prints the success mass per swept radius and the modal estimate at the peak.
"""

import argparse

import numpy as np

from resolvex.matgen import JordanSpec, generate
from resolvex.paramcurve import radial_search


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--radius", type=float, default=0.7)
    ap.add_argument("--phase", type=float, default=np.pi / 3)
    ap.add_argument("--step", type=float, default=0.05)
    ap.add_argument("--delta", type=float, default=0.01)
    ap.add_argument("--a", type=int, default=12)
    ap.add_argument("--cond", type=float, default=3.0)
    args = ap.parse_args()

    lam = args.radius * np.exp(1j * args.phase)
    gm = generate(JordanSpec(((lam, 1), (0.1, 1)), args.cond, 0, targets=(0,)))
    res = radial_search(gm, args.step, 1.0, args.step, 0.1, args.delta, args.a)
    for r, m in zip(res.radii, res.masses):
        bar = "#" * int(min(m, 2.0) * 30)
        print(f"r={r:5.2f}  mass={m:8.4f}  {bar}")
    print(f"threshold {res.threshold:.4f}; peak at r={res.best_radius}; estimate {res.estimates()} (true {lam:.4f})")


if __name__ == "__main__":
    main()
