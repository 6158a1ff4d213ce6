#!/usr/bin/env python3
"""Exact failure mass of a QEUE run as the shift shrinks, next to the leakage bound.

Prints CSV: delta, a, exact failure mass, max b_l^2 / |phi_l|^2, 2 delta/(pi eps) + 2 eps_disc.
"""

import argparse
import csv
import sys

import numpy as np

from resolvex.estimator import FEASIBLE, readout, select_parameters, success_masses
from resolvex.matgen import QEUE, JordanSpec, generate, input_state
from resolvex.resolvent import build_system, resolvent_state


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps-eig", type=float, default=0.2)
    ap.add_argument("--cond", type=float, default=4.0)
    ap.add_argument("--fractions", default="4,8,16,32,64", help="delta = eps_eig / k for each k")
    ap.add_argument("--max-a", type=int, default=22)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    spec = JordanSpec(((1, 1), (np.exp(2.2j), 1), (0.3 + 0.2j, 2)), args.cond, args.seed, targets=(0, 1))
    gm = generate(spec)
    psi, _ = input_state(gm, [1, 1])
    out = csv.writer(sys.stdout)
    out.writerow(["delta", "a", "exact_failure", "max_leak", "leak_bound"])
    for k in (float(x) for x in args.fractions.split(",")):
        delta = args.eps_eig / k
        cfg = select_parameters(QEUE, args.eps_eig, 0.5, gm.kappa_S, gm.alpha, FEASIBLE, delta=delta)
        if cfg.a > args.max_a:
            print(f"# skipping delta={delta:g}: needs a={cfg.a}", file=sys.stderr)
            continue
        rs = resolvent_state(build_system(gm, cfg.discretized(), QEUE), psi, materialize=False)
        rep = success_masses(rs, cfg, parts=False)
        leak = max(c.b**2 / c.full_norm_sq for c in rep.components)
        fail = readout(rs, cfg, 0).exact_failure
        out.writerow([f"{delta:.6g}", cfg.a, f"{fail:.6e}", f"{leak:.6e}", f"{rep.lemma_bounds['b_sq_bound']:.6e}"])


if __name__ == "__main__":
    main()
