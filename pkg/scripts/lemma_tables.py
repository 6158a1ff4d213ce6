#!/usr/bin/env python3
"""Run the randomized verification suites and write one CSV per suite.

Example: python scripts/lemma_tables.py --out results/ --trials 20
"""

import argparse
import pathlib

from resolvex.suites import SUITES, run_suite


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=pathlib.Path, default=pathlib.Path("results"))
    ap.add_argument("--trials", type=int, default=None, help="override the per-suite default")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--suites", default=",".join(SUITES))
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    for name in args.suites.split(","):
        res = run_suite(name, args.trials, args.seed)
        (args.out / f"{name}.csv").write_text(res.to_csv(), encoding="utf-8")
        print(res.summary())


if __name__ == "__main__":
    main()
