"""Command-line interface.

Exit codes: 0 on success, 1 on usage or configuration errors, 2 when a
verification suite reports a violated bound.  Reports are UTF-8 JSON (keys
sorted) or long-format CSV, and always embed the resolved configuration and
the library version.  Timing goes to the one-line summary only, so reruns
with the same configuration produce identical files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from ._parallel import set_threads
from .estimator import (
    FEASIBLE,
    STRICT,
    HypothesisViolated,
    InfeasibleGrid,
    cost_is_degenerate,
    cost_score,
    run_pipeline,
    select_parameters,
    success_masses,
)
from .kreiss import jordan_kreiss_bound, kreiss_circle, kreiss_line
from .matgen import QERE, QEUE, BadSpec, GeneratedMatrix, JordanSpec, generate, input_state, validate_exclusion
from .numkit import matrix_from_json
from .resolvent import build_system, resolvent_state
from .suites import DEFAULT_TRIALS, SUITES, run_suite

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2

# config keys that never reach a report, so output does not depend on them
_UNREPORTED = {"threads", "output", "config", "quiet"}


# flags that must be set, on the command line or in a --config file
_REQUIRED = {
    "gen": ("blocks",),
    "estimate": ("matrix",),
    "verify": ("suite",),
    "kreiss": ("matrix", "delta"),
    "curve": ("family",),
    "sweep": ("blocks",),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage().strip()}")


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class RunConfig:
    """Resolved parameters of one invocation.

    ``params`` holds the command-specific values keyed by their flag
    destinations; the file form is a flat JSON object.
    """

    command: str
    params: dict = field(default_factory=dict)
    output: Optional[str] = None
    seed: int = 0
    threads: Optional[int] = None
    format: str = "json"

    def to_json(self, *, reported: bool = False) -> dict:
        out = {"command": self.command, "seed": self.seed, "format": self.format, **self.params}
        if not reported:
            out["output"] = self.output
            out["threads"] = self.threads
        return out

    @classmethod
    def from_json(cls, obj: dict, allowed: Sequence[str]) -> "RunConfig":
        obj = dict(obj)
        command = obj.pop("command", None)
        if command is None:
            raise UsageError("config needs a 'command' key")
        base = {k: obj.pop(k) for k in ("output", "seed", "threads", "format") if k in obj}
        unknown = sorted(set(obj) - set(allowed))
        if unknown:
            raise UsageError(f"unknown config keys {unknown}; expected a subset of {sorted(allowed)}")
        return cls(command=command, params=obj, **base)


def _dumps(obj: Any) -> str:
    def default(x):
        if isinstance(x, np.generic):
            return x.item()
        if isinstance(x, complex):
            return [x.real, x.imag]
        if isinstance(x, np.ndarray):
            return x.tolist()
        if isinstance(x, tuple):
            return list(x)
        raise TypeError(f"cannot serialize {type(x).__name__}")

    return json.dumps(_clean(obj), sort_keys=True, indent=2, default=default, allow_nan=True) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def _write(text: str, path: Optional[str]) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _report(cfg: RunConfig, body: dict) -> str:
    return _dumps({"version": __version__, "run_config": cfg.to_json(reported=True), **body})


# ---------------------------------------------------------------------------
# argument helpers


def parse_blocks(text: str) -> tuple[tuple[complex, int], ...]:
    """``"[[1,0],1];[[-1,0],2]"`` -> ((1, 1), (-1, 2)): eigenvalue as [re, im] and block size."""
    blocks = []
    for part in filter(None, (p.strip() for p in text.split(";"))):
        try:
            (re_, im_), d = json.loads(part)
            blocks.append((complex(float(re_), float(im_)), int(d)))
        except (ValueError, TypeError) as exc:
            raise UsageError(f"--blocks: cannot parse {part!r}; expected [[re,im],d] items separated by ';'") from exc
    if not blocks:
        raise UsageError("--blocks: at least one block is required")
    return tuple(blocks)


def _floats(text: str, flag: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"{flag}: expected comma-separated numbers, got {text!r}") from exc


def _complexes(text: str, flag: str) -> list[complex]:
    try:
        return [complex(x.strip().replace(" ", "")) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"{flag}: expected comma-separated complex numbers like 1 or 0.5-1j, got {text!r}") from exc


def _load_matrix(path: str) -> GeneratedMatrix:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise UsageError(f"--matrix: cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"--matrix: {path} is not valid JSON") from exc
    if "spec" not in obj:
        raise UsageError("--matrix: expected a file written by 'resolvex gen' (keys spec, A, T, J, ...)")
    return GeneratedMatrix.from_json(obj)


def _load_plain_matrix(path: str) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if "spec" in obj:
        return GeneratedMatrix.from_json(obj).A
    if "dim" in obj and "entries" in obj:
        return matrix_from_json(obj)
    raise UsageError("--matrix: expected a generated matrix or {\"dim\": n, \"entries\": [[re, im], ...]}")


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args, cfg: RunConfig) -> tuple[int, str]:
    targets = None if args.targets is None else tuple(int(k) for k in _floats(args.targets, "--targets"))
    try:
        spec = JordanSpec(parse_blocks(args.blocks), args.cond, args.seed, targets, not args.no_scramble)
        gm = generate(spec)
    except BadSpec as exc:
        raise UsageError(f"--blocks/--cond: {exc}") from exc
    _write(_report(cfg, gm.to_json()), cfg.output)
    return EXIT_OK, f"gen: n={gm.dim} kappa_bar<={gm.kappa_bar_witness:.4g} kappa_S={gm.kappa_S:.4g} alpha={gm.alpha:g}"


def _config_for(args, problem: str, gm: GeneratedMatrix):
    try:
        return select_parameters(problem, args.eps_eig, args.eps_st, max(gm.kappa_S, 1.0), gm.alpha,
                                 args.mode, delta=args.delta, a=args.a)
    except (HypothesisViolated, InfeasibleGrid) as exc:
        raise UsageError(f"--delta/--a: {exc}") from exc


def cmd_estimate(args, cfg: RunConfig) -> tuple[int, str]:
    problem = QEUE if args.problem == "qeue" else QERE
    gm = _load_matrix(args.matrix)
    if not validate_exclusion(gm.spec.eigenvalues, problem, args.eps_eig):
        raise UsageError(f"--matrix: spectrum enters the {problem} exclusion zone for eps_eig = {args.eps_eig:g}")
    ecfg = _config_for(args, problem, gm)
    if not ecfg.direct_feasible:
        raise UsageError(f"--a: readout enumerates 2^{ecfg.a} outcomes; pass a smaller --a or a larger --delta")
    k = gm.eigvec_columns.shape[1]
    betas = _complexes(args.betas, "--betas") if args.betas else [1.0] * k
    if len(betas) != k:
        raise UsageError(f"--betas: expected {k} coefficients, one per target eigenvector")
    report = run_pipeline(gm, ecfg, betas, args.samples, args.seed, perturb=args.perturb,
                          check_hypotheses=False)
    _write(_report(cfg, report.to_json()), cfg.output)
    modal = ", ".join(
        f"l{l}: {m['value'].real:+.4f}{m['value'].imag:+.4f}i" for l, m in sorted(report.modal.items())
    )
    return EXIT_OK, (f"estimate {args.problem}: a={ecfg.a} delta={ecfg.delta:g} "
                     f"failure={report.empirical_failure:.4f} modal [{modal}]")


def cmd_verify(args, cfg: RunConfig) -> tuple[int, str]:
    names = sorted(SUITES) if args.suite == "all" else [args.suite]
    results = [run_suite(n, args.trials, args.seed) for n in names]
    if cfg.format == "csv":
        text = "".join(r.to_csv() if i == 0 else r.to_csv().split("\n", 1)[1] for i, r in enumerate(results))
    else:
        body = {
            "suites": {
                r.name: {"passed": r.passed, "trials": r.trials, "checks": len(r.rows),
                         "violations": [v.as_dict() for v in r.violations],
                         "rows": [row.as_dict() for row in r.rows]}
                for r in results
            }
        }
        text = _report(cfg, body)
    _write(text, cfg.output)
    ok = all(r.passed for r in results)
    return (EXIT_OK if ok else EXIT_VERIFY), "; ".join(r.summary() for r in results)


def cmd_kreiss(args, cfg: RunConfig) -> tuple[int, str]:
    A = _load_plain_matrix(args.matrix)
    C = -1j * A if args.contour == "line" and args.rotate else A
    if args.contour == "circle":
        est = kreiss_circle(C, args.delta, args.samples)
    else:
        est = kreiss_line(C, args.delta, args.y_range, args.samples)
    body = est.to_json()
    if args.kappa_bar is not None and args.d is not None and 0 < args.delta < 1:
        body["analytic_bound"] = jordan_kreiss_bound(args.kappa_bar, args.d, args.delta)
    _write(_report(cfg, body), cfg.output)
    return EXIT_OK, f"kreiss {args.contour}: delta={args.delta:g} value={est.value:.6g}"


def cmd_curve(args, cfg: RunConfig) -> tuple[int, str]:
    from .paramcurve import check_conditions, generalized_estimate, get_family

    params = _floats(args.params, "--params") if args.params else []
    try:
        fam = get_family(args.family, *params)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"--family/--params: {exc}") from exc
    deltas = sorted(set(_floats(args.deltas, "--deltas")), reverse=True)
    epsilons = sorted(set(_floats(args.epsilons, "--epsilons")))
    if args.action == "check":
        rep = check_conditions(fam, deltas, epsilons, args.probes)
        _write(_report(cfg, {"conformance": rep.to_json()}), cfg.output)
        return (EXIT_OK if rep.passed else EXIT_VERIFY), (f"curve check {fam.name}: cond1={rep.cond1_max_rel_deviation:.3g} "
                         f"R2={rep.cond2_r_squared:.3f} p={rep.cond3_fitted_exponent:.3f} passed={rep.passed}")
    if args.matrix is None or args.delta is None or args.a is None:
        raise UsageError("curve estimate needs --matrix, --delta and --a")
    gm = _load_matrix(args.matrix)
    deltas = sorted(set(deltas) | {args.delta}, reverse=True)
    rep = check_conditions(fam, deltas, epsilons, args.probes)
    problem = QERE if fam.name == "segment" else QEUE
    ecfg = select_parameters(problem, args.eps_eig, args.eps_st, max(gm.kappa_S, 1.0), gm.alpha, FEASIBLE,
                             delta=args.delta, a=args.a)
    from .paramcurve import ConformanceRequired

    try:
        report = generalized_estimate(fam, gm, ecfg, rep, None, args.samples, args.seed)
    except ConformanceRequired as exc:
        _write(_report(cfg, {"conformance": rep.to_json(), "error": str(exc)}), cfg.output)
        return EXIT_VERIFY, f"curve estimate {fam.name}: conformance failed"
    _write(_report(cfg, {"conformance": rep.to_json(), "estimate": report.to_json()}), cfg.output)
    return EXIT_OK, f"curve estimate {fam.name}: failure={report.empirical_failure:.4f}"


def cmd_sweep(args, cfg: RunConfig) -> tuple[int, str]:
    problem = QEUE if args.problem == "qeue" else QERE
    blocks = parse_blocks(args.blocks)
    rows = []
    trial = 0
    for cond in _floats(args.conds, "--conds"):
        gm = generate(JordanSpec(blocks, cond, args.seed))
        k = gm.eigvec_columns.shape[1]
        psi, _ = input_state(gm, [1.0] * k)
        for eps in _floats(args.eps_eigs, "--eps-eigs"):
            for delta in _floats(args.deltas, "--deltas"):
                if delta > eps / 4.0:
                    continue
                ecfg = select_parameters(problem, eps, 0.5, max(gm.kappa_S, 1.0), gm.alpha, FEASIBLE, delta=delta)
                rs = resolvent_state(build_system(gm, ecfg.discretized(), problem), psi, materialize=False)
                rep = success_masses(rs, ecfg, check_hypotheses=False, parts=False)
                lb = rep.lemma_bounds
                base = {"trial": trial, "cond": cond, "kappa_S": gm.kappa_S, "eps_eig": eps, "delta": delta,
                        "a": ecfg.a}
                for c in rep.components:
                    for q, m, b in (
                        ("a_l", c.a, lb["a_max"]),
                        ("ratio_deviation", c.ratio_deviation, lb["ratio_dev_max"]),
                        ("b_l", c.b, lb["b_max"]),
                        ("window_gap", abs(c.a**2 - c.window_integral), lb["disc_max"]),
                    ):
                        rows.append({**base, "l": c.index, "quantity": q, "measured": repr(float(m)),
                                     "bound": repr(float(b)), "slack": repr(float(b - m))})
                trial += 1
    if cfg.format == "csv":
        buf = io.StringIO()
        cols = ["trial", "cond", "kappa_S", "eps_eig", "delta", "a", "l", "quantity", "measured", "bound", "slack"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        text = buf.getvalue()
    else:
        text = _report(cfg, {"rows": rows})
    _write(text, cfg.output)
    return EXIT_OK, f"sweep {args.problem}: {trial} cases, {len(rows)} rows"


def cmd_cost(args, cfg: RunConfig) -> tuple[int, str]:
    if args.kreiss is None and args.jordan is None:
        raise UsageError("cost needs --kreiss K or --jordan kappa_bar,d,delta")
    if args.kreiss is not None:
        K, source = args.kreiss, "given"
    else:
        vals = _floats(args.jordan, "--jordan")
        if len(vals) != 3:
            raise UsageError("--jordan: expected kappa_bar,d,delta")
        K, source = jordan_kreiss_bound(vals[0], int(vals[1]), vals[2]), "jordan_bound"
    if not 0 < args.eps_st < 1:
        raise UsageError("--eps-st: must lie in (0, 1)")
    problem = QEUE if args.problem == "qeue" else QERE
    ecfg = select_parameters(problem, args.eps_eig, args.eps_st, args.kappa_s, args.alpha, FEASIBLE)
    score = cost_score(ecfg, args.alpha, K, args.kappa_s)
    body = {"score": score, "kreiss_value": K, "kreiss_source": source, "degenerate": cost_is_degenerate(ecfg),
            "note": "scaling product alpha kappa_S^4 K / (eps_eig eps_st^2) ln(1/eps_st), no hidden constant"}
    _write(_report(cfg, body), cfg.output)
    return EXIT_OK, f"cost: score={score:.6g} K={K:.6g}"


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, fmt: Sequence[str] = ("json",)) -> None:
    p.add_argument("-o", "--output", default=None, help="report path (stdout when omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="worker threads (RESOLVEX_THREADS overrides)")
    p.add_argument("--format", choices=list(fmt), default=fmt[0])
    p.add_argument("--config", default=None, help="JSON run configuration; flags given explicitly win")


def _add_estimation(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eps-eig", type=float, default=0.1)
    p.add_argument("--eps-st", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--a", type=int, default=None)
    p.add_argument("--samples", type=int, default=1000)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="resolvex", description="Resolvent-based eigenvalue estimation laboratory.")
    parser.add_argument("--version", action="version", version=f"resolvex {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a matrix with known Jordan structure")
    p.add_argument("--blocks", help='e.g. "[[1,0],1];[[-1,0],2]" (required)')
    p.add_argument("--cond", type=float, default=1.0, help="condition number of the similarity T")
    p.add_argument("--targets", default=None, help="comma-separated block indices exposed as eigenvectors")
    p.add_argument("--no-scramble", action="store_true", help="use a diagonal T")
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("estimate", help="run the QEUE or QERE pipeline")
    p.add_argument("problem", choices=["qeue", "qere"])
    p.add_argument("--matrix", help="generated matrix JSON (required)")
    _add_estimation(p)
    p.add_argument("--mode", choices=[FEASIBLE, STRICT], default=FEASIBLE)
    p.add_argument("--betas", default=None, help="input-state coefficients, comma-separated")
    p.add_argument("--perturb", action="store_true", help="move the state by eps_st/2 before readout")
    _add_common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("verify", help="run randomized verification suites")
    p.add_argument("--suite", choices=sorted(SUITES) + ["all"], help="suite name (required)")
    p.add_argument("--trials", type=int, default=None,
                   help="trials per suite (defaults: " + ", ".join(f"{k}={v}" for k, v in DEFAULT_TRIALS.items()) + ")")
    _add_common(p, ("csv", "json"))
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("kreiss", help="sampled restricted Kreiss constant")
    p.add_argument("--matrix", help="matrix JSON (required)")
    p.add_argument("--delta", type=float, help="contour shift (required)")
    p.add_argument("--contour", choices=["circle", "line"], default="circle")
    p.add_argument("--rotate", action="store_true", help="line contour on -iA instead of A")
    p.add_argument("--samples", type=int, default=4096)
    p.add_argument("--y-range", type=float, default=None)
    p.add_argument("--kappa-bar", type=float, default=None)
    p.add_argument("--d", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_kreiss)

    p = sub.add_parser("curve", help="curve-family conformance and estimation")
    p.add_argument("action", choices=["check", "estimate"])
    p.add_argument("--family", help="circle, segment, ellipse or figure_eight (required)")
    p.add_argument("--params", default=None, help="family parameters, e.g. 1,0.6 for an ellipse")
    p.add_argument("--deltas", default="0.01,0.005,0.002,0.001")
    p.add_argument("--epsilons", default="0.05,0.1,0.25,0.5")
    p.add_argument("--probes", type=int, default=16)
    p.add_argument("--matrix", default=None)
    _add_estimation(p)
    _add_common(p)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("sweep", help="success masses over a (cond, eps_eig, delta) grid")
    p.add_argument("problem", choices=["qeue", "qere"])
    p.add_argument("--blocks", help="Jordan blocks as for gen (required)")
    p.add_argument("--conds", default="1,10")
    p.add_argument("--eps-eigs", default="0.3,0.1")
    p.add_argument("--deltas", default="0.025,0.01,0.0025")
    _add_common(p, ("csv", "json"))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("cost", help="query-cost scaling score")
    p.add_argument("problem", choices=["qeue", "qere"], nargs="?", default="qeue")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--kappa-s", type=float, default=1.0)
    p.add_argument("--eps-eig", type=float, default=0.1)
    p.add_argument("--eps-st", type=float, default=0.1)
    p.add_argument("--kreiss", type=float, default=None)
    p.add_argument("--jordan", default=None, help="kappa_bar,d,delta for the Jordan-form bound")
    _add_common(p)
    p.set_defaults(func=cmd_cost)
    return parser


def _resolve(parser: argparse.ArgumentParser, argv: Sequence[str]) -> tuple[argparse.Namespace, RunConfig]:
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_usage().strip() + "\nresolvex: a subcommand is required")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest for a in sub._actions if a.dest not in ("help",)}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"--config: cannot load {args.config}: {exc}") from exc
        rc = RunConfig.from_json(loaded, dests - {"output", "seed", "threads", "format", "config"})
        if rc.command != args.command:
            raise UsageError(f"--config: file is for '{rc.command}', not '{args.command}'")
        given = {tok.split("=", 1)[0] for tok in argv if tok.startswith("-")}
        explicit = {a.dest for a in sub._actions if given & set(a.option_strings)}
        for k, v in {**rc.params, "seed": rc.seed, "format": rc.format}.items():
            if k not in explicit:
                setattr(args, k, v)
        if rc.output is not None and "output" not in explicit:
            args.output = rc.output
        if rc.threads is not None and "threads" not in explicit:
            args.threads = rc.threads
    missing = [f"--{k.replace('_', '-')}" for k in _REQUIRED.get(args.command, ()) if getattr(args, k) is None]
    if missing:
        raise UsageError(f"resolvex {args.command}: missing required {', '.join(missing)} (flag or config key)\n"
                         + sub.format_usage().strip())
    params = {k: v for k, v in vars(args).items()
              if k in dests and k not in _UNREPORTED | {"seed", "format", "func", "command"}}
    cfg = RunConfig(args.command, params, args.output, args.seed, args.threads, args.format)
    return args, cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args, cfg = _resolve(parser, argv)
        # the environment variable overrides the thread hint
        set_threads(None if os.environ.get("RESOLVEX_THREADS") else cfg.threads)
        start = time.perf_counter()
        code, summary = args.func(args, cfg)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, KeyError, BadSpec) as exc:
        print(f"resolvex: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        set_threads(None)
    elapsed = time.perf_counter() - start
    print(f"{summary} [{elapsed:.2f}s]", file=sys.stderr if cfg.output in (None, "-") else sys.stdout)
    return code


if __name__ == "__main__":
    sys.exit(main())
