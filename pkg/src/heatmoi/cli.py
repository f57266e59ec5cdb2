"""Command-line driver.

Exit status: 0 when every check passes, 1 on a failed check, 2 on a
configuration or usage error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .latex import emit, load_golden, term_diff
from .recursion import local_invariant
from .suites import SUITES, fit_heat_trace, run_suite
from .torus import write_trace_csv

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _even_k(text: str) -> int:
    k = int(text)
    if k < 0 or k % 2:
        raise argparse.ArgumentTypeError(f"k must be a non-negative even integer, got {k}")
    return k


def _dimension(text: str):
    if text == "d":
        return None
    d = int(text)
    if d < 2:
        raise argparse.ArgumentTypeError("d must be an integer >= 2 or the symbol 'd'")
    return d


def _write(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text + "\n")
    else:
        out.write_text(text + "\n")


def cmd_emit(args) -> int:
    _write(emit(local_invariant(args.k), d=args.d), args.out)
    return EXIT_OK


def cmd_count(args) -> int:
    t0 = time.perf_counter()
    n = len(local_invariant(args.k))
    elapsed = time.perf_counter() - t0
    print(f"k={args.k} terms={n} seconds={elapsed:.2f}")
    if args.expect is None or n == args.expect:
        return EXIT_OK
    print(f"count mismatch: expected {args.expect}, got {n}", file=sys.stderr)
    diff = term_diff(local_invariant(2), load_golden())
    print(f"term-by-term diff of k=2 against the golden file ({len(diff)} differing terms):", file=sys.stderr)
    for line in diff:
        print("  " + line, file=sys.stderr)
    return EXIT_FAIL


def _config(args, numeric: bool = True) -> RunConfig:
    return load_config(args.config, numeric) if args.config else RunConfig().validate(numeric)


def cmd_verify(args) -> int:
    cfg = _config(args)
    if args.suite in ("conjugation", "heatfit") and not args.config:
        raise ConfigError(f"suite {args.suite!r} needs --config")
    rep = run_suite(args.suite, cfg)
    for line in rep.lines():
        print(line)
    print(f"suite {rep.suite}: {'PASS' if rep.passed else 'FAIL'} in {rep.seconds:.1f}s")
    report = args.report or cfg.report
    if report:
        Path(report).write_text(rep.to_json() + "\n")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_heatfit(args) -> int:
    cfg = _config(args)
    if cfg.x is None:
        raise ConfigError("heatfit needs an [x] section")
    out = args.out or cfg.csv
    fitter, t, tr = fit_heat_trace(cfg, cfg.N)
    if out:
        write_trace_csv(out, t, tr)
    for k, c in zip(cfg.orders, fitter.coef_):
        print(f"c[{k}] = {complex(c).real:.12g} {complex(c).imag:+.3g}i")
    print(f"residual = {fitter.residual_:.3e}  condition = {fitter.condition_:.3e}")
    return EXIT_OK if fitter.residual_ <= cfg.tol("fit_residual") else EXIT_FAIL


def cmd_k0d_grid(args) -> int:
    from .modular import write_k0d_grid

    write_k0d_grid(args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatmoi", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("emit", help="print the LaTeX expansion of I_k")
    e.add_argument("--k", type=_even_k, required=True)
    e.add_argument("--d", type=_dimension, default=None, help="integer dimension or 'd' (default)")
    e.add_argument("--out", type=Path)
    e.set_defaults(func=cmd_emit)

    c = sub.add_parser("count", help="number of canonical terms of I_k")
    c.add_argument("--k", type=_even_k, required=True)
    c.add_argument("--expect", type=int, help="fail with a diff report when the count differs")
    c.set_defaults(func=cmd_count)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", choices=sorted(SUITES))
    v.add_argument("--config", type=Path)
    v.add_argument("--report", type=Path, help="write a JSON report")
    v.set_defaults(func=cmd_verify)

    h = sub.add_parser("heatfit", help="sample and fit a truncated heat trace")
    h.add_argument("--config", type=Path, required=True)
    h.add_argument("--out", type=Path)
    h.set_defaults(func=cmd_heatfit)

    g = sub.add_parser("k0d-grid", help="dump K_0^d on a grid for plotting")
    g.add_argument("--out", type=Path, required=True)
    g.set_defaults(func=cmd_k0d_grid)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
