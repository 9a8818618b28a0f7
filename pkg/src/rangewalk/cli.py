"""Command-line entry point: ``rangewalk <command> ...``.

Exit codes: 0 success, 2 the checked property fails, 1 usage, I/O or format
error. Output files are written atomically. Rationals print as ``num/den`` and
floats with 12 significant digits. ``--json`` swaps the human report on stdout
for a JSON document.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from fractions import Fraction

from . import consistency, construct, hedging, oracle, pricing
from .simplex import Infeasible
from .measure import (RangewalkError, dump_json, format_fraction, load_json,
                      load_measure, marginal_sx, measure_from_json, sx_from_json,
                      write_text_atomic)

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2

SIMULATE_COLUMNS = ("i", "x", "s", "sigma", "count", "freq", "target", "abs_err")
TABLE_COLUMNS = ("row", "ordering", "instances", "max_abs_gap", "formula_mismatches", "ok")


class UsageError(RangewalkError):
    pass


def fmt_float(v: float) -> str:
    return f"{v:.12g}"


def default_threads() -> int:
    raw = os.environ.get("RANGEWALK_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"RANGEWALK_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("RANGEWALK_THREADS must be positive")
    return n


def _positive(name: str, v: int, allow_zero: bool = False) -> None:
    if v < 0 or (v == 0 and not allow_zero):
        raise UsageError(f"--{name} must be {'nonnegative' if allow_zero else 'positive'}, got {v}")


def _parse_box(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--box expects A,B, got {text!r}") from None
    return a, b


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _emit(args, doc: dict, lines: list[str]) -> None:
    if args.json:
        sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    else:
        sys.stdout.write("".join(line + "\n" for line in lines))


# commands --------------------------------------------------------------

def cmd_check(args) -> int:
    m = load_measure(args.measure)
    rep = consistency.check_consistent(m)
    doc = rep.to_json()
    if args.report:
        dump_json(doc, args.report)
    lines = [f"{'consistent' if rep.consistent else 'inconsistent'} "
             f"(cells with a+b <= {rep.checked_box} checked)"]
    lines += [f"violation side={v.side} a={v.a} b={v.b} lhs={v.lhs} rhs={v.rhs}" for v in rep.violations]
    _emit(args, doc, lines)
    return EXIT_OK if rep.consistent else EXIT_FAIL


def cmd_derive(args) -> int:
    m = load_measure(args.measure)
    try:
        rule = construct.derive_rule(m)
    except construct.InconsistentMeasure as exc:
        print(f"inconsistent measure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    doc = rule.to_json()
    if args.out:
        dump_json(doc, args.out)
    _emit(args, doc, [f"rule with {len(rule.cells)} cells, origin stop {rule.origin_stop}"])
    return EXIT_OK


def cmd_simulate(args) -> int:
    _positive("paths", args.paths)
    m = load_measure(args.measure)
    try:
        rule = construct.derive_rule(m)
    except construct.InconsistentMeasure as exc:
        print(f"inconsistent measure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    t0 = time.perf_counter()
    batch = construct.sample_batch(rule, args.paths, args.seed, workers=args.threads)
    elapsed = time.perf_counter() - t0
    counts = batch.quad_counts()
    n = len(batch)
    rows = []
    for q in sorted(set(counts) | set(m.atoms)):
        c = counts.get(q, 0)
        freq = Fraction(c, n)
        target = m.prob(q)
        rows.append((q.i, q.x, q.s, q.sigma, c, fmt_float(float(freq)), format_fraction(target),
                     fmt_float(float(abs(freq - target)))))
    tv = construct.tv_distance(construct.empirical_law(batch, m.h), m)
    if args.csv:
        write_text_atomic(args.csv, _csv_text(SIMULATE_COLUMNS, rows) + f"# tv,{fmt_float(tv)}\n")
    doc = {"paths": n, "seed": args.seed, "tv": tv,
           "rows": [dict(zip(SIMULATE_COLUMNS, r)) for r in rows]}
    lines = [",".join(SIMULATE_COLUMNS)] + [",".join(map(str, r)) for r in rows]
    lines.append(f"tv,{fmt_float(tv)}")
    print(f"sampled {n} paths in {elapsed:.2f}s", file=sys.stderr)
    _emit(args, doc, lines)
    return EXIT_OK


def cmd_oracle(args) -> int:
    data = load_json(args.rule)
    if "box" in data:
        rule = oracle.TabularRule.from_json(data)
    else:
        rule = construct.StoppingRule.from_json(data)
    law = oracle.chain_law(rule)
    doc = law.to_json()
    if args.out:
        dump_json(doc, args.out)
    lines = [f"{q.i} {q.x} {q.s} {q.sigma} {format_fraction(p)}" for q, p in sorted(law.atoms.items())]
    _emit(args, doc, lines)
    return EXIT_OK


def cmd_hedge_verify(args) -> int:
    _positive("paths", args.paths, allow_zero=True)
    _positive("max-range", args.max_range)
    m = load_measure(args.measure)
    table = hedging.verify_table(seed=args.seed)
    try:
        rule = construct.derive_rule(m)
    except construct.InconsistentMeasure as exc:
        print(f"inconsistent measure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    trajs = construct.sample_batch(rule, args.paths, args.seed, workers=args.threads).unique()
    dom = hedging.verify_domination(hedging.contexts(args.max_range, m.h), trajs)
    rows = [(r.row, r.ordering, r.instances, format_fraction(r.max_abs_gap), r.formula_mismatches,
             int(r.ok)) for r in table.rows]
    exc_ok = table.exceptional_gaps == table.exceptional_expected
    summary = {"paths": args.paths, "checks": dom.checked, "violations": len(dom.violations),
               "strict_gaps": dom.strict_gaps, "unexplained_strict_gaps": dom.strict_non_exceptional,
               "exceptional_ordering_ok": exc_ok}
    if args.csv:
        tail = "".join(f"# {k},{v}\n" for k, v in summary.items())
        write_text_atomic(args.csv, _csv_text(TABLE_COLUMNS, rows) + tail)
    ok = table.ok and dom.ok
    doc = {"passed": ok, "table": [dict(zip(TABLE_COLUMNS, r)) for r in rows], "domination": summary}
    lines = [",".join(TABLE_COLUMNS)] + [",".join(map(str, r)) for r in rows]
    lines += [f"{k},{v}" for k, v in summary.items()]
    lines.append("passed" if ok else "FAILED")
    _emit(args, doc, lines)
    return EXIT_OK if ok else EXIT_FAIL


def _payoff(name: str, level: int | None) -> pricing.Payoff:
    if name.startswith("table:"):
        return pricing.Payoff.from_json(load_json(name[len("table:"):]))
    try:
        return pricing.Payoff.builtin(name, level=level)
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"unknown payoff {name!r}: {exc}") from None


def cmd_price(args) -> int:
    _positive("paths", args.paths, allow_zero=True)
    data = load_json(args.market)
    if args.box:
        data = dict(data, box=list(_parse_box(args.box)))
    if "box" not in data:
        raise UsageError("market has no box; pass --box A,B")
    market = pricing.Market.from_json(data)
    payoff = _payoff(args.payoff, args.level)
    try:
        res = pricing.price(market, payoff, paths=args.paths, seed=args.seed, strict=False)
    except Infeasible as exc:
        print(f"infeasible market: {exc}", file=sys.stderr)
        return EXIT_FAIL
    ok = res.report.passed(args.tolerance)
    doc = res.to_json()
    doc["certified"] = ok
    if args.out:
        dump_json(doc, args.out)
    r = res.report
    lines = [f"value {fmt_float(res.solution.value)}",
             f"hedge cost {fmt_float(r.dual_value)} gap {fmt_float(r.gap)}",
             f"feasibility residual {fmt_float(r.feasibility_residual)}",
             f"complementary slackness {fmt_float(r.slackness)}"]
    if r.path_residual is not None:
        lines.append(f"paths {r.paths} residual {fmt_float(r.path_residual)} "
                     f"equality {fmt_float(r.path_equality)}")
    lines.append("certified" if ok else "NOT certified")
    _emit(args, doc, lines)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_maxcheck(args) -> int:
    data = load_json(args.marginal)
    atoms = data.get("atoms") if isinstance(data, dict) else None
    if isinstance(atoms, list) and atoms and isinstance(atoms[0], dict) and "i" in atoms[0]:
        mu = marginal_sx(measure_from_json(data))
    else:
        mu = sx_from_json(data)
    rep = consistency.check_sx(mu, args.mode)
    doc = rep.to_json()
    lines = [f"b={lv.b} lhs={lv.lhs} rhs={lv.rhs} {'ok' if lv.ok else 'FAIL'}" for lv in rep.levels]
    lines.append("pass" if rep.passed else "fail")
    _emit(args, doc, lines)
    return EXIT_OK if rep.passed else EXIT_FAIL


# parser ----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rangewalk", description="Stopped random walk laws, embeddings and robust prices.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--json", action="store_true", help="machine-readable output on stdout")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker cap (default RANGEWALK_THREADS or 1)")
        sp.set_defaults(func=func)
        return sp

    sp = add("check", cmd_check, "decide whether a measure is attainable")
    sp.add_argument("measure")
    sp.add_argument("--report")

    sp = add("derive", cmd_derive, "derive the cell stopping rule of a measure")
    sp.add_argument("measure")
    sp.add_argument("--out")

    sp = add("simulate", cmd_simulate, "sample the derived rule and compare with the target")
    sp.add_argument("measure")
    sp.add_argument("--paths", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--csv")

    sp = add("oracle", cmd_oracle, "exact stopped law of a tabular or cell rule")
    sp.add_argument("rule")
    sp.add_argument("--out")

    sp = add("hedge-verify", cmd_hedge_verify, "check the hedge table and pathwise domination")
    sp.add_argument("measure")
    sp.add_argument("--paths", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-range", type=int, default=6)
    sp.add_argument("--csv")

    sp = add("price", cmd_price, "extremal price and certified robust hedge")
    sp.add_argument("market")
    sp.add_argument("--payoff", default="range",
                    help="range, lookback_max, digital_max, digital_min, terminal or table:<file>")
    sp.add_argument("--level", type=int, default=None, help="level for digital payoffs")
    sp.add_argument("--box")
    sp.add_argument("--paths", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tolerance", type=float, default=pricing.FEAS_TOL)
    sp.add_argument("--out")

    sp = add("maxcheck", cmd_maxcheck, "check a joint law of (max, terminal value)")
    sp.add_argument("marginal")
    sp.add_argument("--mode", choices=("stopped", "uniformly_integrable"), default="stopped")
    return p


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.threads is None:
            args.threads = default_threads()
        _positive("threads", args.threads)
        return args.func(args)
    except UsageError as exc:
        print(f"rangewalk: usage error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"rangewalk: I/O error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (RangewalkError, ValueError, KeyError, TypeError) as exc:
        print(f"rangewalk: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
