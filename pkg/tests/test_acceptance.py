"""Acceptance gate: nine criteria, one PASS/FAIL line each (run with ``-s`` or ``-v``)."""

import random
import time
from fractions import Fraction

import pytest

from rangewalk.consistency import cells_in_box, check_consistent, phi, psi
from rangewalk.construct import derive_rule, empirical_law, sample_batch, tv_distance
from rangewalk.hedging import contexts, verify_domination, verify_table
from rangewalk.measure import random_measure, two_barrier_m0
from rangewalk.oracle import chain_law, chain_solution, random_rule
from rangewalk.pricing import Market, Payoff, market_from_measure, price

N_RULES = 200


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n[acceptance] criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def rule_box(k):
    return (k % 4 + 1, (k // 4) % 4 + 1)


@pytest.fixture(scope="module")
def rules():
    return [random_rule(rule_box(k), seed=k) for k in range(N_RULES)]


@pytest.fixture(scope="module")
def laws(rules):
    t0 = time.perf_counter()
    solved = [chain_solution(r) for r in rules]
    return solved, time.perf_counter() - t0


def test_criterion_1_necessity(capsys, laws):
    solved, oracle_time = laws
    t0 = time.perf_counter()
    bad = sum(not check_consistent(law).consistent for _, law in solved)
    elapsed = oracle_time + time.perf_counter() - t0
    report(capsys, 1, bad == 0 and elapsed < 60,
           f"{N_RULES} rules, {bad} inconsistent laws, {elapsed:.1f}s")


def test_criterion_2_round_trip(capsys, laws):
    solved, _ = laws
    t0 = time.perf_counter()
    mismatched = sum(chain_law(derive_rule(law)) != law for _, law in solved)
    elapsed = time.perf_counter() - t0
    report(capsys, 2, mismatched == 0 and elapsed < 120,
           f"{N_RULES} laws, {mismatched} mismatched, {elapsed:.1f}s")


def test_criterion_3_reach(capsys, laws):
    solved, _ = laws
    checked = wrong = 0
    for reach, law in solved:
        for side, a, b in cells_in_box(law.support_range + 1):
            if (side == "+" and b == 0) or (side == "-" and a == 0):
                continue
            checked += 1
            wrong += reach.get((side, a, b), Fraction(0)) != psi(law, a, b, side)
    report(capsys, 3, wrong == 0, f"{checked} cells, {wrong} mismatches")


def test_criterion_4_base_case(capsys):
    rng = random.Random(4)
    wrong = 0
    for _ in range(100):
        m = random_measure(rng)
        at_origin = m.mass(lambda q: q.s == q.x == q.i == 0)
        wrong += psi(m, 0, 1, "+") != (1 - at_origin) / 2
        wrong += psi(m, 1, 0, "+") != 0
    report(capsys, 4, wrong == 0, f"100 measures, {wrong} failures")


def test_criterion_5_window(capsys):
    rng = random.Random(5)
    wrong = checked = 0
    for _ in range(100):
        m = random_measure(rng)
        for n in range(1, 7):
            for b in range(n + 1):
                a = n - b
                rhs = 1 - m.mass(lambda q: q.s < b and q.i > -a)
                wrong += phi(m, b, a, "plus") + phi(m, b, a, "minus") != rhs
                checked += 1
    report(capsys, 5, wrong == 0, f"{checked} windows, {wrong} failures")


def test_criterion_6_m0(capsys):
    m0 = two_barrier_m0()
    ok = check_consistent(m0).consistent
    rule = derive_rule(m0)
    expected = {
        ("+", 0, 1): (0, Fraction(2, 3), Fraction(1, 3), None),
        ("+", 0, 2): (1, 0, 0, {2: 1}),
        ("-", 1, 0): (1, 0, 0, {-1: 1}),
        ("-", 1, 1): (1, 0, 0, {-1: 1}),
    }
    for key, (stop, up, down, law) in expected.items():
        c = rule.cell(*key)
        ok = ok and (c.stop, c.up, c.down) == (stop, up, down) and (law is None or c.x_law == law)
    ok = ok and rule.origin_stop == 0
    t0 = time.perf_counter()
    tv = tv_distance(empirical_law(sample_batch(rule, 10**6, seed=42)), m0)
    elapsed = time.perf_counter() - t0
    report(capsys, 6, ok and tv <= 0.005 and elapsed < 30, f"cells exact, tv={tv:.5f}, {elapsed:.1f}s")


def test_criterion_7_hedge_table(capsys):
    table = verify_table(draws=20, seed=7)
    law = chain_law(random_rule((4, 4), seed=70))
    trajs = sample_batch(derive_rule(law), 10**5, seed=7).unique()
    dom = verify_domination(contexts(6), trajs)
    ok = table.ok and dom.ok
    report(capsys, 7, ok,
           f"7 rows x 20 draws exact, exceptional gap ok={table.exceptional_gaps == table.exceptional_expected}, "
           f"10^5 paths, {len(dom.violations)} violations, {dom.strict_gaps} exceptional strict gaps")


def test_criterion_8_lp(capsys):
    t0 = time.perf_counter()
    market = market_from_measure(two_barrier_m0(), [-1, 0, 1, 2], (4, 4))
    res = price(market, Payoff.builtin("range"), paths=10**5, seed=8, strict=False)
    elapsed = time.perf_counter() - t0
    r = res.report
    ok = (res.solution.value >= 1.5 - 1e-8 and r.gap <= 1e-8 and r.feasibility_residual >= -1e-8
          and r.slackness <= 1e-8 and r.paths == 10**5 and r.path_residual >= -1e-6
          and r.path_equality <= 1e-6 and elapsed < 300)
    report(capsys, 8, ok,
           f"value={res.solution.value:.12g}, gap={r.gap:.1e}, feas={r.feasibility_residual:.1e}, "
           f"cs={r.slackness:.1e}, path residual={r.path_residual:.1e}, "
           f"equality={r.path_equality:.1e}, {elapsed:.1f}s")


def test_criterion_9_degenerate(capsys):
    market = market_from_measure(two_barrier_m0(), [-1, 0, 1, 2], (4, 4))
    errs = []
    for k, c in zip(market.strikes, market.prices):
        v = price(market, Payoff.builtin("call", value=k), paths=0).solution.value
        errs.append(abs(v - float(c)))
    errs.append(abs(price(market, Payoff.builtin("terminal"), paths=0).solution.value))
    errs.append(abs(price(market, Payoff.builtin("constant", value=Fraction(5, 2)), paths=0).solution.value - 2.5))
    bare = Market(1, (), (), (3, 3))
    errs.append(abs(price(bare, Payoff.builtin("constant", value=-1), paths=0).solution.value + 1))
    worst = max(errs)
    report(capsys, 9, worst <= 1e-8, f"{len(errs)} cases, max error {worst:.1e}")
