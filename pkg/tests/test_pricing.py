import random
import warnings
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rangewalk.consistency import check_consistent
from rangewalk.construct import Trajectory
from rangewalk.measure import Quad, coherent_quads
from rangewalk.oracle import chain_law, random_rule
from rangewalk.pricing import (BoxTooSmall, Market, Payoff, _exactly_feasible, build_lp,
                               consistency_pairs, extract_hedge, market_from_measure, price,
                               rational_optimizer, solve_lp, verify_hedge)
from rangewalk.simplex import Infeasible

STRIKES = (-1, 0, 1, 2)


@pytest.fixture
def market(m0):
    return market_from_measure(m0, STRIKES, (4, 4))


@pytest.fixture(scope="module")
def range_result():
    from rangewalk.measure import two_barrier_m0
    mk = market_from_measure(two_barrier_m0(), STRIKES, (4, 4))
    return price(mk, Payoff.builtin("range"), paths=20_000, seed=0)


class TestMarket:
    def test_m0_prices(self, market):
        assert market.prices == (1, Fraction(2, 3), Fraction(1, 3), 0)

    def test_json_round_trip(self, market):
        assert Market.from_json(market.to_json()) == market

    def test_strike_outside_box(self):
        with pytest.raises(BoxTooSmall):
            Market(1, (5,), (0,), (4, 4))

    def test_empty_box(self):
        with pytest.raises(BoxTooSmall):
            Market(1, (), (), (0, 2))

    def test_warns_on_increasing_prices(self):
        with pytest.warns(UserWarning):
            Market(1, (0, 1), (Fraction(1, 3), Fraction(1, 2)), (2, 2))

    def test_quiet_on_sane_prices(self, m0):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            market_from_measure(m0, STRIKES, (4, 4))


class TestBuild:
    def test_shape(self, market):
        lp = build_lp(market, Payoff.builtin("range"))
        n_pairs = len(consistency_pairs(4, 4))
        assert n_pairs == sum(n + 1 for n in range(1, 9))
        assert len(lp.row_names) == 1 + 4 + (4 + 4 + 1) + 2 * n_pairs
        assert len(lp.quads) == len(coherent_quads(4, 4))
        assert lp.shape[1] == len(lp.quads) + 2 * n_pairs

    def test_m0_feasible(self, market, m0):
        lp = build_lp(market, Payoff.builtin("range"))
        assert _exactly_feasible(lp, m0)

    def test_no_strikes(self):
        lp = build_lp(Market(1, (), (), (2, 2)), Payoff.builtin("range"))
        assert [n[0] for n in lp.row_names].count("call") == 0
        assert solve_lp(lp).gap <= 1e-8

    def test_payoff_outside_box(self, market):
        pay = Payoff.table({Quad(-5, 0, 0, -1): Fraction(1)})
        with pytest.raises(BoxTooSmall):
            build_lp(market, pay)

    def test_infeasible_market(self):
        with pytest.raises(Infeasible):
            solve_lp(build_lp(Market(1, (0,), (5,), (1, 1)), Payoff.builtin("range")))


class TestRangeOnM0:
    def test_value(self, range_result):
        assert range_result.solution.value >= 1.5 - 1e-8

    def test_certificate(self, range_result):
        r = range_result.report
        assert r.passed()
        assert r.gap <= 1e-8
        assert r.feasibility_residual >= -1e-8
        assert r.slackness <= 1e-8
        assert r.path_residual >= -1e-6 and r.path_equality <= 1e-6
        assert r.paths == 20_000

    def test_multipliers_nonnegative(self, range_result):
        p = range_result.portfolio
        assert all(v >= 0 for v in p.lambda_plus.values())
        assert all(v >= 0 for v in p.lambda_minus.values())

    def test_rounded_optimizer(self, range_result):
        m = range_result.optimizer
        assert check_consistent(m).consistent
        assert float(m.expectation(lambda q: q.s - q.i)) == pytest.approx(range_result.solution.value, abs=1e-8)

    def test_weak_duality_path(self, range_result):
        hist = range_result.solution.result.history
        assert all(v <= range_result.solution.dual_value + 1e-8 for v in hist)
        assert all(v1 >= v0 - 1e-9 for v0, v1 in zip(hist, hist[1:]))

    def test_y_form_dominates_z_form(self, range_result):
        p = range_result.portfolio
        rng = random.Random(0)
        for _ in range(300):
            t = Trajectory.from_moves([rng.choice([1, -1]) for _ in range(rng.randint(0, 7))], 0)
            if t.i < -4 or t.s > 4:
                continue
            t = Trajectory(t.extremes, rng.randint(t.i, t.s), t.sigma)
            assert p.value_y(t) >= p.value_z(t.quad) - 1e-9

    def test_consistency_rows_bind(self, market, range_result):
        loose = price(market, Payoff.builtin("range"), paths=0, consistency=False)
        assert loose.solution.value >= range_result.solution.value - 1e-9

    def test_json(self, range_result):
        doc = range_result.to_json()
        assert {"value", "m_star", "portfolio", "certification"} <= set(doc)


class TestDegenerate:
    @pytest.mark.parametrize("k,c", [(0, Fraction(2, 3)), (1, Fraction(1, 3)), (-1, 1)])
    def test_quoted_call(self, market, k, c):
        res = price(market, Payoff.builtin("call", value=k), paths=1000)
        assert res.solution.value == pytest.approx(float(c), abs=1e-8)
        assert res.report.passed()

    def test_quoted_call_hedge(self, market):
        res = price(market, Payoff.builtin("call", value=0), paths=0)
        eta = res.portfolio.eta
        assert eta[Fraction(0)] == pytest.approx(1.0)
        assert all(abs(v) < 1e-9 for k, v in eta.items() if k != 0)

    def test_terminal(self, market):
        res = price(market, Payoff.builtin("terminal"), paths=1000)
        assert res.solution.value == pytest.approx(0.0, abs=1e-8)

    def test_constant(self, market):
        res = price(market, Payoff.builtin("constant", value=Fraction(7, 3)), paths=1000)
        assert res.solution.value == pytest.approx(7 / 3, abs=1e-8)
        p = res.portfolio
        assert p.alpha == pytest.approx(7 / 3)
        assert all(abs(v) < 1e-9 for v in p.eta.values())
        assert all(abs(v) < 1e-9 for v in [*p.lambda_plus.values(), *p.lambda_minus.values()])


def test_payoff_table_json():
    pay = Payoff.from_json({"atoms": [{"i": 0, "x": 1, "s": 1, "sigma": 1, "g": "2"}]})
    assert pay(Quad(0, 1, 1, 1), Fraction(1)) == 2
    assert pay(Quad(0, 0, 0, -1), Fraction(1)) == 0
    with pytest.raises(ValueError):
        Payoff.from_json({"atoms": [{"i": 0, "x": 1, "s": 1, "sigma": 1, "g": "2"}] * 2})


def test_unknown_payoff():
    with pytest.raises(ValueError):
        Payoff.builtin("nope")


@settings(max_examples=8)
@given(st.integers(0, 10**6), st.sampled_from(["range", "lookback_max", "digital_max", "digital_min"]))
def test_random_markets_certify(seed, name):
    box = (3, 3)
    law = chain_law(random_rule(box, seed))
    mk = market_from_measure(law, range(-2, 3), box)
    lp = build_lp(mk, Payoff.builtin(name, level=1))
    sol = solve_lp(lp)
    # the generating law is feasible, so the optimum is at least its value
    assert sol.value >= float(law.expectation(lambda q: lp.payoff(q, law.h))) - 1e-8
    port = extract_hedge(lp, sol)
    opt, _ = rational_optimizer(lp, sol)
    assert check_consistent(opt).consistent
    assert verify_hedge(lp, sol, port).passed()


def test_attainability_rows_bind_for_signature_digital(market):
    sig = Payoff.builtin("signature_digital", level=1)
    tight = price(market, sig, paths=0).solution.value
    loose = price(market, sig, paths=0, consistency=False).solution.value
    # the generating law pays 1/3, which the constrained bound attains
    assert tight == pytest.approx(1 / 3, abs=1e-8)
    assert loose > tight + 1e-3
