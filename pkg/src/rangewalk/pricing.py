"""Extremal prices of (I, X, S, sigma)-claims and their robust hedges.

The upper price of a claim ``G`` given call prices is the value of the linear
program

    max  sum_q G(q) m(q)
    s.t. sum_q m(q) = 1                                  (cash, alpha)
         sum_q (x - K)^+ m(q) = C(K)                     (calls, eta_K)
         m((b - X); S >= b) = 0,  b = 0..B               (forward at H_b)
         m((a + X); I <= -a) = 0, a = 1..A               (forward at H_-a)
         m(Z^+-_ab) - w^+-_ab = 0,  w >= 0                (attainability, lambda)

over quads in the box. Its dual is a cash + calls + barrier-forwards portfolio
that dominates ``G`` pointwise; replacing each ``Z`` by the adapted ``Y``
gives a tradeable super-hedge. All certificates are re-checked here
independently of the solver.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .consistency import check_consistent
from .construct import Trajectory, derive_rule, sample_batch
from .hedging import HedgeContext, eval_Y, eval_Z_quad
from .measure import (GridMeasure, MassError, Quad, RangewalkError, SupportError,
                      coherent_quads, format_fraction, to_fraction)
from .oracle import solve_exact
from .simplex import Infeasible, SimplexResult, Unbounded, simplex  # noqa: F401  (re-exported)

FEAS_TOL = 1e-8
PATH_TOL = 1e-6


class BoxTooSmall(RangewalkError):
    pass


class CertificationFailure(RangewalkError):
    pass


@dataclass(frozen=True)
class Market:
    """Call quotes on a grid of step ``h``; ``box = (A, B)`` bounds positions to ``[-A, B]``."""

    h: Fraction
    strikes: tuple[Fraction, ...]
    prices: tuple[Fraction, ...]
    box: tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "h", to_fraction(self.h))
        object.__setattr__(self, "strikes", tuple(to_fraction(k) for k in self.strikes))
        object.__setattr__(self, "prices", tuple(to_fraction(c) for c in self.prices))
        if len(self.strikes) != len(self.prices):
            raise ValueError("strikes and prices differ in length")
        if len(set(self.strikes)) != len(self.strikes):
            raise ValueError("duplicate strike")
        A, B = self.box
        if A < 1 or B < 1:
            raise BoxTooSmall(f"box must be positive, got {self.box}")
        for k in self.strikes:
            if not (-A * self.h <= k <= B * self.h):
                raise BoxTooSmall(f"strike {k} outside [{-A * self.h}, {B * self.h}]")
        pairs = sorted(zip(self.strikes, self.prices))
        for (k0, c0), (k1, c1) in zip(pairs, pairs[1:]):
            if c1 > c0:
                warnings.warn(f"call prices increase between strikes {k0} and {k1}")
        for (k0, c0), (k1, c1), (k2, c2) in zip(pairs, pairs[1:], pairs[2:]):
            if (c1 - c0) / (k1 - k0) > (c2 - c1) / (k2 - k1):
                warnings.warn(f"call prices are not convex around strike {k1}")

    @classmethod
    def from_json(cls, data: dict) -> "Market":
        calls = data.get("calls", [])
        return cls(to_fraction(data.get("h", "1")),
                   tuple(to_fraction(c["K"]) for c in calls),
                   tuple(to_fraction(c["C"]) for c in calls),
                   tuple(int(v) for v in data["box"]))

    def to_json(self) -> dict:
        return {"h": format_fraction(self.h), "box": list(self.box),
                "calls": [{"K": format_fraction(k), "C": format_fraction(c)}
                          for k, c in zip(self.strikes, self.prices)]}


def market_from_measure(m: GridMeasure, strikes: Iterable, box: tuple[int, int]) -> Market:
    """Call prices ``C(K) = m((X - K)^+)`` implied by ``m``."""
    strikes = tuple(to_fraction(k) for k in strikes)
    prices = tuple(m.expectation(lambda q, k=k: max(q.x * m.h - k, Fraction(0))) for k in strikes)
    return Market(m.h, strikes, prices, box)


@dataclass(frozen=True)
class Payoff:
    """A claim ``G(I, X, S, sigma)`` in price units; ``fn(q, h)`` takes grid-unit quads."""

    name: str
    fn: Callable[[Quad, Fraction], Fraction]
    support: tuple[Quad, ...] = ()

    def __call__(self, q: Quad, h: Fraction) -> Fraction:
        return to_fraction(self.fn(q, h))

    @classmethod
    def builtin(cls, name: str, level: int | None = None, value=None) -> "Payoff":
        if name == "range":
            return cls(name, lambda q, h: h * (q.s - q.i))
        if name == "lookback_max":
            return cls(name, lambda q, h: h * (q.s - q.x))
        if name == "digital_max":
            return cls(f"digital_max({level})", lambda q, h: Fraction(int(q.s >= level)))
        if name == "digital_min":
            return cls(f"digital_min({level})", lambda q, h: Fraction(int(q.i <= -level)))
        if name == "signature_digital":
            return cls(f"signature_digital({level})", lambda q, h: Fraction(int(q.sigma == level)))
        if name == "terminal":
            return cls(name, lambda q, h: h * q.x)
        if name == "constant":
            c = to_fraction(value)
            return cls(f"constant({c})", lambda q, h: c)
        if name == "call":
            k = to_fraction(value)
            return cls(f"call({k})", lambda q, h: max(h * q.x - k, Fraction(0)))
        raise ValueError(f"unknown payoff {name!r}")

    @classmethod
    def table(cls, values: Mapping[Quad, Fraction], name: str = "table") -> "Payoff":
        """Explicit table; quads not listed pay zero."""
        vals = {Quad(*q): to_fraction(v) for q, v in values.items()}
        return cls(name, lambda q, h: vals.get(q, Fraction(0)), tuple(vals))

    @classmethod
    def from_json(cls, data: dict) -> "Payoff":
        vals = {}
        for atom in data["atoms"]:
            q = Quad(int(atom["i"]), int(atom["x"]), int(atom["s"]), int(atom["sigma"]))
            if q in vals:
                raise ValueError(f"duplicate quad {tuple(q)} in payoff table")
            vals[q] = to_fraction(atom["g"])
        return cls.table(vals, data.get("name", "table"))


@dataclass
class LinearProgram:
    market: Market
    payoff: Payoff
    quads: list[Quad]
    row_names: list[tuple]
    A: list[list[Fraction]]
    b: list[Fraction]
    c: list[Fraction]
    n_slack: int

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.row_names), len(self.quads) + self.n_slack

    def float_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        A = np.array([[float(v) for v in row] for row in self.A])
        return np.array([float(v) for v in self.c]), A, np.array([float(v) for v in self.b])

    def cons_rows(self) -> list[int]:
        return [r for r, name in enumerate(self.row_names) if name[0] == "cons"]


def consistency_pairs(A: int, B: int) -> list[tuple[int, int]]:
    n_max = A + B
    return [(n - b, b) for n in range(1, n_max + 1) for b in range(n + 1)]


def build_lp(market: Market, payoff: Payoff, consistency: bool = True) -> LinearProgram:
    A_box, B_box = market.box
    h = market.h
    for q in payoff.support:
        if q.i < -A_box or q.s > B_box:
            raise BoxTooSmall(f"payoff quad {tuple(q)} outside box {market.box}")
    quads = coherent_quads(A_box, B_box)
    rows: list[tuple] = []
    A: list[list[Fraction]] = []
    rhs: list[Fraction] = []

    def add(name, coeffs, value):
        rows.append(name)
        A.append(list(coeffs))
        rhs.append(Fraction(value))

    add(("mass",), [Fraction(1)] * len(quads), 1)
    for k, ck in zip(market.strikes, market.prices):
        add(("call", k), [max(h * q.x - k, Fraction(0)) for q in quads], ck)
    for b in range(0, B_box + 1):
        add(("ui_max", b), [h * (b - q.x) if q.s >= b else Fraction(0) for q in quads], 0)
    for a in range(1, A_box + 1):
        add(("ui_min", a), [h * (a + q.x) if q.i <= -a else Fraction(0) for q in quads], 0)
    pairs = consistency_pairs(A_box, B_box) if consistency else []
    n_slack = 2 * len(pairs)
    for row in A:
        row.extend([Fraction(0)] * n_slack)
    k = 0
    for a, b in pairs:
        for side in ("+", "-"):
            ctx = HedgeContext(a, b, h, side)
            coeffs = [eval_Z_quad(ctx, q) for q in quads] + [Fraction(0)] * n_slack
            coeffs[len(quads) + k] = Fraction(-1)
            add(("cons", side, a, b), coeffs, 0)
            k += 1
    c = [payoff(q, h) for q in quads] + [Fraction(0)] * n_slack
    return LinearProgram(market, payoff, quads, rows, A, rhs, c, n_slack)


@dataclass
class LPSolution:
    value: float
    primal: dict[Quad, float]
    slack: dict[tuple, float]
    duals: dict[tuple, float]
    dual_value: float
    result: SimplexResult = field(repr=False)

    @property
    def gap(self) -> float:
        return abs(self.value - self.dual_value)


def solve_lp(lp: LinearProgram, tol: float = 1e-9) -> LPSolution:
    c, A, b = lp.float_arrays()
    res = simplex(c, A, b, tol=tol)
    nq = len(lp.quads)
    primal = {q: float(res.x[j]) for j, q in enumerate(lp.quads) if res.x[j] != 0.0}
    cons = lp.cons_rows()
    slack = {lp.row_names[r]: float(res.x[nq + k]) for k, r in enumerate(cons)}
    duals = {name: float(res.y[r]) for r, name in enumerate(lp.row_names)}
    return LPSolution(res.value, primal, slack, duals, float(b @ res.y), res)


@dataclass(frozen=True)
class HedgePortfolio:
    """Cash, calls, unit forwards at barrier hits, and lambda-weighted Y-hedges.

    ``fwd_max[b]`` is the short forward entered when S first reaches ``b``
    (payoff ``(b - X)`` per unit, price units); ``fwd_min[a]`` the long forward
    entered when I first reaches ``-a`` (payoff ``(a + X)``).
    """

    h: Fraction
    alpha: float
    eta: dict[Fraction, float]
    fwd_max: dict[int, float]
    fwd_min: dict[int, float]
    lambda_plus: dict[tuple[int, int], float]
    lambda_minus: dict[tuple[int, int], float]

    def cost(self, market: Market) -> float:
        return self.alpha + sum(self.eta.get(k, 0.0) * float(c) for k, c in zip(market.strikes, market.prices))

    def _static(self, q: Quad) -> float:
        h = float(self.h)
        v = self.alpha
        for k, w in self.eta.items():
            v += w * max(h * q.x - float(k), 0.0)
        for b, w in self.fwd_max.items():
            if q.s >= b:
                v += w * h * (b - q.x)
        for a, w in self.fwd_min.items():
            if q.i <= -a:
                v += w * h * (a + q.x)
        return v

    def _lambdas(self):
        for (a, b), lam in self.lambda_plus.items():
            if lam:
                yield HedgeContext(a, b, self.h, "+"), lam
        for (a, b), lam in self.lambda_minus.items():
            if lam:
                yield HedgeContext(a, b, self.h, "-"), lam

    def value_z(self, q: Quad) -> float:
        """Terminal value of the Z-form portfolio at outcome ``q``."""
        return self._static(q) - sum(lam * float(eval_Z_quad(ctx, q)) for ctx, lam in self._lambdas())

    def value_y(self, traj: Trajectory) -> float:
        """Terminal value of the adapted Y-form portfolio along ``traj``."""
        return self._static(traj.quad) - sum(lam * float(eval_Y(ctx, traj)) for ctx, lam in self._lambdas())

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "eta": {format_fraction(k): v for k, v in self.eta.items()},
            "fwd_max": {str(k): v for k, v in self.fwd_max.items()},
            "fwd_min": {str(k): v for k, v in self.fwd_min.items()},
            "lambda_plus": [{"a": a, "b": b, "lambda": v} for (a, b), v in self.lambda_plus.items() if v],
            "lambda_minus": [{"a": a, "b": b, "lambda": v} for (a, b), v in self.lambda_minus.items() if v],
        }


def extract_hedge(lp: LinearProgram, sol: LPSolution) -> HedgePortfolio:
    eta, fwd_max, fwd_min, lp_plus, lp_minus = {}, {}, {}, {}, {}
    alpha = 0.0
    for name, y in sol.duals.items():
        kind = name[0]
        if kind == "mass":
            alpha = y
        elif kind == "call":
            eta[name[1]] = y
        elif kind == "ui_max":
            fwd_max[name[1]] = y
        elif kind == "ui_min":
            fwd_min[name[1]] = y
        else:
            _, side, a, b = name
            # dual of (m(Z) - w = 0) with w >= 0 is <= 0; lambda is its negative
            (lp_plus if side == "+" else lp_minus)[(a, b)] = max(-y, 0.0)
    return HedgePortfolio(lp.market.h, alpha, eta, fwd_max, fwd_min, lp_plus, lp_minus)


def rational_optimizer(lp: LinearProgram, sol: LPSolution, max_den: int = 10**6) -> tuple[GridMeasure, str]:
    """An exact rational version of the optimizer that is attainable.

    Tries rounding to denominators ``<= max_den``; falls back to solving the
    optimal basis exactly over the rationals.
    """
    h = lp.market.h
    rounded = {q: Fraction(v).limit_denominator(max_den) for q, v in sol.primal.items()}
    total = sum(rounded.values(), Fraction(0))
    candidates = []
    if total > 0:
        candidates.append(("rounded", {q: p / total for q, p in rounded.items()}))
    res = sol.result
    try:
        B = [[lp.A[r][j] for j in res.basis] for r in res.kept_rows]
        xb = solve_exact(B, [lp.b[r] for r in res.kept_rows])
        nq = len(lp.quads)
        candidates.append(("exact-basis", {lp.quads[j]: v for j, v in zip(res.basis, xb) if j < nq}))
    except ZeroDivisionError:
        pass
    for method, atoms in candidates:
        try:
            m = GridMeasure(atoms, h)
        except (MassError, SupportError):
            continue
        if _exactly_feasible(lp, m) and check_consistent(m).consistent:
            return m, method
    raise CertificationFailure("no exact rational optimizer is attainable")


def _exactly_feasible(lp: LinearProgram, m: GridMeasure) -> bool:
    index = {q: j for j, q in enumerate(lp.quads)}
    for r, name in enumerate(lp.row_names):
        total = sum((lp.A[r][index[q]] * p for q, p in m), Fraction(0))
        if name[0] == "cons":
            if total < 0:
                return False
        elif total != lp.b[r]:
            return False
    return True


@dataclass
class CertificationReport:
    value: float
    dual_value: float
    gap: float
    feasibility_residual: float
    worst_quad: Quad | None
    slackness: float
    path_residual: float | None = None
    path_equality: float | None = None
    worst_path: Trajectory | None = None
    paths: int = 0
    optimizer_method: str | None = None

    def passed(self, tol: float = FEAS_TOL, path_tol: float = PATH_TOL) -> bool:
        ok = self.gap <= tol and self.feasibility_residual >= -tol and self.slackness <= tol
        if self.path_residual is not None:
            ok = ok and self.path_residual >= -path_tol and self.path_equality <= path_tol
        return ok

    def to_json(self) -> dict:
        return {
            "value": self.value, "dual_value": self.dual_value, "gap": self.gap,
            "feasibility_residual": self.feasibility_residual,
            "worst_quad": list(self.worst_quad) if self.worst_quad else None,
            "complementary_slackness": self.slackness,
            "path_residual": self.path_residual, "path_equality": self.path_equality,
            "paths": self.paths, "optimizer_method": self.optimizer_method,
        }


def verify_hedge(lp: LinearProgram, sol: LPSolution, portfolio: HedgePortfolio,
                 trajs: Mapping[Trajectory, int] | Sequence[Trajectory] | None = None,
                 tol: float = FEAS_TOL, path_tol: float = PATH_TOL, strict: bool = True,
                 optimizer_method: str | None = None) -> CertificationReport:
    """Independently re-check the LP certificate.

    1. ``G(q) <= portfolio`` (Z-form) at every box quad;
    2. ``lambda * w`` small for each attainability row;
    3. along ``trajs`` the adapted Y-form portfolio dominates ``G`` and
       replicates it (trajectories are assumed drawn from the optimizer).
    """
    h = lp.market.h
    worst, worst_q = np.inf, None
    for q in lp.quads:
        r = portfolio.value_z(q) - float(lp.payoff(q, h))
        if r < worst:
            worst, worst_q = r, q
    slackness = 0.0
    for name, w in sol.slack.items():
        _, side, a, b = name
        lam = (portfolio.lambda_plus if side == "+" else portfolio.lambda_minus).get((a, b), 0.0)
        slackness = max(slackness, abs(lam * w))
    cost = portfolio.cost(lp.market)
    report = CertificationReport(sol.value, cost, abs(sol.value - cost), float(worst), worst_q, slackness,
                                 optimizer_method=optimizer_method)
    if trajs is not None:
        weighted = list(trajs.items()) if isinstance(trajs, Mapping) else [(t, 1) for t in trajs]
        res_min, eq_max, worst_t = np.inf, 0.0, None
        for t, w in weighted:
            r = portfolio.value_y(t) - float(lp.payoff(t.quad, h))
            if r < res_min:
                res_min, worst_t = r, t
            eq_max = max(eq_max, abs(r))
            report.paths += w
        report.path_residual = float(res_min)
        report.path_equality = float(eq_max)
        report.worst_path = worst_t
    if strict and not report.passed(tol, path_tol):
        raise CertificationFailure(
            f"certificate fails: gap={report.gap:.3e}, feasibility={report.feasibility_residual:.3e} "
            f"at {worst_q}, slackness={report.slackness:.3e}, path residual={report.path_residual}, "
            f"path equality={report.path_equality}, worst path={report.worst_path}")
    return report


@dataclass
class PriceResult:
    lp: LinearProgram
    solution: LPSolution
    portfolio: HedgePortfolio
    optimizer: GridMeasure | None
    report: CertificationReport

    def to_json(self) -> dict:
        return {
            "payoff": self.lp.payoff.name,
            "value": self.solution.value,
            "m_star": [{"i": q.i, "x": q.x, "s": q.s, "sigma": q.sigma, "p": p}
                       for q, p in sorted(self.solution.primal.items())],
            "m_star_rational": self.optimizer.to_json() if self.optimizer else None,
            "portfolio": self.portfolio.to_json(),
            "certification": self.report.to_json(),
        }


def price(market: Market, payoff: Payoff, paths: int = 100_000, seed: int = 0,
          strict: bool = True, consistency: bool = True) -> PriceResult:
    """Solve, extract the hedge and certify it, including pathwise on ``paths`` samples."""
    lp = build_lp(market, payoff, consistency)
    sol = solve_lp(lp)
    portfolio = extract_hedge(lp, sol)
    optimizer, method, trajs = None, None, None
    if paths and consistency:
        optimizer, method = rational_optimizer(lp, sol)
        batch = sample_batch(derive_rule(optimizer), paths, seed)
        trajs = batch.unique()
    report = verify_hedge(lp, sol, portfolio, trajs, strict=strict, optimizer_method=method)
    return PriceResult(lp, sol, portfolio, optimizer, report)
