"""Hitting-probability algebra and the exact consistency test.

For a law ``m`` of (I, X, S, sigma) the quantities here are the values that
hitting probabilities of the stopped walk *would* take if ``m`` were attainable:

* ``phi(b, -a)``: would-be P(H_b < H_-a), from optional sampling at H_b ^ H_-a;
* ``psi_+(-a, b)``: would-be P(H_b <= T, I(H_b) = -a), and its mirror ``psi_-``.

A law is attainable iff, for every cell, the mass that stops there satisfies the
division-free inequality ``m(b+h-X; S=b, I=-a, sigma=+1) <= h psi_+(-a, b)``
(and its mirror). Everything is computed in grid units with exact rationals;
reported left/right hand sides are scaled by ``h`` into price units.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Literal, Mapping, NamedTuple

from .measure import GridMeasure, RangewalkError

Side = Literal["+", "-"]
SIDES: tuple[Side, Side] = ("+", "-")
SIGN = {"+": 1, "-": -1}


class DegenerateWindow(RangewalkError):
    pass


class _Tables:
    """Prefix sums of mass and first moment over (S, -I), plus per-cell sums."""

    def __init__(self, m: GridMeasure):
        self.M = m.max_s
        self.L = -m.min_i
        rows, cols = self.M + 1, self.L + 1
        mass = [[Fraction(0)] * cols for _ in range(rows)]
        first = [[Fraction(0)] * cols for _ in range(rows)]
        self.cell_mass: dict[tuple[int, int, int], Fraction] = {}
        self.cell_first: dict[tuple[int, int, int], Fraction] = {}
        self.origin = Fraction(0)
        for q, p in m:
            mass[q.s][-q.i] += p
            first[q.s][-q.i] += p * q.x
            key = (q.sigma, -q.i, q.s)
            self.cell_mass[key] = self.cell_mass.get(key, Fraction(0)) + p
            self.cell_first[key] = self.cell_first.get(key, Fraction(0)) + p * q.x
            if q.i == 0 and q.s == 0:
                self.origin += p
        # P[b][a] = sum over s < b and -i < a
        self.P = self._prefix(mass, rows, cols)
        self.F = self._prefix(first, rows, cols)

    @staticmethod
    def _prefix(grid, rows, cols):
        out = [[Fraction(0)] * (cols + 1) for _ in range(rows + 1)]
        for s in range(rows):
            acc = Fraction(0)
            for a in range(cols):
                acc += grid[s][a]
                out[s + 1][a + 1] = out[s][a + 1] + acc
        return out

    def window(self, b: int, a: int) -> tuple[Fraction, Fraction]:
        """``(m(S<b, I>-a), m(X; S<b, I>-a))``."""
        if b <= 0 or a <= 0:
            return Fraction(0), Fraction(0)
        bi = min(b, self.M + 1)
        ai = min(a, self.L + 1)
        return self.P[bi][ai], self.F[bi][ai]

    def cell(self, sigma: int, a: int, b: int) -> tuple[Fraction, Fraction]:
        key = (sigma, a, b)
        return self.cell_mass.get(key, Fraction(0)), self.cell_first.get(key, Fraction(0))

    def phi_plus(self, b: int, a: int) -> Fraction:
        if a + b <= 0:
            raise DegenerateWindow(f"window (-{a}, {b}) is empty")
        p, fx = self.window(b, a)
        return (a - (a * p + fx)) / (a + b)

    def phi_minus(self, a: int, b: int) -> Fraction:
        if a + b <= 0:
            raise DegenerateWindow(f"window (-{a}, {b}) is empty")
        p, fx = self.window(b, a)
        return (b - (b * p - fx)) / (a + b)

    def psi(self, side: Side, a: int, b: int) -> Fraction:
        if side == "+":
            return self.phi_plus(b, a + 1) - self.phi_plus(b, a)
        return self.phi_minus(a, b + 1) - self.phi_minus(a, b)


@lru_cache(maxsize=512)
def _tables(m: GridMeasure) -> _Tables:
    return _Tables(m)


def _check_ab(a: int, b: int) -> None:
    if a < 0 or b < 0:
        raise ValueError(f"levels must be nonnegative, got a={a}, b={b}")


def phi(m: GridMeasure, b: int, a: int, orientation: Literal["plus", "minus"] = "plus") -> Fraction:
    """``phi(b, -a)`` (plus) or ``phi(-a, b)`` (minus).

    Uses the strict window ``{S < b, I > -a}``.
    """
    _check_ab(a, b)
    t = _tables(m)
    if orientation == "plus":
        return t.phi_plus(b, a)
    if orientation == "minus":
        return t.phi_minus(a, b)
    raise ValueError(f"orientation must be 'plus' or 'minus', got {orientation!r}")


def psi(m: GridMeasure, a: int, b: int, side: Side) -> Fraction:
    """Would-be probability of reaching ``b`` (side +) or ``-a`` (side -) before
    stopping, with the opposite extreme exactly at the other level."""
    _check_ab(a, b)
    if side not in SIDES:
        raise ValueError(f"side must be '+' or '-', got {side!r}")
    return _tables(m).psi(side, a, b)


@dataclass(frozen=True)
class CellStats:
    side: Side
    a: int
    b: int
    psi: Fraction
    p0: Fraction
    v: Fraction | None
    theta: Fraction | None
    lhs_he1: Fraction
    rhs_he1: Fraction

    @property
    def ok(self) -> bool:
        return self.lhs_he1 <= self.rhs_he1


def _cell_numbers(t: _Tables, side: Side, a: int, b: int) -> tuple[Fraction, Fraction, Fraction, Fraction]:
    """``(psi, p0, m(X; cell), lhs)`` in grid units."""
    ps = t.psi(side, a, b)
    p0, fx = t.cell(SIGN[side], a, b)
    if side == "+":
        lhs = (b + 1) * p0 - fx
    else:
        lhs = (a + 1) * p0 + fx
    return ps, p0, fx, lhs


def cell_stats(m: GridMeasure, side: Side, a: int, b: int) -> CellStats:
    _check_ab(a, b)
    if a + b <= 0:
        raise DegenerateWindow("cells need a + b > 0")
    ps, p0, fx, lhs = _cell_numbers(_tables(m), side, a, b)
    v = fx / p0 if p0 else None
    theta = lhs / ps if ps else None
    return CellStats(side, a, b, ps, p0, v, theta, m.h * lhs, m.h * ps)


class Violation(NamedTuple):
    side: Side
    a: int
    b: int
    lhs: Fraction
    rhs: Fraction


@dataclass(frozen=True)
class ConsistencyReport:
    consistent: bool
    violations: tuple[Violation, ...]
    checked_box: int

    def to_json(self) -> dict:
        return {
            "consistent": self.consistent,
            "checked_box": self.checked_box,
            "violations": [
                {"side": v.side, "a": v.a, "b": v.b, "lhs": str(v.lhs), "rhs": str(v.rhs)}
                for v in self.violations
            ],
        }


def cells_in_box(n_max: int):
    """All (side, a, b) with ``0 < a + b <= n_max``, ordered by range."""
    for n in range(1, n_max + 1):
        for b in range(n + 1):
            for side in SIDES:
                yield side, n - b, b


def check_consistent(m: GridMeasure) -> ConsistencyReport:
    """Decide whether ``m`` is the law of (I, X, S, sigma) at some a.s. finite
    stopping time of the walk.

    Support coherence is enforced by :class:`GridMeasure` itself. Cells with
    ``a + b`` above ``R + 1`` (``R`` the support range) cannot add a violation
    once the cells inside pass, so the check is finite.
    """
    t = _tables(m)
    box = m.support_range + 1
    bad = []
    for side, a, b in cells_in_box(box):
        ps, _, _, lhs = _cell_numbers(t, side, a, b)
        if lhs > ps:
            bad.append(Violation(side, a, b, m.h * lhs, m.h * ps))
    return ConsistencyReport(not bad, tuple(bad), box)


@dataclass(frozen=True)
class SXLevel:
    b: int
    lhs: Fraction
    rhs: Fraction
    ok: bool


@dataclass(frozen=True)
class SXReport:
    mode: str
    passed: bool
    levels: tuple[SXLevel, ...]

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "passed": self.passed,
            "levels": [{"b": r.b, "lhs": str(r.lhs), "rhs": str(r.rhs), "ok": r.ok}
                       for r in self.levels],
        }


def check_sx(mu: Mapping[tuple[int, int], Fraction],
             mode: Literal["stopped", "uniformly_integrable"] = "stopped") -> SXReport:
    """Check a joint law of (S, X) on the lattice.

    Per level ``b`` compares ``lhs = b mu(S >= b)`` with ``rhs = mu(X; S >= b)``:
    stopped mode needs ``lhs >= rhs`` for ``b > 0``; uniformly integrable mode
    needs equality for every ``b >= 0`` (``b = 0`` is ``mu(X) = 0``).
    """
    if mode not in ("stopped", "uniformly_integrable"):
        raise ValueError(f"unknown mode {mode!r}")
    for (s, x) in mu:
        if s < max(x, 0):
            raise ValueError(f"need s >= max(x, 0), got {(s, x)}")
    top = max(s for s, _ in mu)
    start = 1 if mode == "stopped" else 0
    levels = []
    for b in range(start, top + 1):
        tail = sum((p for (s, _), p in mu.items() if s >= b), Fraction(0))
        fx = sum((p * x for (s, x), p in mu.items() if s >= b), Fraction(0))
        lhs = b * tail
        ok = lhs >= fx if mode == "stopped" else lhs == fx
        levels.append(SXLevel(b, lhs, fx, ok))
    return SXReport(mode, all(r.ok for r in levels), tuple(levels))
