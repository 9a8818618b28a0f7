"""The measure-side hedge variable Z and its adapted sub-replicating portfolio Y.

For a context ``(a, b, h)`` on the ``+`` side, ``Z`` is the integrand of the
linear constraint ``m(Z) >= 0`` that encodes attainability at cell ``(+, a, b)``
(under uniform integrability). ``Y`` is the terminal value of three forward
positions opened at ``H_b``:

1. ``h/(a+b+h)`` units if ``I(H_b) > -a-h``, closed at ``H_{-a-h}``;
2. ``-h/(a+b)`` units if ``I(H_b) > -a``, closed at ``H_{-a}``;
3. one unit if ``I(H_b) = -a``, closed at ``H_{b+h} ^ H_{-a-h}``.

Positions still open when the walk stops settle at ``X``. ``Y <= Z`` on every
path, with equality except when ``H_-a < H_b < H_{-a-h} < H_{b+h}``.
Minus-side objects are the plus-side ones of the reflected walk.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .construct import Trajectory
from .measure import Quad, to_fraction


@dataclass(frozen=True)
class HedgeContext:
    a: int
    b: int
    h: Fraction = Fraction(1)
    side: str = "+"

    def __post_init__(self):
        if self.a < 0 or self.b < 0 or self.a + self.b == 0:
            raise ValueError(f"need a, b >= 0 and a + b > 0, got a={self.a}, b={self.b}")
        if self.side not in ("+", "-"):
            raise ValueError(f"side must be '+' or '-', got {self.side!r}")
        object.__setattr__(self, "h", to_fraction(self.h))

    def mirrored(self) -> "HedgeContext":
        """Plus-side context acting on the reflected walk."""
        return HedgeContext(self.b, self.a, self.h, "+")


def z_value(a: int, b: int, h: Fraction, q: Quad) -> Fraction:
    """Plus-side Z at the outcome ``q`` (grid units for a, b, q; result in price units)."""
    i, x, s, sigma = q
    if s < b or i <= -a - 1:
        return Fraction(0)
    z = Fraction(0)
    if i == -a:
        z += h
    # s >= b and i > -a-1 hold here
    z -= h * (b - x) / (a + b + 1)
    if i > -a:
        z += h * (b - x) / (a + b)
    if s == b and i == -a and sigma == 1:
        z -= h * (b + 1 - x)
    return z


def eval_Z_quad(ctx: HedgeContext, q: Quad) -> Fraction:
    if ctx.side == "-":
        m = ctx.mirrored()
        return z_value(m.a, m.b, m.h, q.reflect())
    return z_value(ctx.a, ctx.b, ctx.h, q)


def eval_Z(ctx: HedgeContext, traj: Trajectory) -> Fraction:
    """Z depends on the path only through (I, X, S, sigma)."""
    return eval_Z_quad(ctx, traj.quad)


def hit_order(ctx: HedgeContext, traj: Trajectory) -> dict[int, int | None]:
    """Rank of first hit of each of ``-a-1, -a, b, b+1`` (grid units); None if never."""
    if ctx.side == "-":
        return hit_order(ctx.mirrored(), traj.reflect())
    a, b = ctx.a, ctx.b
    return {lv: traj.hit_rank(lv) for lv in (-a - 1, -a, b, b + 1)}


def _y_plus(a: int, b: int, h: Fraction, traj: Trajectory) -> Fraction:
    hb = traj.hit_rank(b)
    if hb is None:
        return Fraction(0)
    entry_min = traj.min_before(hb)
    x = traj.x

    def exit_level(levels):
        hits = [(traj.hit_rank(lv), lv) for lv in levels]
        hits = [(r, lv) for r, lv in hits if r is not None and r > hb]
        return min(hits)[1] if hits else x

    y = Fraction(0)
    if entry_min > -a - 1:
        y += h * Fraction(1, a + b + 1) * (exit_level([-a - 1]) - b)
    if entry_min > -a:
        y -= h * Fraction(1, a + b) * (exit_level([-a]) - b)
    if entry_min == -a:
        y += h * (exit_level([b + 1, -a - 1]) - b)
    return y


def eval_Y(ctx: HedgeContext, traj: Trajectory) -> Fraction:
    """Terminal value of the three-position adapted strategy, price units."""
    if ctx.side == "-":
        m = ctx.mirrored()
        return _y_plus(m.a, m.b, m.h, traj.reflect())
    return _y_plus(ctx.a, ctx.b, ctx.h, traj)


def is_exceptional(ctx: HedgeContext, traj: Trajectory) -> bool:
    """Whether ``H_-a < H_b < H_{-a-h} < H_{b+h}`` (the only strict Y < Z case)."""
    r = hit_order(ctx, traj)
    a, b = (ctx.a, ctx.b) if ctx.side == "+" else (ctx.b, ctx.a)
    lo, hb, lo2, hi = r[-a], r[b], r[-a - 1], r[b + 1]
    if lo is None or hb is None or lo2 is None or not (lo < hb < lo2):
        return False
    return hi is None or lo2 < hi


# Seven orderings on {H_b < inf = H_{-a-h}}; each builder returns the list of
# extreme moves (+1 new max, -1 new min) realising the row for given (a, b).

TABLE_ROWS = (
    "H_b < H_b+h < inf = H_-a",
    "H_b < H_b+h = inf = H_-a",
    "H_-a < H_b < H_b+h < inf",
    "H_-a < H_b < H_b+h = inf",
    "H_b < H_-a < H_b+h < inf",
    "H_b < H_-a < H_b+h = inf",
    "H_b < H_b+h < H_-a < inf",
)


def row_admissible(row: int, a: int, b: int) -> bool:
    if a + b == 0:
        return False
    if row in (0, 1, 4, 5, 6):
        return a >= 1
    return b >= 1


def _row_moves(row: int, a: int, b: int, rng: random.Random) -> list[int]:
    """A random extreme sequence realising ``row``; mins stay above ``-a-1``."""
    def interleave(n_up, n_down):
        seq = [1] * n_up + [-1] * n_down
        rng.shuffle(seq)
        return seq

    if row in (0, 1):
        # never reach -a; reach b (row 0 also b+1)
        pre_down = rng.randint(0, a - 1)
        seq = interleave(b, pre_down)
        post_down = rng.randint(0, a - 1 - pre_down)
        if row == 0:
            return seq + interleave(1 + rng.randint(0, 2), post_down)
        return seq + [-1] * post_down
    if row in (2, 3):
        # -a first (with maxes below b), then b
        pre_up = rng.randint(0, b - 1)
        seq = interleave(pre_up, a) if a else [1] * pre_up
        seq += [1] * (b - pre_up)
        if row == 2:
            seq += [1] * (1 + rng.randint(0, 2))
        return seq
    if row in (4, 5):
        # b first (mins above -a), then -a, then possibly b+1
        pre_down = rng.randint(0, a - 1)
        seq = interleave(b, pre_down) + [-1] * (a - pre_down)
        if row == 4:
            seq += [1] * (1 + rng.randint(0, 2))
        return seq
    # row 6: b, then b+1, then -a
    pre_down = rng.randint(0, a - 1)
    seq = interleave(b, pre_down) + [1] * (1 + rng.randint(0, 2))
    extra = rng.randint(0, 1)
    tail = interleave(extra, a - pre_down)
    # -a must be reached by the final down move
    while tail and tail[-1] != -1:
        rng.shuffle(tail)
    return seq + tail


def row_trajectory(row: int, a: int, b: int, rng: random.Random, x: int | None = None) -> Trajectory:
    moves = _row_moves(row, a, b, rng)
    t = Trajectory.from_moves(moves, 0)
    if x is None:
        x = rng.randint(t.i, t.s)
    return Trajectory(t.extremes, x, t.sigma)


def table_formulas(row: int, a: int, b: int, h: Fraction, x: int) -> tuple[Fraction, Fraction]:
    """Closed-form (Z, Y) for each row, in price units."""
    A, Bp, X = a * h, b * h, x * h
    d1 = h * (Bp - X) / (A + Bp + h)
    if row in (0, 1):
        z = h * (Bp - X) / (A + Bp) - d1
        y = h * (X - Bp) / (A + Bp + h) - h * (X - Bp) / (A + Bp)
    elif row == 3:
        z = h - d1 + (X - Bp - h)
        y = h * (X - Bp) / (A + Bp + h) + X - Bp
    else:
        z = h - d1
        y = h * (X - Bp) / (A + Bp + h) + h
    return z, y


@dataclass(frozen=True)
class TableRow:
    row: int
    ordering: str
    instances: int
    max_abs_gap: Fraction
    formula_mismatches: int

    @property
    def ok(self) -> bool:
        return self.max_abs_gap == 0 and self.formula_mismatches == 0


@dataclass(frozen=True)
class TableReport:
    rows: tuple[TableRow, ...]
    exceptional_gaps: tuple[Fraction, ...]
    exceptional_expected: tuple[Fraction, ...]

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows) and self.exceptional_gaps == self.exceptional_expected


def verify_table(draws: int = 20, seed: int = 0, max_level: int = 6,
                 h_choices: Sequence[Fraction] = (Fraction(1), Fraction(1, 2), Fraction(3, 2), Fraction(2, 7))
                 ) -> TableReport:
    """Check Z = Y on random instances of each of the seven orderings.

    Also checks Y - Z = -(a+b+2h) on the exceptional ordering.
    """
    rng = random.Random(seed)
    rows = []
    for row, name in enumerate(TABLE_ROWS):
        worst = Fraction(0)
        mismatches = 0
        done = 0
        while done < draws:
            a, b = rng.randint(0, max_level), rng.randint(0, max_level)
            if not row_admissible(row, a, b):
                continue
            h = Fraction(rng.choice(h_choices))
            traj = row_trajectory(row, a, b, rng)
            ctx = HedgeContext(a, b, h)
            z, y = eval_Z(ctx, traj), eval_Y(ctx, traj)
            worst = max(worst, abs(z - y))
            if (z, y) != table_formulas(row, a, b, h, traj.x):
                mismatches += 1
            done += 1
        rows.append(TableRow(row + 1, name, draws, worst, mismatches))
    gaps, expected = [], []
    for _ in range(draws):
        a, b = rng.randint(0, max_level), rng.randint(1, max_level)
        h = Fraction(rng.choice(h_choices))
        moves = [-1] * a + [1] * b + [-1] + [1] * rng.randint(0, 2)
        t = Trajectory.from_moves(moves, 0)
        t = Trajectory(t.extremes, rng.randint(t.i, t.s), t.sigma)
        ctx = HedgeContext(a, b, h)
        gaps.append(eval_Y(ctx, t) - eval_Z(ctx, t))
        expected.append(-(a * h + b * h + 2 * h))
    return TableReport(tuple(rows), tuple(gaps), tuple(expected))


@dataclass(frozen=True)
class DominationReport:
    checked: int
    violations: tuple[tuple[HedgeContext, Trajectory, Fraction], ...]
    strict_gaps: int
    strict_non_exceptional: int

    @property
    def ok(self) -> bool:
        return not self.violations and self.strict_non_exceptional == 0


def contexts(max_range: int, h: Fraction = Fraction(1)) -> list[HedgeContext]:
    """Both sides, all ``0 < a + b <= max_range``."""
    return [HedgeContext(n - b, b, h, side)
            for n in range(1, max_range + 1) for b in range(n + 1) for side in ("+", "-")]


def verify_domination(ctxs: Iterable[HedgeContext],
                      trajs: Mapping[Trajectory, int] | Iterable[Trajectory]) -> DominationReport:
    """Check ``Y <= Z`` pathwise; strict gaps must come from the exceptional ordering.

    ``trajs`` may be a mapping of distinct trajectories to multiplicities;
    counts in the report are weighted by multiplicity.
    """
    weighted = trajs.items() if isinstance(trajs, Mapping) else ((t, 1) for t in trajs)
    weighted = list(weighted)
    checked = strict = strict_bad = 0
    bad = []
    for ctx in ctxs:
        for t, w in weighted:
            z, y = eval_Z(ctx, t), eval_Y(ctx, t)
            checked += w
            if y > z:
                bad.append((ctx, t, y - z))
            elif y < z:
                strict += w
                if not is_exceptional(ctx, t):
                    strict_bad += w
    return DominationReport(checked, tuple(bad), strict, strict_bad)
