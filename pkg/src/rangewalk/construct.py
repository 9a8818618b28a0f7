"""Randomised stopping rules that attain a consistent law, and their samplers.

The walk is tracked only through its *cells*: a cell ``(side, a, b)`` means the
running maximum is ``b``, the running minimum is ``-a`` and ``side`` says which
of the two was set last. From a cell the walk either stops (with the terminal
value drawn from a conditional law on ``[-a, b]``), sets a new maximum
``b + 1`` or sets a new minimum ``-a - 1``. Within a cell no intermediate path
is produced; the law of (I, X, S, sigma) is unaffected.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .consistency import SIGN, Side, _cell_numbers, _tables, check_consistent
from .measure import GridMeasure, Quad, RangewalkError, format_fraction, to_fraction


class InconsistentMeasure(RangewalkError):
    pass


class LeakageError(RangewalkError):
    pass


class NonTermination(RangewalkError):
    pass


Cell = tuple  # (side, a, b)


@dataclass(frozen=True)
class CellRule:
    stop: Fraction
    up: Fraction
    down: Fraction
    x_law: Mapping[int, Fraction]


def natural_split(side: Side, a: int, b: int) -> tuple[Fraction, Fraction]:
    """(up, down) for a cell that never stops: exit of ``(-a-1, b+1)`` from the entry level."""
    n = a + b + 2
    if side == "+":
        return Fraction(a + b + 1, n), Fraction(1, n)
    return Fraction(1, n), Fraction(a + b + 1, n)


@dataclass(frozen=True)
class StoppingRule:
    """Per-cell stop/up/down probabilities and conditional terminal laws.

    Cells missing from ``cells`` continue with the natural split and never stop.
    """

    origin_stop: Fraction
    cells: Mapping[Cell, CellRule]
    h: Fraction = Fraction(1)
    support_range: int = 0

    def cell(self, side: Side, a: int, b: int) -> CellRule:
        rule = self.cells.get((side, a, b))
        if rule is None:
            up, down = natural_split(side, a, b)
            return CellRule(Fraction(0), up, down, {})
        return rule

    def to_json(self) -> dict:
        return {
            "h": format_fraction(self.h),
            "support_range": self.support_range,
            "origin_stop": format_fraction(self.origin_stop),
            "cells": [
                {
                    "side": side, "a": a, "b": b,
                    "stop": format_fraction(c.stop),
                    "up": format_fraction(c.up),
                    "down": format_fraction(c.down),
                    "x_law": {str(x): format_fraction(p) for x, p in sorted(c.x_law.items())},
                }
                for (side, a, b), c in sorted(self.cells.items(), key=lambda kv: (kv[0][1] + kv[0][2], kv[0]))
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "StoppingRule":
        cells = {}
        for c in data["cells"]:
            cells[(c["side"], int(c["a"]), int(c["b"]))] = CellRule(
                to_fraction(c["stop"]), to_fraction(c["up"]), to_fraction(c["down"]),
                {int(x): to_fraction(p) for x, p in c["x_law"].items()},
            )
        return cls(to_fraction(data["origin_stop"]), cells, to_fraction(data.get("h", "1")),
                   int(data.get("support_range", 0)))


def _cell_rule(side: Side, a: int, b: int, ps: Fraction, p0: Fraction, fx: Fraction,
               atoms: Mapping[int, Fraction]) -> CellRule:
    if ps == 0:
        up, down = natural_split(side, a, b)
        return CellRule(Fraction(0), up, down, {})
    n = a + b + 2
    stop = p0 / ps
    # v * stop = fx / ps keeps the formulas division-free in v
    if side == "+":
        up = ((a + b + 1) * ps - (a + 1) * p0 - fx) / (n * ps)
        down = (ps - (b + 1) * p0 + fx) / (n * ps)
    else:
        down = ((a + b + 1) * ps - (b + 1) * p0 + fx) / (n * ps)
        up = (ps - (a + 1) * p0 - fx) / (n * ps)
    x_law = {x: p / p0 for x, p in sorted(atoms.items())} if p0 else {}
    return CellRule(stop, up, down, x_law)


def cell_reach(rule: StoppingRule, max_range: int | None = None
               ) -> tuple[dict[Cell, Fraction], dict[Quad, Fraction]]:
    """Exact forward pass through the cell chain.

    Returns the probability of entering each cell and the absorbed law. The
    range grows by one at every transition, so the chain is acyclic in range.
    """
    limit = max_range if max_range is not None else rule.support_range + 1
    law: dict[Quad, Fraction] = {}
    if rule.origin_stop:
        law[Quad(0, 0, 0, -1)] = rule.origin_stop
    go = 1 - rule.origin_stop
    frontier: dict[Cell, Fraction] = {}
    if go:
        frontier = {("+", 0, 1): go / 2, ("-", 1, 0): go / 2}
    reach: dict[Cell, Fraction] = {}
    n = 1
    while frontier:
        if n > limit:
            raise LeakageError(f"mass {sum(frontier.values())} still moving at range {n}")
        nxt: dict[Cell, Fraction] = {}
        for (side, a, b), r in sorted(frontier.items()):
            reach[(side, a, b)] = r
            c = rule.cell(side, a, b)
            if c.stop:
                for x, px in c.x_law.items():
                    q = Quad(-a, x, b, SIGN[side])
                    law[q] = law.get(q, Fraction(0)) + r * c.stop * px
            if c.up:
                key = ("+", a, b + 1)
                nxt[key] = nxt.get(key, Fraction(0)) + r * c.up
            if c.down:
                key = ("-", a + 1, b)
                nxt[key] = nxt.get(key, Fraction(0)) + r * c.down
        frontier = {k: v for k, v in nxt.items() if v}
        n += 1
    return reach, law


def derive_rule(m: GridMeasure, verify: bool = True) -> StoppingRule:
    """Build the cell-chain stopping rule whose stopped law is exactly ``m``.

    Cells within range ``R + 1`` are tabulated. Stop probability is
    ``p0 / psi``; the continuation split solves the two optional-sampling
    equations at the exit of ``(-a-1, b+1)``. Raises :class:`InconsistentMeasure`
    if ``m`` fails the consistency check.
    """
    report = check_consistent(m)
    if not report.consistent:
        v = report.violations[0]
        raise InconsistentMeasure(
            f"{len(report.violations)} violated cell(s); first at side {v.side}, "
            f"a={v.a}, b={v.b}: {v.lhs} > {v.rhs}")
    t = _tables(m)
    by_cell: dict[Cell, dict[int, Fraction]] = {}
    for q, p in m:
        if q.i == 0 and q.s == 0:
            continue
        side = "+" if q.sigma == 1 else "-"
        by_cell.setdefault((side, -q.i, q.s), {})[q.x] = p
    cells = {}
    top = m.support_range + 1
    for n in range(1, top + 1):
        for b in range(n + 1):
            a = n - b
            for side in ("+", "-"):
                if (side == "+" and b == 0) or (side == "-" and a == 0):
                    continue
                ps, p0, fx, _ = _cell_numbers(t, side, a, b)
                cells[(side, a, b)] = _cell_rule(side, a, b, ps, p0, fx, by_cell.get((side, a, b), {}))
    rule = StoppingRule(t.origin, cells, m.h, m.support_range)
    if verify:
        for key, c in cells.items():
            if min(c.stop, c.up, c.down) < 0 or c.stop + c.up + c.down != 1:
                raise LeakageError(f"cell {key} split is not a probability: {c}")
        reach, law = cell_reach(rule)
        for (side, a, b), r in reach.items():
            expected = t.psi(side, a, b)
            if r != expected:
                raise LeakageError(f"reach of cell {(side, a, b)} is {r}, expected {expected}")
        absorbed = sum(law.values(), Fraction(0))
        if absorbed != 1:
            raise LeakageError(f"absorbed mass {absorbed} != 1")
    return rule


@dataclass(frozen=True)
class Trajectory:
    """Sequence of new-extreme levels (grid units), terminal value and signature.

    Each entry of ``extremes`` is either one above the running max or one
    below the running min.
    """

    extremes: tuple[int, ...]
    x: int
    sigma: int

    def __post_init__(self):
        s = i = 0
        for level in self.extremes:
            if level == s + 1:
                s = level
            elif level == i - 1:
                i = level
            else:
                raise ValueError(f"extreme {level} does not extend the range [{i}, {s}]")
        if not (i <= self.x <= s):
            raise ValueError(f"terminal value {self.x} outside [{i}, {s}]")
        expected = -1 if not self.extremes or self.extremes[-1] < 0 else 1
        if self.sigma != expected:
            raise ValueError(f"signature {self.sigma} disagrees with the last extreme")

    @classmethod
    def from_moves(cls, moves: Iterable[int], x: int) -> "Trajectory":
        """Build from a sequence of +1 (new max) / -1 (new min) moves."""
        s = i = 0
        levels = []
        for mv in moves:
            if mv > 0:
                s += 1
                levels.append(s)
            else:
                i -= 1
                levels.append(i)
        sigma = 1 if levels and levels[-1] > 0 else -1
        return cls(tuple(levels), x, sigma)

    @property
    def s(self) -> int:
        return max((lv for lv in self.extremes if lv > 0), default=0)

    @property
    def i(self) -> int:
        return min((lv for lv in self.extremes if lv < 0), default=0)

    @property
    def quad(self) -> Quad:
        return Quad(self.i, self.x, self.s, self.sigma)

    def hit_rank(self, level: int) -> int | None:
        """Order in which ``level`` is first reached (0 for the start), None if never."""
        if level == 0:
            return 0
        try:
            return self.extremes.index(level) + 1
        except ValueError:
            return None

    def min_before(self, rank: int) -> int:
        """Running minimum just after the ``rank``-th extreme."""
        return min((lv for lv in self.extremes[:rank] if lv < 0), default=0)

    def max_before(self, rank: int) -> int:
        return max((lv for lv in self.extremes[:rank] if lv > 0), default=0)

    def reflect(self) -> "Trajectory":
        sigma = -self.sigma if self.extremes else -1
        return Trajectory(tuple(-lv for lv in self.extremes), -self.x, sigma)


# Sampling. Trajectory k uses lane k % BLOCK of block k // BLOCK; block j has
# its own Philox stream seeded from SeedSequence(seed, spawn_key=(j,)), and each
# step draws a full (BLOCK, 2) array, so a path depends only on (seed, k).
BLOCK = 4096


@dataclass
class TrajectoryBatch:
    """Columnar sample: ``moves[k, :length[k]]`` are the +1/-1 extreme moves."""

    i: np.ndarray
    x: np.ndarray
    s: np.ndarray
    sigma: np.ndarray
    moves: np.ndarray
    length: np.ndarray

    def __len__(self) -> int:
        return len(self.x)

    def trajectory(self, k: int) -> Trajectory:
        return Trajectory.from_moves(self.moves[k, : self.length[k]].tolist(), int(self.x[k]))

    def trajectories(self) -> list[Trajectory]:
        return [self.trajectory(k) for k in range(len(self))]

    def unique(self) -> dict[Trajectory, int]:
        """Distinct trajectories with their multiplicities."""
        keys = np.concatenate(
            [self.moves.astype(np.int64), self.length[:, None], self.x[:, None]],
            axis=1)
        rows, first, counts = np.unique(keys, axis=0, return_index=True, return_counts=True)
        return {self.trajectory(int(k)): int(c) for k, c in zip(first, counts)}

    def quad_counts(self) -> dict[Quad, int]:
        keys = np.stack([self.i, self.x, self.s, self.sigma], axis=1)
        rows, counts = np.unique(keys, axis=0, return_counts=True)
        return {Quad(*map(int, r)): int(c) for r, c in zip(rows, counts)}


class _RuleArrays:
    def __init__(self, rule: StoppingRule, cap: int):
        size = cap + 2
        self.cdf_move = np.zeros((2, size, size, 2))
        self.x_cdf = np.ones((2, size, size, size))
        self.x_vals = np.zeros((2, size, size, size), dtype=np.int64)
        self.origin_stop = float(rule.origin_stop)
        for si, side in enumerate(("+", "-")):
            for a in range(size):
                for b in range(size - a):
                    if (side == "+" and b == 0) or (side == "-" and a == 0):
                        continue
                    c = rule.cell(side, a, b)
                    self.cdf_move[si, a, b] = (float(c.stop), float(c.stop + c.up))
                    xs = sorted(c.x_law)
                    if xs:
                        cum = np.cumsum([float(c.x_law[x]) for x in xs])
                        cum[-1] = 1.0
                        self.x_cdf[si, a, b, : len(xs)] = cum
                        self.x_vals[si, a, b, : len(xs)] = xs
                        self.x_vals[si, a, b, len(xs):] = xs[-1]


def _sample_block(arr: _RuleArrays, seed: int, block: int, n: int, cap: int):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))
    u = rng.random((BLOCK, 2))[:n]
    i = np.zeros(n, dtype=np.int64)
    s = np.zeros(n, dtype=np.int64)
    x = np.zeros(n, dtype=np.int64)
    sigma = np.full(n, -1, dtype=np.int64)
    moves = np.zeros((n, cap), dtype=np.int8)
    length = np.zeros(n, dtype=np.int64)
    active = u[:, 0] >= arr.origin_stop
    first = np.where(u[:, 1] < 0.5, 1, -1)
    side = np.zeros(n, dtype=np.int64)  # 0 = "+", 1 = "-"
    idx = np.nonzero(active)[0]
    up = first[idx] == 1
    s[idx[up]] = 1
    i[idx[~up]] = -1
    side[idx] = np.where(up, 0, 1)
    sigma[idx] = np.where(up, 1, -1)
    moves[idx, 0] = first[idx]
    length[idx] = 1
    rng_range = 1
    while idx.size:
        u = rng.random((BLOCK, 2))[:n]
        ui = u[idx]
        a_now, b_now, sd = -i[idx], s[idx], side[idx]
        cdf = arr.cdf_move[sd, a_now, b_now]
        stop = ui[:, 0] < cdf[:, 0]
        go_up = ~stop & (ui[:, 0] < cdf[:, 1])
        go_down = ~stop & ~go_up
        if stop.any():
            k = idx[stop]
            xc = arr.x_cdf[sd[stop], a_now[stop], b_now[stop]]
            pick = (ui[stop, 1][:, None] >= xc).sum(axis=1)
            x[k] = arr.x_vals[sd[stop], a_now[stop], b_now[stop], np.minimum(pick, xc.shape[1] - 1)]
        if not (go_up.any() or go_down.any()):
            break
        rng_range += 1
        if rng_range > cap:
            raise NonTermination(f"a trajectory exceeded the range cap {cap}")
        for mask, mv in ((go_up, 1), (go_down, -1)):
            k = idx[mask]
            if mv == 1:
                s[k] += 1
                side[k] = 0
            else:
                i[k] -= 1
                side[k] = 1
            sigma[k] = mv
            moves[k, length[k]] = mv
            length[k] += 1
        idx = idx[~stop]
    return i, x, s, sigma, moves, length


def default_cap(rule: StoppingRule) -> int:
    return rule.support_range + 8


def sample_batch(rule: StoppingRule, n: int, seed: int = 0, cap: int | None = None,
                 workers: int = 1) -> TrajectoryBatch:
    """Draw ``n`` trajectories of the cell chain; deterministic in ``(seed, k)``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    cap = default_cap(rule) if cap is None else cap
    arr = _RuleArrays(rule, cap)
    blocks = [(j, min(BLOCK, n - j * BLOCK)) for j in range(-(-n // BLOCK))]

    def run(job):
        return _sample_block(arr, seed, job[0], job[1], cap)

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(job) for job in blocks]
    if not parts:
        empty = np.zeros(0, dtype=np.int64)
        return TrajectoryBatch(empty, empty, empty, empty, np.zeros((0, cap), dtype=np.int8), empty)
    cols = [np.concatenate([p[c] for p in parts]) for c in range(6)]
    return TrajectoryBatch(*cols)


def sample(rule: StoppingRule, n: int, seed: int = 0, cap: int | None = None) -> list[Trajectory]:
    return sample_batch(rule, n, seed, cap).trajectories()


def empirical_law(trajs: TrajectoryBatch | Sequence[Trajectory], h: Fraction = Fraction(1)) -> GridMeasure:
    """Exact frequency table of the sampled quads."""
    if isinstance(trajs, TrajectoryBatch):
        counts = trajs.quad_counts()
    else:
        counts = {}
        for t in trajs:
            counts[t.quad] = counts.get(t.quad, 0) + 1
    n = sum(counts.values())
    if n == 0:
        raise ValueError("no trajectories")
    return GridMeasure({q: Fraction(c, n) for q, c in counts.items()}, h)


def tv_distance(p: GridMeasure, q: GridMeasure) -> float:
    keys = set(p.atoms) | set(q.atoms)
    return float(sum((abs(p.prob(k) - q.prob(k)) for k in keys), Fraction(0)) / 2)
