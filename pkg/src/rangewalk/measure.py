"""Exact-rational laws of (minimum, terminal value, maximum, signature).

All grid values are integers in units of the grid step ``h``; probabilities are
:class:`fractions.Fraction`. A :class:`GridMeasure` is immutable and validated
on construction.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Mapping, NamedTuple, Union

RationalLike = Union[Fraction, int, str]


class RangewalkError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(RangewalkError):
    pass


class SupportError(RangewalkError):
    pass


class MassError(RangewalkError):
    pass


def to_fraction(value: RationalLike) -> Fraction:
    """Parse an exact rational from an int, Fraction or ``"num/den"`` string."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ParseError(f"not a rational: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        # Fraction() also accepts decimals and exponents; the file format does not.
        parts = text.split("/")
        if len(parts) > 2 or not all(p.strip().lstrip("+-").isdigit() for p in parts):
            raise ParseError(f"not a rational 'num/den' string: {value!r}")
        try:
            return Fraction(text)
        except (ValueError, ZeroDivisionError) as exc:
            raise ParseError(f"not a rational: {value!r}") from exc
    raise ParseError(f"not a rational: {value!r}")


def format_fraction(value: Fraction) -> str:
    return str(value)


class Quad(NamedTuple):
    """One outcome ``(I, X, S, sigma)`` in grid units."""

    i: int
    x: int
    s: int
    sigma: int

    def reflect(self) -> "Quad":
        """Image under the walk reflection ``xi -> -xi``."""
        sigma = -self.sigma
        if self.i == 0 and self.s == 0:
            sigma = -1
        return Quad(-self.s, -self.x, -self.i, sigma)


def support_problem(q: Quad) -> str | None:
    """Return a description of why ``q`` cannot be an outcome, or None."""
    if q.sigma not in (1, -1):
        return f"sigma must be +1 or -1, got {q.sigma}"
    if not (q.i <= q.x <= q.s):
        return f"need i <= x <= s, got {tuple(q)}"
    if not (q.i <= 0 <= q.s):
        return f"need i <= 0 <= s, got {tuple(q)}"
    if q.s > 0 and q.i == 0 and q.sigma != 1:
        return f"s > 0 with i = 0 forces sigma = +1, got {tuple(q)}"
    if q.i < 0 and q.s == 0 and q.sigma != -1:
        return f"i < 0 with s = 0 forces sigma = -1, got {tuple(q)}"
    if q.i == 0 and q.s == 0 and q.sigma != -1:
        return f"the origin carries sigma = -1, got {tuple(q)}"
    return None


def is_coherent(q: Quad) -> bool:
    return support_problem(q) is None


def coherent_quads(lower: int, upper: int) -> list[Quad]:
    """All coherent quads with ``i >= -lower`` and ``s <= upper``, in a fixed order."""
    out = []
    for s in range(0, upper + 1):
        for i in range(0, -lower - 1, -1):
            for x in range(i, s + 1):
                for sigma in (-1, 1):
                    q = Quad(i, x, s, sigma)
                    if is_coherent(q):
                        out.append(q)
    return out


@dataclass(frozen=True)
class GridMeasure:
    """Finitely supported probability on quads with exact rational weights.

    Zero-weight atoms are dropped; every remaining key must be coherent and
    the weights must sum to exactly one.
    """

    atoms: Mapping[Quad, Fraction] = field(compare=False)
    h: Fraction = Fraction(1)
    _items: tuple = field(init=False, repr=False, compare=True, hash=True)

    def __post_init__(self):
        h = to_fraction(self.h)
        if h <= 0:
            raise ParseError(f"grid step must be positive, got {h}")
        clean: dict[Quad, Fraction] = {}
        for key, p in dict(self.atoms).items():
            q = Quad(*(int(v) for v in key))
            p = to_fraction(p)
            problem = support_problem(q)
            if problem is not None:
                raise SupportError(problem)
            if p < 0:
                raise MassError(f"negative weight {p} at {tuple(q)}")
            if p:
                clean[q] = clean.get(q, Fraction(0)) + p
        total = sum(clean.values(), Fraction(0))
        if total != 1:
            raise MassError(f"total mass is {total}, expected 1")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "atoms", clean)
        object.__setattr__(self, "_items", tuple(sorted(clean.items())))

    def __iter__(self):
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    @cached_property
    def max_s(self) -> int:
        return max(q.s for q in self.atoms)

    @cached_property
    def min_i(self) -> int:
        return min(q.i for q in self.atoms)

    @property
    def support_range(self) -> int:
        """``max S - min I`` over the support, in grid units."""
        return self.max_s - self.min_i

    def prob(self, q: Quad) -> Fraction:
        return self.atoms.get(Quad(*q), Fraction(0))

    def mass(self, event: Callable[[Quad], bool]) -> Fraction:
        return sum((p for q, p in self._items if event(q)), Fraction(0))

    def expectation(self, f: Callable[[Quad], RationalLike],
                    event: Callable[[Quad], bool] | None = None) -> Fraction:
        """Exact ``sum f(q) m(q)``, optionally restricted to ``event``."""
        total = Fraction(0)
        for q, p in self._items:
            if event is None or event(q):
                total += to_fraction(f(q)) * p
        return total

    def reflect(self) -> "GridMeasure":
        return GridMeasure({q.reflect(): p for q, p in self._items}, self.h)

    def to_json(self) -> dict:
        return {
            "h": format_fraction(self.h),
            "atoms": [
                {"i": q.i, "x": q.x, "s": q.s, "sigma": q.sigma, "p": format_fraction(p)}
                for q, p in self._items
            ],
        }


def expectation(m: GridMeasure, f: Callable[[Quad], RationalLike]) -> Fraction:
    return m.expectation(f)


def marginal_sx(m: GridMeasure) -> dict[tuple[int, int], Fraction]:
    """Joint law of (S, X), summing out I and sigma."""
    out: dict[tuple[int, int], Fraction] = {}
    for q, p in m:
        out[(q.s, q.x)] = out.get((q.s, q.x), Fraction(0)) + p
    return out


def point_mass() -> GridMeasure:
    """Law of the stopping time T = 0."""
    return GridMeasure({Quad(0, 0, 0, -1): Fraction(1)})


def two_barrier_m0() -> GridMeasure:
    """Exact law of the exit time of (-1, 2) with h = 1."""
    return GridMeasure({
        Quad(-1, -1, 0, -1): Fraction(1, 2),
        Quad(-1, -1, 1, -1): Fraction(1, 6),
        Quad(0, 2, 2, 1): Fraction(1, 3),
    })


def _int_field(atom: dict, key: str) -> int:
    value = atom.get(key)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"atom field {key!r} must be an integer, got {value!r}")
    return value


def measure_from_json(data: dict) -> GridMeasure:
    if not isinstance(data, dict) or "atoms" not in data:
        raise ParseError("measure JSON must be an object with an 'atoms' list")
    h = to_fraction(data.get("h", "1"))
    atoms: dict[Quad, Fraction] = {}
    if not isinstance(data["atoms"], list):
        raise ParseError("'atoms' must be a list")
    for atom in data["atoms"]:
        if not isinstance(atom, dict):
            raise ParseError(f"atom must be an object, got {atom!r}")
        q = Quad(*(_int_field(atom, k) for k in ("i", "x", "s", "sigma")))
        if q in atoms:
            raise ParseError(f"duplicate quad {tuple(q)}")
        atoms[q] = to_fraction(atom.get("p"))
    return GridMeasure(atoms, h)


def load_json(path: str | os.PathLike) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc


def load_measure(path: str | os.PathLike) -> GridMeasure:
    return measure_from_json(load_json(path))


def write_text_atomic(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary file and rename, so no partial file is left behind."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(data, path: str | os.PathLike) -> None:
    write_text_atomic(path, json.dumps(data, indent=2) + "\n")


def save_measure(m: GridMeasure, path: str | os.PathLike) -> None:
    dump_json(m.to_json(), path)


def sx_from_json(data: dict) -> dict[tuple[int, int], Fraction]:
    """Parse an (S, X) marginal file: ``{"atoms": [{"s": 1, "x": 1, "p": "1"}]}``."""
    if not isinstance(data, dict) or not isinstance(data.get("atoms"), list):
        raise ParseError("marginal JSON must be an object with an 'atoms' list")
    out: dict[tuple[int, int], Fraction] = {}
    for atom in data["atoms"]:
        key = (_int_field(atom, "s"), _int_field(atom, "x"))
        if key in out:
            raise ParseError(f"duplicate (s, x) pair {key}")
        if key[0] < max(key[1], 0):
            raise SupportError(f"need s >= max(x, 0), got (s, x) = {key}")
        out[key] = to_fraction(atom.get("p"))
    total = sum(out.values(), Fraction(0))
    if total != 1 or any(p < 0 for p in out.values()):
        raise MassError(f"marginal must be a probability, total mass {total}")
    return out


def sx_to_json(mu: Mapping[tuple[int, int], Fraction]) -> dict:
    return {"atoms": [{"s": s, "x": x, "p": format_fraction(p)}
                      for (s, x), p in sorted(mu.items())]}


def random_measure(rng, max_range: int = 4, n_atoms: int | None = None,
                   max_weight: int = 12) -> GridMeasure:
    """A random coherent measure; used by property tests. Not necessarily consistent."""
    lower = rng.randint(0, max_range)
    upper = rng.randint(0, max_range - lower)
    pool = coherent_quads(lower, upper)
    k = n_atoms or rng.randint(1, min(6, len(pool)))
    chosen = rng.sample(pool, min(k, len(pool)))
    weights = [rng.randint(1, max_weight) for _ in chosen]
    total = sum(weights)
    return GridMeasure({q: Fraction(w, total) for q, w in zip(chosen, weights)})
