"""Group arithmetic for the supported families.

Elements are plain hashable tuples in a family-specific canonical form,
so that two encodings are equal iff the group elements are equal:

* ``Z^d``            -- tuple of ``d`` ints.
* ``heisenberg``     -- ``(x, y, z)`` with the normal form
                        ``(x,y,z)*(x',y',z') = (x+x', y+y', z+z'+x*y')``.
* ``free:k``         -- fully reduced word as a tuple of nonzero letters in
                        ``{-k..-1, 1..k}`` (negative = inverse letter).
* ``lamplighter:m``  -- ``(cursor, lamps)`` with ``lamps`` a sorted tuple of
                        ``(position, value)`` pairs, values in ``1..m-1``.
* ``wreathZZ``       -- same shape, values nonzero ints (Z-valued lamps).

Lamp maps never store zero values, so equality is literal tuple equality.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .errors import ConfigError, GroupError

Element = tuple


class Family(Enum):
    FREE_ABELIAN = "free_abelian"
    HEISENBERG = "heisenberg"
    FREE = "free"
    LAMPLIGHTER = "lamplighter"
    WREATH_ZZ = "wreath_zz"


def _merge_lamps(base: dict, updates: Iterable[tuple[int, int]], shift: int, mod: int) -> tuple:
    for pos, val in updates:
        q = pos + shift
        v = base.get(q, 0) + val
        if mod:
            v %= mod
        if v:
            base[q] = v
        else:
            base.pop(q, None)
    return tuple(sorted(base.items()))


@dataclass(frozen=True)
class GroupSpec:
    """A supported group together with its standard symmetric generating set."""

    family: Family
    rank: int = 0  # d for Z^d, k for free:k, m for lamplighter:m; unused otherwise

    def __post_init__(self):
        if self.family is Family.FREE_ABELIAN and self.rank < 1:
            raise ConfigError("Z^d needs d >= 1")
        if self.family is Family.FREE and self.rank < 1:
            raise ConfigError("free:k needs k >= 1")
        if self.family is Family.LAMPLIGHTER and self.rank < 2:
            raise ConfigError("lamplighter:m needs m >= 2")

    # ---------------------------------------------------------- basics
    def name(self) -> str:
        f = self.family
        if f is Family.FREE_ABELIAN:
            return f"Z^{self.rank}"
        if f is Family.HEISENBERG:
            return "heisenberg"
        if f is Family.FREE:
            return f"free:{self.rank}"
        if f is Family.LAMPLIGHTER:
            return f"lamplighter:{self.rank}"
        return "wreathZZ"

    def identity(self) -> Element:
        f = self.family
        if f is Family.FREE_ABELIAN:
            return (0,) * self.rank
        if f is Family.HEISENBERG:
            return (0, 0, 0)
        if f is Family.FREE:
            return ()
        return (0, ())

    def generators(self) -> tuple[Element, ...]:
        """Standard symmetric generating set, in a fixed deterministic order."""
        f = self.family
        if f is Family.FREE_ABELIAN:
            gens = []
            for i in range(self.rank):
                e = [0] * self.rank
                e[i] = 1
                gens.append(tuple(e))
                e2 = [0] * self.rank
                e2[i] = -1
                gens.append(tuple(e2))
            return tuple(gens)
        if f is Family.HEISENBERG:
            return ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0))
        if f is Family.FREE:
            gens = []
            for i in range(1, self.rank + 1):
                gens.append((i,))
                gens.append((-i,))
            return tuple(gens)
        if f is Family.LAMPLIGHTER:
            m = self.rank
            gens = [(1, ()), (-1, ()), (0, ((0, 1),))]
            if m > 2:  # for m == 2 the lamp toggle is its own inverse
                gens.append((0, ((0, m - 1),)))
            return tuple(gens)
        return ((1, ()), (-1, ()), (0, ((0, 1),)), (0, ((0, -1),)))

    # ---------------------------------------------------------- validation
    def validate(self, g: Element) -> None:
        """Raise GroupError unless ``g`` has this family's canonical shape."""
        f = self.family
        try:
            if f is Family.FREE_ABELIAN:
                ok = len(g) == self.rank and all(isinstance(c, int) for c in g)
            elif f is Family.HEISENBERG:
                ok = len(g) == 3 and all(isinstance(c, int) for c in g)
            elif f is Family.FREE:
                ok = all(isinstance(c, int) and c != 0 and abs(c) <= self.rank for c in g)
                ok = ok and all(g[i] != -g[i + 1] for i in range(len(g) - 1))
            else:
                cursor, lamps = g
                ok = isinstance(cursor, int)
                ok = ok and list(lamps) == sorted(lamps)
                for pos, val in lamps:
                    if f is Family.LAMPLIGHTER:
                        ok = ok and 1 <= val < self.rank
                    else:
                        ok = ok and val != 0
                    ok = ok and isinstance(pos, int)
        except (TypeError, ValueError):
            ok = False
        if not ok:
            raise GroupError(f"not a canonical {self.name()} element: {g!r}")

    # ---------------------------------------------------------- group law
    def mul(self, a: Element, b: Element) -> Element:
        f = self.family
        if f is Family.FREE_ABELIAN:
            if len(a) != len(b):
                raise GroupError("mismatched elements")
            return tuple(x + y for x, y in zip(a, b))
        if f is Family.HEISENBERG:
            return (a[0] + b[0], a[1] + b[1], a[2] + b[2] + a[0] * b[1])
        if f is Family.FREE:
            word = list(a)
            for c in b:
                if word and word[-1] == -c:
                    word.pop()
                else:
                    word.append(c)
            return tuple(word)
        mod = self.rank if f is Family.LAMPLIGHTER else 0
        lamps = _merge_lamps(dict(a[1]), b[1], a[0], mod)
        return (a[0] + b[0], lamps)

    def inv(self, a: Element) -> Element:
        f = self.family
        if f is Family.FREE_ABELIAN:
            return tuple(-x for x in a)
        if f is Family.HEISENBERG:
            x, y, z = a
            return (-x, -y, -z + x * y)
        if f is Family.FREE:
            return tuple(-c for c in reversed(a))
        mod = self.rank if f is Family.LAMPLIGHTER else 0
        cursor, lamps = a
        inv_lamps = []
        for pos, val in lamps:
            v = (mod - val) % mod if mod else -val
            inv_lamps.append((pos - cursor, v))
        return (-cursor, tuple(sorted(inv_lamps)))

    # ---------------------------------------------------------- metric helpers
    def word_length_closed(self, g: Element) -> int | None:
        """Exact word length when a closed form exists, else None.

        Z^d: l1 norm. free:k: reduced word length. Lamplighter / wreathZZ:
        lamp switching cost plus the optimal line travel that visits every
        lit site and ends at the cursor (validated against BFS in tests).
        Heisenberg has no simple closed form here; use a BallTable.
        """
        f = self.family
        if f is Family.FREE_ABELIAN:
            return sum(abs(c) for c in g)
        if f is Family.FREE:
            return len(g)
        if f is Family.HEISENBERG:
            return None
        cursor, lamps = g
        if f is Family.LAMPLIGHTER:
            m = self.rank
            lamp_cost = sum(min(v, m - v) for _, v in lamps)
        else:
            lamp_cost = sum(abs(v) for _, v in lamps)
        positions = [p for p, _ in lamps]
        lo = min(positions + [0, cursor]) if positions else min(0, cursor)
        hi = max(positions + [0, cursor]) if positions else max(0, cursor)
        travel = (hi - lo) + min((0 - lo) + (hi - cursor), (hi - 0) + (cursor - lo))
        return lamp_cost + travel

    # ---------------------------------------------------------- misc
    def random_element(self, rng, length: int) -> Element:
        """Product of ``length`` uniformly random generators (seeded rng)."""
        gens = self.generators()
        g = self.identity()
        for _ in range(length):
            g = self.mul(g, gens[rng.integers(len(gens))])
        return g

    def element_to_bytes(self, g: Element) -> bytes:
        f = self.family
        if f in (Family.FREE_ABELIAN, Family.HEISENBERG):
            return struct.pack(f">{len(g)}i", *g)
        if f is Family.FREE:
            return struct.pack(f">{len(g)}b", *g)
        cursor, lamps = g
        flat = [cursor]
        for pos, val in lamps:
            flat.extend((pos, val))
        return struct.pack(f">{len(flat)}i", *flat)

    def element_from_bytes(self, raw: bytes) -> Element:
        f = self.family
        if f in (Family.FREE_ABELIAN, Family.HEISENBERG):
            return tuple(struct.unpack(f">{len(raw) // 4}i", raw))
        if f is Family.FREE:
            return tuple(struct.unpack(f">{len(raw)}b", raw))
        flat = struct.unpack(f">{len(raw) // 4}i", raw)
        cursor = flat[0]
        lamps = tuple((flat[i], flat[i + 1]) for i in range(1, len(flat), 2))
        return (cursor, lamps)


def parse_group(text: str) -> GroupSpec:
    """Parse a CLI group string: Z^d | heisenberg | free:k | lamplighter:m | wreathZZ."""
    s = text.strip()
    try:
        if s.lower() in ("heisenberg", "heis"):
            return GroupSpec(Family.HEISENBERG)
        if s.lower() in ("wreathzz", "zwrz"):
            return GroupSpec(Family.WREATH_ZZ)
        if s.upper().startswith("Z^"):
            return GroupSpec(Family.FREE_ABELIAN, int(s[2:]))
        if s.upper() == "Z":
            return GroupSpec(Family.FREE_ABELIAN, 1)
        if s.lower().startswith("free:"):
            return GroupSpec(Family.FREE, int(s.split(":", 1)[1]))
        if s.lower().startswith("lamplighter:"):
            return GroupSpec(Family.LAMPLIGHTER, int(s.split(":", 1)[1]))
    except ValueError as exc:
        raise ConfigError(f"bad group string {text!r}: {exc}") from exc
    raise ConfigError(f"unknown group {text!r} (expected Z^d, heisenberg, free:k, "
                      f"lamplighter:m, or wreathZZ)")


ALL_FAMILY_STRINGS = ("Z^2", "heisenberg", "free:2", "lamplighter:2", "wreathZZ")
