"""Word lengths and ball sizes by breadth-first search over the generators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, GroupError
from .groups import Element, GroupSpec

# rough per-element bookkeeping cost of the BFS dict, used for budget checks
_BYTES_PER_ELEMENT = 200


@dataclass
class BallTable:
    """Word lengths |g| and ball sizes |B_0..B_r| from a BFS out of e.

    ``growth_log[n]`` is ln|B_n|. Immutable after construction; safe to share.
    """

    spec: GroupSpec
    radius_max: int
    word_length: dict[Element, int]
    ball_sizes: list[int]
    spheres: list[list[Element]] = field(repr=False)

    @property
    def growth_log(self) -> np.ndarray:
        return np.log(np.asarray(self.ball_sizes, dtype=float))

    def length(self, g: Element) -> int:
        try:
            return self.word_length[g]
        except KeyError:
            raise GroupError(f"element outside ball of radius {self.radius_max}: {g!r}")

    def __contains__(self, g: Element) -> bool:
        return g in self.word_length

    def sphere(self, r: int) -> list[Element]:
        return self.spheres[r]


def compute_ball(spec: GroupSpec, radius: int, memory_budget: int = 4 << 30) -> BallTable:
    """Exact BFS ball of the given radius.

    Deterministic: the frontier is expanded in insertion order with the fixed
    generator order. Raises BudgetError (with the reached radius) when the
    projected table size would exceed ``memory_budget`` bytes.
    """
    if radius < 0:
        raise GroupError("radius must be >= 0")
    gens = spec.generators()
    e = spec.identity()
    dist: dict[Element, int] = {e: 0}
    spheres: list[list[Element]] = [[e]]
    sizes = [1]
    frontier = [e]
    for r in range(1, radius + 1):
        grow = len(frontier) * len(gens)
        if (len(dist) + grow) * _BYTES_PER_ELEMENT > memory_budget:
            raise BudgetError(
                f"ball of {spec.name()} exceeds memory budget at radius {r} "
                f"(completed radius {r - 1})", reached=r - 1)
        nxt = []
        for g in frontier:
            for s in gens:
                h = spec.mul(g, s)
                if h not in dist:
                    dist[h] = r
                    nxt.append(h)
        frontier = nxt
        spheres.append(nxt)
        sizes.append(len(dist))
    return BallTable(spec, radius, dist, sizes, spheres)
