"""Finitely supported probability measures and exact sparse convolution.

Two value modes share one class: float (the working pipeline, Kahan-summed)
and exact rationals (``fractions.Fraction``, the oracle pipeline).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import GroupError, TraceError
from .groups import Element, GroupSpec

MASS_TOL_PER_STEP = 1e-14
SYMMETRY_TOL = 1e-13


@dataclass
class SparseMeasure:
    """Probability measure as a map element -> probability (> 0).

    ``exact`` selects Fraction values; ``dropped_mass`` tracks mass removed
    by optional pruning so downstream checks can widen their tolerances.
    """

    spec: GroupSpec
    probs: dict
    step: int = 0
    exact: bool = False
    dropped_mass: float = 0.0

    def mass(self):
        if self.exact:
            return sum(self.probs.values())
        return float(np.sum(np.fromiter(self.probs.values(), dtype=float)))

    def atom(self, g: Element):
        return self.probs.get(g, Fraction(0) if self.exact else 0.0)

    @property
    def support_size(self) -> int:
        return len(self.probs)

    def items(self):
        return self.probs.items()

    def prob_values(self) -> np.ndarray:
        return np.fromiter(self.probs.values(), dtype=float, count=len(self.probs))

    def to_float(self) -> "SparseMeasure":
        if not self.exact:
            return self
        return SparseMeasure(self.spec, {g: float(p) for g, p in self.probs.items()},
                             self.step, False, self.dropped_mass)

    def to_sparse(self) -> "SparseMeasure":
        return self


def delta(spec: GroupSpec, g: Element | None = None, exact: bool = False) -> SparseMeasure:
    g = spec.identity() if g is None else g
    one = Fraction(1) if exact else 1.0
    return SparseMeasure(spec, {g: one}, 0, exact)


def lazy_step_measure(spec: GroupSpec, exact: bool = False,
                      laziness: Fraction = Fraction(1, 2)) -> SparseMeasure:
    """The lazy step: ``laziness`` at e, the rest split uniformly over S."""
    if not 0 < laziness < 1:
        raise GroupError("laziness must lie strictly between 0 and 1")
    gens = spec.generators()
    stay = Fraction(laziness)
    move = (1 - stay) / len(gens)
    probs = {spec.identity(): stay}
    for s in gens:
        probs[s] = move
    if not exact:
        probs = {g: float(p) for g, p in probs.items()}
    return SparseMeasure(spec, probs, 1, exact)


def convolve(mu: SparseMeasure, step: SparseMeasure,
             prune_below: float | None = None) -> SparseMeasure:
    """Right convolution ``(mu * step)(x) = sum_y mu(y) step(y^-1 x)``.

    Implemented as a scatter over ``x = y * s``. Float mode accumulates with
    Kahan compensation per atom; rational mode is exact. Optional pruning
    drops atoms below the threshold and accounts for them in dropped_mass.
    """
    if mu.spec != step.spec:
        raise GroupError("convolve needs measures on the same group")
    if mu.exact != step.exact:
        raise GroupError("convolve cannot mix exact and float measures")
    spec = mu.spec
    mul = spec.mul
    if mu.exact:
        acc: dict = {}
        for y, p in mu.probs.items():
            for s, q in step.probs.items():
                x = mul(y, s)
                acc[x] = acc.get(x, Fraction(0)) + p * q
        return SparseMeasure(spec, acc, mu.step + step.step, True)

    sums: dict = {}
    comps: dict = {}
    for y, p in mu.probs.items():
        for s, q in step.probs.items():
            x = mul(y, s)
            v = p * q - comps.get(x, 0.0)
            old = sums.get(x, 0.0)
            t = old + v
            comps[x] = (t - old) - v
            sums[x] = t
    dropped = mu.dropped_mass + step.dropped_mass
    if prune_below:
        kept = {}
        for g, p in sums.items():
            if p >= prune_below:
                kept[g] = p
            else:
                dropped += p
        sums = kept
    return SparseMeasure(spec, sums, mu.step + step.step, False, dropped)


def power(spec: GroupSpec, n: int, exact: bool = False,
          laziness: Fraction = Fraction(1, 2)) -> SparseMeasure:
    """n-fold convolution of the lazy step (small n; see walks for the engines)."""
    mu = delta(spec, exact=exact)
    if n == 0:
        return mu
    step = lazy_step_measure(spec, exact=exact, laziness=laziness)
    for _ in range(n):
        mu = convolve(mu, step)
    mu.step = n
    return mu


def check_measure(mu: SparseMeasure, ball=None, sample_symmetry: int = 200) -> None:
    """Validate the SparseMeasure invariants; raise TraceError on failure.

    Checks positivity, total mass (exact in rational mode, within
    ``step * 1e-14`` plus dropped mass in float mode), inversion symmetry on
    a deterministic sample, and support containment in B_step when a ball
    table is supplied.
    """
    n = max(mu.step, 1)
    if mu.exact:
        if mu.mass() != 1:
            raise TraceError(f"exact measure mass != 1 at step {mu.step}")
    else:
        err = abs(mu.mass() - 1.0) - mu.dropped_mass
        if err > n * MASS_TOL_PER_STEP:
            raise TraceError(f"mass drift {err:g} beyond {n}*1e-14 at step {mu.step}")
    inv = mu.spec.inv
    for i, (g, p) in enumerate(mu.probs.items()):
        if i >= sample_symmetry:
            break
        if p <= 0:
            raise TraceError(f"non-positive stored probability at {g!r}")
        q = mu.atom(inv(g))
        if mu.exact:
            if q != p:
                raise TraceError(f"symmetry violated at {g!r}")
        elif abs(q - p) > SYMMETRY_TOL:
            raise TraceError(f"symmetry violated at {g!r}: {p!r} vs {q!r}")
    if ball is not None:
        for g in mu.probs:
            if ball.word_length.get(g, 10 ** 9) > mu.step:
                raise TraceError(f"support escapes B_{mu.step}: {g!r}")
