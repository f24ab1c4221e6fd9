"""Scalar functionals of walk measures and the two exact norm identities.

The displacement identity (right-regular shift (rho_g f)(x) = f(xg)) is

    ||P^(n) - rho_g P^(n)||_2^2 = 2 (P^(2n)(e) - P^(2n)(g)),

and the edge-gradient identity, with edges counted once, is

    ||grad P^(n)||_2^2 = 2|S| (P^(2n)(e) - P^(2n+1)(e)).

The direct sum over ordered pairs (x, s) counts every edge twice, so it
equals exactly twice the gradient value; the tests pin both conventions
against brute-force vector computations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import GroupError, TraceError
from .groups import GroupSpec
from .measures import SparseMeasure
from .walks import BucketMeasure, PackedMeasure, RadialMeasure, WalkTrace


# --------------------------------------------------------------------------
# Pointwise functionals
# --------------------------------------------------------------------------
def entropy(mu) -> float:
    """Shannon entropy -sum p ln p (0 ln 0 := 0), in nats."""
    if isinstance(mu, RadialMeasure):
        sizes = mu._engine._sphere_sizes[:len(mu.masses)]
        vals = mu.masses / sizes
        mask = vals > 0
        return float(-np.dot(sizes[mask] * vals[mask], np.log(vals[mask])))
    vals = np.asarray(mu.prob_values(), dtype=float)
    vals = vals[vals > 0]
    return float(-np.dot(vals, np.log(vals)))


def _lengths_of(mu, ball=None) -> np.ndarray:
    spec = mu.spec
    if isinstance(mu, SparseMeasure):
        if ball is not None:
            out = np.empty(mu.support_size, dtype=np.int64)
            for i, g in enumerate(mu.probs):
                out[i] = ball.length(g)
            return out
        if spec.word_length_closed(spec.identity()) is None:
            raise GroupError("no ball table and no closed-form word length")
        return np.array([spec.word_length_closed(g) for g in mu.probs], dtype=np.int64)
    if isinstance(mu, PackedMeasure):
        engine = mu._engine
        saved = engine.keys
        engine.keys = mu.keys
        try:
            from .engines import HeisenbergPackedEngine
            if isinstance(engine, HeisenbergPackedEngine):
                if ball is None:
                    codes, dists = engine.ball_codes(mu.step)
                else:
                    codes, dists = ball
                pos = np.searchsorted(codes, mu.keys)
                return dists[pos].astype(np.int64)
            return engine.lengths()
        finally:
            engine.keys = saved
    if isinstance(mu, BucketMeasure):
        engine = mu._engine
        saved = engine.buckets
        engine.buckets = mu.buckets
        try:
            return np.concatenate([engine.bucket_lengths(c) for c in sorted(mu.buckets)])
        finally:
            engine.buckets = saved
    raise GroupError(f"cannot compute lengths for {type(mu).__name__}")


def speed(mu, ball=None) -> float:
    """Expected word length of the measure: sum mu(g) |g|."""
    if isinstance(mu, RadialMeasure):
        return float(np.dot(np.arange(len(mu.masses), dtype=float), mu.masses))
    lens = _lengths_of(mu, ball)
    vals = np.asarray(mu.prob_values(), dtype=float)
    return float(np.dot(lens.astype(float), vals))


# --------------------------------------------------------------------------
# Norm identities
# --------------------------------------------------------------------------
def displacement_norm_sq(trace: WalkTrace, n: int, g) -> float:
    """||P^(n) - rho_g P^(n)||^2 via step-2n return values."""
    if 2 * n > trace.last_step:
        raise TraceError(f"displacement at n={n} needs step {2 * n}")
    r = trace.record(2 * n).return_prob
    return 2.0 * (r - trace.atom(2 * n, g))


def gradient_norm_sq(trace: WalkTrace, n: int) -> float:
    """||grad P^(n)||^2 (each edge once) via steps 2n and 2n+1."""
    if 2 * n + 1 > trace.last_step:
        raise TraceError(f"gradient at n={n} needs step {2 * n + 1}")
    r_even = trace.record(2 * n).return_prob
    r_odd = trace.record(2 * n + 1).return_prob
    return 2.0 * trace.generator_count * (r_even - r_odd)


def direct_displacement_norm_sq(mu: SparseMeasure, g):
    """Brute-force sum_x (f(x) - f(xg))^2 over the union support (oracle)."""
    spec = mu.spec
    ginv = spec.inv(g)
    xs = set(mu.probs)
    xs.update(spec.mul(y, ginv) for y in mu.probs)
    zero = 0 if mu.exact else 0.0
    total = zero
    for x in xs:
        d = mu.probs.get(x, zero) - mu.probs.get(spec.mul(x, g), zero)
        total += d * d
    return total


def direct_gradient_norm_sq(mu: SparseMeasure):
    """Brute-force sum over ordered pairs (x, s) of (f(xs) - f(x))^2.

    Counts each edge twice: equals 2 * gradient_norm_sq (pinned by tests).
    """
    total = 0 if mu.exact else 0.0
    for s in mu.spec.generators():
        total += direct_displacement_norm_sq(mu, s)
    return total


# --------------------------------------------------------------------------
# Off-diagonal profile
# --------------------------------------------------------------------------
def off_diagonal_profile(trace: WalkTrace, n: int, ball=None) -> dict[int, tuple[float, float]]:
    """Per radius r <= n: (max, mean) of P^(n)(g) over the sphere |g| = r."""
    rec = trace.record(n)
    if rec.profile_max is not None:
        out = {}
        for r in range(len(rec.profile_max)):
            if rec.profile_count[r] > 0:
                out[r] = (float(rec.profile_max[r]),
                          float(rec.profile_sum[r] / rec.profile_count[r]))
        return out
    mu = trace.measure(n)
    if isinstance(mu, RadialMeasure):
        vals = mu.masses / mu._engine._sphere_sizes[:len(mu.masses)]
        return {r: (float(v), float(v)) for r, v in enumerate(vals) if v > 0}
    if ball is None:
        raise GroupError("profile needs a ball table covering the support")
    if ball.radius_max < n:
        raise GroupError(f"ball radius {ball.radius_max} < step {n}")
    best: dict[int, float] = {}
    total: dict[int, float] = {}
    count: dict[int, int] = {}
    for g, p in mu.items():
        r = ball.length(g)
        p = float(p)
        best[r] = max(best.get(r, 0.0), p)
        total[r] = total.get(r, 0.0) + p
        count[r] = count.get(r, 0) + 1
    return {r: (best[r], total[r] / count[r]) for r in sorted(best)}


# --------------------------------------------------------------------------
# Series container + CSV
# --------------------------------------------------------------------------
@dataclass
class ObservableSeries:
    """Per-step scalars of a trace, ready for CSV export and exponent fits."""

    spec: GroupSpec
    n: np.ndarray
    return_prob: np.ndarray
    entropy: np.ndarray
    speed: np.ndarray
    grad_norm_sq: np.ndarray
    source: list[str]
    speed_stderr: np.ndarray | None = None

    @classmethod
    def from_trace(cls, trace: WalkTrace) -> "ObservableSeries":
        last = trace.last_step
        ns = np.arange(last + 1)
        grads = np.full(last + 1, np.nan)
        for n in range(last + 1):
            if 2 * n + 1 <= last:
                grads[n] = gradient_norm_sq(trace, n)
        return cls(trace.spec, ns, trace.returns(), trace.entropies(),
                   trace.speeds(), grads, ["exact"] * (last + 1))

    def rows(self):
        for i in range(len(self.n)):
            stderr = "" if self.speed_stderr is None or np.isnan(self.speed_stderr[i]) \
                else repr(float(self.speed_stderr[i]))
            yield {
                "n": int(self.n[i]),
                "return_prob": repr(float(self.return_prob[i])),
                "entropy": repr(float(self.entropy[i])),
                "speed": "" if np.isnan(self.speed[i]) else repr(float(self.speed[i])),
                "speed_stderr": stderr,
                "grad_norm_sq": "" if np.isnan(self.grad_norm_sq[i])
                                else repr(float(self.grad_norm_sq[i])),
                "source": self.source[i],
            }


CSV_FIELDS = ["n", "return_prob", "entropy", "speed", "speed_stderr",
              "grad_norm_sq", "source"]


def write_observables_csv(series: ObservableSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for row in series.rows():
            writer.writerow(row)
