"""Exponent fitting, concave majorants, and the inequality suite.

Every check returns a CheckResult with a margin series; a check is
"violated" only when some margin is negative beyond the declared float (and
pruning) tolerance. Exponent fits are finite-window log-log slopes: proxies
for the asymptotic exponents, never claimed to be limits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CayleyLabError
from .walks import WalkTrace

GAUSS_N = 2.0   # validated empirically across the supported families
GAUSS_M = 0.5
SUBADD_TOL = 1e-10


class SeriesError(CayleyLabError):
    """A series failed the subadditive/nondecreasing contract."""


# --------------------------------------------------------------------------
# Subadditive series and concave hulls
# --------------------------------------------------------------------------
def validate_subadditive(values: np.ndarray, tol: float = SUBADD_TOL) -> None:
    """Reject series with f(0) != 0, decreases, or subadditivity violations."""
    f = np.asarray(values, dtype=float)
    if len(f) == 0 or abs(f[0]) > tol:
        raise SeriesError("series must start at f(0) = 0")
    if np.any(np.diff(f) < -tol):
        raise SeriesError("series must be nondecreasing")
    for m in range(1, len(f)):
        slack = f[m] + f[:len(f) - m] - f[m:]
        if slack.min() < -tol:
            raise SeriesError(f"subadditivity violated at split m={m}")


@dataclass
class SubadditiveSeries:
    """f(0..n_max) with f(0) = 0, nondecreasing and subadditive within tol."""

    values: np.ndarray
    name: str = ""
    tol: float = SUBADD_TOL

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        validate_subadditive(self.values, self.tol)

    def __len__(self):
        return len(self.values)

    @classmethod
    def from_returns(cls, trace: WalkTrace) -> "SubadditiveSeries":
        return cls(-np.log(trace.returns()), "neg_log_return")

    @classmethod
    def from_entropy(cls, trace: WalkTrace) -> "SubadditiveSeries":
        return cls(trace.entropies(), "entropy")

    @classmethod
    def from_speed(cls, trace: WalkTrace) -> "SubadditiveSeries":
        return cls(trace.speeds(), "speed")

    @classmethod
    def from_ball_sizes(cls, ball_sizes) -> "SubadditiveSeries":
        return cls(np.log(np.asarray(ball_sizes, dtype=float)), "log_growth")


def concave_hull(values, tol: float = SUBADD_TOL) -> np.ndarray:
    """Least concave majorant of (n, f(n)), sampled back at the integers.

    Rejects inputs that are not subadditive/nondecreasing with f(0) = 0;
    for such inputs the result g is guaranteed to satisfy f <= g <= 2 f,
    which is asserted pointwise before returning.
    """
    if isinstance(values, SubadditiveSeries):
        f = values.values
    else:
        f = np.asarray(values, dtype=float)
        validate_subadditive(f, tol)
    n = len(f)
    # upper convex hull by monotone chain over (0..n-1, f)
    hull_x: list[int] = []
    hull_y: list[float] = []
    for x in range(n):
        y = f[x]
        while len(hull_x) >= 2:
            x1, x2 = hull_x[-2], hull_x[-1]
            y1, y2 = hull_y[-2], hull_y[-1]
            # drop the middle point when it lies on or below chord (x1,y1)-(x,y)
            if (y2 - y1) * (x - x1) <= (y - y1) * (x2 - x1):
                hull_x.pop()
                hull_y.pop()
            else:
                break
        hull_x.append(x)
        hull_y.append(y)
    g = np.interp(np.arange(n), hull_x, hull_y)
    if np.any(g < f - tol) or np.any(g > 2 * f + tol + 1e-300):
        bad = int(np.argmax(g - 2 * f))
        raise SeriesError(f"hull escaped the [f, 2f] envelope at n={bad}")
    return g


# --------------------------------------------------------------------------
# Exponent fits
# --------------------------------------------------------------------------
@dataclass
class ExponentFit:
    central: float
    upper: float
    lower: float
    window: tuple[int, int]
    residual_rms: float
    n_points: int

    def in_range(self, lo: float = 0.0, hi: float = 1.05) -> bool:
        return lo <= self.lower <= self.upper <= hi


def _slope(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float]:
    design = np.vstack([xs, np.ones(len(xs))]).T
    coef, res, _, _ = np.linalg.lstsq(design, ys, rcond=None)
    rms = float(np.sqrt(res[0] / len(xs))) if len(res) else 0.0
    return float(coef[0]), rms


def fit_exponents(values, window: tuple[int, int] | None = None,
                  min_points: int = 8) -> ExponentFit:
    """Log-log slope of f(n) vs n over a window (default dyadic [N/2, N]).

    The central estimate is the full-window least-squares slope; the
    upper/lower proxies are the extreme slopes over sliding half-windows.
    These are finite-n stand-ins for the limsup/liminf exponents, nothing
    more.
    """
    if isinstance(values, SubadditiveSeries):
        values = values.values
    f = np.asarray(values, dtype=float)
    n_max = len(f) - 1
    lo, hi = window if window is not None else (max(1, n_max // 2), n_max)
    if hi > n_max or lo < 1 or hi - lo + 1 < min_points:
        raise SeriesError(f"fit window [{lo},{hi}] too short (need {min_points} points)")
    ns = np.arange(lo, hi + 1)
    fs = f[lo:hi + 1]
    if np.any(fs <= 0):
        raise SeriesError("fit window contains non-positive values")
    xs, ys = np.log(ns), np.log(fs)
    central, rms = _slope(xs, ys)
    half = max(min_points - 1, (hi - lo) // 2)
    slopes = []
    for a in range(lo, hi - half + 1):
        sl, _ = _slope(np.log(np.arange(a, a + half + 1)),
                       np.log(f[a:a + half + 1]))
        slopes.append(sl)
    if not slopes:
        slopes = [central]
    return ExponentFit(central, max(slopes), min(slopes), (lo, hi), rms, len(ns))


# --------------------------------------------------------------------------
# Check plumbing
# --------------------------------------------------------------------------
@dataclass
class CheckResult:
    name: str
    statement: str
    verdict: str                       # holds | holds-within-tol | violated | skipped
    worst_margin: float | None = None
    worst_at: str | None = None
    tolerance: float = 0.0
    fitted_constants: dict = field(default_factory=dict)
    informational: bool = False
    note: str = ""
    margins: list = field(default_factory=list)   # rows ("label", margin)

    @property
    def failed(self) -> bool:
        return self.verdict == "violated" and not self.informational

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "statement": self.statement,
            "verdict": self.verdict,
            "worst_margin": None if self.worst_margin is None else float(self.worst_margin),
            "worst_at": self.worst_at,
            "tolerance": self.tolerance,
            "fitted_constants": {k: (float(v) if isinstance(v, (int, float, np.floating))
                                     else v)
                                 for k, v in self.fitted_constants.items()},
            "informational": self.informational,
            "note": self.note,
        }


def _verdict_from(margins: list, tol: float, name: str, statement: str,
                  constants: dict | None = None, informational: bool = False,
                  note: str = "") -> CheckResult:
    if not margins:
        return CheckResult(name, statement, "skipped", None, None, tol,
                           constants or {}, informational, note or "no data points")
    worst_at, worst = min(margins, key=lambda t: t[1])
    if worst >= 0:
        verdict = "holds"
    elif worst >= -tol:
        verdict = "holds-within-tol"
    else:
        verdict = "violated"
    return CheckResult(name, statement, verdict, worst, str(worst_at), tol,
                       constants or {}, informational, note, margins)


def _prune_slack(trace: WalkTrace) -> float:
    return 4.0 * trace.dropped_mass


# --------------------------------------------------------------------------
# The inequality suite
# --------------------------------------------------------------------------
def check_entropy_return(trace: WalkTrace, tol: float = 1e-10) -> CheckResult:
    """H(P^(n)) >= -ln P^(2n)(e) for every n with 2n in the trace."""
    rets = trace.returns()
    ents = trace.entropies()
    margins = []
    for n in range(trace.last_step // 2 + 1):
        margins.append((n, float(ents[n] + np.log(rets[2 * n]))))
    return _verdict_from(margins, tol + _prune_slack(trace), "entropy_return",
                         "H(P^n) + ln P^(2n)(e) >= 0")


def _profiles(trace: WalkTrace):
    for n in range(1, trace.last_step + 1):
        rec = trace.record(n)
        if rec.profile_max is None:
            continue
        radii = np.flatnonzero(rec.profile_count)
        yield n, rec, radii


def check_gaussian_upper(trace: WalkTrace, tol: float = 1e-12) -> CheckResult:
    """P^(n)(g) <= N exp(-M |g|^2 / n) with (N, M) = (2, 1/2), all (n, g)."""
    margins = [("n=0", GAUSS_N - 1.0)]
    for n, rec, radii in _profiles(trace):
        bound = GAUSS_N * np.exp(-GAUSS_M * radii.astype(float) ** 2 / n)
        gap = bound - rec.profile_max[radii]
        i = int(np.argmin(gap))
        margins.append((f"n={n},r={radii[i]}", float(gap[i])))
    return _verdict_from(margins, tol + _prune_slack(trace), "gaussian_upper",
                         "P^n(g) <= 2 exp(-|g|^2 / 2n)")


def check_gaussian_interpolated(trace: WalkTrace,
                                eps_grid=(0.0, 0.25, 0.5, 0.75, 1.0),
                                tol: float = 1e-12) -> CheckResult:
    """P^(n)(g) <= P^(n)(e)^(1-eps) N^eps exp(-eps M |g|^2 / n) on the grid."""
    rets = trace.returns()
    margins = []
    for eps in eps_grid:
        for n, rec, radii in _profiles(trace):
            bound = (rets[n] ** (1.0 - eps) * GAUSS_N ** eps
                     * np.exp(-eps * GAUSS_M * radii.astype(float) ** 2 / n))
            gap = bound - rec.profile_max[radii]
            i = int(np.argmin(gap))
            margins.append((f"eps={eps},n={n},r={radii[i]}", float(gap[i])))
    return _verdict_from(margins, tol + _prune_slack(trace), "gaussian_interpolated",
                         "P^n(g) <= P^n(e)^(1-eps) 2^eps exp(-eps |g|^2 / 2n)")


def check_entropy_speed(trace: WalkTrace, tol: float = 1e-10) -> CheckResult:
    """H(P^(n)) >= ln N + M (E|P^n|)^2 / n for n >= 1 ((N, M) = (2, 1/2))."""
    ents = trace.entropies()
    spds = trace.speeds()
    margins = []
    for n in range(1, trace.last_step + 1):
        if np.isnan(spds[n]):
            continue
        margins.append((n, float(ents[n] - np.log(GAUSS_N)
                                 - GAUSS_M * spds[n] ** 2 / n)))
    return _verdict_from(margins, tol + _prune_slack(trace), "entropy_speed",
                         "H(P^n) >= ln 2 + (E|P^n|)^2 / 2n")


def growth_is_at_least(ball_sizes, power: float, tail_only: bool = False) -> bool:
    sizes = np.asarray(ball_sizes, dtype=float)
    ks = np.arange(len(sizes))
    start = max(1, len(sizes) // 2) if tail_only else 1
    return bool(np.all(sizes[start:] >= ks[start:] ** power))


def check_entropy_vs_growth(trace: WalkTrace, ball_sizes,
                            tol: float = 1e-9) -> CheckResult:
    """H(P^(n)) <= L + 4 f_V(E|P^n|) when growth is at least quadratic.

    L comes from normalizing phi(k) = L1 / |B_k| over the table; the
    (conservative) truncation of the normalizer is compensated by adding the
    quadratic-growth tail bound to the tolerance. f_V is evaluated at the
    real-valued speed by linear interpolation.
    """
    name, stmt = "entropy_vs_growth", "H(P^n) <= L + 4 f_V(E|P^n|)"
    sizes = np.asarray(ball_sizes, dtype=float)
    if not growth_is_at_least(sizes, 2.0):
        return CheckResult(name, stmt, "skipped", note="growth below quadratic")
    radius = len(sizes) - 1
    norm_sum = float(np.sum(1.0 / sizes))
    big_l = np.log(norm_sum)
    c2 = float(np.min(sizes[1:] / np.arange(1, len(sizes)) ** 2))
    tail = 1.0 / (c2 * radius)
    slack = float(np.log1p(tail / norm_sum))
    f_v = np.log(sizes)
    ents = trace.entropies()
    spds = trace.speeds()
    margins = []
    for n in range(1, trace.last_step + 1):
        if np.isnan(spds[n]) or spds[n] > radius:
            continue
        fv_at = float(np.interp(spds[n], np.arange(len(f_v)), f_v))
        margins.append((n, float(big_l + 4.0 * fv_at - ents[n])))
    return _verdict_from(margins, tol + slack + _prune_slack(trace), name, stmt,
                         {"L": big_l, "truncation_slack": slack})


def check_speed_from_growth(trace: WalkTrace, nu_fit: float,
                            tol: float = 1e-10) -> CheckResult:
    """E|P^n| <= K' n^(1/(2-nu)) (K' fitted) and P^(2n)(e) e^(H(P^n)) >= 1."""
    rets = trace.returns()
    ents = trace.entropies()
    spds = trace.speeds()
    margins = []
    for n in range(trace.last_step // 2 + 1):
        margins.append((n, float(rets[2 * n] * np.exp(ents[n]) - 1.0)))
    expo = 1.0 / (2.0 - min(nu_fit, 1.0))
    ratios = [spds[n] / n ** expo for n in range(1, trace.last_step + 1)
              if not np.isnan(spds[n])]
    constants = {"nu_fit": nu_fit, "speed_exponent": expo,
                 "K_prime": max(ratios) if ratios else float("nan")}
    note = "speed bound exponent 1/(2-nu) is uninformative at nu=1" if nu_fit >= 1 else ""
    return _verdict_from(margins, tol + _prune_slack(trace), "speed_from_growth",
                         "P^(2n)(e) exp(H(P^n)) >= 1; E|P^n| <= K' n^(1/(2-nu))",
                         constants, note=note)


def check_return_from_growth(trace: WalkTrace, ball_sizes,
                             tol: float = 1e-12) -> CheckResult:
    """k^2/g(k) strictly increases (g the growth hull); fitted return bound.

    Needs growth at least cubic on the upper half of the table. The bound
    P^(n)(e) >= K'' |B_F(L''n)|^-2 F(L''n)^-1 has unspecified constants, so
    the best (K'', L'') over a small grid is reported, not asserted.
    """
    name = "return_from_growth"
    stmt = "k^2/hull(f_V)(k) strictly increasing; P^n(e) >= K'' |B_F|^-2 F^-1"
    sizes = np.asarray(ball_sizes, dtype=float)
    if not growth_is_at_least(sizes, 3.0, tail_only=True):
        return CheckResult(name, stmt, "skipped", note="growth below cubic")
    f_v = np.log(sizes)
    hull = concave_hull(f_v)
    ks = np.arange(1, len(hull))
    phi = ks ** 2 / hull[1:]
    diffs = np.diff(phi)
    margins = [(f"k={k}", float(d)) for k, d in zip(ks[:-1] + 1, diffs)]
    rets = trace.returns()
    best = {"K_doubleprime": -np.inf, "L_doubleprime": None}
    for l2 in (0.25, 0.5, 1.0, 2.0, 4.0):
        vals = []
        for n in range(1, trace.last_step + 1):
            target = l2 * n
            if target > phi[-1]:
                continue
            f_at = float(np.interp(target, phi, ks.astype(float)))
            fv_at = float(np.interp(f_at, np.arange(len(f_v)), f_v))
            vals.append(rets[n] * np.exp(2.0 * fv_at) * f_at)
        if vals and min(vals) > best["K_doubleprime"]:
            best = {"K_doubleprime": float(min(vals)), "L_doubleprime": l2}
    return _verdict_from(margins, tol, name, stmt, best)


def check_pushforward_speed(source: WalkTrace, pushed: WalkTrace,
                            n_limit: int | None = None,
                            tol: float = 1e-10) -> CheckResult:
    """E|P^(n)| on the source dominates the pushed walk's E|P'^(n)|."""
    limit = min(source.last_step, pushed.last_step)
    if n_limit is not None:
        limit = min(limit, n_limit)
    s_spd = source.speeds()
    d_spd = pushed.speeds()
    margins = []
    for n in range(limit + 1):
        if np.isnan(s_spd[n]) or np.isnan(d_spd[n]):
            continue
        margins.append((n, float(s_spd[n] - d_spd[n])))
    return _verdict_from(margins, tol + _prune_slack(source), "pushforward_speed",
                         "E|P^n| >= E|(psi_* P)^n|")


def check_monotone_return(trace: WalkTrace, tol: float = 1e-12) -> CheckResult:
    """P^(2n)(e) decreases and -ln P^(2n)(e) has nonincreasing increments."""
    rets = trace.returns()
    even = rets[0::2]
    margins = []
    for n in range(len(even) - 1):
        margins.append((f"ratio n={n}", float(even[n] - even[n + 1])))
    incr = np.diff(-np.log(even))
    for n in range(len(incr) - 1):
        margins.append((f"increment n={n}", float(incr[n] - incr[n + 1])))
    return _verdict_from(margins, tol, "monotone_return",
                         "P^(2n)(e) nonincreasing with concave -ln P^(2n)(e)")


def fit_od_constants(trace: WalkTrace, fixed_n: float = GAUSS_N) -> CheckResult:
    """Largest M with P^(n)(g) <= P^(n)(e) N e^(-M|g|^2/n) over the trace.

    Diagnostic only: the uniform off-diagonal estimate is a hypothesis that
    can fail, so the fitted M is reported, never asserted.
    """
    rets = trace.returns()
    best = np.inf
    at = None
    for n, rec, radii in _profiles(trace):
        radii = radii[radii >= 1]
        if len(radii) == 0:
            continue
        vals = rec.profile_max[radii]
        ms = (n / radii.astype(float) ** 2) * np.log(fixed_n * rets[n] / vals)
        i = int(np.argmin(ms))
        if ms[i] < best:
            best, at = float(ms[i]), f"n={n},r={radii[i]}"
    note = "degenerate window (single step)" if trace.last_step <= 1 else ""
    if at is None:
        return CheckResult("offdiag_fit", "largest M for the uniform Gaussian ratio bound",
                           "skipped", note="no off-diagonal data")
    return CheckResult("offdiag_fit", "largest M for the uniform Gaussian ratio bound",
                       "holds", best, at, 0.0,
                       {"M_hat": best, "N_fixed": fixed_n}, True, note)


CHAIN_RELATIONS = (
    ("beta <= (1+eta)/2", lambda f: (1 + f["eta"]) / 2 - f["beta"]),
    ("nu/(2+nu) <= gamma", lambda f: f["gamma"] - f["nu"] / (2 + f["nu"])),
    ("gamma <= eta", lambda f: f["eta"] - f["gamma"]),
    ("eta <= beta*nu", lambda f: f["beta"] * f["nu"] - f["eta"]),
    ("beta*nu <= nu/(2-nu)", lambda f: f["nu"] / (2 - f["nu"]) - f["beta"] * f["nu"]),
)


def exponent_chain_report(fits: dict[str, float], slack: float = 0.15) -> CheckResult:
    """Pairwise exponent-ordering relations on fitted proxies (informational).

    ``fits`` maps beta/gamma/eta/nu to central finite-window estimates. The
    slack absorbs finite-n bias; verdicts never fail the suite.
    """
    margins = [(label, float(fn(fits) + slack)) for label, fn in CHAIN_RELATIONS]
    return _verdict_from(margins, 0.0, "exponent_chain",
                         "return/entropy/speed/growth exponent ordering",
                         {k: float(v) for k, v in fits.items()},
                         informational=True,
                         note=f"proxies with slack {slack}; finite-n fits, not limits")
