"""Equivariant cocycle construction and the compression lower-bound profile.

The embedding is a virtual coboundary over the direct sum of countably many
copies of l2(G) carrying the right-regular action: block n holds
``a_n * w_n`` with ``w_n = P^(k_n)`` and

    a_n^2 = (max_s ||w_n - rho_s w_n||^2)^(-1) * n^(-1-eps),

so the cocycle norm is the convergent sum

    ||b(g)||^2 = sum_n a_n^2 ||w_n - rho_g w_n||^2,

evaluated here exactly (truncated at ``n_terms``) through the displacement
identity; the infinite-dimensional space is never materialized. A reported
companion lower bound replaces the per-generator maximum with the full
gradient norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TraceError
from .groups import Element
from .observables import displacement_norm_sq, gradient_norm_sq
from .walks import WalkTrace

KN_MODES = ("gap_argmin", "identity")


@dataclass(frozen=True)
class CocycleConfig:
    epsilon: float = 0.1
    n_terms: int = 64          # truncation of the direct sum
    kn_mode: str = "gap_argmin"

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ConfigError("epsilon must lie in (0, 1]")
        if self.n_terms < 1:
            raise ConfigError("n_terms must be >= 1")
        if self.kn_mode not in KN_MODES:
            raise ConfigError(f"kn_mode must be one of {KN_MODES}")


def select_step(trace: WalkTrace, n: int) -> int:
    """The k in [n, 2n] minimizing the return ratio gap 1 - R(2k+1)/R(2k).

    Ties go to the smallest k. Because F(m) = -ln P^(2m)(e) has nonincreasing
    increments for lazy walks, the argmin lands at k = 2n; the verification
    suite cross-checks that and demotes float-noise violations to warnings.
    """
    if n < 1:
        raise TraceError("step selection needs n >= 1")
    if 2 * (2 * n) + 1 > trace.last_step:
        raise TraceError(f"step selection at n={n} needs trace step {4 * n + 1}")
    rets = trace.returns()
    ks = np.arange(n, 2 * n + 1)
    gaps = 1.0 - rets[2 * ks + 1] / rets[2 * ks]
    return int(ks[np.argmin(gaps)])


@dataclass
class CocycleProfile:
    """Per-block data of the construction: k_n, weights, and denominators."""

    config: CocycleConfig
    kn: np.ndarray            # kn[n] for n = 1..n_terms (index 0 unused)
    weights: np.ndarray       # a_n^2
    gen_disp: np.ndarray      # max_s ||w_n - rho_s w_n||^2
    gaps: np.ndarray          # 1 - P^(2kn+1)(e) / P^(2kn)(e)
    grad_sq: np.ndarray       # ||grad w_n||^2


def cocycle_weights(trace: WalkTrace, config: CocycleConfig) -> CocycleProfile:
    """Block weights a_n^2 for n = 1..n_terms (displacement identity form)."""
    n_terms = config.n_terms
    need = 2 * (2 * n_terms) + 1 if config.kn_mode == "gap_argmin" else 2 * n_terms + 1
    if need > trace.last_step:
        raise TraceError(f"cocycle weights need trace step {need}, "
                         f"have {trace.last_step}")
    gens = trace.spec.generators()
    rets = trace.returns()
    kn = np.zeros(n_terms + 1, dtype=np.int64)
    weights = np.zeros(n_terms + 1)
    gen_disp = np.zeros(n_terms + 1)
    gaps = np.zeros(n_terms + 1)
    grad = np.zeros(n_terms + 1)
    for n in range(1, n_terms + 1):
        k = select_step(trace, n) if config.kn_mode == "gap_argmin" else n
        kn[n] = k
        disp = max(displacement_norm_sq(trace, k, s) for s in gens)
        gen_disp[n] = disp
        gaps[n] = 1.0 - rets[2 * k + 1] / rets[2 * k]
        grad[n] = gradient_norm_sq(trace, k)
        weights[n] = n ** (-1.0 - config.epsilon) / disp
    return CocycleProfile(config, kn, weights, gen_disp, gaps, grad)


def cocycle_norm_sq(profile: CocycleProfile, trace: WalkTrace,
                    g: Element) -> tuple[float, float]:
    """(exact truncated ||b(g)||^2, gradient-ratio lower bound).

    The second value replaces each block's per-generator maximum with the
    full gradient norm, so it never exceeds the first (every block of the
    exact sum shrinks by the factor max_s disp / ||grad||^2 <= 1).
    """
    cfg = profile.config
    exact = 0.0
    bound = 0.0
    for n in range(1, cfg.n_terms + 1):
        k = int(profile.kn[n])
        disp_g = displacement_norm_sq(trace, k, g)
        exact += profile.weights[n] * disp_g
        bound += n ** (-1.0 - cfg.epsilon) * disp_g / profile.grad_sq[n]
    return exact, bound


@dataclass
class CompressionEstimate:
    """rho_-(k) = min ||b(g)|| over the sphere |g| = k, with a log-log fit."""

    ks: np.ndarray
    rho_minus: np.ndarray
    n_points: np.ndarray
    sampled: np.ndarray
    slope: float
    fit_window: tuple[int, int]
    epsilon: float
    n_terms: int
    predicted: dict = field(default_factory=dict)

    def csv_rows(self):
        for i in range(len(self.ks)):
            yield {"k": int(self.ks[i]), "rho_minus": repr(float(self.rho_minus[i])),
                   "n_sphere_points": int(self.n_points[i]),
                   "sampled": str(bool(self.sampled[i])).lower()}


def compression_profile(profile: CocycleProfile, trace: WalkTrace, ball,
                        k_max: int, *, enum_limit: int = 4096,
                        min_samples: int = 200, seed: int = 0) -> CompressionEstimate:
    """Estimate the compression profile over word lengths 0..k_max.

    Spheres with at most ``enum_limit`` elements are enumerated; larger ones
    are sampled (>= min_samples, flagged in the output and excluded from the
    strict fit by callers that care).
    """
    if ball.radius_max < k_max:
        raise TraceError(f"ball radius {ball.radius_max} < k_max {k_max}")
    rng = np.random.default_rng(seed)
    ks = np.arange(k_max + 1)
    rho = np.zeros(k_max + 1)
    counts = np.zeros(k_max + 1, dtype=np.int64)
    sampled = np.zeros(k_max + 1, dtype=bool)
    for k in range(1, k_max + 1):
        sphere = ball.sphere(k)
        if len(sphere) > enum_limit:
            idx = rng.choice(len(sphere), size=max(min_samples, 1), replace=False)
            chosen = [sphere[i] for i in sorted(idx)]
            sampled[k] = True
        else:
            chosen = sphere
        counts[k] = len(chosen)
        best = None
        for g in chosen:
            val, _ = cocycle_norm_sq(profile, trace, g)
            best = val if best is None else min(best, val)
        rho[k] = np.sqrt(max(best, 0.0))
    lo = max(1, k_max // 4)
    fit_ks = np.arange(lo, k_max + 1)
    mask = rho[fit_ks] > 0
    if mask.sum() < 2:
        raise TraceError("not enough positive profile points to fit a slope")
    xs = np.log(fit_ks[mask])
    ys = np.log(rho[fit_ks][mask])
    design = np.vstack([xs, np.ones(len(xs))]).T
    slope = float(np.linalg.lstsq(design, ys, rcond=None)[0][0])
    return CompressionEstimate(ks, rho, counts, sampled, slope, (lo, k_max),
                               profile.config.epsilon, profile.config.n_terms)


def compression_bound_predicted(gamma_fit: float, mode: str) -> float:
    """Lower-bound exponent implied by a return exponent estimate.

    ``general``: (1 - gamma) / (1 + gamma); ``od``: 1 - gamma (valid under
    the uniform Gaussian off-diagonal hypothesis).
    """
    if not 0.0 <= gamma_fit <= 1.0:
        raise ConfigError("gamma must lie in [0, 1]")
    if mode == "general":
        return (1.0 - gamma_fit) / (1.0 + gamma_fit)
    if mode == "od":
        return 1.0 - gamma_fit
    raise ConfigError(f"unknown mode {mode!r}")


def step_selection_check(trace: WalkTrace, n_limit: int | None = None,
                         concave_hull_fn=None) -> dict:
    """Verify the selected k_n against the 8 f_P(n)/n bound.

    f_P is the concave hull of -ln P^(n)(e) (positive, subadditive,
    nondecreasing). Returns the margin series plus the observed best
    constant, and flags (as a warning, not a failure) any n where the
    argmin is not 2n.
    """
    from .exponents import concave_hull  # local import to avoid a cycle
    hull_fn = concave_hull_fn or concave_hull
    if n_limit is None:
        n_limit = (trace.last_step - 1) // 4
    rets = trace.returns()
    f_vals = -np.log(rets)
    hull = hull_fn(f_vals)
    rows = []
    worst = np.inf
    best_const = 0.0
    argmin_warnings = []
    for n in range(1, n_limit + 1):
        k = select_step(trace, n)
        gap = 1.0 - rets[2 * k + 1] / rets[2 * k]
        bound = 8.0 * hull[n] / n
        rows.append((n, k, gap, bound))
        worst = min(worst, bound - gap)
        if hull[n] > 0:
            best_const = max(best_const, gap * n / hull[n])
        if k != 2 * n:
            argmin_warnings.append(n)
    return {"rows": rows, "worst_margin": worst, "observed_constant": best_const,
            "argmin_not_2n": argmin_warnings}
