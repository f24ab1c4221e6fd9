"""End-to-end verification suite: one big exact trace per family, then every
inequality check that applies, plus exponent fits and the ordering chain.

Budgets are desk-scale defaults chosen so the whole suite stays under ten
minutes and 4 GiB: the trace for family budget N covers steps 0..N+1 (the
walk parameter is N/2, giving every 2n/2n+1 pair with n <= N/2).
"""

from __future__ import annotations

import gc
from dataclasses import dataclass, field

import numpy as np

from .compression import select_step, step_selection_check
from .errors import TraceError
from .exponents import (CheckResult, SeriesError, SubadditiveSeries, _verdict_from,
                        check_entropy_return, check_entropy_speed,
                        check_entropy_vs_growth, check_gaussian_interpolated,
                        check_gaussian_upper, check_monotone_return,
                        check_pushforward_speed, check_return_from_growth,
                        check_speed_from_growth, exponent_chain_report,
                        fit_exponents, fit_od_constants, validate_subadditive)
from .groups import GroupSpec, parse_group
from .homs import pushforward_hom
from .measures import check_measure, lazy_step_measure
from .walks import WalkTrace, walk_sequence

ALL_CHECKS = ("trace_invariants", "monotone_return", "entropy_return",
              "gaussian_upper", "gaussian_interpolated", "entropy_speed",
              "entropy_vs_growth", "speed_from_growth", "return_from_growth",
              "step_selection", "pushforward_speed", "offdiag_fit",
              "exponent_chain")


@dataclass
class FamilyBudget:
    group: str
    n_budget: int          # checks run for n up to this step
    retain: str = "auto"

    @property
    def n_param(self) -> int:
        return self.n_budget // 2


DEFAULT_BUDGETS = (
    FamilyBudget("Z^2", 64),
    FamilyBudget("heisenberg", 64, retain="none"),
    FamilyBudget("free:2", 24),
    FamilyBudget("lamplighter:2", 24),
    FamilyBudget("wreathZZ", 16, retain="none"),
)

PUSHFORWARD_PLANS = {
    "free:2": ("free_to_z:1", 20),
    "wreathZZ": ("cursor", 16),
}


def ball_sizes_from_trace(trace: WalkTrace) -> np.ndarray:
    """|B_0..B_last| from the final profile (supp P^(n) = B_n for lazy walks)."""
    rec = trace.record(trace.last_step)
    if rec.profile_count is None:
        raise TraceError("trace has no profiles; cannot derive ball sizes")
    return np.cumsum(rec.profile_count)


def check_trace_invariants(trace: WalkTrace, mass_tol_per_step: float = 1e-14,
                           subadd_tol: float = 1e-10) -> CheckResult:
    """Structural trace invariants: mass, positivity, subadditivity, speed <= n."""
    margins = []
    for rec in trace.records:
        n = max(rec.n, 1)
        drift = abs(rec.mass - 1.0) - rec.dropped_mass
        margins.append((f"mass n={rec.n}", float(n * mass_tol_per_step - drift)))
        margins.append((f"entropy>=0 n={rec.n}", float(rec.entropy + 1e-15)))
        if rec.speed is not None and not np.isnan(rec.speed):
            margins.append((f"speed<=n n={rec.n}", float(rec.n - rec.speed + 1e-12)))
    for name, series in (("-lnP", -np.log(trace.returns())),
                         ("entropy", trace.entropies()),
                         ("speed", trace.speeds())):
        if np.any(np.isnan(series)):
            continue
        try:
            validate_subadditive(series, subadd_tol)
            margins.append((f"subadditive {name}", 0.0))
        except SeriesError as exc:
            margins.append((f"subadditive {name}: {exc}", -1.0))
    for n in sorted(trace.measures):
        mu = trace.measures[n]
        if getattr(mu, "support_size", 0) <= 50_000 and hasattr(mu, "probs"):
            try:
                check_measure(mu)
                margins.append((f"measure invariants n={n}", 0.0))
            except TraceError as exc:
                margins.append((f"measure invariants n={n}: {exc}", -1.0))
    return _verdict_from(margins, 0.0, "trace_invariants",
                         "mass, positivity, subadditivity, and 1-Lipschitz speed")


def check_step_selection(trace: WalkTrace) -> CheckResult:
    """Selected k in [n, 2n] obeys the 8 f_P(n)/n gap bound (f_P hull of -ln P)."""
    data = step_selection_check(trace)
    margins = [(f"n={n}", float(bound - gap)) for n, _, gap, bound in data["rows"]]
    note = ""
    if data["argmin_not_2n"]:
        note = f"argmin != 2n at n in {data['argmin_not_2n'][:5]} (float-noise warning)"
    return _verdict_from(margins, 1e-12, "step_selection",
                         "1 - P^(2k+1)(e)/P^(2k)(e) <= 8 f_P(n)/n for the selected k",
                         {"observed_constant": data["observed_constant"]}, note=note)


def pushed_step_atoms(hom, laziness=None):
    """Atoms of the pushforward of the lazy step measure under the hom."""
    from fractions import Fraction
    lz = Fraction(1, 2) if laziness is None else laziness
    step = lazy_step_measure(hom.source, laziness=lz)
    acc: dict = {}
    for g, p in step.items():
        img = hom.apply(g)
        acc[img] = acc.get(img, 0.0) + p
    return sorted(acc.items())


def pushforward_identity_margin(hom, n_max: int = 5) -> float:
    """max_n max_g |psi_*(P^(n)) - P'^(n)|(g): the two routes must agree."""
    from .measures import convolve, delta, SparseMeasure
    src_step = lazy_step_measure(hom.source)
    atoms = pushed_step_atoms(hom)
    dst_step = SparseMeasure(hom.target, dict(atoms), 1)
    mu = delta(hom.source)
    nu = delta(hom.target)
    worst = 0.0
    for _ in range(n_max):
        mu = convolve(mu, src_step)
        nu = convolve(nu, dst_step)
        pushed: dict = {}
        for g, p in mu.items():
            img = hom.apply(g)
            pushed[img] = pushed.get(img, 0.0) + p
        keys = set(pushed) | set(nu.probs)
        worst = max(worst, max(abs(pushed.get(k, 0.0) - nu.atom(k)) for k in keys))
    return worst


@dataclass
class FamilyResult:
    group: str
    n_budget: int
    last_step: int
    truncated: bool
    checks: list[CheckResult] = field(default_factory=list)
    fits: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "group": self.group,
            "n_budget": self.n_budget,
            "last_step": self.last_step,
            "truncated": self.truncated,
            "checks": [c.to_json() for c in self.checks],
            "fits": {k: float(v) for k, v in self.fits.items()},
        }


def family_fits(trace: WalkTrace, ball_sizes, n_budget: int) -> dict:
    window = (max(1, n_budget // 2), n_budget)
    out = {}
    rets = trace.returns()
    out["beta"] = fit_exponents(trace.speeds(), window).central
    out["gamma"] = fit_exponents(-np.log(rets), window).central
    out["eta"] = fit_exponents(trace.entropies(), window).central
    nu_hi = min(n_budget, len(ball_sizes) - 1)
    out["nu"] = fit_exponents(np.log(np.asarray(ball_sizes, dtype=float)),
                              (max(1, nu_hi // 2), nu_hi)).central
    return out


def run_family(budget: FamilyBudget, selection=ALL_CHECKS, seed: int = 0,
               support_budget: int = 300_000_000) -> FamilyResult:
    spec = parse_group(budget.group)
    trace = walk_sequence(spec, budget.n_param, retain=budget.retain,
                          support_budget=support_budget)
    sizes = ball_sizes_from_trace(trace)
    result = FamilyResult(budget.group, budget.n_budget, trace.last_step,
                          trace.truncated)
    fits = family_fits(trace, sizes, budget.n_budget)
    result.fits = fits

    def want(name):
        return name in selection

    if want("trace_invariants"):
        result.checks.append(check_trace_invariants(trace))
    if want("monotone_return"):
        result.checks.append(check_monotone_return(trace))
    if want("entropy_return"):
        result.checks.append(check_entropy_return(trace))
    if want("gaussian_upper"):
        result.checks.append(check_gaussian_upper(trace))
    if want("gaussian_interpolated"):
        result.checks.append(check_gaussian_interpolated(trace))
    if want("entropy_speed"):
        result.checks.append(check_entropy_speed(trace))
    if want("entropy_vs_growth"):
        result.checks.append(check_entropy_vs_growth(trace, sizes))
    if want("speed_from_growth"):
        result.checks.append(check_speed_from_growth(trace, fits["nu"]))
    if want("return_from_growth"):
        result.checks.append(check_return_from_growth(trace, sizes))
    if want("step_selection"):
        result.checks.append(check_step_selection(trace))
    if want("pushforward_speed") and budget.group in PUSHFORWARD_PLANS:
        desc, limit = PUSHFORWARD_PLANS[budget.group]
        hom = pushforward_hom(spec, parse_group("Z^1"), desc)
        atoms = pushed_step_atoms(hom)
        pushed = walk_sequence(hom.target, limit, through=limit, step_atoms=atoms)
        check = check_pushforward_speed(trace, pushed, limit)
        check.fitted_constants["identity_margin_small_n"] = \
            pushforward_identity_margin(hom)
        check.fitted_constants["one_lipschitz_images"] = hom.is_one_lipschitz()
        result.checks.append(check)
    if want("offdiag_fit"):
        result.checks.append(fit_od_constants(trace))
    if want("exponent_chain"):
        result.checks.append(exponent_chain_report(fits))
    del trace
    gc.collect()
    return result


def run_verify(budgets=DEFAULT_BUDGETS, selection=ALL_CHECKS, seed: int = 0,
               support_budget: int = 300_000_000) -> dict:
    """Run the suite and assemble a deterministic report dict."""
    families = {}
    violations = 0
    warnings = 0
    for budget in budgets:
        res = run_family(budget, selection, seed, support_budget)
        families[budget.group] = res
        for check in res.checks:
            if check.verdict == "violated":
                if check.informational:
                    warnings += 1
                else:
                    violations += 1
            elif check.verdict == "holds-within-tol":
                warnings += 1
    report = {
        "schema_version": 1,
        "seed": seed,
        "checks_selected": list(selection),
        "families": {k: v.to_json() for k, v in families.items()},
        "violations": violations,
        "warnings": warnings,
    }
    return report
