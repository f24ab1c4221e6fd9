import math

import numpy as np
import pytest

from cayleylab import concave_hull, fit_exponents, parse_group, walk_sequence
from cayleylab.exponents import (SeriesError, SubadditiveSeries, check_entropy_return,
                                 check_entropy_speed, check_entropy_vs_growth,
                                 check_gaussian_interpolated, check_gaussian_upper,
                                 check_monotone_return, check_pushforward_speed,
                                 check_return_from_growth, check_speed_from_growth,
                                 exponent_chain_report, fit_od_constants,
                                 validate_subadditive)
from cayleylab.verify import (ball_sizes_from_trace, check_trace_invariants,
                              pushed_step_atoms)
from cayleylab.homs import pushforward_hom

FAMILIES = ("Z^2", "heisenberg", "free:2", "lamplighter:2", "wreathZZ")


# ------------------------------------------------------------------ hull
def test_hull_fixed_point_on_concave_input():
    f = np.sqrt(np.arange(33))
    g = concave_hull(f)
    assert np.allclose(g, f, atol=1e-12)


def test_hull_linear_input():
    f = np.arange(17.0)
    assert np.allclose(concave_hull(f), f)


def test_hull_envelope_on_walk_series():
    trace = walk_sequence(parse_group("Z^2"), 16)
    f = -np.log(trace.returns())
    g = concave_hull(f)
    assert np.all(g >= f - 1e-12)
    assert np.all(g <= 2 * f + 1e-12)
    assert np.all(np.diff(np.diff(g)) <= 1e-12)  # concavity


def test_hull_rejects_non_subadditive():
    with pytest.raises(SeriesError):
        concave_hull(np.array([0.0, 1.0, 3.0]))  # f(2) > 2 f(1)
    with pytest.raises(SeriesError):
        concave_hull(np.array([1.0, 2.0]))       # f(0) != 0
    with pytest.raises(SeriesError):
        concave_hull(np.array([0.0, 2.0, 1.0]))  # decreasing


def random_subadditive(rng, n=48):
    """Concave-ish base with small wiggle, filtered for subadditivity."""
    while True:
        theta = rng.uniform(0.3, 0.9)
        base = np.arange(n + 1, dtype=float) ** theta
        wiggle = 1.0 + rng.uniform(-0.03, 0.03, size=n + 1)
        f = base * wiggle
        f[0] = 0.0
        f = np.maximum.accumulate(f)
        try:
            validate_subadditive(f, 0.0)
            return f
        except SeriesError:
            continue


def test_hull_envelope_on_random_series(rng):
    for _ in range(100):
        f = random_subadditive(rng)
        g = concave_hull(f)
        assert np.all(g >= f - 1e-12)
        assert np.all(g <= 2 * f + 1e-10)


# ------------------------------------------------------------------ fits
@pytest.mark.parametrize("c", [0.25, 0.5, 0.75, 1.0])
def test_fit_recovers_exact_power(c):
    ns = np.arange(257, dtype=float)
    fit = fit_exponents(ns ** c)
    assert abs(fit.central - c) < 1e-9
    assert abs(fit.upper - c) < 1e-9
    assert abs(fit.lower - c) < 1e-9


def test_fit_logarithmic_series_has_small_exponent():
    ns = np.arange(257, dtype=float)
    fit = fit_exponents(np.log1p(ns))
    assert fit.central <= 0.2


def test_fit_window_too_short():
    with pytest.raises(SeriesError):
        fit_exponents(np.arange(8.0))
    with pytest.raises(SeriesError):
        fit_exponents(np.arange(100.0), window=(50, 53))


def test_fit_rejects_nonpositive_values():
    f = np.zeros(64)
    with pytest.raises(SeriesError):
        fit_exponents(f)


def test_fit_z2_speed_window():
    trace = walk_sequence(parse_group("Z^2"), 32, retain="none")
    fit = fit_exponents(trace.speeds(), window=(32, 64))
    assert 0.45 <= fit.central <= 0.55


def test_subadditive_series_constructors():
    trace = walk_sequence(parse_group("Z^2"), 8)
    SubadditiveSeries.from_returns(trace)
    SubadditiveSeries.from_entropy(trace)
    SubadditiveSeries.from_speed(trace)
    SubadditiveSeries.from_ball_sizes(ball_sizes_from_trace(trace))


# ------------------------------------------------------------------ checks
@pytest.fixture(scope="module")
def traces():
    return {name: walk_sequence(parse_group(name), 6) for name in FAMILIES}


def test_entropy_return_holds(traces):
    for name, trace in traces.items():
        res = check_entropy_return(trace)
        assert res.verdict == "holds", name
    # frozen Z example: H(P^1) = 1.5 ln 2 vs -ln(3/8)
    ztrace = walk_sequence(parse_group("Z^1"), 2)
    res = check_entropy_return(ztrace)
    margin = dict((int(k), v) for k, v in res.margins)
    assert abs(margin[1] - (1.5 * math.log(2) + math.log(3 / 8))) < 1e-12


def test_entropy_return_equality_at_zero(traces):
    res = check_entropy_return(traces["Z^2"])
    assert dict(res.margins)[0] == 0.0


def test_gaussian_upper_holds(traces):
    for name, trace in traces.items():
        res = check_gaussian_upper(trace)
        assert res.verdict == "holds", (name, res.worst_margin)


def test_gaussian_upper_z_example():
    trace = walk_sequence(parse_group("Z^1"), 3)
    res = check_gaussian_upper(trace)
    # frozen check at n=2, g=2: 1/16 <= 2 e^-1
    assert 2 * math.exp(-1.0) - 1 / 16 > 0
    margin = dict(res.margins)
    assert abs(margin["n=2,r=2"] - (2 * math.exp(-1.0) - 1 / 16)) < 1e-12


def test_gaussian_interpolated_holds(traces):
    for name, trace in traces.items():
        res = check_gaussian_interpolated(trace)
        assert res.verdict == "holds", (name, res.worst_margin)


def test_gaussian_interpolated_eps0_is_max_at_identity(traces):
    trace = traces["lamplighter:2"]
    res = check_gaussian_interpolated(trace, eps_grid=(0.0,))
    assert res.worst_margin >= 0
    assert min(m for _, m in res.margins) == res.worst_margin


def test_gaussian_interpolated_eps1_matches_gaussian_upper(traces):
    trace = traces["free:2"]
    inter = check_gaussian_interpolated(trace, eps_grid=(1.0,))
    plain = check_gaussian_upper(trace)
    inter_m = {k.split(",", 1)[1]: v for k, v in inter.margins}
    plain_m = dict(m for m in plain.margins if m[0] != "n=0")
    for key, val in plain_m.items():
        assert abs(inter_m[key] - val) < 1e-13


def test_entropy_speed_holds(traces):
    for name, trace in traces.items():
        res = check_entropy_speed(trace)
        assert res.verdict == "holds", name
    ztrace = walk_sequence(parse_group("Z^1"), 2)
    res = check_entropy_speed(ztrace)
    margin = dict(res.margins)
    assert abs(margin[1] - (1.5 * math.log(2) - math.log(2) - 0.125)) < 1e-12


def test_entropy_vs_growth_holds_where_gated(traces):
    for name in ("Z^2", "heisenberg", "lamplighter:2", "wreathZZ", "free:2"):
        trace = traces[name]
        res = check_entropy_vs_growth(trace, ball_sizes_from_trace(trace))
        assert res.verdict == "holds", (name, res.worst_margin)


def test_entropy_vs_growth_skips_z1():
    trace = walk_sequence(parse_group("Z^1"), 6)
    res = check_entropy_vs_growth(trace, ball_sizes_from_trace(trace))
    assert res.verdict == "skipped"
    assert "quadratic" in res.note


def test_speed_from_growth(traces):
    for name, trace in traces.items():
        res = check_speed_from_growth(trace, nu_fit=0.5)
        assert res.verdict == "holds", name
        assert res.fitted_constants["K_prime"] > 0
    res = check_speed_from_growth(traces["Z^2"], nu_fit=1.0)
    assert "uninformative" in res.note


def test_return_from_growth_gates_and_subclaim(traces):
    res = check_return_from_growth(traces["Z^2"],
                                   ball_sizes_from_trace(traces["Z^2"]))
    assert res.verdict == "skipped"
    assert "cubic" in res.note
    for name in ("heisenberg", "wreathZZ"):
        trace = traces[name]
        res = check_return_from_growth(trace, ball_sizes_from_trace(trace))
        assert res.verdict == "holds", (name, res.worst_margin)
        assert res.fitted_constants["K_doubleprime"] > 0


def test_return_from_growth_linear_hull_subclaim():
    # concave linear growth log: k^2/g(k) = k/c strictly increasing
    sizes = np.exp(0.7 * np.arange(17))
    sizes[0] = 1.0
    trace = walk_sequence(parse_group("wreathZZ"), 4)
    res = check_return_from_growth(trace, sizes[:trace.last_step + 1])
    assert all(m > 0 for _, m in res.margins)


def test_monotone_return_holds(traces):
    for name, trace in traces.items():
        res = check_monotone_return(trace)
        assert res.verdict == "holds", name


def test_pushforward_speed_identity_margin_zero(traces):
    trace = traces["lamplighter:2"]
    res = check_pushforward_speed(trace, trace)
    assert res.verdict == "holds"
    assert res.worst_margin == 0.0


def test_pushforward_speed_f2(traces):
    hom = pushforward_hom(parse_group("free:2"), parse_group("Z^1"), "free_to_z:1")
    pushed = walk_sequence(hom.target, 13, through=13,
                           step_atoms=pushed_step_atoms(hom))
    res = check_pushforward_speed(traces["free:2"], pushed, 13)
    assert res.verdict == "holds"
    by_n = dict(res.margins)
    assert all(by_n[n] > 0 for n in range(2, 14))


def test_pushforward_speed_wreath(traces):
    hom = pushforward_hom(parse_group("wreathZZ"), parse_group("Z^1"), "cursor")
    pushed = walk_sequence(hom.target, 13, through=13,
                           step_atoms=pushed_step_atoms(hom))
    res = check_pushforward_speed(traces["wreathZZ"], pushed, 13)
    assert res.verdict == "holds"


def test_od_fit_positive_on_z(traces):
    trace = walk_sequence(parse_group("Z^1"), 12)
    res = fit_od_constants(trace)
    assert res.informational
    assert res.fitted_constants["M_hat"] > 0


def test_od_fit_degenerate_window():
    trace = walk_sequence(parse_group("Z^1"), 0)
    res = fit_od_constants(trace)
    assert res.verdict in ("holds", "skipped")
    assert "degenerate" in res.note or res.verdict == "skipped"


def test_od_fit_wreath_reports(traces):
    res = fit_od_constants(traces["wreathZZ"])
    assert res.informational and res.fitted_constants["M_hat"] > 0


def test_chain_report_synthetic_linear():
    fits = {"beta": 1.0, "gamma": 1.0, "eta": 1.0, "nu": 1.0}
    res = exponent_chain_report(fits)
    assert res.informational
    by_label = dict(res.margins)
    assert by_label["beta <= (1+eta)/2"] >= 0


def test_trace_invariants_clean(traces):
    for name, trace in traces.items():
        res = check_trace_invariants(trace)
        assert res.verdict == "holds", (name, res.worst_at)


def test_trace_invariants_catch_corruption(traces):
    import copy
    trace = copy.deepcopy(walk_sequence(parse_group("Z^2"), 4))
    trace.records[3].mass = 0.9
    res = check_trace_invariants(trace)
    assert res.verdict == "violated"
