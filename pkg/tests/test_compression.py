import numpy as np
import pytest

from cayleylab import (CocycleConfig, ConfigError, TraceError, cocycle_norm_sq,
                       cocycle_weights, compression_bound_predicted,
                       compression_profile, compute_ball, parse_group, select_step,
                       walk_sequence)
from cayleylab.compression import step_selection_check
from cayleylab.measures import power
from cayleylab.observables import direct_displacement_norm_sq

Z1 = parse_group("Z^1")


@pytest.fixture(scope="module")
def z_trace():
    # steps 0..257: enough for n_terms = 64 with the argmin selection
    return walk_sequence(Z1, 128, retain="none",
                         track_atoms=[(j,) for j in range(-8, 9)])


# ------------------------------------------------------------------ selection
def test_select_step_in_window(z_trace):
    for n in (1, 2, 5, 10, 30):
        k = select_step(z_trace, n)
        assert n <= k <= 2 * n


def test_select_step_is_argmin_2n(z_trace):
    # lazy walks have log-convex even returns, so the gap decreases in k
    for n in range(1, 60):
        assert select_step(z_trace, n) == 2 * n


def test_select_step_needs_long_trace():
    trace = walk_sequence(Z1, 2)
    with pytest.raises(TraceError):
        select_step(trace, 2)


def test_selection_bound_all_families(small_traces):
    """Gap at the selected k stays below 8 f_P(n)/n with f_P the hull."""
    for trace in small_traces.values():
        data = step_selection_check(trace)
        assert data["worst_margin"] >= 0
        assert not data["argmin_not_2n"]
        assert data["observed_constant"] <= 8.0


# ------------------------------------------------------------------ weights
def test_weight_formula_z(z_trace):
    cfg = CocycleConfig(epsilon=1.0, n_terms=1)
    prof = cocycle_weights(z_trace, cfg)
    k1 = prof.kn[1]
    rets = z_trace.returns()
    disp = 2.0 * (rets[2 * k1] - z_trace.atom(2 * k1, (1,)))
    assert abs(prof.weights[1] - 1.0 / disp) < 1e-15


def test_weights_positive_and_normalized(z_trace):
    cfg = CocycleConfig(epsilon=0.3, n_terms=32)
    prof = cocycle_weights(z_trace, cfg)
    for n in range(1, 33):
        assert prof.weights[n] > 0
        # a_n^2 * max_s disp = n^(-1-eps) by construction
        assert abs(prof.weights[n] * prof.gen_disp[n] - n ** (-1.3)) < 1e-15
        # summability certificate: the series sum n^(-1-eps) dominates
        assert prof.weights[n] * prof.gen_disp[n] <= n ** (-1.3) + 1e-15


def test_weights_decrease_with_epsilon(z_trace):
    lo = cocycle_weights(z_trace, CocycleConfig(epsilon=0.2, n_terms=16))
    hi = cocycle_weights(z_trace, CocycleConfig(epsilon=0.4, n_terms=16))
    for n in range(2, 17):
        assert hi.weights[n] <= lo.weights[n] + 1e-18


def test_config_validation():
    with pytest.raises(ConfigError):
        CocycleConfig(epsilon=0.0)
    with pytest.raises(ConfigError):
        CocycleConfig(n_terms=0)
    with pytest.raises(ConfigError):
        CocycleConfig(kn_mode="nope")


# ------------------------------------------------------------------ cocycle norm
def test_cocycle_vanishes_at_identity(z_trace):
    prof = cocycle_weights(z_trace, CocycleConfig(n_terms=16))
    exact, bound = cocycle_norm_sq(prof, z_trace, (0,))
    assert exact == 0.0 and bound == 0.0


def test_cocycle_symmetric_under_inversion(z_trace):
    prof = cocycle_weights(z_trace, CocycleConfig(n_terms=16))
    for g in ((1,), (3,), (7,)):
        plus, _ = cocycle_norm_sq(prof, z_trace, g)
        minus, _ = cocycle_norm_sq(prof, z_trace, Z1.inv(g))
        assert abs(plus - minus) < 1e-15


def test_cocycle_bound_below_exact(z_trace):
    prof = cocycle_weights(z_trace, CocycleConfig(n_terms=32))
    for g in ((1,), (2,), (5,), (8,)):
        exact, bound = cocycle_norm_sq(prof, z_trace, g)
        assert bound <= exact + 1e-10


def test_cocycle_monotone_in_truncation(z_trace):
    vals = []
    for n_terms in (8, 16, 32, 64):
        prof = cocycle_weights(z_trace, CocycleConfig(n_terms=n_terms))
        vals.append(cocycle_norm_sq(prof, z_trace, (4,))[0])
    assert all(vals[i] <= vals[i + 1] + 1e-15 for i in range(len(vals) - 1))


def test_cocycle_norm_vs_direct_vector_oracle():
    """Exact truncated sum against a literal l2 computation of the blocks."""
    trace = walk_sequence(Z1, 128, retain="none",
                          track_atoms=[(j,) for j in range(-5, 6)])
    cfg = CocycleConfig(epsilon=0.1, n_terms=64)
    prof = cocycle_weights(trace, cfg)
    g = (4,)
    expect = 0.0
    for n in range(1, 65):
        k = int(prof.kn[n])
        w = power(Z1, k)  # independent dict convolution of the step measure
        expect += prof.weights[n] * direct_displacement_norm_sq(w, g)
    got, _ = cocycle_norm_sq(prof, trace, g)
    assert abs(got - expect) < 1e-10


# ------------------------------------------------------------------ profile
def test_compression_profile_small_z():
    trace = walk_sequence(Z1, 128, retain="none",
                          track_atoms=[(j,) for j in range(-8, 9)])
    prof = cocycle_weights(trace, CocycleConfig(epsilon=0.1, n_terms=64))
    ball = compute_ball(Z1, 8)
    est = compression_profile(prof, trace, ball, 8)
    assert est.rho_minus[0] == 0.0
    assert np.all(est.rho_minus[1:] > 0)
    assert np.all(np.diff(est.rho_minus) > 0)
    assert not est.sampled.any()
    assert est.n_points[3] == 2  # Z spheres have two points
    assert 0.5 < est.slope < 1.0


def test_compression_profile_sampling_flag(rng):
    spec = parse_group("free:2")
    trace = walk_sequence(spec, 8, backend="dict", retain="all")
    prof = cocycle_weights(trace, CocycleConfig(epsilon=0.5, n_terms=2))
    ball = compute_ball(spec, 4)
    est = compression_profile(prof, trace, ball, 4, enum_limit=20, min_samples=10)
    assert est.sampled[3] and est.sampled[4]   # spheres of 108 and 324 words
    assert not est.sampled[1]
    assert est.n_points[4] == 10


def test_predicted_bounds():
    assert compression_bound_predicted(0.0, "general") == 1.0
    assert compression_bound_predicted(0.0, "od") == 1.0
    assert abs(compression_bound_predicted(1 / 3, "general") - 0.5) < 1e-15
    assert abs(compression_bound_predicted(1 / 3, "od") - 2 / 3) < 1e-15
    assert compression_bound_predicted(1.0, "general") == 0.0
    assert compression_bound_predicted(1.0, "od") == 0.0
    with pytest.raises(ConfigError):
        compression_bound_predicted(1.5, "od")
    with pytest.raises(ConfigError):
        compression_bound_predicted(0.5, "nope")
