import math
from fractions import Fraction

import pytest

from cayleylab import GroupError, TraceError, convolve, delta, lazy_step_measure, parse_group
from cayleylab.measures import check_measure, power


def binomial_lazy_z(n, j):
    """Independent oracle: the half-lazy walk on Z is a 2n-step fair walk,
    so P^(n)(j) = C(2n, n+j) / 4^n."""
    if abs(j) > n:
        return Fraction(0)
    return Fraction(math.comb(2 * n, n + j), 4 ** n)


def test_lazy_step_z():
    step = lazy_step_measure(parse_group("Z^1"))
    assert step.atom((0,)) == 0.5
    assert step.atom((1,)) == 0.25
    assert step.atom((-1,)) == 0.25


def test_lazy_step_free2():
    step = lazy_step_measure(parse_group("free:2"))
    assert step.atom(()) == 0.5
    for s in parse_group("free:2").generators():
        assert step.atom(s) == 0.125


def test_lazy_step_lamplighter():
    step = lazy_step_measure(parse_group("lamplighter:2"))
    assert step.atom((0, ())) == 0.5
    assert abs(step.atom((1, ())) - 1 / 6) < 1e-15


def test_lazy_step_bad_laziness():
    with pytest.raises(GroupError):
        lazy_step_measure(parse_group("Z^1"), laziness=Fraction(1))


def test_convolve_z_two_steps():
    z = parse_group("Z^1")
    mu = power(z, 2)
    assert abs(mu.atom((0,)) - 3 / 8) < 1e-16
    assert abs(mu.atom((1,)) - 1 / 4) < 1e-16
    assert abs(mu.atom((2,)) - 1 / 16) < 1e-16


def test_convolve_z_rational_three_steps():
    mu = power(parse_group("Z^1"), 3, exact=True)
    assert mu.atom((0,)) == Fraction(5, 16)
    for j in range(-3, 4):
        assert mu.atom((j,)) == binomial_lazy_z(3, j)


@pytest.mark.parametrize("n", range(7))
def test_rational_z_matches_binomial_oracle(n):
    mu = power(parse_group("Z^1"), n, exact=True)
    for j in range(-n - 1, n + 2):
        assert mu.atom((j,)) == binomial_lazy_z(n, j)


def test_delta_convolution():
    spec = parse_group("free:2")
    dg = delta(spec, (1, 2))
    dh = delta(spec, (-2, 1))
    out = convolve(dg, dh)
    assert out.probs == {(1, 1): 1.0}


def test_convolve_rejects_mixed_modes():
    z = parse_group("Z^1")
    with pytest.raises(GroupError):
        convolve(delta(z), lazy_step_measure(z, exact=True))
    with pytest.raises(GroupError):
        convolve(delta(z), lazy_step_measure(parse_group("Z^2")))


def test_mass_conservation_float():
    mu = power(parse_group("lamplighter:2"), 12)
    assert abs(mu.mass() - 1.0) <= 12 * 1e-14


def test_rational_mass_exact():
    mu = power(parse_group("wreathZZ"), 6, exact=True)
    assert mu.mass() == 1


def test_symmetry_under_inversion():
    spec = parse_group("free:2")
    mu = power(spec, 5, exact=True)
    for g, p in mu.items():
        assert mu.atom(spec.inv(g)) == p


def test_pruning_tracks_dropped_mass():
    z = parse_group("Z^1")
    step = lazy_step_measure(z)
    mu = delta(z)
    for _ in range(8):
        mu = convolve(mu, step, prune_below=1e-4)
    assert mu.dropped_mass > 0
    assert abs(mu.mass() + mu.dropped_mass - 1.0) < 1e-12


def test_check_measure_catches_bad_mass():
    mu = power(parse_group("Z^1"), 3)
    mu.probs[(0,)] *= 0.9
    with pytest.raises(TraceError):
        check_measure(mu)


def test_check_measure_catches_asymmetry():
    mu = power(parse_group("Z^1"), 3)
    mu.probs[(1,)], mu.probs[(-1,)] = 0.30, mu.probs[(1,)] + mu.probs[(-1,)] - 0.30
    with pytest.raises(TraceError):
        check_measure(mu)


def test_check_measure_support_against_ball():
    from cayleylab import compute_ball
    spec = parse_group("Z^2")
    ball = compute_ball(spec, 6)
    mu = power(spec, 4)
    check_measure(mu, ball)
    mu.probs[(5, 2)] = 1e-30
    with pytest.raises(TraceError):
        check_measure(mu, ball)
