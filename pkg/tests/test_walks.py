import json
from fractions import Fraction

import numpy as np
import pytest

from cayleylab import (CacheError, GroupError, TraceError, cache_load, cache_store,
                       compute_ball, parse_group, sample_speed, walk_sequence)


def test_trace_covers_doubled_range():
    trace = walk_sequence(parse_group("Z^2"), 6)
    assert trace.last_step == 13
    assert len(trace.records) == 14


def test_n_max_zero_is_delta():
    trace = walk_sequence(parse_group("free:2"), 0)
    mu = trace.measure(0)
    assert mu.atom(()) == 1.0
    assert trace.record(0).support_size == 1


def test_trace_z_step5_matches_rational_oracle():
    trace = walk_sequence(parse_group("Z^1"), 2)
    oracle = walk_sequence(parse_group("Z^1"), 2, mode="rational")
    got = trace.record(5).return_prob
    want = oracle.measure(5).atom((0,))
    assert abs(got - float(want)) < 1e-15


def test_even_returns_strictly_decreasing_z2():
    trace = walk_sequence(parse_group("Z^2"), 8)
    rets = trace.returns()[0::2]
    assert np.all(np.diff(rets) < 0)


def test_missing_measure_raises():
    trace = walk_sequence(parse_group("Z^2"), 4, retain="none")
    with pytest.raises(TraceError):
        trace.measure(3)
    with pytest.raises(TraceError):
        trace.record(99)


def test_truncation_marks_trace():
    trace = walk_sequence(parse_group("free:2"), 10, support_budget=3000)
    assert trace.truncated
    assert trace.last_step < 21
    assert trace.record(trace.last_step).support_size <= 3000


def test_tracked_atoms_survive_without_retention():
    z = parse_group("Z^1")
    trace = walk_sequence(z, 4, retain="none", track_atoms=[(0,), (1,), (3,)])
    oracle = walk_sequence(z, 4, mode="rational")
    for n in range(trace.last_step + 1):
        assert abs(trace.atom(n, (3,)) - float(oracle.measure(n).atom((3,)))) < 1e-15


def test_bad_mode_rejected():
    with pytest.raises(GroupError):
        walk_sequence(parse_group("Z^1"), 2, mode="bogus")


# ------------------------------------------------------------------- laziness
def test_laziness_knob_changes_step():
    trace = walk_sequence(parse_group("Z^1"), 2, laziness=Fraction(3, 4))
    assert abs(trace.record(1).return_prob - 0.75) < 1e-15


# ------------------------------------------------------------------- sampling
def test_sample_speed_z_n1_exact_half():
    mean, stderr = sample_speed(parse_group("Z^1"), 1, 10_000, seed=7)
    assert abs(mean - 0.5) <= 5 * max(stderr, 1e-9)


def test_sample_speed_zero_trials_error():
    with pytest.raises(GroupError):
        sample_speed(parse_group("Z^1"), 5, 0, seed=1)


def test_sample_speed_deterministic():
    a = sample_speed(parse_group("free:2"), 10, 500, seed=11)
    b = sample_speed(parse_group("free:2"), 10, 500, seed=11)
    assert a == b


def test_sample_speed_matches_exact_wreath():
    spec = parse_group("wreathZZ")
    trace = walk_sequence(spec, 6)
    n = 12
    mean, stderr = sample_speed(spec, n, 4000, seed=3)
    exact = trace.record(n).speed
    assert abs(mean - exact) <= 5 * stderr


def test_sample_speed_needs_metric():
    spec = parse_group("heisenberg")
    with pytest.raises(GroupError):
        sample_speed(spec, 5, 10, seed=0)
    ball = compute_ball(spec, 5)
    mean, _ = sample_speed(spec, 5, 200, seed=0, ball=ball)
    assert 0 <= mean <= 5


# ------------------------------------------------------------------- cache
def test_cache_round_trip_bitwise(tmp_path):
    trace = walk_sequence(parse_group("Z^2"), 5)
    path = tmp_path / "trace.jsonl"
    cache_store(trace, path)
    loaded = cache_load(path, parse_group("Z^2"))
    assert loaded.last_step == trace.last_step
    for n in range(trace.last_step + 1):
        assert loaded.record(n).return_prob == trace.record(n).return_prob
        assert loaded.record(n).entropy == trace.record(n).entropy
        assert loaded.record(n).speed == trace.record(n).speed
        got = loaded.measure(n)
        want = trace.measure(n)
        for g, p in got.items():
            assert want.atom(g) == p
    cache_store(loaded, tmp_path / "again.jsonl")
    assert (tmp_path / "again.jsonl").read_bytes() == path.read_bytes()


def test_cache_rational_round_trip(tmp_path):
    trace = walk_sequence(parse_group("lamplighter:2"), 2, mode="rational")
    path = tmp_path / "r.jsonl"
    cache_store(trace, path)
    loaded = cache_load(path)
    mu = loaded.measure(4)
    assert mu.exact and mu.mass() == 1
    assert mu.atom((0, ())) == walk_sequence(parse_group("lamplighter:2"), 2,
                                             mode="rational").measure(4).atom((0, ()))


def test_cache_spec_mismatch(tmp_path):
    trace = walk_sequence(parse_group("Z^2"), 2)
    path = tmp_path / "t.jsonl"
    cache_store(trace, path)
    with pytest.raises(CacheError):
        cache_load(path, parse_group("Z^3"))


def test_cache_corrupt_file(tmp_path):
    trace = walk_sequence(parse_group("Z^2"), 2)
    path = tmp_path / "t.jsonl"
    cache_store(trace, path)
    data = path.read_text().splitlines()
    (tmp_path / "cut.jsonl").write_text("\n".join(data[:3]) + "\n")
    with pytest.raises(CacheError):
        cache_load(tmp_path / "cut.jsonl")
    (tmp_path / "garbage.jsonl").write_text("not json\n")
    with pytest.raises(CacheError):
        cache_load(tmp_path / "garbage.jsonl")


def test_cache_version_mismatch(tmp_path):
    trace = walk_sequence(parse_group("Z^2"), 1)
    path = tmp_path / "t.jsonl"
    cache_store(trace, path)
    lines = path.read_text().splitlines()
    header = json.loads(lines[0])
    header["schema_version"] = 999
    lines[0] = json.dumps(header, sort_keys=True)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(CacheError):
        cache_load(path)
