"""Walk traces: exact n-step distributions plus streamed per-step records.

``walk_sequence`` drives one of the engines through steps 0..2*n_max+1 (the
doubled range feeds every identity that compares step 2n with 2n+1) and
returns a WalkTrace holding

* one StepRecord per step: mass, return probability, entropy, speed and an
  optional per-radius profile -- cheap reductions computed while the support
  is live, so huge measures need not be retained;
* the measures themselves, for the steps the retention policy keeps;
* per-step values of explicitly tracked atoms (e.g. generators), so the
  compression pipeline can run without retaining anything else.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import CacheError, GroupError, TraceError
from .groups import Element, Family, GroupSpec, parse_group
from .measures import SparseMeasure
from . import engines as eng

SCHEMA_VERSION = 1
RETAIN_ATOM_LIMIT = 15_000_000


# --------------------------------------------------------------------------
# Measure snapshots
# --------------------------------------------------------------------------
class PackedMeasure:
    """Immutable snapshot of a packed engine step."""

    def __init__(self, spec, step, keys, probs, engine):
        self.spec = spec
        self.step = step
        self.keys = keys
        self.probs = probs
        self._engine = engine
        self.exact = False
        self.dropped_mass = 0.0

    @property
    def support_size(self):
        return len(self.keys)

    def mass(self):
        return float(self.probs.sum())

    def atom(self, g: Element) -> float:
        code = self._engine.encode(g)
        i = np.searchsorted(self.keys, code)
        if i < len(self.keys) and self.keys[i] == code:
            return float(self.probs[i])
        return 0.0

    def prob_values(self):
        return self.probs

    def to_sparse(self) -> SparseMeasure:
        if len(self.keys) > eng.TO_SPARSE_LIMIT:
            raise TraceError("support too large to expand into a dict measure")
        saved_keys = self._engine.keys
        self._engine.keys = self.keys
        try:
            elems = self._engine.elements()
        finally:
            self._engine.keys = saved_keys
        return SparseMeasure(self.spec, dict(zip(elems, self.probs.tolist())), self.step)


class BucketMeasure:
    """Immutable snapshot of a WreathBucketEngine step."""

    def __init__(self, spec, step, buckets, engine):
        self.spec = spec
        self.step = step
        self.buckets = buckets
        self._engine = engine
        self.exact = False
        self.dropped_mass = 0.0

    @property
    def support_size(self):
        return sum(len(k) for k, _ in self.buckets.values())

    def mass(self):
        return float(sum(p.sum() for _, p in self.buckets.values()))

    def atom(self, g: Element) -> float:
        cursor, lamps = g
        if cursor not in self.buckets:
            return 0.0
        keys, probs = self.buckets[cursor]
        key = self._engine._lamp_key(lamps)
        i = np.searchsorted(keys, key)
        if i < len(keys) and keys[i] == key:
            return float(probs[i])
        return 0.0

    def prob_values(self):
        return np.concatenate([self.buckets[c][1] for c in sorted(self.buckets)])

    def to_sparse(self) -> SparseMeasure:
        if self.support_size > eng.TO_SPARSE_LIMIT:
            raise TraceError("support too large to expand into a dict measure")
        saved = self._engine.buckets
        self._engine.buckets = self.buckets
        try:
            elems = self._engine.elements()
        finally:
            self._engine.buckets = saved
        return SparseMeasure(self.spec, dict(zip(elems, self.prob_values().tolist())), self.step)


class RadialMeasure:
    """Snapshot of the free-group radial engine: sphere masses by radius."""

    def __init__(self, spec, step, masses, engine):
        self.spec = spec
        self.step = step
        self.masses = masses
        self._engine = engine
        self.exact = False
        self.dropped_mass = 0.0

    @property
    def support_size(self):
        return int(round(self._engine._sphere_sizes[:len(self.masses)].sum()))

    def mass(self):
        return float(self.masses.sum())

    def atom(self, g: Element) -> float:
        r = len(g)
        if r >= len(self.masses):
            return 0.0
        return float(self.masses[r] / self._engine.sphere_size(r))

    def atom_at_radius(self, r: int) -> float:
        if r >= len(self.masses):
            return 0.0
        return float(self.masses[r] / self._engine.sphere_size(r))

    def to_sparse(self) -> SparseMeasure:
        if self.support_size > eng.TO_SPARSE_LIMIT:
            raise TraceError("support too large to expand into a dict measure")
        saved = self._engine.masses
        self._engine.masses = self.masses
        try:
            words = self._engine.elements()
        finally:
            self._engine.masses = saved
        vals = {w: self.atom(w) for w in words}
        return SparseMeasure(self.spec, vals, self.step)


Measure = SparseMeasure | PackedMeasure | BucketMeasure | RadialMeasure


# --------------------------------------------------------------------------
# Per-step records
# --------------------------------------------------------------------------
@dataclass
class StepRecord:
    n: int
    support_size: int
    mass: float
    return_prob: float
    entropy: float
    speed: float | None = None
    profile_count: np.ndarray | None = None
    profile_sum: np.ndarray | None = None
    profile_max: np.ndarray | None = None
    tracked: dict | None = None
    dropped_mass: float = 0.0


def _entropy_from(values: np.ndarray, mult: np.ndarray | None = None) -> float:
    vals = values[values > 0]
    if mult is None:
        return float(-np.dot(vals, np.log(vals)))
    mult = mult[values > 0]
    return float(-np.dot(mult * vals, np.log(vals)))


def _closed_lengths(spec: GroupSpec, elems) -> np.ndarray:
    return np.array([spec.word_length_closed(g) for g in elems], dtype=np.int64)


def _record_from_engine(engine, want_profile: bool, tracked_elems, heis_metric,
                        metric_ball=None):
    n = engine.step_index
    spec = engine.spec
    if isinstance(engine, eng.RadialFreeEngine):
        m = engine.masses
        sizes = engine._sphere_sizes[:len(m)]
        atom_vals = m / sizes
        rec = StepRecord(n, int(round(sizes.sum())), float(m.sum()), float(atom_vals[0]),
                         _entropy_from(atom_vals, sizes),
                         float(np.dot(np.arange(len(m), dtype=float), m)))
        if want_profile:
            rec.profile_count = sizes.astype(np.int64).copy()
            rec.profile_sum = m.copy()
            rec.profile_max = atom_vals.copy()
        if tracked_elems:
            rec.tracked = {g: (float(atom_vals[len(g)]) if len(g) < len(m) else 0.0)
                           for g in tracked_elems}
        return rec

    if isinstance(engine, eng.WreathBucketEngine):
        probs_all = []
        lens_all = []
        ret = 0.0
        ident_key = engine._lamp_key(())
        for c in sorted(engine.buckets):
            keys, probs = engine.buckets[c]
            probs_all.append(probs)
            if want_profile:
                lens_all.append(engine.bucket_lengths(c))
            if c == 0:
                i = np.searchsorted(keys, ident_key)
                if i < len(keys) and keys[i] == ident_key:
                    ret = float(probs[i])
        probs_cat = np.concatenate(probs_all)
        rec = StepRecord(n, len(probs_cat), float(probs_cat.sum()), ret,
                         _entropy_from(probs_cat))
        if want_profile:
            lens_cat = np.concatenate(lens_all)
            rec.speed = float(np.dot(lens_cat.astype(float), probs_cat))
            rec.profile_count, rec.profile_sum, rec.profile_max = \
                eng.sphere_profile(lens_cat, probs_cat)
        if tracked_elems:
            snap = BucketMeasure(spec, n, engine.buckets, engine)
            rec.tracked = {g: snap.atom(g) for g in tracked_elems}
        return rec

    if isinstance(engine, eng.DictEngine):
        mu = engine.current
        vals = mu.prob_values()
        rec = StepRecord(n, mu.support_size, float(vals.sum()),
                         float(mu.atom(spec.identity())), _entropy_from(vals),
                         dropped_mass=mu.dropped_mass)
        if want_profile:
            if metric_ball is not None:
                lens = np.array([metric_ball.length(g) for g in mu.probs],
                                dtype=np.int64)
            elif spec.word_length_closed(spec.identity()) is not None:
                lens = _closed_lengths(spec, mu.probs.keys())
            else:
                lens = None
            if lens is not None:
                rec.speed = float(np.dot(lens.astype(float), vals))
                rec.profile_count, rec.profile_sum, rec.profile_max = \
                    eng.sphere_profile(lens, vals)
        if tracked_elems:
            rec.tracked = {g: float(mu.atom(g)) for g in tracked_elems}
        return rec

    # packed engines (Z^d, Heisenberg, lamplighter)
    keys, probs = engine.keys, engine.probs
    ret_code = engine.encode(spec.identity())
    i = np.searchsorted(keys, ret_code)
    ret = float(probs[i]) if i < len(keys) and keys[i] == ret_code else 0.0
    rec = StepRecord(n, len(keys), float(probs.sum()), ret, _entropy_from(probs))
    if want_profile:
        if isinstance(engine, eng.HeisenbergPackedEngine):
            codes, dists = heis_metric
            pos = np.searchsorted(codes, keys)
            lens = dists[pos].astype(np.int64)
        else:
            lens = engine.lengths()
        rec.speed = float(np.dot(lens.astype(float), probs))
        rec.profile_count, rec.profile_sum, rec.profile_max = eng.sphere_profile(lens, probs)
    if tracked_elems:
        snap = PackedMeasure(spec, n, keys, probs, engine)
        rec.tracked = {g: snap.atom(g) for g in tracked_elems}
    return rec


def _snapshot(engine) -> Measure:
    n = engine.step_index
    if isinstance(engine, eng.DictEngine):
        return engine.current
    if isinstance(engine, eng.RadialFreeEngine):
        return RadialMeasure(engine.spec, n, engine.masses.copy(), engine)
    if isinstance(engine, eng.WreathBucketEngine):
        return BucketMeasure(engine.spec, n, dict(engine.buckets), engine)
    return PackedMeasure(engine.spec, n, engine.keys, engine.probs, engine)


# --------------------------------------------------------------------------
# Trace
# --------------------------------------------------------------------------
@dataclass
class WalkTrace:
    spec: GroupSpec
    mode: str
    laziness: Fraction
    n_param: int
    last_step: int
    records: list[StepRecord]
    measures: dict[int, Measure] = field(default_factory=dict)
    truncated: bool = False
    backend: str = "auto"

    def record(self, n: int) -> StepRecord:
        if not 0 <= n <= self.last_step:
            raise TraceError(f"step {n} outside trace (0..{self.last_step})")
        return self.records[n]

    def measure(self, n: int) -> Measure:
        try:
            return self.measures[n]
        except KeyError:
            raise TraceError(f"measure for step {n} not retained "
                             f"(trace holds {sorted(self.measures)[:8]}...)")

    def returns(self) -> np.ndarray:
        return np.array([r.return_prob for r in self.records])

    def entropies(self) -> np.ndarray:
        return np.array([r.entropy for r in self.records])

    def speeds(self) -> np.ndarray:
        return np.array([np.nan if r.speed is None else r.speed for r in self.records])

    def atom(self, n: int, g: Element) -> float:
        rec = self.record(n)
        if rec.tracked is not None and g in rec.tracked:
            return rec.tracked[g]
        return float(self.measure(n).atom(g))

    @property
    def dropped_mass(self) -> float:
        return max(r.dropped_mass for r in self.records)

    @property
    def generator_count(self) -> int:
        return len(self.spec.generators())


def walk_sequence(spec: GroupSpec, n_max: int, *, mode: str = "float",
                  backend: str = "auto", laziness: Fraction = Fraction(1, 2),
                  retain: str = "auto", profiles: bool | None = None,
                  track_atoms=None, step_atoms=None, through: int | None = None,
                  prune_below: float | None = None, metric_ball=None,
                  support_budget: int = 300_000_000) -> WalkTrace:
    """Compute the lazy walk through step ``2*n_max+1`` (or ``through``).

    The doubled horizon serves every downstream identity that needs steps 2n
    and 2n+1 for n <= n_max. ``retain`` is "all", "none", or "auto" (keep
    measures while the running atom total stays below a fixed cap). On
    support-budget overflow the trace is truncated and flagged, not raised.
    """
    if n_max < 0:
        raise GroupError("n_max must be >= 0")
    last = 2 * n_max + 1 if through is None else through
    exact = mode == "rational"
    if mode not in ("float", "rational"):
        raise GroupError(f"unknown mode {mode!r}")
    engine = eng.make_engine(spec, last, backend=backend, exact=exact,
                             laziness=laziness, step_atoms=step_atoms,
                             prune_below=prune_below)
    if profiles is None:
        profiles = True
    tracked = list(track_atoms) if track_atoms else None
    heis_metric = None
    if profiles and isinstance(engine, eng.HeisenbergPackedEngine):
        heis_metric = engine.ball_codes(last)

    records = [_record_from_engine(engine, profiles, tracked, heis_metric, metric_ball)]
    measures: dict[int, Measure] = {}
    retained_atoms = 0
    keep_all = retain == "all"
    keep_auto = retain == "auto"
    if keep_all or keep_auto:
        measures[0] = _snapshot(engine)
        retained_atoms += 1

    truncated = False
    for n in range(1, last + 1):
        projected = records[-1].support_size * (len(spec.generators()) + 1)
        if projected > support_budget:
            truncated = True
            last = n - 1
            break
        engine.advance()
        records.append(_record_from_engine(engine, profiles, tracked, heis_metric,
                                           metric_ball))
        if keep_all or (keep_auto and retained_atoms + records[-1].support_size
                        <= RETAIN_ATOM_LIMIT):
            measures[n] = _snapshot(engine)
            retained_atoms += records[-1].support_size
    return WalkTrace(spec, mode, laziness, n_max, last, records, measures,
                     truncated, backend)


# --------------------------------------------------------------------------
# Monte Carlo speed
# --------------------------------------------------------------------------
def sample_speed(spec: GroupSpec, n: int, trials: int, seed: int,
                 ball=None, laziness: float = 0.5) -> tuple[float, float]:
    """Empirical mean word length of the lazy walk at step n, with stderr.

    Requires a closed-form word length or a ball table covering radius n.
    Deterministic for a fixed seed.
    """
    if trials <= 0:
        raise GroupError("trials must be positive")
    if spec.word_length_closed(spec.identity()) is None and (
            ball is None or ball.radius_max < n):
        raise GroupError(f"word length unavailable at radius {n}; supply a ball table")
    rng = np.random.default_rng(seed)
    gens = spec.generators()
    k = len(gens)
    lengths = np.empty(trials)
    for t in range(trials):
        g = spec.identity()
        moves = rng.random(n)
        picks = rng.integers(0, k, size=n)
        for i in range(n):
            if moves[i] >= laziness:
                g = spec.mul(g, gens[picks[i]])
        wl = spec.word_length_closed(g)
        lengths[t] = ball.length(g) if wl is None else wl
    mean = float(lengths.mean())
    stderr = float(lengths.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return mean, stderr


# --------------------------------------------------------------------------
# Cache
# --------------------------------------------------------------------------
def _float_hex(x) -> str:
    return float(x).hex()


def _rec_to_json(rec: StepRecord, spec: GroupSpec) -> dict:
    out = {
        "n": rec.n,
        "support_size": rec.support_size,
        "mass": _float_hex(rec.mass),
        "return_prob": _float_hex(rec.return_prob),
        "entropy": _float_hex(rec.entropy),
        "speed": None if rec.speed is None else _float_hex(rec.speed),
        "dropped_mass": _float_hex(rec.dropped_mass),
    }
    if rec.profile_count is not None:
        out["profile_count"] = rec.profile_count.tolist()
        out["profile_sum"] = [_float_hex(v) for v in rec.profile_sum]
        out["profile_max"] = [_float_hex(v) for v in rec.profile_max]
    if rec.tracked is not None:
        out["tracked"] = [[spec.element_to_bytes(g).hex(), _float_hex(p)]
                          for g, p in rec.tracked.items()]
    return out


def _rec_from_json(obj: dict, spec: GroupSpec) -> StepRecord:
    rec = StepRecord(obj["n"], obj["support_size"], float.fromhex(obj["mass"]),
                     float.fromhex(obj["return_prob"]), float.fromhex(obj["entropy"]),
                     None if obj["speed"] is None else float.fromhex(obj["speed"]),
                     dropped_mass=float.fromhex(obj["dropped_mass"]))
    if "profile_count" in obj:
        rec.profile_count = np.array(obj["profile_count"], dtype=np.int64)
        rec.profile_sum = np.array([float.fromhex(v) for v in obj["profile_sum"]])
        rec.profile_max = np.array([float.fromhex(v) for v in obj["profile_max"]])
    if "tracked" in obj:
        rec.tracked = {spec.element_from_bytes(bytes.fromhex(k)): float.fromhex(v)
                       for k, v in obj["tracked"]}
    return rec


def cache_store(trace: WalkTrace, path) -> None:
    """Write a trace as versioned JSON lines (hex floats: bit-exact)."""
    spec = trace.spec
    with open(path, "w") as fh:
        header = {
            "schema_version": SCHEMA_VERSION,
            "kind": "walk_trace",
            "group": spec.name(),
            "mode": trace.mode,
            "laziness": str(Fraction(trace.laziness)),
            "n_param": trace.n_param,
            "last_step": trace.last_step,
            "truncated": trace.truncated,
            "backend": trace.backend,
            "retained_steps": sorted(trace.measures),
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in trace.records:
            fh.write(json.dumps(_rec_to_json(rec, spec), sort_keys=True) + "\n")
        for n in sorted(trace.measures):
            mu = trace.measures[n]
            sparse = mu if isinstance(mu, SparseMeasure) else mu.to_sparse()
            atoms = []
            for g, p in sparse.items():
                val = str(p) if sparse.exact else _float_hex(p)
                atoms.append([spec.element_to_bytes(g).hex(), val])
            fh.write(json.dumps({"measure": n, "atoms": atoms}) + "\n")
        fh.write(json.dumps({"end": True}) + "\n")


def cache_load(path, expected_spec: GroupSpec | None = None) -> WalkTrace:
    """Load a cached trace; refuses wrong versions, specs, or truncated files."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise CacheError(f"cannot read cache file: {exc}") from exc
    try:
        header = json.loads(lines[0])
    except (IndexError, json.JSONDecodeError) as exc:
        raise CacheError(f"corrupt cache header in {path}") from exc
    if header.get("schema_version") != SCHEMA_VERSION or header.get("kind") != "walk_trace":
        raise CacheError(f"cache version/kind mismatch in {path}")
    spec = parse_group(header["group"])
    if expected_spec is not None and spec != expected_spec:
        raise CacheError(f"cache holds {header['group']}, expected {expected_spec.name()}")
    try:
        body = [json.loads(line) for line in lines[1:]]
        if not body or body[-1] != {"end": True}:
            raise CacheError(f"truncated cache file {path}")
        records = []
        measures: dict[int, Measure] = {}
        exact = header["mode"] == "rational"
        for obj in body[:-1]:
            if "measure" in obj:
                probs = {}
                for key_hex, val in obj["atoms"]:
                    g = spec.element_from_bytes(bytes.fromhex(key_hex))
                    probs[g] = Fraction(val) if exact else float.fromhex(val)
                measures[obj["measure"]] = SparseMeasure(spec, probs, obj["measure"], exact)
            else:
                records.append(_rec_from_json(obj, spec))
    except CacheError:
        raise
    except Exception as exc:
        raise CacheError(f"corrupt cache file {path}: {exc}") from exc
    if len(records) != header["last_step"] + 1:
        raise CacheError(f"cache file {path} is missing step records")
    return WalkTrace(spec, header["mode"], Fraction(header["laziness"]),
                     header["n_param"], header["last_step"], records, measures,
                     header["truncated"], header["backend"])
