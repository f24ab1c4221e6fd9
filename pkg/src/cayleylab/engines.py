"""Vectorized walk engines.

Every engine iterates the lazy convolution exactly (no pruning) but stores
supports in numpy arrays instead of dicts:

* ``ZdPackedEngine``        -- Z^d, coordinates packed into one int64.
* ``HeisenbergPackedEngine``-- (x, y, z) packed into one int64.
* ``LamplighterPackedEngine``-- cursor and lamp field bits in one int64.
* ``WreathBucketEngine``    -- Z wr Z; lamp bytes per cursor bucket.
* ``RadialFreeEngine``      -- free groups, whose lazy walk is isotropic on
                              the Cayley tree, reduced to a radial chain.
* ``DictEngine``            -- reference path over measures.convolve.

The packed engines rely on one fact: right multiplication by a generator is
a translation of the packed key inside each block of the leading field, so
key order is preserved and each convolution step is a k-way merge of sorted
streams (the lamplighter toggle is the one exception and re-sorts its
stream). Merges use a fixed order, so float results are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BudgetError, GroupError
from .groups import Element, Family, GroupSpec
from .measures import SparseMeasure, convolve, delta, lazy_step_measure

TO_SPARSE_LIMIT = 2_000_000


def merge_dedup(keys_a: np.ndarray, probs_a: np.ndarray,
                keys_b: np.ndarray, probs_b: np.ndarray):
    """Merge two key-sorted streams, summing probabilities of equal keys."""
    na, nb = len(keys_a), len(keys_b)
    if na == 0:
        return keys_b.copy(), probs_b.copy()
    if nb == 0:
        return keys_a, probs_a
    pos_a = np.arange(na, dtype=np.int64) + np.searchsorted(keys_b, keys_a, side="left")
    pos_b = np.arange(nb, dtype=np.int64) + np.searchsorted(keys_a, keys_b, side="right")
    keys = np.empty(na + nb, dtype=keys_a.dtype)
    probs = np.empty(na + nb)
    keys[pos_a] = keys_a
    keys[pos_b] = keys_b
    probs[pos_a] = probs_a
    probs[pos_b] = probs_b
    fresh = np.empty(len(keys), dtype=bool)
    fresh[0] = True
    np.not_equal(keys[1:], keys[:-1], out=fresh[1:])
    idx = np.flatnonzero(fresh)
    return keys[idx], np.add.reduceat(probs, idx)


def sphere_profile(lengths: np.ndarray, probs: np.ndarray):
    """Per-radius (count, probability sum, probability max) triple of arrays."""
    order = np.argsort(lengths, kind="stable")  # radix sort for small ints
    ls = lengths[order]
    ps = probs[order]
    bounds = np.empty(len(ls), dtype=bool)
    bounds[0] = True
    np.not_equal(ls[1:], ls[:-1], out=bounds[1:])
    idx = np.flatnonzero(bounds)
    radii = ls[idx].astype(np.int64)
    rmax = int(radii[-1])
    count = np.zeros(rmax + 1, dtype=np.int64)
    total = np.zeros(rmax + 1)
    peak = np.zeros(rmax + 1)
    count[radii] = np.diff(np.append(idx, len(ls)))
    total[radii] = np.add.reduceat(ps, idx)
    peak[radii] = np.maximum.reduceat(ps, idx)
    return count, total, peak


# --------------------------------------------------------------------------
# Z^d
# --------------------------------------------------------------------------
class ZdPackedEngine:
    """Walk on Z^d with an arbitrary finitely supported symmetric step.

    ``atoms`` maps offset vectors to weights; default is the standard lazy
    step. Every stream is a constant key translation, hence sorted.
    """

    def __init__(self, spec: GroupSpec, n_steps: int, laziness: float = 0.5,
                 atoms: list[tuple[tuple, float]] | None = None):
        self.spec = spec
        d = spec.rank
        if atoms is None:
            atoms = [((0,) * d, laziness)]
            w = (1.0 - laziness) / (2 * d)
            for s in spec.generators():
                atoms.append((s, w))
        reach = n_steps * max(max(abs(c) for c in v) if v else 0 for v, _ in atoms)
        self.width = max(int(reach).bit_length() + 2, 4)
        if self.width * d > 62:
            raise BudgetError(f"Z^{d} walk of {n_steps} steps does not fit packed keys")
        self.bias = 1 << (self.width - 1)
        self.atoms = atoms
        self.deltas = [self._pack_offset(v) for v, _ in atoms]
        self.weights = [w for _, w in atoms]
        self.keys = np.array([self._encode_one((0,) * d)], dtype=np.int64)
        self.probs = np.array([1.0])
        self.step_index = 0

    def _pack_offset(self, v: tuple) -> np.int64:
        # signed delta: adding it to a packed key shifts each coordinate field
        # exactly (field slack guarantees no borrow crosses field boundaries)
        code = 0
        for c in v:
            code = code * (1 << self.width) + c
        return np.int64(code)

    def _encode_one(self, v: tuple) -> np.int64:
        code = 0
        for c in v:
            code = (code << self.width) | (c + self.bias)
        return np.int64(code)

    def encode(self, g: Element) -> np.int64:
        return self._encode_one(g)

    def decode(self, keys: np.ndarray) -> np.ndarray:
        d = self.spec.rank
        out = np.empty((len(keys), d), dtype=np.int64)
        mask = (1 << self.width) - 1
        for i in range(d - 1, -1, -1):
            out[:, i] = (keys & mask) - self.bias
            keys = keys >> self.width
        return out

    def advance(self):
        keys, probs = self.keys, self.probs
        acc_k, acc_p = keys, probs * self.weights[0]
        for dlt, w in zip(self.deltas[1:], self.weights[1:]):
            acc_k, acc_p = merge_dedup(acc_k, acc_p, keys + dlt, probs * w)
        self.keys, self.probs = acc_k, acc_p
        self.step_index += 1

    def lengths(self) -> np.ndarray:
        return np.abs(self.decode(self.keys)).sum(axis=1)

    def elements(self):
        return [tuple(int(c) for c in row) for row in self.decode(self.keys)]


# --------------------------------------------------------------------------
# Heisenberg
# --------------------------------------------------------------------------
class HeisenbergPackedEngine:
    """Discrete Heisenberg group; |z| <= n^2/4 bounds the z field exactly."""

    def __init__(self, spec: GroupSpec, n_steps: int, laziness: float = 0.5):
        self.spec = spec
        self.xy_bits = max(int(n_steps).bit_length() + 2, 4)
        self.z_bits = max(int(n_steps * n_steps // 4 + n_steps + 1).bit_length() + 2, 6)
        if 2 * self.xy_bits + self.z_bits > 62:
            raise BudgetError(f"heisenberg walk of {n_steps} steps does not fit packed keys")
        self.bias_xy = 1 << (self.xy_bits - 1)
        self.bias_z = 1 << (self.z_bits - 1)
        self.lazy = laziness
        self.move = (1.0 - laziness) / 4.0
        self.keys = np.array([self.encode((0, 0, 0))], dtype=np.int64)
        self.probs = np.array([1.0])
        self.step_index = 0

    def encode(self, g: Element) -> np.int64:
        x, y, z = g
        return np.int64(((x + self.bias_xy) << (self.xy_bits + self.z_bits))
                        | ((y + self.bias_xy) << self.z_bits)
                        | (z + self.bias_z))

    def decode(self, keys: np.ndarray):
        z = (keys & ((np.int64(1) << self.z_bits) - 1)) - self.bias_z
        y = ((keys >> self.z_bits) & ((np.int64(1) << self.xy_bits) - 1)) - self.bias_xy
        x = (keys >> (self.z_bits + self.xy_bits)) - self.bias_xy
        return x, y, z

    def _streams(self, keys: np.ndarray):
        # right multiplication: g*a = (x+1,y,z), g*b = (x,y+1,z+x)
        dx = np.int64(1) << (self.xy_bits + self.z_bits)
        dy = np.int64(1) << self.z_bits
        x = (keys >> (self.z_bits + self.xy_bits)) - self.bias_xy
        yield keys + dx
        yield keys - dx
        yield keys + (dy + x)
        yield keys - (dy + x)

    def advance(self):
        keys, probs = self.keys, self.probs
        acc_k, acc_p = keys, probs * self.lazy
        for stream in self._streams(keys):
            acc_k, acc_p = merge_dedup(acc_k, acc_p, stream, probs * self.move)
        self.keys, self.probs = acc_k, acc_p
        self.step_index += 1

    def ball_codes(self, radius: int):
        """BFS word lengths over packed codes: (sorted codes, uint8 lengths)."""
        visited = np.array([self.encode((0, 0, 0))], dtype=np.int64)
        dist = np.array([0], dtype=np.uint8)
        frontier = visited
        for r in range(1, radius + 1):
            cands = None
            for stream in self._streams(frontier):
                stream = np.sort(stream)
                cands = stream if cands is None else np.union1d(cands, stream)
            pos = np.minimum(np.searchsorted(visited, cands), len(visited) - 1)
            fresh = cands[visited[pos] != cands]
            merged = np.empty(len(visited) + len(fresh), dtype=np.int64)
            mdist = np.empty(len(merged), dtype=np.uint8)
            pa = np.arange(len(visited)) + np.searchsorted(fresh, visited, side="left")
            pb = np.arange(len(fresh)) + np.searchsorted(visited, fresh, side="right")
            merged[pa] = visited
            mdist[pa] = dist
            merged[pb] = fresh
            mdist[pb] = r
            visited, dist, frontier = merged, mdist, fresh
        return visited, dist

    def elements(self):
        x, y, z = self.decode(self.keys)
        return list(zip(x.tolist(), y.tolist(), z.tolist()))


# --------------------------------------------------------------------------
# Lamplighter Z_m wr Z
# --------------------------------------------------------------------------
class LamplighterPackedEngine:
    """Lamp state bits and cursor in one int64.

    Site j in [-W, W] occupies ``site_bits`` bits starting at j+W; the cursor
    sits above the lamp field. Cursor moves are key translations; the lamp
    increment re-sorts its stream (value wrap-around breaks order).
    """

    def __init__(self, spec: GroupSpec, n_steps: int, laziness: float = 0.5):
        self.spec = spec
        self.m = spec.rank
        self.site_bits = max(1, (self.m - 1).bit_length())
        self.window = n_steps
        sites = 2 * self.window + 1
        self.lamp_bits = sites * self.site_bits
        cursor_bits = int(n_steps + 1).bit_length() + 1
        if self.lamp_bits + cursor_bits > 62:
            raise BudgetError(
                f"lamplighter:{self.m} walk of {n_steps} steps does not fit packed keys")
        self.cursor_bias = n_steps + 1
        self.lazy = laziness
        n_gens = len(spec.generators())
        self.move = (1.0 - laziness) / n_gens
        self.keys = np.array([self.encode((0, ()))], dtype=np.int64)
        self.probs = np.array([1.0])
        self.step_index = 0

    def encode(self, g: Element) -> np.int64:
        cursor, lamps = g
        code = (cursor + self.cursor_bias) << self.lamp_bits
        for pos, val in lamps:
            code |= val << ((pos + self.window) * self.site_bits)
        return np.int64(code)

    def _cursor(self, keys: np.ndarray) -> np.ndarray:
        return (keys >> self.lamp_bits) - self.cursor_bias

    def _lamp_stream(self, keys: np.ndarray, delta: int) -> np.ndarray:
        """Lamp value at the cursor changes by delta mod m; returns unsorted keys."""
        shift = (self._cursor(keys) + self.window) * self.site_bits
        mask = (np.int64(1) << self.site_bits) - 1
        val = (keys >> shift) & mask
        new = (val + delta) % self.m
        return keys - (val << shift) + (new << shift)

    def advance(self):
        keys, probs = self.keys, self.probs
        acc_k, acc_p = keys, probs * self.lazy
        dcur = np.int64(1) << self.lamp_bits
        for delta in (dcur, -dcur):
            acc_k, acc_p = merge_dedup(acc_k, acc_p, keys + delta, probs * self.move)
        lamp_deltas = (1,) if self.m == 2 else (1, self.m - 1)
        for delta in lamp_deltas:
            stream = self._lamp_stream(keys, delta)
            order = np.argsort(stream, kind="stable")
            acc_k, acc_p = merge_dedup(acc_k, acc_p, stream[order], probs[order] * self.move)
        self.keys, self.probs = acc_k, acc_p
        self.step_index += 1

    def lengths(self) -> np.ndarray:
        keys = self.keys
        cursor = self._cursor(keys)
        lamps = keys & ((np.int64(1) << self.lamp_bits) - 1)
        if self.m == 2:
            by = lamps.astype("<u8").view(np.uint8).reshape(-1, 8)
            cost = _POPCOUNT[by].sum(axis=1)
            nz = lamps != 0
            low = (lamps & -lamps).astype(np.float64)
            _, lo_exp = np.frexp(np.maximum(low, 1.0))
            _, hi_exp = np.frexp(np.maximum(lamps.astype(np.float64), 1.0))
            lo_site = np.where(nz, lo_exp - 1, 0) - self.window
            hi_site = np.where(nz, hi_exp - 1, 0) - self.window
        else:
            sites = 2 * self.window + 1
            mask = (np.int64(1) << self.site_bits) - 1
            vals = np.empty((len(keys), sites), dtype=np.int64)
            for j in range(sites):
                vals[:, j] = (lamps >> (j * self.site_bits)) & mask
            cost = np.minimum(vals, self.m - vals).sum(axis=1)
            on = vals != 0
            nz = on.any(axis=1)
            lo_site = np.where(nz, on.argmax(axis=1), 0) - self.window
            hi_site = np.where(nz, sites - 1 - on[:, ::-1].argmax(axis=1), 0) - self.window
        lo = np.minimum(np.where(nz, lo_site, 0), np.minimum(0, cursor))
        hi = np.maximum(np.where(nz, hi_site, 0), np.maximum(0, cursor))
        travel = (hi - lo) + np.minimum((0 - lo) + (hi - cursor), hi + (cursor - lo))
        return cost + travel

    def elements(self):
        out = []
        mask = (np.int64(1) << self.site_bits) - 1
        for key in self.keys.tolist():
            cursor = (key >> self.lamp_bits) - self.cursor_bias
            lamps = []
            field = key & ((1 << self.lamp_bits) - 1)
            j = 0
            while field:
                v = field & int(mask)
                if v:
                    lamps.append((j - self.window, v))
                field >>= self.site_bits
                j += 1
            out.append((cursor, tuple(lamps)))
        return out


_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


# --------------------------------------------------------------------------
# Z wr Z
# --------------------------------------------------------------------------
class WreathBucketEngine:
    """Z wr Z with one byte per lamp site, partitioned by cursor.

    Within a bucket every stream stays sorted (cursor moves keep lamp keys,
    lamp increments translate one fixed column), so steps are pure merges.
    Bucketing also caps transient memory during merges.
    """

    def __init__(self, spec: GroupSpec, n_steps: int, laziness: float = 0.5):
        self.spec = spec
        self.window = max(n_steps - 1, 1)
        if n_steps > 100:
            raise BudgetError("wreathZZ engine supports at most 100 steps")
        self.ncol = 2 * self.window + 1
        self.dtype = np.dtype(f"S{self.ncol}")
        self.lazy = laziness
        self.move = (1.0 - laziness) / 4.0
        ident = np.full((1, self.ncol), 128, dtype=np.uint8)
        self.buckets = {0: (ident.view(self.dtype).ravel().copy(), np.array([1.0]))}
        self.step_index = 0

    def _lamp_key(self, lamps) -> np.void:
        row = np.full((1, self.ncol), 128, dtype=np.uint8)
        for pos, val in lamps:
            row[0, pos + self.window] = val + 128
        return row.view(self.dtype).ravel()[0]

    def advance(self):
        old = self.buckets
        new = {}
        lo = min(old) - 1
        hi = max(old) + 1
        for c in range(lo, hi + 1):
            streams = []
            if c in old:
                keys, probs = old[c]
                streams.append((keys, probs * self.lazy))
                mat = keys.view(np.uint8).reshape(-1, self.ncol)
                col = c + self.window
                for dv in (1, 255):  # +-1 on the biased byte
                    m2 = mat.copy()
                    m2[:, col] += np.uint8(dv)
                    streams.append((m2.view(self.dtype).ravel(), probs * self.move))
            for src in (c - 1, c + 1):
                if src in old:
                    keys, probs = old[src]
                    streams.append((keys, probs * self.move))
            if not streams:
                continue
            acc_k, acc_p = streams[0]
            if acc_p is streams[0][1]:
                acc_p = acc_p.copy() if len(streams) == 1 else acc_p
            for keys, probs in streams[1:]:
                acc_k, acc_p = merge_dedup(acc_k, acc_p, keys, probs)
            new[c] = (acc_k, acc_p)
        self.buckets = new
        self.step_index += 1

    def support_size(self) -> int:
        return sum(len(k) for k, _ in self.buckets.values())

    def bucket_lengths(self, cursor: int) -> np.ndarray:
        keys, _ = self.buckets[cursor]
        mat = keys.view(np.uint8).reshape(-1, self.ncol).astype(np.int16) - 128
        cost = np.abs(mat).sum(axis=1)
        on = mat != 0
        nz = on.any(axis=1)
        lo_site = np.where(nz, on.argmax(axis=1), 0) - self.window
        hi_site = np.where(nz, self.ncol - 1 - on[:, ::-1].argmax(axis=1), 0) - self.window
        lo = np.minimum(np.where(nz, lo_site, 0), np.minimum(0, cursor))
        hi = np.maximum(np.where(nz, hi_site, 0), np.maximum(0, cursor))
        travel = (hi - lo) + np.minimum((0 - lo) + (hi - cursor), hi + (cursor - lo))
        return cost + travel

    def elements(self):
        out = []
        for c in sorted(self.buckets):
            keys, _ = self.buckets[c]
            mat = keys.view(np.uint8).reshape(-1, self.ncol).astype(np.int16) - 128
            for row in mat:
                lamps = tuple((int(j - self.window), int(v))
                              for j, v in enumerate(row) if v != 0)
                out.append((c, lamps))
        return out

    def all_probs(self) -> np.ndarray:
        return np.concatenate([self.buckets[c][1] for c in sorted(self.buckets)])


# --------------------------------------------------------------------------
# Free groups: radial reduction
# --------------------------------------------------------------------------
class RadialFreeEngine:
    """Lazy walk on free:k via the distance-from-identity chain.

    The uniform lazy step is invariant under every tree automorphism fixing
    e, and that stabilizer is transitive on spheres, so P^(n)(g) depends on
    |g| only. ``masses[r]`` carries the total probability of the sphere of
    radius r; per-atom values divide by the sphere size 2k(2k-1)^(r-1).
    """

    def __init__(self, spec: GroupSpec, n_steps: int, laziness: float = 0.5):
        self.spec = spec
        self.k2 = 2 * spec.rank
        self.lazy = laziness
        self.masses = np.array([1.0])
        self.step_index = 0
        self._sphere_sizes = np.ones(n_steps + 2)
        for r in range(1, n_steps + 2):
            self._sphere_sizes[r] = self.k2 * (self.k2 - 1) ** (r - 1)

    def sphere_size(self, r: int) -> float:
        return float(self._sphere_sizes[r])

    def advance(self):
        m = self.masses
        n = len(m)
        new = np.zeros(n + 1)
        new[:n] += self.lazy * m
        mobile = 1.0 - self.lazy
        out_frac = np.full(n, mobile * (self.k2 - 1) / self.k2)
        out_frac[0] = mobile
        new[1:n + 1] += m * out_frac
        if n > 1:
            new[0:n - 1] += m[1:] * (mobile / self.k2)
        self.masses = new
        self.step_index += 1

    def atom_values(self) -> np.ndarray:
        return self.masses / self._sphere_sizes[:len(self.masses)]

    def elements(self):
        # explicit reduced words, radius by radius (small supports only)
        words = [()]
        frontier = [()]
        letters = [c for i in range(1, self.spec.rank + 1) for c in (i, -i)]
        for _ in range(1, len(self.masses)):
            nxt = []
            for w in frontier:
                for c in letters:
                    if not w or w[-1] != -c:
                        nxt.append(w + (c,))
            words.extend(nxt)
            frontier = nxt
        return words


# --------------------------------------------------------------------------
# Reference dict engine
# --------------------------------------------------------------------------
class DictEngine:
    """Generic engine over SparseMeasure convolution (float or exact)."""

    def __init__(self, spec: GroupSpec, n_steps: int, laziness=None, exact: bool = False,
                 step_measure: SparseMeasure | None = None, prune_below: float | None = None):
        from fractions import Fraction
        lz = Fraction(1, 2) if laziness is None else laziness
        self.spec = spec
        self.current = delta(spec, exact=exact)
        if step_measure is None:
            step_measure = lazy_step_measure(spec, exact=exact, laziness=lz)
        self.step_measure = step_measure
        self.prune_below = prune_below
        self.step_index = 0

    def advance(self):
        self.current = convolve(self.current, self.step_measure, self.prune_below)
        self.step_index += 1
        self.current.step = self.step_index


def make_engine(spec: GroupSpec, n_steps: int, *, backend: str = "auto",
                exact: bool = False, laziness=None, step_atoms=None,
                prune_below: float | None = None):
    """Pick the walk engine for a family; ``backend='dict'`` forces reference."""
    if exact or backend == "dict":
        step = None
        if step_atoms is not None:
            probs = {tuple(v): w for v, w in step_atoms}
            step = SparseMeasure(spec, probs, 1, exact)
        return DictEngine(spec, n_steps, laziness, exact, step, prune_below)
    if backend not in ("auto", "packed"):
        raise GroupError(f"unknown backend {backend!r}")
    lz = 0.5 if laziness is None else float(laziness)
    f = spec.family
    if step_atoms is not None:
        if f is not Family.FREE_ABELIAN:
            raise GroupError("custom step atoms need a Z^d group or the dict backend")
        return ZdPackedEngine(spec, n_steps, lz, [(tuple(v), float(w)) for v, w in step_atoms])
    if f is Family.FREE_ABELIAN:
        return ZdPackedEngine(spec, n_steps, lz)
    if f is Family.HEISENBERG:
        return HeisenbergPackedEngine(spec, n_steps, lz)
    if f is Family.FREE:
        return RadialFreeEngine(spec, n_steps, lz)
    if f is Family.LAMPLIGHTER:
        try:
            return LamplighterPackedEngine(spec, n_steps, lz)
        except BudgetError:
            return DictEngine(spec, n_steps, laziness)
    return WreathBucketEngine(spec, n_steps, lz)
