"""Sampling-based estimators: collision estimates of return probabilities and
the visited-sites (range) functional of lattice walks.

The collision estimator draws N independent endpoints of n-step walks and
returns sum_x m_x (m_x - 1) / (N (N - 1)), an unbiased estimator of
sum_x p_x^2 = phi^(2n)(e) for symmetric phi; its standard error comes from a
delete-block jackknife over contiguous sample blocks.  All randomness flows
through explicit (seed, stream) pairs, so estimates replay bit-identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .groups import Element, Group
from .measures import FiniteMeasure, check_symmetric

_MAX_SAMPLING_DEFICIT = 1e-3


@dataclass(frozen=True)
class RngStream:
    """Deterministic (seed, stream id) handle onto a PCG64 generator."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return RngStream(int(rng)).generator()


class AliasTable:
    """Walker alias sampler over a finite probability vector."""

    def __init__(self, probs: np.ndarray):
        p = np.asarray(probs, dtype=float)
        if np.any(p < 0):
            raise UsageError("negative probabilities")
        p = p / p.sum()
        n = len(p)
        scaled = p * n
        self.prob = np.ones(n)
        self.alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        scaled = scaled.copy()
        while small and large:
            s, l = small.pop(), large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = l
            scaled[l] = scaled[l] - (1.0 - scaled[s])
            (small if scaled[l] < 1.0 else large).append(l)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        idx = rng.integers(0, len(self.prob), size=size)
        take_alias = rng.random(size=np.shape(idx)) >= self.prob[idx]
        return np.where(take_alias, self.alias[idx], idx)


def _sampling_setup(phi: FiniteMeasure):
    """(elements, alias table, per-step bias bound) with kept atoms renormalized."""
    if phi.deficit > _MAX_SAMPLING_DEFICIT:
        raise UsageError(
            f"deficit {phi.deficit:.2e} too large for sampling (max {_MAX_SAMPLING_DEFICIT})")
    elems = []
    weights = []
    for g, w in sorted(phi.items()):
        elems.append(g)
        weights.append(w)
    return elems, AliasTable(np.asarray(weights)), phi.deficit


def sample_step_product(phi: FiniteMeasure, n: int, rng) -> Element:
    """Endpoint of one n-step walk driven by phi (deficit resampled away)."""
    gen = _as_generator(rng)
    elems, alias, _ = _sampling_setup(phi)
    group = phi.group
    idx = alias.sample(gen, n)
    if group.kind == "lattice":
        coords = np.array([elems[i] for i in idx], dtype=np.int64)
        return tuple(int(x) for x in coords.sum(axis=0))
    out = group.identity
    for i in idx:
        out = group.multiply(out, elems[int(i)])
    return out


@dataclass
class CollisionEstimate:
    n: int
    n_samples: int
    estimate: float
    stderr: float
    collisions: int
    bias_bound: float
    seed_info: tuple = ()


def collision_return_estimate(phi: FiniteMeasure, n: int, n_samples: int, rng,
                              blocks: int = 20) -> CollisionEstimate:
    """Unbiased collision estimate of phi^(2n)(e) from N endpoint draws."""
    if n_samples < 1000:
        raise UsageError("need at least 10^3 samples")
    if not check_symmetric(phi):
        raise UsageError("collision estimator needs a symmetric measure")
    gen = _as_generator(rng)
    keys = _endpoint_keys(phi, n, n_samples, gen)
    return _collision_from_keys(keys, n, n_samples, phi.deficit * n, blocks)


def _endpoint_keys(phi: FiniteMeasure, n: int, n_samples: int,
                   gen: np.random.Generator) -> list:
    """Canonical hashable endpoint keys for n_samples independent walks."""
    elems, alias, _ = _sampling_setup(phi)
    group = phi.group
    if group.kind == "lattice":
        coords = np.array(elems, dtype=np.int64)
        out = np.zeros((n_samples, group.d), dtype=np.int64)
        chunk = max(1, int(4e7) // max(n, 1))
        for lo in range(0, n_samples, chunk):
            hi = min(lo + chunk, n_samples)
            idx = alias.sample(gen, (hi - lo, n))
            out[lo:hi] = coords[idx].sum(axis=1)
        return [row.tobytes() for row in out]
    if group.kind == "lamplighter":
        return _lamplighter_endpoint_keys(group, elems, alias, n, n_samples, gen)
    keys = []
    for _ in range(n_samples):
        idx = alias.sample(gen, n)
        g = group.identity
        for i in idx:
            g = group.multiply(g, elems[int(i)])
        keys.append(g)
    return keys


def _lamplighter_endpoint_keys(group: Group, elems, alias: AliasTable, n: int,
                               n_samples: int, gen: np.random.Generator) -> list:
    """Vectorized lamplighter walks: cumulative markers plus lamp-toggle parity."""
    d = group.d
    n_atoms = len(elems)
    markers = np.array([g[1] for g in elems], dtype=np.int64)      # (A, d)
    lamp_counts = np.array([len(g[0]) for g in elems])
    max_lamps = int(lamp_counts.max()) if n_atoms else 0
    lamp_rel = np.zeros((n_atoms, max_lamps, d), dtype=np.int64)
    for a, g in enumerate(elems):
        for j, p in enumerate(g[0]):
            lamp_rel[a, j] = p
    keys = []
    chunk = max(1, int(5e6) // max(n, 1))
    for lo in range(0, n_samples, chunk):
        m = min(lo + chunk, n_samples) - lo
        idx = alias.sample(gen, (m, n))                            # (m, n)
        steps = markers[idx]                                       # (m, n, d)
        pre = np.cumsum(steps, axis=1) - steps                     # marker before step
        final = pre[:, -1] + steps[:, -1]                          # (m, d)
        counts = lamp_counts[idx]                                  # (m, n)
        walk_ids = np.broadcast_to(np.arange(m)[:, None], (m, n))
        ev_walk = []
        ev_pos = []
        for j in range(max_lamps):
            mask = counts > j
            if not mask.any():
                continue
            ev_walk.append(walk_ids[mask])
            ev_pos.append(pre[mask] + lamp_rel[idx[mask], j])
        if ev_walk:
            ev_walk = np.concatenate(ev_walk)
            ev_pos = np.concatenate(ev_pos)
        else:
            ev_walk = np.zeros(0, dtype=np.int64)
            ev_pos = np.zeros((0, d), dtype=np.int64)
        keys.extend(_parity_keys(m, ev_walk, ev_pos, final))
    return keys


def _parity_keys(m: int, ev_walk: np.ndarray, ev_pos: np.ndarray,
                 final: np.ndarray) -> list:
    """Per-walk canonical (odd-parity lamp set, final marker) byte keys."""
    d = final.shape[1]
    if len(ev_walk):
        flat = np.concatenate([ev_walk[:, None], ev_pos], axis=1)
        order = np.lexsort(tuple(flat[:, k] for k in range(flat.shape[1] - 1, -1, -1)))
        flat = flat[order]
        uniq, counts = np.unique(flat, axis=0, return_counts=True)
        odd = uniq[counts % 2 == 1]
    else:
        odd = np.zeros((0, d + 1), dtype=np.int64)
    keys = []
    boundaries = np.searchsorted(odd[:, 0], np.arange(m + 1))
    for w in range(m):
        lamps = odd[boundaries[w]:boundaries[w + 1], 1:]
        keys.append(lamps.tobytes() + b"|" + final[w].tobytes())
    return keys


def _collision_from_keys(keys: list, n: int, n_samples: int, bias_bound: float,
                         blocks: int) -> CollisionEstimate:
    total_counts: dict = {}
    for k in keys:
        total_counts[k] = total_counts.get(k, 0) + 1
    t_full = sum(m * (m - 1) for m in total_counts.values() if m > 1)
    estimate = t_full / (n_samples * (n_samples - 1))
    collisions = t_full // 2
    # delete-block jackknife
    block_of = np.minimum(np.arange(n_samples) * blocks // n_samples, blocks - 1)
    block_counts: dict = {}
    for i, k in enumerate(keys):
        bk = (k, int(block_of[i]))
        block_counts[bk] = block_counts.get(bk, 0) + 1
    t_b = np.full(blocks, float(t_full))
    n_b = np.zeros(blocks, dtype=np.int64)
    for (k, b), c in block_counts.items():
        m = total_counts[k]
        # removing block b: m -> m - c changes m(m-1) by -(2mc - c^2 - c)
        t_b[b] -= 2 * m * c - c * c - c
        n_b[b] += c
    rest = n_samples - n_b
    theta = t_b / (rest * (rest - 1.0))
    mean = theta.mean()
    stderr = math.sqrt(max((blocks - 1) / blocks * float(((theta - mean) ** 2).sum()), 0.0))
    return CollisionEstimate(n, n_samples, estimate, stderr, int(collisions),
                             bias_bound)


@dataclass
class RangeSample:
    """Visited-site counts of N independent n-step lattice walks."""

    n: int
    n_samples: int
    counts: np.ndarray = field(repr=False)
    s_grid: tuple = ()
    laplace: tuple = ()            # (mean of exp(-s D), stderr) per s
    bias_bound: float = 0.0

    @property
    def mean(self) -> float:
        return float(self.counts.mean())

    @property
    def variance(self) -> float:
        return float(self.counts.var(ddof=1))


def range_functional(mu: FiniteMeasure, n: int, n_samples: int, s_grid,
                     rng) -> RangeSample:
    """Simulate the number of distinct visited sites D_n and its Laplace
    functional E[exp(-s D_n)] over the given s grid."""
    group = mu.group
    if group.kind != "lattice":
        raise UsageError("range functional is defined for lattice walks")
    gen = _as_generator(rng)
    elems, alias, deficit = _sampling_setup(mu)
    coords = np.array(elems, dtype=np.int64)
    d = group.d
    counts = np.zeros(n_samples, dtype=np.int64)
    chunk = max(1, int(3e7) // max(n, 1))
    for lo in range(0, n_samples, chunk):
        m = min(lo + chunk, n_samples) - lo
        idx = alias.sample(gen, (m, n))
        steps = coords[idx]                                   # (m, n, d)
        path = np.concatenate(
            [np.zeros((m, 1, d), dtype=np.int64), np.cumsum(steps, axis=1)], axis=1)
        if d == 1:
            flat = path[:, :, 0]
        else:
            base = np.int64(1) << 20
            flat = path[:, :, 0]
            for k in range(1, d):
                flat = flat * (2 * base) + (path[:, :, k] + base)
        flat = np.sort(flat, axis=1)
        counts[lo:lo + m] = 1 + (np.diff(flat, axis=1) != 0).sum(axis=1)
    s_grid = tuple(float(s) for s in s_grid)
    laplace = []
    for s in s_grid:
        vals = np.exp(-s * counts)
        laplace.append((float(vals.mean()),
                        float(vals.std(ddof=1) / math.sqrt(n_samples))))
    return RangeSample(n, n_samples, counts, s_grid, tuple(laplace),
                       bias_bound=deficit * n)
