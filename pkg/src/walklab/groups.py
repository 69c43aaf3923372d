"""Finitely generated groups: element encodings, word metric, balls, quotients.

Five kinds are supported, each with a fixed canonical symmetric generating set
that contains the identity:

* ``lattice(d)``      -- Z^d with {0, +-e_i}; elements are d-tuples of ints.
* ``heisenberg3``     -- integer Heisenberg group, elements (x, y, z) with
                         (x,y,z)(x',y',z') = (x+x', y+y', z+z'+x*y').
* ``lamplighter(d)``  -- (Z/2Z) wr Z^d; elements (lamps, marker) where lamps is
                         a sorted tuple of lit positions (d-tuples) and marker
                         a d-tuple; generators: identity, +-shifts, toggle.
* ``free(k)``         -- free group on k letters; elements are reduced words,
                         tuples over {+-1..+-k}.
* ``sol``             -- Z x_A Z^2 with A = [[2,1],[1,1]]; elements (n, a, b).

Word length is the exact graph distance in the Cayley graph of the generating
set.  For lattice and free groups it has a closed form; the other kinds use a
breadth-first enumeration cached up to a configurable radius.  Groups are
immutable after the cache is filled (the fill happens on first metric query
and is append-only), so instances can be shared freely afterwards.
"""

from __future__ import annotations

import struct
from typing import Iterable

from .errors import (
    KindMismatchError,
    OutOfRangeError,
    ResourceLimitError,
    UsageError,
)

Element = tuple

_BFS_KINDS = frozenset({"heisenberg3", "lamplighter", "sol"})
_SOL_A = ((2, 1), (1, 1))
_SOL_A_INV = ((1, -1), (-1, 2))


def _vadd(u: tuple, v: tuple) -> tuple:
    return tuple(a + b for a, b in zip(u, v))


def _vneg(u: tuple) -> tuple:
    return tuple(-a for a in u)


def _sol_mat_pow(n: int) -> tuple:
    """A^n for the sol action matrix, exact integer entries."""
    m = ((1, 0), (0, 1))
    base = _SOL_A if n >= 0 else _SOL_A_INV
    for _ in range(abs(n)):
        m = (
            (m[0][0] * base[0][0] + m[0][1] * base[1][0],
             m[0][0] * base[0][1] + m[0][1] * base[1][1]),
            (m[1][0] * base[0][0] + m[1][1] * base[1][0],
             m[1][0] * base[0][1] + m[1][1] * base[1][1]),
        )
    return m


class Group:
    """A finitely generated group with a fixed canonical generating set."""

    def __init__(self, kind: str, d: int = 1, k: int = 2,
                 r_max: int | None = None, ball_cap: int = 2_000_000):
        if kind not in ("lattice", "heisenberg3", "lamplighter", "free", "sol"):
            raise UsageError(f"unknown group kind {kind!r}")
        if kind in ("lattice", "lamplighter") and d < 1:
            raise UsageError("dimension d must be >= 1")
        if kind == "free" and k < 1:
            raise UsageError("free rank k must be >= 1")
        self.kind = kind
        self.d = d if kind in ("lattice", "lamplighter") else (3 if kind in ("heisenberg3", "sol") else None)
        self.k = k if kind == "free" else None
        if r_max is None:
            r_max = 20 if kind in ("lattice", "heisenberg3") else 12
        self.r_max = r_max
        self.ball_cap = ball_cap
        self.identity = self._make_identity()
        self.generators = self._make_generators()
        # BFS cache: element -> distance, filled lazily out to the last
        # completed radius; read-only once a query has been answered.
        self._dist: dict[Element, int] = {self.identity: 0}
        self._frontier: list[Element] = [self.identity]
        self._bfs_radius = 0

    # -- construction helpers -------------------------------------------------

    def _make_identity(self) -> Element:
        if self.kind == "lattice":
            return (0,) * self.d
        if self.kind in ("heisenberg3", "sol"):
            return (0, 0, 0)
        if self.kind == "lamplighter":
            return ((), (0,) * self.d)
        return ()

    def _make_generators(self) -> tuple:
        e = self.identity
        if self.kind == "lattice":
            gens = [e]
            for i in range(self.d):
                step = tuple(1 if j == i else 0 for j in range(self.d))
                gens += [step, _vneg(step)]
            return tuple(gens)
        if self.kind == "heisenberg3":
            return (e, (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0))
        if self.kind == "sol":
            return (e, (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0),
                    (0, 0, 1), (0, 0, -1))
        if self.kind == "lamplighter":
            gens = [e]
            zero = (0,) * self.d
            for i in range(self.d):
                step = tuple(1 if j == i else 0 for j in range(self.d))
                gens += [((), step), ((), _vneg(step))]
            gens.append(((zero,), zero))  # toggle the lamp at the marker
            return tuple(gens)
        gens = [e]
        for i in range(1, self.k + 1):
            gens += [(i,), (-i,)]
        return tuple(gens)

    # -- group law -------------------------------------------------------------

    def multiply(self, g: Element, h: Element) -> Element:
        if self.kind == "lattice":
            if len(g) != self.d or len(h) != self.d:
                raise KindMismatchError("element dimension mismatch")
            return _vadd(g, h)
        if self.kind == "heisenberg3":
            return (g[0] + h[0], g[1] + h[1], g[2] + h[2] + g[0] * h[1])
        if self.kind == "sol":
            m = _sol_mat_pow(g[0])
            a = g[1] + m[0][0] * h[1] + m[0][1] * h[2]
            b = g[2] + m[1][0] * h[1] + m[1][1] * h[2]
            return (g[0] + h[0], a, b)
        if self.kind == "lamplighter":
            lamps_g, kg = g
            lamps_h, kh = h
            lamps = set(lamps_g)
            for p in lamps_h:
                q = _vadd(p, kg)
                if q in lamps:
                    lamps.discard(q)
                else:
                    lamps.add(q)
            return (tuple(sorted(lamps)), _vadd(kg, kh))
        # free: concatenate and cancel at the seam
        word = list(g)
        for letter in h:
            if word and word[-1] == -letter:
                word.pop()
            else:
                word.append(letter)
        return tuple(word)

    def invert(self, g: Element) -> Element:
        if self.kind == "lattice":
            return _vneg(g)
        if self.kind == "heisenberg3":
            return (-g[0], -g[1], -g[2] + g[0] * g[1])
        if self.kind == "sol":
            m = _sol_mat_pow(-g[0])
            a = -(m[0][0] * g[1] + m[0][1] * g[2])
            b = -(m[1][0] * g[1] + m[1][1] * g[2])
            return (-g[0], a, b)
        if self.kind == "lamplighter":
            lamps, kg = g
            nk = _vneg(kg)
            return (tuple(sorted(_vadd(p, nk) for p in lamps)), nk)
        return tuple(-letter for letter in reversed(g))

    # -- metric ------------------------------------------------------------------

    def word_length(self, g: Element) -> int:
        """Exact distance to the identity in the Cayley graph."""
        if self.kind == "lattice":
            return sum(abs(x) for x in g)
        if self.kind == "free":
            return len(g)
        cached = self._dist.get(g)
        if cached is not None:
            return cached
        while self._bfs_radius < self.r_max:
            self._expand_one_radius()
            cached = self._dist.get(g)
            if cached is not None:
                return cached
        raise OutOfRangeError(
            f"element beyond enumerated radius r_max={self.r_max}",
            lower_bound=self.r_max + 1,
        )

    def _expand_one_radius(self) -> None:
        nxt = []
        gens = [s for s in self.generators if s != self.identity]
        for g in self._frontier:
            for s in gens:
                h = self.multiply(g, s)
                if h not in self._dist:
                    self._dist[h] = self._bfs_radius + 1
                    nxt.append(h)
            if len(self._dist) > self.ball_cap:
                raise ResourceLimitError(
                    f"BFS exceeded ball_cap={self.ball_cap}",
                    suggestion="lower r_max or raise ball_cap",
                )
        self._frontier = nxt
        self._bfs_radius += 1

    def _ensure_radius(self, r: int) -> None:
        if self.kind in _BFS_KINDS and r > self.r_max:
            raise OutOfRangeError(
                f"radius {r} exceeds r_max={self.r_max}", lower_bound=self.r_max + 1
            )
        while self._bfs_radius < r:
            predicted = len(self._dist) * 3
            if predicted > self.ball_cap * 3:
                raise ResourceLimitError(
                    f"predicted ball size beyond cap at radius {self._bfs_radius + 1}",
                    suggestion="raise ball_cap",
                )
            self._expand_one_radius()

    def ball(self, r: int) -> tuple[list[Element], int]:
        """All elements of word length <= r (sorted) and the volume V(r)."""
        if r < 0:
            raise UsageError("radius must be >= 0")
        self._ensure_radius(r)
        elems = sorted(g for g, dist in self._dist.items() if dist <= r)
        return elems, len(elems)

    def volume(self, r: int) -> int:
        """V(r) = |B_r|, exact.  Lattice volumes use the closed formula."""
        if self.kind == "lattice":
            return _lattice_volume(self.d, r)
        if self.kind == "free":
            k = self.k
            if r == 0:
                return 1
            if k == 1:
                return 2 * r + 1
            return 1 + 2 * k * ((2 * k - 1) ** r - 1) // (2 * k - 2)
        self._ensure_radius(r)
        return sum(1 for dist in self._dist.values() if dist <= r)

    def volume_lower_bound(self, r: int) -> int:
        """A certified lower bound on V(r), valid beyond the enumerated range.

        Uses doubling, V(4n) >= 2 V(n), anchored at the largest exactly
        enumerable radius.
        """
        if self.kind in ("lattice", "free"):
            return self.volume(r)
        if r <= self.r_max:
            return self.volume(r)
        base_r = self.r_max
        doublings = 0
        while base_r * 4 <= r:
            base_r *= 4
            doublings += 1
        return self.volume(self.r_max) * (2 ** doublings)

    # -- encodings ----------------------------------------------------------------

    def encode(self, g: Element) -> bytes:
        """Deterministic byte encoding of a canonical element."""
        if self.kind in ("lattice", "heisenberg3", "sol"):
            return struct.pack(f">{len(g)}q", *g)
        if self.kind == "free":
            return struct.pack(f">{len(g)}h", *g)
        lamps, marker = g
        flat = [len(lamps)]
        for p in lamps:
            flat.extend(p)
        flat.extend(marker)
        return struct.pack(f">{len(flat)}q", *flat)

    def decode(self, blob: bytes) -> Element:
        """Inverse of :meth:`encode`."""
        if self.kind in ("lattice", "heisenberg3", "sol"):
            n = len(blob) // 8
            return struct.unpack(f">{n}q", blob)
        if self.kind == "free":
            n = len(blob) // 2
            return struct.unpack(f">{n}h", blob)
        n = len(blob) // 8
        flat = struct.unpack(f">{n}q", blob)
        n_lamps = flat[0]
        lamps = tuple(tuple(flat[1 + i * self.d: 1 + (i + 1) * self.d])
                      for i in range(n_lamps))
        marker = tuple(flat[1 + n_lamps * self.d:])
        return (lamps, marker)

    def spec_string(self) -> str:
        if self.kind == "lattice":
            return f"lattice:d={self.d}"
        if self.kind == "lamplighter":
            return f"lamplighter:d={self.d}"
        if self.kind == "free":
            return f"free:k={self.k}"
        return self.kind

    def __repr__(self) -> str:
        return f"Group({self.spec_string()!r})"

    def __eq__(self, other) -> bool:
        return (isinstance(other, Group) and self.kind == other.kind
                and self.d == other.d and self.k == other.k)

    def __hash__(self) -> int:
        return hash((self.kind, self.d, self.k))


def _lattice_volume(d: int, r: int) -> int:
    """Number of points of Z^d with L1 norm <= r."""
    from math import comb

    return sum((2 ** i) * comb(d, i) * comb(r, i) for i in range(0, min(d, r) + 1))


def lamp_element(lamps: Iterable, marker) -> Element:
    """Normalize human-friendly lamplighter input (ints for d=1) to canonical form."""
    norm = []
    for p in lamps:
        norm.append((p,) if isinstance(p, int) else tuple(p))
    m = (marker,) if isinstance(marker, int) else tuple(marker)
    return (tuple(sorted(norm)), m)


class FiniteQuotient:
    """Finite quotient of a lattice or lamplighter group.

    Elements are indexed 0..size-1; index 0 is the identity.  The projection
    from the parent group is a homomorphism, so measures push forward and
    convolution operators descend.
    """

    def __init__(self, parent: Group, m: int, size_cap: int = 10_000):
        if parent.kind not in ("lattice", "lamplighter"):
            raise UsageError(f"no finite quotients implemented for kind {parent.kind!r}")
        if m < 3:
            raise UsageError("modulus m must be >= 3")
        self.parent = parent
        self.m = m
        d = parent.d
        self.d = d
        self.n_sites = m ** d
        if parent.kind == "lattice":
            self.size = self.n_sites
        else:
            bits = self.n_sites
            if bits > 60 or (1 << bits) * self.n_sites > size_cap:
                raise ResourceLimitError(
                    f"lamplighter quotient size 2^{bits}*{self.n_sites} exceeds cap {size_cap}"
                )
            self.size = (1 << bits) * self.n_sites
        if self.size > size_cap:
            raise ResourceLimitError(f"quotient size {self.size} exceeds cap {size_cap}")
        self._wl_table: list[int] | None = None
        if parent.kind == "lamplighter":
            # site permutation under marker translation: _site_shift[t][s]
            self._site_shift = [
                [self._site_index(_vadd(self._site_coord(s), self._site_coord(t)))
                 for s in range(self.n_sites)]
                for t in range(self.n_sites)
            ]

    # -- site <-> coordinate helpers (mixed radix mod m) -------------------------

    def _site_index(self, coord: tuple) -> int:
        idx = 0
        for c in coord:
            idx = idx * self.m + (c % self.m)
        return idx

    def _site_coord(self, idx: int) -> tuple:
        out = []
        for _ in range(self.d):
            out.append(idx % self.m)
            idx //= self.m
        return tuple(reversed(out))

    # -- element indexing ----------------------------------------------------------

    def project(self, g: Element) -> int:
        """Index of the image of a parent-group element."""
        if self.parent.kind == "lattice":
            return self._site_index(g)
        lamps, marker = g
        mask = 0
        for p in lamps:
            mask ^= 1 << self._site_index(p)
        return mask * self.n_sites + self._site_index(marker)

    def multiply(self, i: int, j: int) -> int:
        if self.parent.kind == "lattice":
            a, b = self._site_coord(i), self._site_coord(j)
            return self._site_index(_vadd(a, b))
        mask_i, t_i = divmod(i, self.n_sites)
        mask_j, t_j = divmod(j, self.n_sites)
        shifted = 0
        shift = self._site_shift[t_i]
        mj = mask_j
        s = 0
        while mj:
            if mj & 1:
                shifted ^= 1 << shift[s]
            mj >>= 1
            s += 1
        return (mask_i ^ shifted) * self.n_sites + self._site_shift[t_i][t_j]

    def invert(self, i: int) -> int:
        if self.parent.kind == "lattice":
            return self._site_index(_vneg(self._site_coord(i)))
        mask, t = divmod(i, self.n_sites)
        t_inv = self._site_index(_vneg(self._site_coord(t)))
        shifted = 0
        shift = self._site_shift[t_inv]
        s = 0
        while mask:
            if mask & 1:
                shifted ^= 1 << shift[s]
            mask >>= 1
            s += 1
        return shifted * self.n_sites + t_inv

    def generator_indices(self) -> list[int]:
        return sorted({self.project(s) for s in self.parent.generators})

    def word_length(self, i: int) -> int:
        return self.word_length_table()[i]

    def word_length_table(self) -> list[int]:
        """Graph distance from the identity for every index (BFS, cached)."""
        if self._wl_table is None:
            dist = [-1] * self.size
            dist[0] = 0
            frontier = [0]
            gens = [s for s in self.generator_indices() if s != 0]
            while frontier:
                nxt = []
                for i in frontier:
                    for s in gens:
                        j = self.multiply(i, s)
                        if dist[j] < 0:
                            dist[j] = dist[i] + 1
                            nxt.append(j)
                frontier = nxt
            self._wl_table = dist
        return self._wl_table

    def spec_string(self) -> str:
        return f"quotient:{self.parent.spec_string()}:m={self.m}"

    def __repr__(self) -> str:
        return f"FiniteQuotient({self.parent.spec_string()}, m={self.m}, size={self.size})"


def parse_group_spec(spec: str, **kwargs) -> Group | FiniteQuotient:
    """Parse CLI group specs like ``lattice:d=2`` or ``quotient:lamplighter:d=1:m=4``."""
    parts = spec.strip().split(":")
    if parts[0] == "quotient":
        inner, params = _split_params(parts[1:])
        if "m" not in params:
            raise UsageError(f"quotient spec needs m=: {spec!r}")
        m = int(params.pop("m"))
        parent = _group_from_parts(inner, params, **kwargs)
        return FiniteQuotient(parent, m)
    inner, params = _split_params(parts)
    return _group_from_parts(inner, params, **kwargs)


def _split_params(parts: list[str]) -> tuple[list[str], dict]:
    names, params = [], {}
    for p in parts:
        if "=" in p:
            key, val = p.split("=", 1)
            params[key] = val
        else:
            names.append(p)
    return names, params


def _group_from_parts(names: list[str], params: dict, **kwargs) -> Group:
    if len(names) != 1:
        raise UsageError(f"malformed group spec parts {names!r}")
    kind = names[0]
    d = int(params.get("d", 1))
    k = int(params.get("k", 2))
    if "r_max" in params:
        kwargs.setdefault("r_max", int(params["r_max"]))
    return Group(kind, d=d, k=k, **kwargs)
