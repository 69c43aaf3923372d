"""Group convolution, return-probability series with two-sided rigor, and the
finite-mixture sup-norm bound.

Return probabilities are computed by repeated squaring: for symmetric phi,
phi^(2n)(e) = sum_x phi^(n)(x)^2, so squaring the half-power chain gives the
even return values.  Truncation (threshold drops, window crops, inherited
measure deficits) is tracked through two scalars per chain state:

* ``deficit`` delta_n: total mass missing from the computed phi_hat^(n);
* ``residual_sup`` V_n: a bound on the sup-norm of the missing part r_n as a
  function.

Both update under convolution (r compounds as 2*phi_hat*r + r*r plus newly
dropped atoms), and together they give the bracket

    lower = sum phi_hat^(n)(x)^2
    upper <= lower + 2*min(V_n * mass_n, sup_n * delta_n) + min(V_n, 1) * delta_n,

which stays tight even when the dropped mass is large, provided it is far
away and spread out (small V).  The cruder bound lower + delta*(2*sup + 1) is
also taken when smaller.  FFT-based squarings subtract a flat per-entry
roundoff allowance so that computed weights never exceed the true ones beyond
that allowance; brackets are rigorous up to float rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.signal import fftconvolve

from .errors import KindMismatchError, ResourceLimitError, UsageError
from .groups import Group
from .measures import FiniteMeasure, MixtureSpec, check_symmetric

_FFT_MIN = 4096          # direct np.convolve below this output length
_FFT_ETA = 1e-15         # per-entry roundoff allowance on FFT paths


def _default_eps(out_len: int) -> float:
    return 1e-14 / max(out_len, 1)


# ---------------------------------------------------------------------------
# chain state: measure data + truncation bookkeeping, three storage engines
# ---------------------------------------------------------------------------


@dataclass
class _State:
    mass: float
    deficit: float
    vsup: float          # residual sup bound V
    sup: float           # max computed weight
    # engine payloads
    kind: str = "sparse"
    atoms: dict | None = None
    w: np.ndarray | None = None
    off: tuple | int | None = None

    def lower(self) -> float:
        if self.kind == "sparse":
            return math.fsum(v * v for v in self.atoms.values())
        return float(np.vdot(self.w, self.w))


def _state_from_measure(mu: FiniteMeasure) -> _State:
    g = mu.group
    if g.kind == "lattice" and g.d == 1:
        w, off = mu.dense1d()
        return _State(mu.mass, mu.deficit, mu.residual_sup, float(w.max()),
                      kind="dense1", w=w, off=off)
    if g.kind == "lattice" and g.d in (2, 3):
        atoms = mu.atoms_dict()
        lo = [min(x[i] for x in atoms) for i in range(g.d)]
        hi = [max(x[i] for x in atoms) for i in range(g.d)]
        w = np.zeros([h - l + 1 for l, h in zip(lo, hi)])
        for x, v in atoms.items():
            w[tuple(a - l for a, l in zip(x, lo))] = v
        return _State(mu.mass, mu.deficit, mu.residual_sup, float(w.max()),
                      kind="densen", w=w, off=tuple(lo))
    atoms = mu.atoms_dict()
    return _State(mu.mass, mu.deficit, mu.residual_sup,
                  max(atoms.values()), kind="sparse", atoms=atoms)


def _book(a: _State, b: _State, max_drop: float, eta: float,
          out_mass: float) -> tuple:
    """(deficit, V) of the product measure.

    The residual r = a_hat*r_b + r_a*b_hat + r_a*r_b + dropped atoms + fft
    allowance; each convolution term's sup is bounded by
    min(sup of one factor, L1 of the other).  Dropped-mass totals are already
    reflected in out_mass, hence in the deficit.
    """
    deficit = 1.0 - out_mass
    v = (min(a.sup * b.deficit, b.vsup * a.mass)
         + min(b.sup * a.deficit, a.vsup * b.mass)
         + min(a.vsup * b.deficit, b.vsup * a.deficit)
         + max_drop + eta)
    return deficit, min(v, deficit)


def _mul_dense1(a: _State, b: _State, eps: float | None, max_len: int) -> _State:
    out_len = len(a.w) + len(b.w) - 1
    if out_len >= _FFT_MIN:
        w = fftconvolve(a.w, b.w)
        eta = _FFT_ETA
        w = np.maximum(w - eta, 0.0)
    else:
        w = np.convolve(a.w, b.w)
        eta = 0.0
    off = a.off + b.off
    if eps is None:
        eps = _default_eps(out_len)
    dropped = 0.0
    max_drop = 0.0
    if eps > 0.0:
        small = (w > 0.0) & (w < eps)
        if small.any():
            dropped += float(w[small].sum())
            max_drop = float(w[small].max())
            w[small] = 0.0
    if len(w) > max_len:
        if eps == 0.0:
            raise ResourceLimitError(
                f"support {len(w)} exceeds window {max_len} with eps=0",
                suggestion="raise max_len or allow eps > 0")
        # crop to the central window around 0
        lo = -(max_len // 2) - off
        hi = lo + max_len
        lo, hi = max(lo, 0), min(hi, len(w))
        outside = np.concatenate([w[:lo], w[hi:]])
        if len(outside):
            dropped += float(outside.sum())
            max_drop = max(max_drop, float(outside.max()))
        w = w[lo:hi]
        off = off + lo
    mass = float(w.sum())
    out_sup = float(w.max())
    deficit, v = _book(a, b, max_drop, 2.0 * eta, mass)
    return _State(mass, deficit, v, out_sup, kind="dense1", w=w, off=off)


def _mul_densen(a: _State, b: _State, eps: float | None, max_len: int) -> _State:
    out_shape = [x + y - 1 for x, y in zip(a.w.shape, b.w.shape)]
    if np.prod(out_shape) > max_len * 4:
        raise ResourceLimitError("nd convolution window exceeded",
                                 suggestion="raise max_len or eps")
    w = fftconvolve(a.w, b.w)
    eta = _FFT_ETA
    w = np.maximum(w - eta, 0.0)
    off = tuple(x + y for x, y in zip(a.off, b.off))
    if eps is None:
        eps = _default_eps(int(np.prod(out_shape)))
    dropped = 0.0
    max_drop = 0.0
    if eps > 0.0:
        small = (w > 0.0) & (w < eps)
        if small.any():
            dropped = float(w[small].sum())
            max_drop = float(w[small].max())
            w[small] = 0.0
    nz = np.nonzero(w)
    if len(nz[0]) == 0:
        raise UsageError("convolution support vanished under the drop threshold")
    slices = tuple(slice(int(ix.min()), int(ix.max()) + 1) for ix in nz)
    w = w[slices]
    off = tuple(o + s.start for o, s in zip(off, slices))
    mass = float(w.sum())
    out_sup = float(w.max())
    deficit, v = _book(a, b, max_drop, 2.0 * eta, mass)
    return _State(mass, deficit, v, out_sup, kind="densen", w=w, off=off)


def _mul_sparse(a: _State, b: _State, eps: float | None, group: Group,
                support_cap: int) -> _State:
    if len(a.atoms) * len(b.atoms) > 400_000_000:
        raise ResourceLimitError("sparse convolution too large",
                                 suggestion="increase eps or use a lattice group")
    out: dict = {}
    mul = group.multiply
    for g, wg in sorted(a.atoms.items()):
        for h, wh in sorted(b.atoms.items()):
            z = mul(g, h)
            out[z] = out.get(z, 0.0) + wg * wh
        if len(out) > support_cap:
            raise ResourceLimitError(
                f"support exceeded cap {support_cap}",
                suggestion="increase eps to drop small atoms")
    if eps is None:
        eps = _default_eps(len(out))
    dropped = 0.0
    max_drop = 0.0
    if eps > 0.0:
        kill = [g for g, v in out.items() if v < eps]
        for g in kill:
            dropped += out[g]
            max_drop = max(max_drop, out[g])
            del out[g]
    mass = math.fsum(out.values())
    out_sup = max(out.values())
    deficit, v = _book(a, b, max_drop, 0.0, mass)
    return _State(mass, deficit, v, out_sup, kind="sparse", atoms=out)


def _state_mul(a: _State, b: _State, eps, group, max_len, support_cap) -> _State:
    if a.kind == "dense1":
        return _mul_dense1(a, b, eps, max_len)
    if a.kind == "densen":
        return _mul_densen(a, b, eps, max_len)
    return _mul_sparse(a, b, eps, group, support_cap)


# ---------------------------------------------------------------------------
# public convolution
# ---------------------------------------------------------------------------


def convolve(mu: FiniteMeasure, nu: FiniteMeasure, eps: float | None = None,
             max_len: int = 1 << 23, support_cap: int = 4_000_000) -> FiniteMeasure:
    """Exact group convolution with threshold drops into the deficit.

    weight(z) = sum over xy = z of mu(x) nu(y); atoms below ``eps`` are
    dropped and their mass is added to the deficit, so the result is a
    pointwise lower bound for the true pushforward.
    """
    if mu.group != nu.group:
        raise KindMismatchError("measures live on different groups")
    a, b = _state_from_measure(mu), _state_from_measure(nu)
    out = _state_mul(a, b, eps, mu.group, max_len, support_cap)
    if out.kind == "sparse":
        return FiniteMeasure(mu.group, atoms=out.atoms, deficit=out.deficit,
                             residual_sup=out.vsup, check=False)
    if out.kind == "dense1":
        return FiniteMeasure(mu.group, dense=(out.w, out.off), deficit=out.deficit,
                             residual_sup=out.vsup, check=False)
    atoms = {}
    nz = np.nonzero(out.w)
    for idx in zip(*nz):
        atoms[tuple(int(i) + o for i, o in zip(idx, out.off))] = float(out.w[idx])
    return FiniteMeasure(mu.group, atoms=atoms, deficit=out.deficit,
                         residual_sup=out.vsup, check=False)


def convolve_rational(group: Group, a: dict, b: dict) -> dict:
    """Exact rational convolution of small atom dictionaries."""
    if len(a) * len(b) > 1_000_000:
        raise ResourceLimitError("rational mode is for supports <= 10^3")
    out: dict = {}
    for g, wg in a.items():
        for h, wh in b.items():
            z = group.multiply(g, h)
            out[z] = out.get(z, Fraction(0)) + wg * wh
    return out


def rational_return_values(mu: FiniteMeasure, n_max: int) -> dict[int, Fraction]:
    """phi^(n)(e) as exact rationals for n = 1..n_max (oracle mode)."""
    group = mu.group
    atoms = {g: Fraction(w).limit_denominator(10 ** 15)
             for g, w in mu.items()}
    total = sum(atoms.values())
    atoms = {g: w / total for g, w in atoms.items()}
    out = {}
    power = atoms
    out[1] = power.get(group.identity, Fraction(0))
    for n in range(2, n_max + 1):
        power = convolve_rational(group, power, atoms)
        out[n] = power.get(group.identity, Fraction(0))
    return out


# ---------------------------------------------------------------------------
# return series
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReturnRecord:
    n: int                       # even power 2m
    lower: float
    upper: float
    method: str = "exact"


@dataclass
class ReturnSeries:
    records: list[ReturnRecord]
    group_spec: str = ""
    measure_spec: str = ""
    eps: float | None = None

    def ns(self) -> list[int]:
        return [r.n for r in self.records]

    def bracket(self, n: int) -> ReturnRecord:
        for r in self.records:
            if r.n == n:
                return r
        raise KeyError(n)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# group: {self.group_spec}\n# measure: {self.measure_spec}\n")
            fh.write(f"# eps: {self.eps!r}\n")
            fh.write("n,lower,upper,method\n")
            for r in self.records:
                fh.write(f"{r.n},{r.lower!r},{r.upper!r},{r.method}\n")

    @staticmethod
    def from_csv(path) -> "ReturnSeries":
        records = []
        meta = {"group": "", "measure": "", "eps": None}
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("n,"):
                    continue
                if line.startswith("#"):
                    key, _, val = line[1:].partition(":")
                    meta[key.strip()] = val.strip()
                    continue
                n, lo, hi, method = line.split(",")
                records.append(ReturnRecord(int(n), float(lo), float(hi), method))
        eps = meta.get("eps")
        eps = None if eps in (None, "None") else float(eps)
        return ReturnSeries(records, meta.get("group", ""), meta.get("measure", ""), eps)


def _bracket(st: _State) -> tuple[float, float]:
    lower = st.lower()
    cross = min(st.vsup * st.mass, st.sup * st.deficit)
    upper = lower + 2.0 * cross + min(st.vsup, 1.0) * st.deficit
    upper = min(upper, lower + st.deficit * (2.0 * st.sup + 1.0))
    return lower, upper


def return_series(phi: FiniteMeasure, n_max: int, eps: float | None = None,
                  max_len: int = 1 << 23, support_cap: int = 4_000_000,
                  measure_spec: str = "") -> ReturnSeries:
    """Two-sided brackets on phi^(2m)(e) for half-powers m on the doubling
    schedule {2^k, 3*2^k} up to n_max.

    phi must be symmetric.  Records carry the even power n = 2m.
    """
    if not check_symmetric(phi):
        raise UsageError("return_series needs a symmetric measure")
    group = phi.group
    base = _state_from_measure(phi)
    entries: dict[int, tuple[float, float]] = {}

    def visit(m: int, st: _State):
        entries[2 * m] = _bracket(st)

    visit(1, base)
    # chain A: powers 2^k
    st, m = base, 1
    while 2 * m <= n_max:
        st = _state_mul(st, st, eps, group, max_len, support_cap)
        m *= 2
        visit(m, st)
        if m == 2:
            st2 = st  # keep phi^(2) for the 3*2^k chain
    # chain B: powers 3*2^k
    if n_max >= 3:
        st = _state_mul(st2, base, eps, group, max_len, support_cap)
        m = 3
        visit(m, st)
        while 2 * m <= n_max:
            st = _state_mul(st, st, eps, group, max_len, support_cap)
            m *= 2
            visit(m, st)

    records = []
    best_upper = math.inf
    for n in sorted(entries):
        lo, hi = entries[n]
        best_upper = min(best_upper, hi)  # phi^(2n)(e) is nonincreasing
        records.append(ReturnRecord(n, lo, best_upper))
    return ReturnSeries(records, group.spec_string(), measure_spec,
                        eps if eps is not None else None)


# ---------------------------------------------------------------------------
# finite-mixture sup-norm bound
# ---------------------------------------------------------------------------


def mixture_sup_bound(spec: MixtureSpec, n: int) -> float:
    """Upper bound on the sup-norm of the n-th power of a K-level ball mixture:

        sum_{i=1}^{K-1} exp(-n sigma_i) (b_i - b_{i+1}) + b_K,

    the finite-sum form of the telescoping bound (the infinite form needs
    b_i -> 0, which cannot hold with finitely many levels).
    """
    if n < 0:
        raise UsageError("n must be >= 0")
    k = spec.levels
    total = spec.b[k - 1]
    for i in range(k - 1):
        total += math.exp(-n * spec.sigma[i]) * (spec.b[i] - spec.b[i + 1])
    return total


# ---------------------------------------------------------------------------
# measure cache files
# ---------------------------------------------------------------------------


def write_measure_cache(mu: FiniteMeasure, path, measure_spec: str = "",
                        n: int = 1, eps: float | None = None) -> None:
    """One record per atom, 'hex element,weight', with a provenance header."""
    g = mu.group
    with open(path, "w") as fh:
        fh.write(f"# group: {g.spec_string()}\n")
        fh.write(f"# measure: {measure_spec}\n")
        fh.write(f"# n: {n}\n# eps: {eps!r}\n")
        fh.write(f"# deficit: {mu.deficit!r}\n")
        fh.write(f"# deficit_radius: {mu.deficit_radius}\n")
        fh.write(f"# residual_sup: {mu.residual_sup!r}\n")
        for el, w in sorted(mu.items()):
            fh.write(f"{g.encode(el).hex()},{w!r}\n")


def read_measure_cache(path, group: Group) -> FiniteMeasure:
    atoms = {}
    meta = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                meta[key.strip()] = val.strip()
                continue
            blob, w = line.split(",")
            atoms[group.decode(bytes.fromhex(blob))] = float(w)
    return FiniteMeasure(
        group, atoms=atoms,
        deficit=float(meta.get("deficit", "0") or 0),
        deficit_radius=int(meta.get("deficit_radius", "0") or 0),
        residual_sup=float(meta.get("residual_sup", "0") or 0),
        check=False)
