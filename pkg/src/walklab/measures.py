"""Finitely supported probability measures and the witness-measure constructors.

A ``FiniteMeasure`` is a nonnegative weight map over group elements together
with three truncation fields:

* ``deficit``        -- probability mass that was cut away (never silently
                        renormalized back in);
* ``deficit_radius`` -- a certified lower bound on the word length of every
                        point that could carry deficit mass (0 = unknown);
* ``residual_sup``   -- an upper bound on the sup-norm of the truncated
                        remainder *as a function* (always <= deficit).  Far,
                        spread-out truncations have tiny residual_sup, which
                        is what keeps downstream return-probability brackets
                        tight.

Lattice(1) measures with large support are stored densely (weight array plus
offset); everything else is a dict keyed by canonical elements.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import KindMismatchError, OutOfRangeError, ResourceLimitError, UsageError
from .groups import Element, Group
from .scales import MomentScale

_MASS_TOL = 1e-12
_DENSE_THRESHOLD = 10_000


class FiniteMeasure:
    """Immutable finitely supported (sub)probability measure on a Group."""

    def __init__(self, group: Group, atoms: dict | None = None,
                 dense: tuple[np.ndarray, int] | None = None,
                 deficit: float = 0.0, deficit_radius: int = 0,
                 residual_sup: float | None = None, check: bool = True):
        if (atoms is None) == (dense is None):
            raise UsageError("provide exactly one of atoms= or dense=")
        self.group = group
        self.deficit = float(deficit)
        self.deficit_radius = int(deficit_radius)
        self.residual_sup = float(min(
            deficit if residual_sup is None else residual_sup, deficit))
        if atoms is not None:
            self._atoms = {g: float(w) for g, w in atoms.items() if w > 0.0}
            self._dense = None
            self._mass = math.fsum(self._atoms.values())
        else:
            w, off = dense
            w = np.asarray(w, dtype=float)
            nz = np.nonzero(w)[0]
            if len(nz) == 0:
                raise UsageError("dense measure has empty support")
            w = w[nz[0]:nz[-1] + 1]
            off += int(nz[0])
            if np.any(w < 0):
                raise UsageError("negative weights")
            self._atoms = None
            self._dense = (w, int(off))
            self._mass = float(w.sum())
        if check and abs(self._mass + self.deficit - 1.0) > _MASS_TOL:
            raise UsageError(
                f"mass {self._mass} + deficit {self.deficit} != 1 beyond tolerance")

    # -- basic accessors -----------------------------------------------------------

    @property
    def mass(self) -> float:
        return self._mass

    @property
    def is_dense(self) -> bool:
        return self._dense is not None

    def support_size(self) -> int:
        if self._atoms is not None:
            return len(self._atoms)
        return int(np.count_nonzero(self._dense[0]))

    def weight(self, g: Element) -> float:
        if self._atoms is not None:
            return self._atoms.get(g, 0.0)
        w, off = self._dense
        x = g[0] - off
        if 0 <= x < len(w):
            return float(w[x])
        return 0.0

    def max_weight(self) -> float:
        if self._atoms is not None:
            return max(self._atoms.values())
        return float(self._dense[0].max())

    def items(self) -> Iterator[tuple[Element, float]]:
        if self._atoms is not None:
            yield from self._atoms.items()
        else:
            w, off = self._dense
            for i in np.nonzero(w)[0]:
                yield (int(i) + off,), float(w[i])

    def atoms_dict(self) -> dict:
        return dict(self.items())

    def dense1d(self) -> tuple[np.ndarray, int]:
        """Weights as a contiguous array plus offset (lattice(1) only)."""
        if self.group.kind != "lattice" or self.group.d != 1:
            raise UsageError("dense1d is only defined on lattice(1)")
        if self._dense is not None:
            return self._dense
        xs = np.array([g[0] for g in self._atoms], dtype=np.int64)
        lo, hi = int(xs.min()), int(xs.max())
        w = np.zeros(hi - lo + 1)
        for g, v in self._atoms.items():
            w[g[0] - lo] += v
        return w, lo

    def word_length_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(word lengths, weights) over the support, for moment functionals."""
        if self._dense is not None:
            w, off = self._dense
            nz = np.nonzero(w)[0]
            return np.abs(nz + off), w[nz]
        lengths = np.empty(len(self._atoms))
        weights = np.empty(len(self._atoms))
        for i, (g, v) in enumerate(sorted(self._atoms.items())):
            lengths[i] = self.group.word_length(g)
            weights[i] = v
        return lengths, weights

    def __repr__(self) -> str:
        return (f"FiniteMeasure({self.group.spec_string()}, atoms={self.support_size()}, "
                f"deficit={self.deficit:.3g})")


def dirac(group: Group, g: Element | None = None) -> FiniteMeasure:
    return FiniteMeasure(group, atoms={group.identity if g is None else g: 1.0})


def from_atoms(group: Group, atoms: dict, **kw) -> FiniteMeasure:
    return FiniteMeasure(group, atoms=atoms, **kw)


def check_symmetric(mu: FiniteMeasure) -> bool:
    """True iff weight(g) == weight(g^-1) exactly for every atom."""
    if mu.is_dense:
        w, off = mu._dense
        return off == -(off + len(w) - 1) and bool(np.array_equal(w, w[::-1]))
    g = mu.group
    return all(v == mu.weight(g.invert(x)) for x, v in mu.items())


def _canonical_symmetrize(group: Group, atoms: dict, tol: float = 1e-13) -> dict:
    """Force exact g <-> g^-1 weight equality; asserts near-equality first."""
    out = {}
    for g, v in atoms.items():
        gi = group.invert(g)
        vi = atoms.get(gi, 0.0)
        if abs(v - vi) > tol * max(1.0, v, vi):
            raise UsageError("measure is not numerically symmetric")
        canon = min(g, gi)
        out[g] = atoms[canon]
    return out


# -- uniform balls and mixtures ----------------------------------------------------


def uniform_ball(group: Group, r: int) -> FiniteMeasure:
    """Uniform probability on the word ball of radius r."""
    elems, vol = group.ball(r)
    w = 1.0 / vol
    return FiniteMeasure(group, atoms={g: w for g in elems})


@dataclass(frozen=True)
class MixtureSpec:
    """Bookkeeping for a convex combination of ball uniforms.

    radii[i], p[i] for i = 1..K stored 0-based; sigma[k] = sum_{i>k} p_i with
    sigma[K-1] = 0; beta[i] = an upper bound on the component sup-norm
    1/V(radii[i]); b[k] = min_{i<=k} beta[i].
    """

    levels: int
    radii: tuple
    p: tuple
    sigma: tuple
    beta: tuple
    b: tuple

    def __post_init__(self):
        if any(x <= 0 for x in self.p):
            raise UsageError("mixture probabilities must be positive")
        if any(s2 >= s1 for s1, s2 in zip(self.sigma, self.sigma[1:])):
            raise UsageError("sigma must be strictly decreasing")
        if abs(self.sigma[-1]) > 1e-15:
            raise UsageError("sigma_K must be zero")


def _mixture_spec(radii: list[int], p: np.ndarray, beta: list[float]) -> MixtureSpec:
    k = len(radii)
    sigma = tuple(float(p[i + 1:].sum()) for i in range(k))
    b = []
    cur = math.inf
    for x in beta:
        cur = min(cur, x)
        b.append(cur)
    return MixtureSpec(k, tuple(radii), tuple(float(x) for x in p), sigma,
                       tuple(beta), tuple(b))


def mixture_from_levels(group: Group, radii: list[int],
                        p: list[float]) -> tuple[FiniteMeasure, MixtureSpec]:
    """Explicit ball mixture sum_i p_i * uniform_ball(radii[i])."""
    if len(radii) != len(p) or len(radii) < 2:
        raise UsageError("need matching radii/p lists with at least two levels")
    parr = np.asarray(p, dtype=float)
    if abs(parr.sum() - 1.0) > _MASS_TOL:
        raise UsageError("mixture probabilities must sum to 1")
    atoms: dict = {}
    deficit = 0.0
    residual_sup = 0.0
    beta = []
    for r, pi in zip(radii, parr):
        try:
            elems, vol = group.ball(r)
        except (ResourceLimitError, OutOfRangeError):
            # ball not enumerable: score its sup norm from a volume lower
            # bound and push the component's mass into the deficit
            vol_lb = group.volume_lower_bound(r)
            beta.append(1.0 / vol_lb)
            deficit += float(pi)
            residual_sup += float(pi) / vol_lb
            continue
        beta.append(1.0 / vol)
        share = float(pi) / vol
        for g in elems:
            atoms[g] = atoms.get(g, 0.0) + share
    mu = FiniteMeasure(group, atoms=atoms, deficit=deficit,
                       residual_sup=residual_sup)
    return mu, _mixture_spec(list(radii), parr, beta)


def ball_mixture(group: Group, rho: MomentScale,
                 levels: int) -> tuple[FiniteMeasure, MixtureSpec]:
    """Mixture over balls B(4^i), i = 1..K, with weights p_i proportional to
    1/rho(4^i); the resulting tails satisfy sigma_i <= C / rho(4^i)."""
    if levels < 2:
        raise UsageError("need at least K = 2 levels")
    radii = [4 ** i for i in range(1, levels + 1)]
    raw = np.array([1.0 / float(rho(r)) for r in radii])
    return mixture_from_levels(group, radii, raw / raw.sum())


# -- stable-like laws ---------------------------------------------------------------


def stable_like(d: int, alpha: float, cutoff: int,
                group: Group | None = None) -> FiniteMeasure:
    """Truncated heavy-tail law w(k) = c / (1 + |k|^2)^((d+alpha)/2) on Z^d.

    Mass beyond the sup-norm cutoff goes to the deficit; the normalizer uses a
    rigorous upper bound on the full-lattice sum, so kept weights never exceed
    the untruncated law.
    """
    if not 0 < alpha < 2:
        raise UsageError("alpha must be in (0, 2)")
    if cutoff < 10:
        raise UsageError("cutoff must be >= 10")
    if group is None:
        group = Group("lattice", d=d)
    elif group.kind != "lattice" or group.d != d:
        raise KindMismatchError("group must be lattice(d)")
    expo = 0.5 * (d + alpha)
    # tail over max-norm shells j > cutoff: count(shell j) <= 2d(2j+1)^(d-1),
    # f on the shell <= j^(-d-alpha)
    tail_hi = (2 * d * 3 ** (d - 1)) * cutoff ** (-alpha) / alpha
    if d == 1:
        xs = np.arange(-cutoff, cutoff + 1, dtype=np.int64)
        f = (1.0 + xs.astype(float) ** 2) ** (-expo)
        total = float(f.sum()) + tail_hi
        w = f / total
        w = np.minimum(w, w[::-1])  # exact symmetry under float rounding
        return FiniteMeasure(group, dense=(w, -cutoff),
                             deficit=1.0 - float(w.sum()),
                             deficit_radius=cutoff + 1,
                             residual_sup=(1.0 + cutoff ** 2) ** (-expo) / total)
    if (2 * cutoff + 1) ** d > 4_000_000:
        raise ResourceLimitError("stable_like box too large", "reduce cutoff")
    grids = np.meshgrid(*([np.arange(-cutoff, cutoff + 1)] * d), indexing="ij")
    sq = sum(g.astype(float) ** 2 for g in grids)
    f = (1.0 + sq) ** (-expo)
    total = float(f.sum()) + tail_hi
    atoms = {}
    it = np.nditer(f, flags=["multi_index"])
    for val in it:
        idx = tuple(int(i) - cutoff for i in it.multi_index)
        atoms[idx] = float((1.0 + sum(x * x for x in idx)) ** (-expo)) / total
    return FiniteMeasure(group, atoms=atoms, deficit=1.0 - math.fsum(atoms.values()),
                         deficit_radius=cutoff + 1,
                         residual_sup=(1.0 + cutoff ** 2) ** (-expo) / total)


# -- discrete subordination ----------------------------------------------------------


def subordination_coefficients(a: float, terms: int) -> np.ndarray:
    """Series coefficients c_k of 1 - (1-x)^a, k = 1..terms; all positive."""
    if not 0 < a < 1:
        raise UsageError("a must be in (0, 1)")
    c = np.empty(terms)
    c[0] = a
    for k in range(1, terms):
        c[k] = c[k - 1] * (k - a) / (k + 1)
    return c


def subordination_tail_bound(a: float, terms: int) -> float:
    """Rigorous upper bound on sum_{k > terms} c_k."""
    if terms < 2:
        return 1.0
    return (terms - 1.0) ** (-a) / gamma_fn(1.0 - a)


def default_subordination_terms(a: float, tol: float = 1e-6,
                                cap: int = 100_000) -> int:
    raw = math.ceil((a / (tol * gamma_fn(1.0 - a))) ** (1.0 / a))
    if raw > cap:
        warnings.warn(
            f"subordination truncation capped at {cap} terms "
            f"(tail rule asked for {raw}); coefficient tail "
            f"~{subordination_tail_bound(a, cap):.2e} goes to the deficit",
            stacklevel=2)
        return cap
    return max(raw, 8)


def subordinate(phi0: FiniteMeasure, a: float, terms: int | None = None,
                method: str = "series", window: int = 1 << 21) -> FiniteMeasure:
    """Fractional-power subordination of a symmetric base measure.

    ``method='series'`` builds sum_{k<=terms} c_k * phi0^(k) with the exact
    binomial coefficients of 1-(1-x)^a; the coefficient tail goes to the
    deficit.  ``method='spectral'`` (lattice(1) base supported in {-1,0,1}
    only) evaluates the full transform through Fourier characters on a window
    of half-width ``window``, which realizes the same operator transform with
    a far smaller, far-away deficit.
    """
    if not 0 < a < 1:
        raise UsageError("a must be in (0, 1)")
    if not check_symmetric(phi0):
        raise UsageError("base measure must be symmetric")
    if method == "spectral":
        return _subordinate_spectral(phi0, a, window)
    if method != "series":
        raise UsageError(f"unknown subordination method {method!r}")
    if terms is None:
        terms = default_subordination_terms(a)
    if terms < 8:
        raise UsageError("series truncation needs at least 8 terms")
    c = subordination_coefficients(a, terms)
    group = phi0.group
    if group.kind == "lattice" and group.d == 1:
        return _subordinate_series_dense1d(phi0, a, c)
    from .convolution import convolve

    power = phi0
    acc: dict = {}
    sup_even = phi0.max_weight()
    for k in range(1, terms + 1):
        if k > 1:
            power = convolve(power, phi0, eps=0.0)
        if k % 2 == 0:
            sup_even = min(sup_even, power.weight(group.identity))
        for g, w in power.items():
            acc[g] = acc.get(g, 0.0) + c[k - 1] * w
    atoms = _canonical_symmetrize(group, acc)
    tail_mass = max(1.0 - float(c.sum()), 0.0)
    return FiniteMeasure(group, atoms=atoms,
                         deficit=1.0 - math.fsum(atoms.values()),
                         residual_sup=tail_mass * sup_even)


def _subordinate_series_dense1d(phi0: FiniteMeasure, a: float,
                                c: np.ndarray) -> FiniteMeasure:
    base, off0 = phi0.dense1d()
    terms = len(c)
    half = len(base) // 2
    width = terms * half + len(base)
    acc = np.zeros(2 * width + 1)
    cur = np.zeros_like(acc)
    cur[width + off0: width + off0 + len(base)] = base
    sup_even = float(base.max())
    for k in range(1, terms + 1):
        if k > 1:
            cur = np.convolve(cur, base, mode="same")
        if k % 2 == 0:
            sup_even = min(sup_even, float(cur[width]))
        acc += c[k - 1] * cur
    acc = np.minimum(acc, acc[::-1])  # exact symmetry under float rounding
    mass = float(acc.sum())
    tail_mass = max(1.0 - float(c.sum()), 0.0)
    return FiniteMeasure(phi0.group, dense=(acc, -width), deficit=1.0 - mass,
                         residual_sup=tail_mass * sup_even)


def _subordinate_spectral(phi0: FiniteMeasure, a: float, window: int) -> FiniteMeasure:
    """Exact-transform subordination of the lattice(1) nearest-neighbour walk.

    The transformed weights are recovered by an inverse FFT of
    1 - (1 - p_hat(theta))^a on a fine grid; per-atom contamination from the
    circular wraparound is subtracted using a certified decay envelope, so the
    kept weights never exceed the true transform.
    """
    group = phi0.group
    if group.kind != "lattice" or group.d != 1:
        raise UsageError("spectral subordination needs a lattice(1) base")
    atoms = phi0.atoms_dict()
    if set(atoms) - {(-1,), (0,), (1,)}:
        raise UsageError("spectral subordination supports bases in {-1,0,1} only")
    w1 = atoms.get((1,), 0.0)
    w0 = atoms.get((0,), 0.0)
    if abs(w1 - atoms.get((-1,), 0.0)) > 1e-15 or w1 <= 0:
        raise UsageError("base must be symmetric with mass on +-1")
    n_fft = 1 << max(int(window).bit_length() + 1, 12)
    x_max = min(window, n_fft // 4)
    theta = 2.0 * np.pi * np.arange(n_fft // 2 + 1) / n_fft
    p_hat = w0 + 2.0 * w1 * np.cos(theta)
    symbol = 1.0 - np.maximum(1.0 - p_hat, 0.0) ** a
    vals = np.fft.irfft(symbol, n=n_fft)
    w = np.concatenate([vals[n_fft - x_max:], vals[:x_max + 1]])
    # Certified decay envelope for the true transformed weights, used for the
    # wraparound fold and the outside-window tail.  The base-walk powers
    # satisfy ||phi0^(k)||_inf <= 0.75/sqrt(k) (checked spectrally below) and
    # vanish at y for k < |y|; splitting the coefficient series at k = y^2/100
    # and using Hoeffding on the small-k part gives
    #   transform(y) <= 7.5/y * tail(floor(y^2/100)) + 2 e^{-50}.
    _check_envelope_hypothesis(w0, w1)

    def env(y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        m = np.maximum(np.floor(y * y / 100.0), 2.0)
        return 7.5 / y * ((m - 1.0) ** (-a) / gamma_fn(1.0 - a)) + 4e-22

    xs = np.arange(-x_max, x_max + 1, dtype=float)
    fold = env(np.abs(xs - n_fft)) + env(np.abs(xs + n_fft))
    w = np.maximum(w - fold, 0.0)
    w = np.minimum(w, w[::-1])
    # roundoff allowance for the FFT, folded into the residual bound
    fft_eps = 1e-15
    w = np.maximum(w - fft_eps, 0.0)
    mass = float(w.sum())
    return FiniteMeasure(group, dense=(w, -x_max), deficit=1.0 - mass,
                         deficit_radius=x_max + 1,
                         residual_sup=float(env(np.array([x_max + 1.0]))[0]) + fft_eps)


def _check_envelope_hypothesis(w0: float, w1: float) -> None:
    # |p_hat| <= exp(-theta^2/6) on [0, 2.75] and <= 0.36 beyond; integrating
    # |p_hat|^k then gives ||phi0^(k)||_inf <= 0.691/sqrt(k) + 0.125*0.36^k
    # <= 0.75/sqrt(k), the constant the decay envelope relies on.
    th = np.linspace(0.0, 2.75, 2000)
    if np.any(np.abs(w0 + 2 * w1 * np.cos(th)) > np.exp(-th * th / 6.0) + 1e-12):
        raise UsageError("base walk violates the spectral-envelope hypothesis")
    th2 = np.linspace(2.75, np.pi, 500)
    if np.any(np.abs(w0 + 2 * w1 * np.cos(th2)) > 0.36):
        raise UsageError("base walk violates the spectral-envelope hypothesis")


# -- lamplighter switch-walk-switch ---------------------------------------------------


def lamplighter_switch(mu_base: FiniteMeasure,
                       lamp_group: Group | None = None) -> FiniteMeasure:
    """Build nu * mu * nu on the lamplighter over the base lattice, where nu is
    the fair coin on the lamp at the origin."""
    bg = mu_base.group
    if bg.kind == "lattice":
        d = bg.d
        if lamp_group is None:
            lamp_group = Group("lamplighter", d=d)
        to_marker = lambda g: g  # noqa: E731
    elif bg.kind == "lamplighter":
        d = bg.d
        lamp_group = bg
        def to_marker(g):
            if g[0] != ():
                raise UsageError("base measure must be supported on translations")
            return g[1]
    else:
        raise UsageError("base measure must live on a lattice or lamplighter group")
    zero = (0,) * d
    atoms: dict = {}
    for g, wgt in mu_base.items():
        k = to_marker(g)
        q = 0.25 * wgt
        for lamps in _switch_lamps(zero, k):
            key = (lamps, k)
            atoms[key] = atoms.get(key, 0.0) + q
    atoms = _canonical_symmetrize(lamp_group, atoms)
    return FiniteMeasure(lamp_group, atoms=atoms, deficit=mu_base.deficit,
                         deficit_radius=mu_base.deficit_radius,
                         residual_sup=mu_base.residual_sup)


_OWNED_KEYS = {
    "ball": {"r"},
    "mixture": {"rho", "k"},
    "stable": {"a", "cutoff"},
    "subordinate": {"base", "a", "terms", "method", "window"},
    "switchwalk": {"base"},
}


def parse_measure_spec(spec: str, group: Group) -> FiniteMeasure:
    """Parse CLI measure specs.

    Examples: ``ball:r=2``, ``mixture:rho=power:1.0,K=5``,
    ``stable:a=1.0,cutoff=100000``, ``subordinate:base=ball:r=1,a=0.5``,
    ``switchwalk:base=stable:a=1.0``.  Comma tokens whose key is not owned by
    the outer constructor are glued onto its nested ``base=``/``rho=`` value.
    """
    name, _, rest = spec.strip().partition(":")
    if name not in _OWNED_KEYS:
        raise UsageError(f"unknown measure spec {spec!r}")
    owned = _OWNED_KEYS[name]
    params: dict[str, str] = {}
    nested_key = None
    for token in rest.split(",") if rest else []:
        key, eq, val = token.partition("=")
        lk = key.strip().lower()
        if eq and lk in owned:
            params[lk] = val
            if lk in ("base", "rho"):
                nested_key = lk
        elif nested_key is not None:
            params[nested_key] += "," + token
        else:
            raise UsageError(f"unexpected token {token!r} in measure spec {spec!r}")
    if name == "ball":
        return uniform_ball(group, int(params["r"]))
    if name == "mixture":
        from .scales import parse_scale_spec

        rho = parse_scale_spec(params["rho"])
        return ball_mixture(group, rho, int(params.get("k", "5")))[0]
    if name == "stable":
        if group.kind != "lattice":
            raise UsageError("stable measures live on lattice groups")
        return stable_like(group.d, float(params["a"]),
                           int(params.get("cutoff", "100000")), group=group)
    if name == "subordinate":
        base = parse_measure_spec(params["base"], group)
        terms = int(params["terms"]) if "terms" in params else None
        return subordinate(base, float(params["a"]), terms=terms,
                           method=params.get("method", "series"),
                           window=int(params.get("window", 1 << 21)))
    # switchwalk: the base walks on the lattice factor of a lamplighter group
    if group.kind != "lamplighter":
        raise UsageError("switchwalk measures live on lamplighter groups")
    base = parse_measure_spec(params["base"], Group("lattice", d=group.d))
    return lamplighter_switch(base, lamp_group=group)


def _switch_lamps(zero: tuple, k: tuple) -> list[tuple]:
    # lamp sets of e*m*e, e*m*t, t*m*e, t*m*t (toggles collapse when k = 0)
    if k == zero:
        return [(), (zero,), (zero,), ()]
    return [(), (k,), (zero,), tuple(sorted((zero, k)))]
