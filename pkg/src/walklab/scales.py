"""Moment scales, weight kernels, subordination symbols, and the exponent algebra.

The central objects:

* ``MomentScale`` rho: nondecreasing, rho(0) >= 1.  Families::

      power(alpha):      rho(t) = (1+t)^alpha,              alpha in (0, 2)
      explog(c, alpha):  rho(t) = exp(c * log(1+t)^alpha),   alpha in (0, 1), c > 0
      log(alpha):        rho(t) = log(e+t)^alpha,            alpha > 0

* ``WeightKernel`` omega: increasing with omega(s)/s decreasing.  It induces a
  symbol through the Laplace-type transform

      psi(lam) = lam^2 * integral_0^inf exp(-lam*s) * omega(s) ds,

  and the pair of companion integrals

      xi(t)   = integral_0^t (s/omega(s))^(1/2) ds/s,
      zeta(t) = t^(1/2) * integral_t^inf ds / (s * omega(s)^(1/2)),

  which control when rho is admissible for omega:
  t * max(xi(t^2), zeta(t^2)) / omega(t^2)^(1/2) <= C1^2 * rho(t).

* ``Symbol`` psi on [0,2] with psi(0)=0, psi(1)=1 and (usually) psi(2)<2;
  this is the hypothesis needed by the spectral transform T -> I - psi(I-T).

The scalar exponent map gamma_alpha(gamma, alpha) = gamma / (gamma +
(alpha/2)*(1-gamma)) converts a stretched-exponential return exponent gamma
into the exponent attainable under a (1+t)^alpha moment bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from .errors import NumericError, UnsupportedError, UsageError

_MONO_GRID = np.concatenate([[0.0], np.logspace(-6, 6, 999)])


def _check_nondecreasing(fn: Callable, grid: np.ndarray, what: str, tol: float = 1e-12):
    vals = np.asarray([fn(t) for t in grid], dtype=float)
    if np.any(np.diff(vals) < -tol * np.maximum(1.0, np.abs(vals[:-1]))):
        raise UsageError(f"{what} is not nondecreasing on the check grid")
    return vals


@dataclass(frozen=True)
class MomentScale:
    """Evaluable scale function rho with a family tag."""

    family: str
    params: tuple
    fn: Callable = field(compare=False)

    def __call__(self, t):
        return self.fn(t)

    def spec_string(self) -> str:
        if self.family == "power":
            return f"power:{self.params[0]}"
        if self.family == "log":
            return f"log:{self.params[0]}"
        if self.family == "explog":
            c, a = self.params
            return f"explog:c={c},a={a}"
        return "custom"


def make_moment_scale(family: str, *params: float) -> MomentScale:
    if family == "power":
        (alpha,) = params
        if not 0 < alpha < 2:
            raise UsageError("power scale needs alpha in (0, 2)")
        return MomentScale("power", (alpha,), lambda t: (1.0 + t) ** alpha)
    if family == "explog":
        c, alpha = params
        if not (0 < alpha < 1 and c > 0):
            raise UsageError("explog scale needs alpha in (0, 1) and c > 0")
        return MomentScale("explog", (c, alpha),
                           lambda t: np.exp(c * np.log1p(t) ** alpha))
    if family == "log":
        (alpha,) = params
        if alpha <= 0:
            raise UsageError("log scale needs alpha > 0")
        return MomentScale("log", (alpha,), lambda t: np.log(math.e + t) ** alpha)
    raise UsageError(f"unknown scale family {family!r}")


def custom_scale(fn: Callable) -> MomentScale:
    """Wrap a user evaluator; monotonicity and rho(0) >= 1 are grid-checked."""
    _check_nondecreasing(fn, _MONO_GRID, "custom scale")
    if fn(0.0) < 1.0 - 1e-12:
        raise UsageError("scale must satisfy rho(0) >= 1")
    return MomentScale("custom", (), fn)


def parse_scale_spec(spec: str) -> MomentScale:
    """Parse ``power:1.0``, ``log:2.0`` or ``explog:c=1,a=0.5``."""
    name, _, rest = spec.strip().partition(":")
    if name in ("power", "log"):
        return make_moment_scale(name, float(rest))
    if name == "explog":
        kv = dict(tok.split("=", 1) for tok in rest.split(","))
        return make_moment_scale("explog", float(kv["c"]), float(kv["a"]))
    raise UsageError(f"unknown scale spec {spec!r}")


@dataclass(frozen=True)
class WeightKernel:
    """Weight kernel omega: increasing, with s -> omega(s)/s decreasing."""

    fn: Callable = field(compare=False)
    rv_index: float | None = None
    label: str = "custom"

    def __call__(self, s):
        return self.fn(s)


def stable_kernel(alpha: float) -> WeightKernel:
    """omega(s) = s^(1-alpha) / Gamma(2-alpha); induces psi(lam) = lam^alpha."""
    if not 0 < alpha < 1:
        raise UsageError("stable kernel needs alpha in (0, 1)")
    c = 1.0 / gamma_fn(2.0 - alpha)
    return WeightKernel(lambda s: c * s ** (1.0 - alpha), rv_index=1.0 - alpha,
                        label=f"stable:{alpha}")


def custom_kernel(fn: Callable, rv_index: float | None = None) -> WeightKernel:
    grid = np.logspace(-6, 6, 400)
    _check_nondecreasing(fn, grid, "weight kernel")
    ratios = np.asarray([fn(s) / s for s in grid])
    if np.any(np.diff(ratios) > 1e-12 * np.maximum(1.0, ratios[:-1])):
        raise UsageError("omega(s)/s must be nonincreasing")
    return WeightKernel(fn, rv_index=rv_index)


@dataclass(frozen=True)
class Symbol:
    """Spectral symbol psi on [0, 2], normalized so psi(0)=0 and psi(1)=1."""

    fn: Callable = field(compare=False)
    inverse: Callable | None = field(default=None, compare=False)
    psi2: float = 1.0
    strict_at_2: bool = True
    label: str = "custom"

    def __call__(self, s):
        return self.fn(s)

    def inv(self, u: float) -> float:
        if self.inverse is not None:
            return self.inverse(u)
        return _bisect_increasing(self.fn, u, 0.0, 2.0)


def power_symbol(a: float) -> Symbol:
    """psi(s) = s^a; the subordination symbol for fractional power a in (0, 1]."""
    if not 0 < a <= 1:
        raise UsageError("power symbol needs a in (0, 1]")
    sym = Symbol(lambda s: np.asarray(s) ** a, inverse=lambda u: u ** (1.0 / a),
                 psi2=2.0 ** a, strict_at_2=a < 1, label=f"power:{a}")
    _validate_symbol(sym)
    return sym


def identity_symbol() -> Symbol:
    return Symbol(lambda s: np.asarray(s) + 0.0, inverse=lambda u: u,
                  psi2=2.0, strict_at_2=False, label="identity")


def custom_symbol(fn: Callable, inverse: Callable | None = None) -> Symbol:
    psi2 = float(fn(2.0))
    sym = Symbol(fn, inverse=inverse, psi2=psi2, strict_at_2=psi2 < 2.0 - 1e-12)
    _validate_symbol(sym)
    return sym


def parse_symbol_spec(spec: str) -> Symbol:
    name, _, rest = spec.strip().partition(":")
    if name == "identity":
        return identity_symbol()
    if name == "power":
        return power_symbol(float(rest))
    raise UsageError(f"unknown symbol spec {spec!r}")


def _validate_symbol(sym: Symbol, tol: float = 1e-12):
    if abs(float(sym.fn(0.0))) > tol or abs(float(sym.fn(1.0)) - 1.0) > tol:
        raise UsageError("symbol must satisfy psi(0)=0 and psi(1)=1")
    grid = np.linspace(0.0, 2.0, 1000)
    vals = np.asarray(sym.fn(grid), dtype=float)
    if np.any(np.diff(vals) < -1e-12):
        raise UsageError("symbol must be increasing on [0, 2]")


def _bisect_increasing(fn: Callable, target: float, lo: float, hi: float,
                       rel: float = 1e-12) -> float:
    flo, fhi = float(fn(lo)), float(fn(hi))
    if not flo <= target <= fhi:
        raise UsageError(f"target {target} outside range [{flo}, {fhi}]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(fn(mid)) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rel * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


# -- moment functionals ------------------------------------------------------------


def moment(mu, rho: MomentScale) -> tuple[float, float]:
    """(lower, upper) bracket on sum_g rho(|g|) mu(g).

    The truncated deficit mass is known to live at word length at least
    ``mu.deficit_radius``; it contributes rho(deficit_radius) * deficit to the
    lower bound and makes the upper bound infinite whenever deficit > 0.
    """
    lengths, weights = mu.word_length_arrays()
    lower = float(np.dot(np.asarray(rho(lengths), dtype=float), weights))
    if mu.deficit > 0:
        lower += mu.deficit * float(rho(mu.deficit_radius))
        return lower, math.inf
    return lower, lower


def weak_moment(mu, rho: MomentScale) -> float:
    """W(rho, mu) = sup_{s>0} s * mu(rho(|.|) > s).

    The supremum over s is approached from the left at each value v taken by
    rho on the support, where it equals v * mu(rho(|.|) >= v); the result is
    the maximum of those products.  Exact for deficit-free measures; with a
    deficit, the deficit mass is scored at rho(deficit_radius), which gives a
    lower bound.
    """
    lengths, weights = mu.word_length_arrays()
    vals = np.asarray(rho(lengths), dtype=float)
    if mu.deficit > 0:
        vals = np.append(vals, float(rho(mu.deficit_radius)))
        weights = np.append(weights, mu.deficit)
    order = np.argsort(vals)
    vals, weights = vals[order], weights[order]
    # mass at rho-value >= v_j, then collapse ties.
    tail = np.cumsum(weights[::-1])[::-1]
    best = 0.0
    j = 0
    while j < len(vals):
        best = max(best, vals[j] * tail[j])
        v = vals[j]
        while j < len(vals) and vals[j] == v:
            j += 1
    return best


# -- quadrature-backed transforms ----------------------------------------------------


def psi_from_omega(omega: WeightKernel, lam: float, rel_tol: float = 1e-6) -> float:
    """psi(lam) = lam^2 * integral_0^inf e^(-lam s) omega(s) ds.

    Computed after the substitution u = lam*s, which keeps the integrand
    well-scaled for small lam.
    """
    if not 0 < lam <= 2:
        raise UsageError("lambda must be in (0, 2]")
    val, err = integrate.quad(
        lambda u: math.exp(-u) * omega(u / lam), 0.0, np.inf,
        points=None, limit=200, epsabs=0.0, epsrel=rel_tol * 0.1,
    )
    if not math.isfinite(val) or (val != 0 and err > rel_tol * abs(val)):
        raise NumericError(f"psi quadrature did not converge (value {val}, err {err})")
    return lam * val


def _piecewise_integral(piece: Callable[[float, float], float], t: float,
                        outward: bool, rel_tol: float) -> float:
    """Sum geometric decade pieces toward the singular end (0 or infinity).

    Converged when increments fall below the tolerance; flagged +inf when a
    piece fails to decay against its predecessor (log-type divergence).
    """
    total = 0.0
    prev = None
    inc = 0.0
    for k in range(20):
        if outward:
            a, b = t * 10.0 ** (3 * k), t * 10.0 ** (3 * (k + 1))
        else:
            a, b = t * 10.0 ** (-3 * (k + 1)), t * 10.0 ** (-3 * k)
        inc = piece(a, b)
        total += inc
        if inc <= rel_tol * 0.1 * max(total, 1e-300):
            return total
        if prev is not None and k >= 3 and inc > 0.9 * prev:
            return math.inf
        prev = inc
    return total if inc <= rel_tol * max(total, 1e-300) else math.inf


def xi_zeta(omega: WeightKernel, t: float, rel_tol: float = 1e-6) -> tuple[float, float]:
    """The companion integrals (xi(t), zeta(t)); +inf marks divergence."""
    if t <= 0:
        raise UsageError("t must be positive")

    def xi_piece(a, b):
        val, _ = integrate.quad(
            lambda s: math.sqrt(s / omega(s)) / s, a, b, limit=200,
            epsabs=0.0, epsrel=rel_tol * 0.1)
        return val

    xi = _piecewise_integral(xi_piece, t, outward=False, rel_tol=rel_tol)

    def zeta_piece(a, b):
        val, _ = integrate.quad(
            lambda s: 1.0 / (s * math.sqrt(omega(s))), a, b, limit=200,
            epsabs=0.0, epsrel=rel_tol * 0.1)
        return val

    zeta_tail = _piecewise_integral(zeta_piece, t, outward=True, rel_tol=rel_tol)
    zeta = math.sqrt(t) * zeta_tail if math.isfinite(zeta_tail) else math.inf
    return xi, zeta


@dataclass(frozen=True)
class AdmissibilityResult:
    c1: float
    admissible: bool
    grid: tuple
    ratios: tuple
    mode: str = "max"


def admissibility_constant(rho: MomentScale, omega: WeightKernel,
                           grid: np.ndarray | None = None,
                           mode: str = "max") -> AdmissibilityResult:
    """Grid supremum C1 of the admissibility ratio, plus a divergence verdict.

    ``mode='max'`` uses max(xi, zeta); ``mode='hs'`` uses the Hilbert-Schmidt
    variant with xi~(t) = (int_0^t ds/omega)^(1/2), zeta~(t) =
    (t int_t^inf ds/(s omega))^(1/2) and the condition rho(t) >= xi~^2 + zeta~^2.
    The verdict is a grid statement, not a proof: 'inadmissible' means the
    ratio grows along the top decade of the grid.
    """
    if grid is None:
        grid = np.logspace(0.0, 4.0, 49)
    ratios = []
    for t in grid:
        if mode == "max":
            xi, zeta = xi_zeta(omega, t * t)
            theta = max(xi, zeta)
            if not math.isfinite(theta):
                ratios.append(math.inf)
                continue
            lhs = t * theta / math.sqrt(omega(t * t))
        elif mode == "hs":
            def xt_piece(a, b):
                return integrate.quad(lambda s: 1.0 / omega(s), a, b, limit=200)[0]

            def zt_piece(a, b):
                return integrate.quad(lambda s: 1.0 / (s * omega(s)), a, b,
                                      limit=200)[0]

            xt = _piecewise_integral(xt_piece, t * t, outward=False, rel_tol=1e-6)
            zt = _piecewise_integral(zt_piece, t * t, outward=True, rel_tol=1e-6)
            lhs = (xt + t * t * zt) if math.isfinite(xt) and math.isfinite(zt) \
                else math.inf
        else:
            raise UsageError(f"unknown admissibility mode {mode!r}")
        ratios.append(lhs / float(rho(t)))
    ratios = np.asarray(ratios)
    if not np.all(np.isfinite(ratios)):
        return AdmissibilityResult(math.inf, False, tuple(grid), tuple(ratios), mode)
    c1 = float(np.sqrt(ratios.max()))
    # growth test on the top decade of the grid
    top = grid >= grid[-1] / 10.0
    logt, logr = np.log(grid[top]), np.log(np.maximum(ratios[top], 1e-300))
    slope = np.polyfit(logt, logr, 1)[0]
    admissible = slope < 0.05
    return AdmissibilityResult(c1, bool(admissible), tuple(grid), tuple(ratios), mode)


# -- exponent algebra ----------------------------------------------------------------


def gamma_alpha(gamma: float, alpha: float) -> float:
    """gamma_alpha = gamma / (gamma + (alpha/2) * (1 - gamma))."""
    if not 0 < gamma < 1:
        raise UsageError("gamma must be in (0, 1)")
    if not 0 < alpha <= 2:
        raise UsageError("alpha must be in (0, 2]")
    return gamma / (gamma + 0.5 * alpha * (1.0 - gamma))


def pi_psi(pi: Callable, psi: Symbol, t: float, rel: float = 1e-8,
           check_grid: np.ndarray | None = None) -> float:
    """Evaluate the transformed profile pi_psi at t.

    pi_psi is defined through its inverse
    pi_psi^{-1}(t) = t * psi^{-1}(1/t) * pi^{-1}(1 / psi^{-1}(1/t)),
    which is increasing when pi and t -> t/pi(t) are; the value is found by
    monotone bisection.
    """
    if t <= 0:
        raise UsageError("t must be positive")
    if check_grid is None:
        check_grid = np.logspace(-3, 6, 60)
    vals = np.asarray([pi(x) for x in check_grid], dtype=float)
    if np.any(np.diff(vals) < -1e-12) or np.any(np.diff(check_grid / vals) < -1e-12):
        raise UsageError("pi and t/pi(t) must both be increasing")

    def pi_inv(v: float) -> float:
        hi = 1.0
        while pi(hi) < v:
            hi *= 2.0
            if hi > 1e300:
                raise NumericError("pi inverse bracket overflow")
        lo = hi / 2.0 if hi > 1.0 else 0.0
        while lo > 0 and pi(lo) > v:
            lo /= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if pi(mid) < v:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def pi_psi_inv(u: float) -> float:
        w = psi.inv(1.0 / u)
        return u * w * pi_inv(1.0 / w)

    hi = 1.0
    while pi_psi_inv(hi) < t:
        hi *= 2.0
        if hi > 1e300:
            raise NumericError("pi_psi bracket overflow")
    lo = hi / 2.0
    while pi_psi_inv(lo) > t and lo > 1e-300:
        lo /= 2.0
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if pi_psi_inv(mid) < t:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rel * hi:
            break
    return 0.5 * (lo + hi)


def de_bruijn_conjugate(ell: Callable, *, self_conjugate: bool = False) -> Callable:
    """Conjugate of a slowly varying function, only in the self-conjugate class.

    When ell(t^a) ~ ell(t) for every a > 0 (checked on a sample), the
    conjugate is 1/ell.  Anything more general is out of scope.
    """
    if not self_conjugate:
        raise UnsupportedError(
            "general de Bruijn conjugates are not computable from an evaluator; "
            "pass self_conjugate=True for the ell(t^a) ~ ell(t) class"
        )
    for t in (1e3, 1e6, 1e9):
        r = ell(t ** 2.0) / ell(t)
        if not 0.2 < r < 5.0:
            raise UsageError("evaluator does not look self-conjugate: ell(t^2)/ell(t) far from 1")
    return lambda t: 1.0 / ell(t)
