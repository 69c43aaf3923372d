"""Convolution operators on finite quotients and their spectral checks.

On a finite group Q with counting measure, the right-convolution operator of
a pushed-forward density phi_bar is the symmetric matrix
M[x, y] = phi_bar(x^{-1} y), its normalized trace tr(M^n)/|Q| equals
phi_bar^(n)(e), and the eigenvalue counting function

    N(s) = #{i : 1 - lambda_i < s} / |Q|

is the finite-dimensional spectral profile.  This module verifies, at that
scale, the trace identity, the Laplace-transform sandwich

    int_0^1 (1-s)^(2n) dN(s)  <=  phi^(2n)(e)  <=  2 int_0^1 (1-s)^(2n-2) dN(s),

the eigenvalue map of the transform T -> I - psi(I-T), the comparison
N_2(s) <= N_1(C s) under I - T_1 <= C (I - T_2) with T_2 nonnegative, and
the Dirichlet-form interpolation inequality

    E_mu(f, f) <= 8 C0^2 C1 mu(rho o delta) ||psi(A)^(1/2) f||_2^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from .errors import NumericError, UsageError
from .groups import FiniteQuotient
from .measures import FiniteMeasure
from .scales import (AdmissibilityResult, MomentScale, Symbol, WeightKernel,
                     admissibility_constant)

_SYM_TOL = 1e-12
_TRACE_TOL = 1e-10


def push_forward(mu: FiniteMeasure, quotient: FiniteQuotient) -> np.ndarray:
    """Weights of the pushed measure, indexed by quotient element index."""
    if mu.group != quotient.parent:
        raise UsageError("measure group does not project onto this quotient")
    out = np.zeros(quotient.size)
    if mu.is_dense and quotient.parent.kind == "lattice" and quotient.parent.d == 1:
        w, off = mu.dense1d()
        idx = (np.arange(off, off + len(w))) % quotient.m
        np.add.at(out, idx, w)
        return out
    for g, v in mu.items():
        out[quotient.project(g)] += v
    return out


@dataclass
class QuotientOperator:
    """Dense symmetric convolution matrix on a finite quotient."""

    quotient: FiniteQuotient
    matrix: np.ndarray
    deficit: float = 0.0
    _eigs: np.ndarray | None = field(default=None, repr=False)
    _vecs: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.quotient.size

    def eigenvalues(self) -> np.ndarray:
        if self._eigs is None:
            self._eigs = np.sort(np.linalg.eigvalsh(self.matrix))[::-1]
        return self._eigs

    def eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        if self._vecs is None:
            vals, vecs = eigh(self.matrix)
            order = np.argsort(vals)[::-1]
            self._eigs, self._vecs = vals[order], vecs[:, order]
        return self._eigs, self._vecs

    def trace_power(self, n: int) -> float:
        """tau(T^n) = mean of eigenvalue n-th powers."""
        return float(np.mean(self.eigenvalues() ** n))


def quotient_operator(phi: FiniteMeasure, quotient: FiniteQuotient,
                      check_characters: bool = True) -> QuotientOperator:
    """Push phi forward and assemble M[x, y] = phi_bar(x^{-1} y)."""
    w = push_forward(phi, quotient)
    size = quotient.size
    m = np.zeros((size, size))
    if quotient.parent.kind == "lattice":
        # vectorized: atom a shifts index arithmetic on the torus
        coords = np.arange(size)
        for a in np.nonzero(w)[0]:
            m[coords, _torus_mul(quotient, coords, a)] += w[a]
    else:
        for a in np.nonzero(w)[0]:
            for x in range(size):
                m[x, quotient.multiply(x, int(a))] += w[a]
    if np.abs(m - m.T).max() > _SYM_TOL:
        raise UsageError("pushed measure is not symmetric on the quotient")
    m = 0.5 * (m + m.T)
    rows = m.sum(axis=1)
    if np.abs(rows - (1.0 - phi.deficit)).max() > 1e-9:
        raise NumericError("row sums drifted from 1 - deficit")
    op = QuotientOperator(quotient, m, deficit=phi.deficit)
    if check_characters and quotient.parent.kind == "lattice":
        _character_check(op, w)
    return op


def _torus_mul(quotient: FiniteQuotient, idx: np.ndarray, a: int) -> np.ndarray:
    """Vectorized index arithmetic for Z_m^d: decode digits, add mod m, re-encode."""
    m, d = quotient.m, quotient.d
    digits_sum = []
    rem_i, rem_a = idx.copy(), a
    for _ in range(d):
        digits_sum.append((rem_i % m + rem_a % m) % m)
        rem_i //= m
        rem_a //= m
    enc = np.zeros_like(idx)
    for dig in reversed(digits_sum):
        enc = enc * m + dig
    return enc


def _character_check(op: QuotientOperator, w: np.ndarray, tol: float = 1e-10):
    """Abelian oracle: circulant eigenvalues from the FFT of the weight grid."""
    q = op.quotient
    grid = w.reshape((q.m,) * q.d)
    eigs = np.fft.fftn(grid)
    if np.abs(eigs.imag).max() > 1e-9:
        raise NumericError("character eigenvalues unexpectedly complex")
    a = np.sort(eigs.real.ravel())
    b = np.sort(op.eigenvalues())
    if np.abs(a - b).max() > tol:
        raise NumericError("dense and character eigenvalues disagree")


@dataclass
class SpectralProfile:
    """Eigenvalues (descending) plus the normalized counting function N."""

    eigenvalues: np.ndarray
    size: int

    def counting(self, s) -> np.ndarray:
        """N(s) = #{i : 1 - lambda_i < s} / |Q| (vectorized in s)."""
        gaps = np.sort(1.0 - self.eigenvalues)
        return np.searchsorted(gaps, np.asarray(s), side="left") / self.size

    def return_value(self, n: int) -> float:
        return float(np.mean(self.eigenvalues ** n))


def spectral_profile(op: QuotientOperator, check: bool = True) -> SpectralProfile:
    eigs = op.eigenvalues()
    if eigs.min() < -1.0 - 1e-10 or eigs.max() > 1.0 + 1e-10:
        raise NumericError("eigenvalues escaped [-1, 1]")
    if abs(eigs.max() - (1.0 - op.deficit)) > 1e-10:
        raise NumericError("top eigenvalue is not 1 - deficit")
    prof = SpectralProfile(eigs, op.size)
    if check:
        acc = {1: op.matrix}
        for n in (2, 4, 8):
            acc[n] = acc[n // 2] @ acc[n // 2]
        for n in (1, 2, 4, 8):
            if abs(float(acc[n][0, 0]) - prof.return_value(n)) > _TRACE_TOL:
                raise NumericError(f"trace identity violated at n={n}")
    return prof


@dataclass
class SandwichReport:
    n_max: int
    min_slack_lower: float
    min_slack_upper: float
    violations: int


def sandwich_check(profile: SpectralProfile, n_max: int,
                   tol: float = 1e-12) -> SandwichReport:
    """Check both Laplace sandwich inequalities for all n <= n_max."""
    lam = profile.eigenvalues
    pos = lam[lam >= 0.0]  # spectrum of I-T restricted to [0, 1]
    min_lo, min_hi = math.inf, math.inf
    violations = 0
    for n in range(1, n_max + 1):
        exact = float(np.mean(lam ** (2 * n)))
        lower = float(pos.dot(pos ** (2 * n - 1))) / profile.size
        upper = 2.0 * float((pos ** (2 * n - 2)).sum()) / profile.size
        s1, s2 = exact - lower, upper - exact
        min_lo, min_hi = min(min_lo, s1), min(min_hi, s2)
        if s1 < -tol or s2 < -tol:
            violations += 1
    return SandwichReport(n_max, min_lo, min_hi, violations)


def functional_calculus(op: QuotientOperator, symbol: Symbol,
                        check_ns: tuple = (1, 2, 4, 8, 16, 32)) -> QuotientOperator:
    """T_psi = I - psi(I - T): same eigenvectors, eigenvalues 1 - psi(1 - lam).

    Also verifies the remainder estimate: the part of tau(T_psi^n) ignored by
    integrating (1-s)^n over the [0,1] range of N is bounded by
    |psi(2)-1|^n times the spectral share of (1, 2].
    """
    eigs, vecs = op.eigensystem()
    new_eigs = 1.0 - np.asarray(symbol(1.0 - eigs), dtype=float)
    mat = (vecs * new_eigs) @ vecs.T
    out = QuotientOperator(op.quotient, 0.5 * (mat + mat.T), deficit=op.deficit)
    out._eigs = np.sort(new_eigs)[::-1]
    out._vecs = vecs
    a = abs(symbol.psi2 - 1.0)
    inside = eigs >= 0.0
    share = float(np.mean(~inside))
    for n in check_ns:
        full = float(np.mean(new_eigs ** n))
        main = float(np.sum(new_eigs[inside] ** n)) / op.size
        if abs(full - main) > a ** n * share + 1e-12:
            raise NumericError("functional-calculus remainder bound violated")
    return out


@dataclass
class ComparisonReport:
    certified: bool
    reason: str
    c: float
    grid_violations: int
    n_checked: int
    c1: float | None = None
    c2: int | None = None


def comparison_check(op1: QuotientOperator, op2: QuotientOperator, c: float,
                     grid_points: int = 1000, n_max: int = 100,
                     tol: float = 1e-10) -> ComparisonReport:
    """Certify I - T1 <= C (I - T2) and T2 >= 0, then verify both conclusions.

    Grid conclusion: N_2(s) <= N_1(C s) on (0, 1).  Trace conclusion: report
    the smallest (C1, C2) with tau(T2^(2n)) <= C1 (tau(T1^(2 floor(n/C2))) +
    exp(-n/C2)) for every n <= n_max.
    """
    i = np.eye(op1.size)
    gap = c * (i - op2.matrix) - (i - op1.matrix)
    lam_min = float(np.linalg.eigvalsh(gap).min())
    if lam_min < -tol:
        return ComparisonReport(False, f"form inequality fails: min eig {lam_min:.2e}",
                                c, 0, 0)
    t2_min = float(op2.eigenvalues().min())
    if t2_min < -tol:
        return ComparisonReport(False, f"T2 not nonnegative: min eig {t2_min:.2e}",
                                c, 0, 0)
    p1 = SpectralProfile(op1.eigenvalues(), op1.size)
    p2 = SpectralProfile(op2.eigenvalues(), op2.size)
    grid = np.linspace(0.0, 1.0, grid_points + 2)[1:-1]
    n2 = p2.counting(grid)
    n1 = p1.counting(np.minimum(c * grid, 2.0))
    violations = int(np.sum(n2 > n1 + 1e-15))
    # smallest explicit trace-comparison constants valid on 1..n_max
    best = None
    for c2 in range(1, 33):
        need = 1.0
        ok = True
        for n in range(1, n_max + 1):
            lhs = p2.return_value(2 * n)
            rhs = p1.return_value(2 * (n // c2)) + math.exp(-n / c2)
            if rhs <= 0:
                ok = False
                break
            need = max(need, lhs / rhs)
        if ok:
            if best is None or need < best[0]:
                best = (need, c2)
    c1_val, c2_val = (best if best else (None, None))
    return ComparisonReport(True, "certified", c, violations, n_max,
                            c1=c1_val, c2=c2_val)


def dirichlet_form(op: QuotientOperator, f: np.ndarray,
                   check_tol: float = 1e-10) -> float:
    """E(f, f) = (1/2) sum_x sum_y |f(xy) - f(x)|^2 phi_bar(y), with the
    quadratic-form identity <(I - M) f, f> asserted as a cross-check."""
    q = op.quotient
    f = np.asarray(f, dtype=float)
    w = op.matrix[0, :].copy()  # row of the identity: phi_bar(y) at index y
    # identity row: M[0, y] = phi_bar(0^{-1} y) = phi_bar(y)
    total = 0.0
    for a in np.nonzero(w)[0]:
        if q.parent.kind == "lattice":
            perm = _torus_mul(q, np.arange(q.size), int(a))
        else:
            perm = np.array([q.multiply(x, int(a)) for x in range(q.size)])
        diff = f[perm] - f
        total += 0.5 * w[a] * float(diff @ diff)
    # <f - f*mu, f> with the measure's actual mass on the diagonal
    quad = float((1.0 - op.deficit) * (f @ f) - f @ (op.matrix @ f))
    if abs(total - quad) > check_tol * max(1.0, abs(quad)):
        raise NumericError("Dirichlet form disagrees with <(I-M)f, f>")
    return total


@dataclass
class InterpolationReport:
    c0: float
    c1: float
    moment_value: float
    max_ratio: float
    violations: int
    trials: int
    weak_max_ratio: float | None = None


def variation_constant(op0: QuotientOperator) -> float:
    """Exact smallest C0 with ||f_h - f||_2 <= C0 delta(h) ||A^(1/2) f||_2.

    A = I - M0; the supremum over f orthogonal to constants is the top
    eigenvalue of the pencil ((P_h - I)^T (P_h - I), A) restricted to that
    complement, maximized over h != e.
    """
    q = op0.quotient
    size = q.size
    a_mat = np.eye(size) - op0.matrix
    wl = np.asarray(q.word_length_table(), dtype=float)
    # orthonormal basis of the complement of constants
    basis = np.linalg.svd(np.eye(size) - np.full((size, size), 1.0 / size))[0][:, :size - 1]
    a_r = basis.T @ a_mat @ basis
    best = 0.0
    for h in range(1, size):
        if q.parent.kind == "lattice":
            perm = _torus_mul(q, np.arange(size), h)
        else:
            perm = np.array([q.multiply(x, h) for x in range(size)])
        p = np.zeros((size, size))
        p[np.arange(size), perm] = 1.0
        b = (p - np.eye(size)).T @ (p - np.eye(size))
        b_r = basis.T @ b @ basis
        top = float(eigh(b_r, a_r, eigvals_only=True,
                         subset_by_index=[size - 2, size - 2])[0])
        best = max(best, math.sqrt(max(top, 0.0)) / wl[h])
    return best


def interpolation_check(mu: FiniteMeasure, phi0: FiniteMeasure,
                        quotient: FiniteQuotient, symbol: Symbol,
                        omega: WeightKernel, rho: MomentScale, trials: int,
                        rng: np.random.Generator,
                        admissibility: AdmissibilityResult | None = None
                        ) -> InterpolationReport:
    """Numerically verify E_mu(f,f) <= 8 C0^2 C1 mu(rho o delta) ||psi(A)^{1/2} f||^2.

    C0 is the exact quotient variation constant, C1 the grid admissibility
    constant of (rho, omega).  The weak-moment variant has no explicit
    constant, so only its empirical max ratio is reported.
    """
    if admissibility is None:
        admissibility = admissibility_constant(rho, omega)
    if not admissibility.admissible:
        raise UsageError("(rho, omega) pair is inadmissible on the check grid")
    c1 = admissibility.c1
    op_mu = quotient_operator(mu, quotient)
    op0 = quotient_operator(phi0, quotient)
    c0 = variation_constant(op0)
    wl = np.asarray(quotient.word_length_table(), dtype=float)
    w_mu = op_mu.matrix[0, :]
    moment_value = float(np.dot(np.asarray(rho(wl), dtype=float), w_mu))

    t_eigs, a_vecs = op0.eigensystem()
    a_eigs = 1.0 - t_eigs
    psi_vals = np.maximum(np.asarray(symbol(np.maximum(a_eigs, 0.0)), dtype=float), 0.0)
    size = quotient.size
    max_ratio = 0.0
    weak_ratio = 0.0
    # weak moment of the pushed measure, via the quotient word metric
    order = np.argsort(wl)
    vals_sorted = np.asarray(rho(wl[order]), dtype=float)
    wts_sorted = w_mu[order]
    tailmass = np.cumsum(wts_sorted[::-1])[::-1]
    wk = float(np.max(vals_sorted * tailmass))
    violations = 0
    for _ in range(trials):
        f = rng.standard_normal(size)
        f -= f.mean()
        lhs = dirichlet_form(op_mu, f)
        coeff = a_vecs.T @ f
        psi_norm = float(np.dot(psi_vals, coeff * coeff))
        rhs = 8.0 * c0 * c0 * c1 * moment_value * psi_norm
        ratio = lhs / rhs if rhs > 0 else math.inf
        max_ratio = max(max_ratio, ratio)
        if ratio > 1.0:
            violations += 1
        if wk > 0 and psi_norm > 0:
            weak_ratio = max(weak_ratio, lhs / (wk * psi_norm))
    return InterpolationReport(c0, c1, moment_value, max_ratio, violations,
                               trials, weak_max_ratio=weak_ratio)
