"""End-to-end verification suites: one callable per acceptance check.

Each suite builds its own inputs, runs the full pipeline, and returns a
``SuiteResult`` with the measured numbers and the pass verdict at the pinned
tolerance.  ``run_suite`` dispatches by name; ``SUITES`` lists what exists.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .asymptotics import fit_decay
from .convolution import (ReturnRecord, ReturnSeries, convolve,
                          mixture_sup_bound, rational_return_values,
                          return_series)
from .errors import UsageError
from .groups import FiniteQuotient, Group
from .measures import (FiniteMeasure, ball_mixture, from_atoms, lamplighter_switch,
                       mixture_from_levels, stable_like, subordinate, uniform_ball)
from .montecarlo import RngStream, collision_return_estimate, range_functional
from .scales import gamma_alpha, make_moment_scale, power_symbol, stable_kernel
from .spectral import (comparison_check, interpolation_check, quotient_operator,
                       sandwich_check, spectral_profile)

DEFAULT_SEED = 20260810


@dataclass
class SuiteResult:
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    runtime: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        details = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"[{status}] {self.name}: {details} ({self.runtime:.1f}s)"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def suite_exact_return_z(seed: int = DEFAULT_SEED) -> SuiteResult:
    """Z nearest-neighbour walk: phi^(2)(0) = 1/3, phi^(4)(0) = 19/81."""
    z = Group("lattice", d=1)
    srw = uniform_ball(z, 1)
    vals = rational_return_values(srw, 4)
    rational_ok = vals[2] == Fraction(1, 3) and vals[4] == Fraction(19, 81)
    rs = return_series(srw, 2, eps=1e-14)
    r2, r4 = rs.bracket(2), rs.bracket(4)
    float_err = max(abs(r2.lower - 1.0 / 3.0), abs(r4.lower - 19.0 / 81.0),
                    r2.upper - r2.lower, r4.upper - r4.lower)
    return SuiteResult("exact-return-z", rational_ok and float_err <= 1e-12,
                       {"rational_ok": rational_ok, "float_err": float_err})


def suite_srw_z2_power(seed: int = DEFAULT_SEED) -> SuiteResult:
    """Z^2 walk, exact series 2n in [64, 4096]: power exponent 1.00 +- 0.08."""
    z2 = Group("lattice", d=2)
    srw = uniform_ball(z2, 1)
    rs = return_series(srw, 2048)
    fit = fit_decay(rs, "power", (64, 4096))
    return SuiteResult("srw-z2-power", abs(fit.exponent - 1.0) <= 0.08,
                       {"exponent": fit.exponent, "half_width": fit.half_width,
                        "r2": fit.r_squared})


def suite_stable_z_power(seed: int = DEFAULT_SEED) -> SuiteResult:
    """Stable-like law on Z (alpha=1, cutoff 10^5): power exponent 1.00 +- 0.10."""
    mu = stable_like(1, 1.0, 100_000)
    rs = return_series(mu, 2048, max_len=1 << 22)
    fit = fit_decay(rs, "power", (64, 4096))
    return SuiteResult("stable-z-power", abs(fit.exponent - 1.0) <= 0.10,
                       {"exponent": fit.exponent, "half_width": fit.half_width})


def suite_subordinate_z_power(seed: int = DEFAULT_SEED) -> SuiteResult:
    """Half-power subordination of the Z walk: power exponent 1.00 +- 0.10."""
    z = Group("lattice", d=1)
    srw = uniform_ball(z, 1)
    mu = subordinate(srw, 0.5, method="spectral")
    rs = return_series(mu, 2048, max_len=1 << 22)
    fit = fit_decay(rs, "power", (64, 4096))
    return SuiteResult("subordinate-z-power", abs(fit.exponent - 1.0) <= 0.10,
                       {"exponent": fit.exponent, "half_width": fit.half_width,
                        "deficit": mu.deficit})


def suite_sandwich(seed: int = DEFAULT_SEED) -> SuiteResult:
    """Laplace sandwich on Z_97 and the 24-state lamplighter quotient."""
    z = Group("lattice", d=1)
    srw = uniform_ball(z, 1)
    prof_z = spectral_profile(quotient_operator(srw, FiniteQuotient(z, 97)))
    rep_z = sandwich_check(prof_z, 200)
    lamp = Group("lamplighter", d=1)
    prof_l = spectral_profile(quotient_operator(uniform_ball(lamp, 1),
                                                FiniteQuotient(lamp, 3)))
    rep_l = sandwich_check(prof_l, 200)
    ok = rep_z.violations == 0 and rep_l.violations == 0
    return SuiteResult("sandwich", ok,
                       {"violations": rep_z.violations + rep_l.violations,
                        "min_slack": min(rep_z.min_slack_lower, rep_z.min_slack_upper,
                                         rep_l.min_slack_lower, rep_l.min_slack_upper)})


def _ten_operators() -> list:
    z = Group("lattice", d=1)
    z2 = Group("lattice", d=2)
    lamp = Group("lamplighter", d=1)
    srw = uniform_ball(z, 1)
    ops = []
    for m in (4, 8, 16, 97, 128):
        ops.append(quotient_operator(srw, FiniteQuotient(z, m)))
    for m in (9, 25):
        ops.append(quotient_operator(uniform_ball(z, 2), FiniteQuotient(z, m)))
    ops.append(quotient_operator(uniform_ball(z2, 1), FiniteQuotient(z2, 5)))
    ops.append(quotient_operator(uniform_ball(lamp, 1), FiniteQuotient(lamp, 3)))
    ops.append(quotient_operator(lamplighter_switch(uniform_ball(z, 1)),
                                 FiniteQuotient(lamp, 4)))
    return ops


def suite_trace_identity(seed: int = DEFAULT_SEED) -> SuiteResult:
    """Matrix-power diagonal vs eigenvalue sums on ten quotient operators."""
    worst = 0.0
    ops = _ten_operators()
    for op in ops:
        prof = spectral_profile(op, check=True)
        acc = np.eye(op.size)
        for n in range(1, 17):
            acc = acc @ op.matrix
            if n in (1, 2, 4, 8, 16):
                worst = max(worst, abs(float(acc[0, 0]) - prof.return_value(n)))
    return SuiteResult("trace-identity", worst <= 1e-10,
                       {"operators": len(ops), "max_discrepancy": worst})


def _random_symmetric_measure(z: Group, rng: np.random.Generator) -> FiniteMeasure:
    k = int(rng.integers(2, 6))
    weights = rng.random(k + 1)
    weights /= weights.sum() + weights[1:].sum()
    atoms = {(0,): float(weights[0])}
    for j in range(1, k + 1):
        atoms[(j,)] = float(weights[j])
        atoms[(-j,)] = float(weights[j])
    total = math.fsum(atoms.values())
    atoms = {g: w / total for g, w in atoms.items()}
    return from_atoms(z, atoms)


def suite_spectral_comparison(seed: int = DEFAULT_SEED) -> SuiteResult:
    """Twenty randomized certified operator pairs on Z_64: N2(s) <= N1(Cs)."""
    from .spectral import QuotientOperator

    z = Group("lattice", d=1)
    q = FiniteQuotient(z, 64)
    rng = RngStream(seed, 77).generator()
    total_viol = 0
    certified = 0
    eye = np.eye(64)
    for trial in range(20):
        op1 = quotient_operator(_random_symmetric_measure(z, rng), q)
        mode = trial % 3
        if mode == 0:
            # lazified square: spec(S) >= 0 makes I - S <= 2 (I - S^2) certify
            s = 0.5 * (op1.matrix + eye)
            op1 = QuotientOperator(q, s)
            op2 = QuotientOperator(q, s @ s)
            c = 2.0
        elif mode == 1:
            theta = float(rng.uniform(0.5, 0.9))
            op2 = QuotientOperator(q, (1 - theta) * op1.matrix + theta * eye)
            c = 1.0 / (1.0 - theta)
        else:
            op2 = QuotientOperator(q, 0.5 * (op1.matrix + eye))
            c = 2.0
        rep = comparison_check(op1, op2, c)
        certified += int(rep.certified)
        total_viol += rep.grid_violations
    ok = certified == 20 and total_viol == 0
    return SuiteResult("spectral-comparison", ok,
                       {"certified": certified, "grid_violations": total_viol})


def suite_mixture_bound(seed: int = DEFAULT_SEED) -> SuiteResult:
    """Telescoping sup-norm bound: 5-level mixture on Z for all n <= 64, plus
    the two-level hand values at n = 1."""
    z = Group("lattice", d=1)
    rho = make_moment_scale("power", 1.0)
    mu, spec = ball_mixture(z, rho, 5)
    power = mu
    violations = 0
    worst_margin = math.inf
    for n in range(1, 65):
        if n > 1:
            power = convolve(power, mu, eps=0.0)
        bound = mixture_sup_bound(spec, n)
        sup = power.max_weight()
        worst_margin = min(worst_margin, bound - sup)
        if sup > bound + 1e-12:
            violations += 1
    mu2, spec2 = mixture_from_levels(z, [1, 4], [0.5, 0.5])
    hand_bound = mixture_sup_bound(spec2, 1)
    hand_sup = mu2.max_weight()
    hand_ok = (abs(hand_bound - 0.2459) <= 5e-5 and abs(hand_sup - 2.0 / 9.0) <= 1e-12)
    ok = violations == 0 and hand_ok
    return SuiteResult("mixture-bound", ok,
                       {"violations": violations, "min_margin": worst_margin,
                        "hand_bound": hand_bound, "hand_sup": hand_sup})


def suite_gamma_alpha_table(seed: int = DEFAULT_SEED) -> SuiteResult:
    """Exponent algebra: gamma_alpha(d/(d+2), a) = d/(d+a) and
    gamma_alpha(1/3, a) = 1/(1+a)."""
    alphas = np.linspace(0.1, 2.0, 20)
    worst = 0.0
    for d in range(1, 6):
        for a in alphas:
            worst = max(worst, abs(gamma_alpha(d / (d + 2.0), a) - d / (d + a)))
    for a in alphas:
        worst = max(worst, abs(gamma_alpha(1.0 / 3.0, a) - 1.0 / (1.0 + a)))
    return SuiteResult("gamma-alpha-table", worst <= 1e-12, {"max_error": worst})


def suite_lamplighter_exp_pow(seed: int = DEFAULT_SEED) -> SuiteResult:
    """Switch-walk-switch over the alpha=1 stable-like law: exp-pow in
    [0.35, 0.65] from collision estimates of the even powers {16,32,64,128}.

    The n values name the estimated convolution powers (walks take n/2
    steps); powers whose return probability sits below the collision floor
    1/(N(N-1)) produce zero estimates and are dropped from the fit.
    """
    mu1 = stable_like(1, 1.0, 100_000)
    q = lamplighter_switch(mu1)
    records = []
    dropped = 0
    for power in (16, 32, 64, 128):
        est = collision_return_estimate(q, power // 2, 200_000,
                                        RngStream(seed, power))
        if est.estimate > 0.0:
            records.append(ReturnRecord(power, est.estimate, est.estimate,
                                        method="monte-carlo"))
        else:
            dropped += 1
    series = ReturnSeries(records, "lamplighter:d=1", "switchwalk:base=stable:a=1.0")
    fit = fit_decay(series, "exp-pow", (16, 128), min_points=3)
    ok = 0.35 <= fit.exponent <= 0.65
    return SuiteResult("lamplighter-exp-pow", ok,
                       {"exponent": fit.exponent, "points": fit.points,
                        "below_floor": dropped})


def suite_interpolation(seed: int = DEFAULT_SEED) -> SuiteResult:
    """Dirichlet-form interpolation on Z_128 with the stable-like measure."""
    z = Group("lattice", d=1)
    srw = uniform_ball(z, 1)
    mu = stable_like(1, 1.0, 100_000)
    rep = interpolation_check(mu, srw, FiniteQuotient(z, 128), power_symbol(0.5),
                              stable_kernel(0.5), make_moment_scale("power", 1.0),
                              trials=100, rng=RngStream(seed, 11).generator())
    ok = rep.violations == 0 and rep.max_ratio <= 1.0
    return SuiteResult("interpolation", ok,
                       {"max_ratio": rep.max_ratio, "c0": rep.c0, "c1": rep.c1,
                        "violations": rep.violations})


def suite_range_scaling(seed: int = DEFAULT_SEED) -> SuiteResult:
    """Visited sites of the +-1 walk on Z grow like sqrt(n): slope 0.50 +- 0.05."""
    z = Group("lattice", d=1)
    pm = from_atoms(z, {(-1,): 0.5, (1,): 0.5})
    ns = [2 ** k for k in range(6, 13)]
    means = []
    for n in ns:
        samp = range_functional(pm, n, 10_000, (0.5, 1.0), RngStream(seed, n))
        means.append(samp.mean)
    slope = float(np.polyfit(np.log(ns), np.log(means), 1)[0])
    return SuiteResult("range-scaling", abs(slope - 0.5) <= 0.05,
                       {"slope": slope})


SUITES = {
    "exact-return-z": suite_exact_return_z,
    "srw-z2-power": suite_srw_z2_power,
    "stable-z-power": suite_stable_z_power,
    "subordinate-z-power": suite_subordinate_z_power,
    "sandwich": suite_sandwich,
    "trace-identity": suite_trace_identity,
    "spectral-comparison": suite_spectral_comparison,
    "mixture-bound": suite_mixture_bound,
    "gamma-alpha-table": suite_gamma_alpha_table,
    "lamplighter-exp-pow": suite_lamplighter_exp_pow,
    "interpolation": suite_interpolation,
    "range-scaling": suite_range_scaling,
}


def run_suite(name: str, seed: int = DEFAULT_SEED) -> SuiteResult:
    if name not in SUITES:
        raise UsageError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    start = time.time()
    result = SUITES[name](seed=seed)
    result.runtime = time.time() - start
    return result


def run_all(seed: int = DEFAULT_SEED) -> list[SuiteResult]:
    return [run_suite(name, seed=seed) for name in SUITES]
