import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from walklab.errors import UnsupportedError, UsageError
from walklab.groups import Group
from walklab.measures import dirac, from_atoms, stable_like, uniform_ball
from walklab.scales import (admissibility_constant, custom_kernel, custom_scale,
                            de_bruijn_conjugate, gamma_alpha, identity_symbol,
                            make_moment_scale, moment, parse_scale_spec, pi_psi,
                            power_symbol, psi_from_omega, stable_kernel,
                            weak_moment, xi_zeta)

Z = Group("lattice", d=1)


def weak_moment_oracle(mu, rho, grid_points=200_000):
    """Brute-force sup of s * mu(rho(|.|) > s) over a dense s grid."""
    lengths, weights = mu.word_length_arrays()
    vals = np.asarray(rho(lengths), dtype=float)
    top = vals.max()
    best = 0.0
    for s in np.linspace(top * 1e-6, top * 1.001, grid_points):
        best = max(best, s * weights[vals > s].sum())
    return best


class TestMomentScales:
    def test_power(self):
        rho = make_moment_scale("power", 1.0)
        assert rho(3) == 4.0

    def test_log_at_zero(self):
        assert make_moment_scale("log", 2.0)(0) == pytest.approx(1.0)

    def test_explog(self):
        rho = make_moment_scale("explog", 1.0, 0.5)
        assert rho(math.e - 1.0) == pytest.approx(math.e)

    @pytest.mark.parametrize("family,params", [
        ("power", (2.5,)), ("power", (0.0,)), ("explog", (1.0, 1.5)),
        ("explog", (-1.0, 0.5)), ("log", (0.0,)),
    ])
    def test_parameter_ranges(self, family, params):
        with pytest.raises(UsageError):
            make_moment_scale(family, *params)

    def test_custom_rejects_decreasing(self):
        with pytest.raises(UsageError):
            custom_scale(lambda t: 2.0 - t / (1.0 + t))

    def test_parse(self):
        assert parse_scale_spec("power:1.0")(3) == 4.0
        assert parse_scale_spec("explog:c=1,a=0.5")(0) == pytest.approx(1.0)
        assert parse_scale_spec("log:2.0").family == "log"


class TestMoment:
    def test_dirac(self):
        rho = make_moment_scale("power", 0.7)
        lo, hi = moment(dirac(Z), rho)
        assert lo == hi == pytest.approx(1.0)

    def test_srw_first_moment(self):
        lo, hi = moment(uniform_ball(Z, 1), make_moment_scale("power", 1.0))
        assert lo == pytest.approx(5.0 / 3.0)
        assert hi == lo

    def test_deficit_makes_upper_infinite(self):
        mu = stable_like(1, 1.0, 100)
        lo, hi = moment(mu, make_moment_scale("power", 0.5))
        assert math.isfinite(lo) and math.isinf(hi)

    def test_stable_divergence_split(self):
        # partial-sum growth across cutoffs detects alpha' >= alpha
        rho_low = make_moment_scale("power", 0.4)
        rho_hi = make_moment_scale("power", 1.2)
        rho_crit = make_moment_scale("power", 1.0)
        lows, his, crits = [], [], []
        for cutoff in (100, 1000, 10_000):
            mu = stable_like(1, 1.0, cutoff)
            lows.append(moment(mu, rho_low)[0])
            his.append(moment(mu, rho_hi)[0])
            crits.append(moment(mu, rho_crit)[0])
        conv = (lows[2] - lows[1]) / (lows[1] - lows[0])
        div = (his[2] - his[1]) / (his[1] - his[0])
        crit = (crits[2] - crits[1]) / (crits[1] - crits[0])
        assert conv <= 0.5
        assert div >= 0.8 and crit >= 0.8


class TestWeakMoment:
    def test_point_mass(self):
        # sup_{s>0} s * mu(rho > s) approaches rho(0) from below for delta_e
        rho = make_moment_scale("power", 1.0)
        assert weak_moment(dirac(Z), rho) == pytest.approx(1.0)

    def test_four_point_example_against_oracle(self):
        mu = from_atoms(Z, {(-2,): 0.25, (-1,): 0.25, (1,): 0.25, (2,): 0.25})
        rho = make_moment_scale("power", 1.0)
        w = weak_moment(mu, rho)
        assert w == pytest.approx(weak_moment_oracle(mu, rho), rel=1e-4)
        assert w == pytest.approx(2.0)

    def test_stable_weak_moment_bounded_in_cutoff(self):
        rho = make_moment_scale("power", 1.0)
        ws = [weak_moment(stable_like(1, 1.0, c), rho)
              for c in (1000, 10_000, 100_000)]
        assert max(ws) <= 1.5 * min(ws)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(-30, 30), st.floats(0.01, 1.0)),
                    min_size=1, max_size=8), st.floats(0.2, 1.8))
    def test_markov_inequality(self, raw, alpha):
        total = sum(w for _, w in raw)
        atoms = {}
        for x, w in raw:
            atoms[(x,)] = atoms.get((x,), 0.0) + w / total
        mu = from_atoms(Z, atoms, check=False)
        rho = make_moment_scale("power", alpha)
        assert weak_moment(mu, rho) <= moment(mu, rho)[0] + 1e-9

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.integers(-30, 30), st.floats(0.01, 1.0)),
                    min_size=1, max_size=8),
           st.floats(0.2, 0.9), st.floats(1.0, 1.9))
    def test_monotone_in_rho(self, raw, a1, a2):
        total = sum(w for _, w in raw)
        atoms = {}
        for x, w in raw:
            atoms[(x,)] = atoms.get((x,), 0.0) + w / total
        mu = from_atoms(Z, atoms, check=False)
        r1, r2 = make_moment_scale("power", a1), make_moment_scale("power", a2)
        assert moment(mu, r1)[0] <= moment(mu, r2)[0] + 1e-12
        assert weak_moment(mu, r1) <= weak_moment(mu, r2) + 1e-12


class TestPsiFromOmega:
    def test_constant_kernel_is_identity(self):
        omega = custom_kernel(lambda s: 1.0)
        for lam in (0.1, 0.5, 1.0, 2.0):
            assert psi_from_omega(omega, lam) == pytest.approx(lam, rel=1e-8)

    def test_stable_kernel_gives_power(self):
        # omega = s^{1-a}/Gamma(2-a) must reproduce psi(lam) = lam^a
        for alpha in (0.25, 0.5, 0.75):
            omega = stable_kernel(alpha)
            for k in range(0, 21):
                lam = 2.0 ** (-k)
                assert psi_from_omega(omega, lam) == pytest.approx(
                    lam ** alpha, rel=1e-5)

    def test_domain(self):
        with pytest.raises(UsageError):
            psi_from_omega(stable_kernel(0.5), 0.0)


class TestXiZeta:
    def test_sqrt_kernel_closed_form(self):
        omega = custom_kernel(lambda s: math.sqrt(s))
        for t in (0.5, 16.0, 300.0):
            xi, zeta = xi_zeta(omega, t)
            assert xi == pytest.approx(4.0 * t ** 0.25, rel=1e-5)
            assert zeta == pytest.approx(4.0 * t ** 0.25, rel=1e-5)

    def test_linear_kernel_xi_diverges(self):
        xi, zeta = xi_zeta(custom_kernel(lambda s: s), 1.0)
        assert math.isinf(xi) and math.isfinite(zeta)

    def test_constant_kernel_zeta_diverges(self):
        xi, zeta = xi_zeta(custom_kernel(lambda s: 1.0), 1.0)
        assert math.isfinite(xi) and math.isinf(zeta)

    def test_lower_bound(self):
        # xi(t), zeta(t) >= sqrt(t / omega(t)) whenever finite
        omega = stable_kernel(0.5)
        for t in (0.25, 4.0, 1e3):
            xi, zeta = xi_zeta(omega, t)
            floor = math.sqrt(t / omega(t))
            assert xi >= floor * (1 - 1e-9) and zeta >= floor * (1 - 1e-9)


class TestAdmissibility:
    def test_stable_pair_admissible(self):
        res = admissibility_constant(make_moment_scale("power", 1.0),
                                     stable_kernel(0.5))
        assert res.admissible and math.isfinite(res.c1)

    def test_log_scale_inadmissible(self):
        res = admissibility_constant(make_moment_scale("log", 0.5),
                                     stable_kernel(0.5))
        assert not res.admissible

    def test_scaling(self):
        omega = stable_kernel(0.5)
        base = admissibility_constant(make_moment_scale("power", 1.0), omega)
        doubled = admissibility_constant(
            custom_scale(lambda t: 2.0 * (1.0 + t)), omega)
        assert doubled.c1 == pytest.approx(base.c1 / math.sqrt(2.0), rel=1e-9)

    def test_hs_mode_runs(self):
        res = admissibility_constant(make_moment_scale("power", 1.0),
                                     stable_kernel(0.5), mode="hs")
        assert math.isfinite(res.c1)


class TestGammaAlpha:
    def test_value(self):
        assert gamma_alpha(1.0 / 3.0, 1.0) == pytest.approx(0.5)

    def test_wreath_identity(self):
        for d in range(1, 6):
            for alpha in np.linspace(0.1, 2.0, 20):
                assert gamma_alpha(d / (d + 2.0), alpha) == pytest.approx(
                    d / (d + alpha), abs=1e-12)

    def test_second_moment_recovers_gamma(self):
        assert gamma_alpha(0.4, 2.0) == pytest.approx(0.4)

    def test_domain(self):
        with pytest.raises(UsageError):
            gamma_alpha(1.0, 1.0)
        with pytest.raises(UsageError):
            gamma_alpha(0.5, 2.5)


class TestPiPsi:
    def test_power_example(self):
        # pi(t)=t^{2/3}, psi=sqrt: pi_psi^{-1}(t)=t^2 so pi_psi(t)=sqrt(t)
        val = pi_psi(lambda t: t ** (2.0 / 3.0), power_symbol(0.5), 9.0)
        assert val == pytest.approx(3.0, rel=1e-6)

    def test_identity_symbol_collapses(self):
        val = pi_psi(lambda t: t ** (2.0 / 3.0), identity_symbol(), 8.0)
        assert val == pytest.approx(8.0 ** (2.0 / 3.0), rel=1e-6)

    def test_exponent_consistency_with_gamma_alpha(self):
        # n / pi_psi(n) ~ n^{1/2} matches gamma_alpha(1/3, 1)
        n = 4096.0
        val = n / pi_psi(lambda t: t ** (2.0 / 3.0), power_symbol(0.5), n)
        assert math.log(val) / math.log(n) == pytest.approx(
            gamma_alpha(1.0 / 3.0, 1.0), rel=1e-3)

    def test_monotonicity_precondition(self):
        with pytest.raises(UsageError):
            pi_psi(lambda t: t * t, power_symbol(0.5), 2.0)  # t/pi decreasing


class TestSymbols:
    def test_power_symbol_flags(self):
        sym = power_symbol(0.5)
        assert sym.psi2 == pytest.approx(math.sqrt(2.0))
        assert sym.strict_at_2

    def test_identity_not_strict(self):
        assert not identity_symbol().strict_at_2

    def test_invalid_symbol(self):
        from walklab.scales import custom_symbol

        with pytest.raises(UsageError):
            custom_symbol(lambda s: 0.5 * np.asarray(s))  # psi(1) != 1


class TestDeBruijn:
    def test_general_request_unsupported(self):
        with pytest.raises(UnsupportedError):
            de_bruijn_conjugate(lambda t: math.log(math.e + t))

    def test_self_conjugate_class(self):
        ell = lambda t: math.log(math.e + t) ** 2  # noqa: E731
        conj = de_bruijn_conjugate(ell, self_conjugate=True)
        assert conj(100.0) == pytest.approx(1.0 / ell(100.0))

    def test_rejects_fast_growth(self):
        with pytest.raises(UsageError):
            de_bruijn_conjugate(lambda t: t, self_conjugate=True)
