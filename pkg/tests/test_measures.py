import math

import numpy as np
import pytest

from walklab.convolution import convolve, mixture_sup_bound
from walklab.errors import UsageError
from walklab.groups import Group, lamp_element
from walklab.measures import (FiniteMeasure, ball_mixture, check_symmetric, dirac,
                              from_atoms, lamplighter_switch, mixture_from_levels,
                              parse_measure_spec, stable_like, subordinate,
                              subordination_coefficients, subordination_tail_bound,
                              uniform_ball)
from walklab.scales import make_moment_scale, moment, weak_moment

Z = Group("lattice", d=1)
Z2 = Group("lattice", d=2)


class TestFiniteMeasure:
    def test_mass_invariant_enforced(self):
        with pytest.raises(UsageError):
            from_atoms(Z, {(0,): 0.5, (1,): 0.4})

    def test_zero_atoms_removed(self):
        mu = from_atoms(Z, {(0,): 1.0, (1,): 0.0})
        assert mu.support_size() == 1

    def test_dense_dict_agree(self):
        mu = stable_like(1, 1.0, 50)
        dense_w, off = mu.dense1d()
        for g, w in mu.items():
            assert dense_w[g[0] - off] == w


class TestUniformBall:
    def test_z(self):
        mu = uniform_ball(Z, 1)
        assert mu.atoms_dict() == {(-1,): 1 / 3, (0,): 1 / 3, (1,): 1 / 3}

    def test_z2(self):
        mu = uniform_ball(Z2, 1)
        assert mu.support_size() == 5
        assert all(w == 0.2 for _, w in mu.items())

    def test_lamplighter(self):
        mu = uniform_ball(Group("lamplighter", d=1), 1)
        assert mu.support_size() == 4
        assert all(w == 0.25 for _, w in mu.items())

    def test_symmetric(self):
        assert check_symmetric(uniform_ball(Z, 3))


class TestBallMixture:
    def test_weights_inverse_rho(self):
        rho = make_moment_scale("power", 1.0)
        _, spec = ball_mixture(Z, rho, 3)
        raw = np.array([1 / 5, 1 / 17, 1 / 65])
        assert np.allclose(spec.p, raw / raw.sum())

    def test_two_level_fields(self):
        _, spec = ball_mixture(Z, make_moment_scale("power", 1.0), 2)
        assert spec.sigma[0] == pytest.approx(spec.p[1])
        assert spec.sigma[1] == 0.0

    def test_moment_bound_cmom(self):
        # moment(mixture, rho) <= sum rho(4^k) p_k
        rho = make_moment_scale("power", 1.0)
        mu, spec = ball_mixture(Z, rho, 4)
        lo, _ = moment(mu, rho)
        assert lo <= sum(float(rho(r)) * p for r, p in zip(spec.radii, spec.p)) + 1e-12

    def test_weak_moment_wmom(self):
        rho = make_moment_scale("power", 1.0)
        mu, spec = ball_mixture(Z, rho, 4)
        doubling = max(float(rho(4 * t)) / float(rho(t)) for t in range(1, 2000))
        cap = doubling * max(float(rho(r)) * s for r, s in zip(spec.radii, spec.sigma)
                             if s > 0)
        assert weak_moment(mu, rho) <= cap + 1e-12

    def test_sup_norm_bounded_by_levels(self):
        mu, spec = ball_mixture(Z, make_moment_scale("power", 1.0), 3)
        assert mu.max_weight() <= sum(p * b for p, b in zip(spec.p, spec.beta)) + 1e-15
        assert mixture_sup_bound(spec, 1) >= mu.max_weight()

    def test_symmetric(self):
        mu, _ = ball_mixture(Z, make_moment_scale("power", 0.5), 4)
        assert check_symmetric(mu)

    def test_unbuildable_level_goes_to_deficit(self):
        lamp = Group("lamplighter", d=1, r_max=6)
        mu, spec = mixture_from_levels(lamp, [1, 4, 16], [0.5, 0.3, 0.2])
        assert mu.deficit == pytest.approx(0.2)
        assert len(spec.beta) == 3


class TestStableLike:
    def test_normalizer(self):
        # sum over Z of 1/(1+k^2) equals pi*coth(pi)
        mu = stable_like(1, 1.0, 10_000)
        exact_c = math.tanh(math.pi) / math.pi
        assert mu.weight((0,)) == pytest.approx(exact_c, rel=2e-4)

    def test_tail_deficit(self):
        mu = stable_like(1, 1.0, 10_000)
        assert 5e-5 <= mu.deficit <= 8e-5  # about 2 * c / cutoff

    def test_exact_symmetry(self):
        mu = stable_like(1, 0.7, 500)
        for g, w in mu.items():
            assert mu.weight((-g[0],)) == w

    def test_d2(self):
        mu = stable_like(2, 1.0, 30)
        assert check_symmetric(mu)
        assert mu.weight((0, 0)) > mu.weight((1, 0)) > mu.weight((5, 5))

    def test_parameter_guards(self):
        with pytest.raises(UsageError):
            stable_like(1, 2.0, 100)
        with pytest.raises(UsageError):
            stable_like(1, 1.0, 5)


class TestSubordination:
    def test_coefficients(self):
        c = subordination_coefficients(0.5, 4)
        assert np.allclose(c, [0.5, 0.125, 0.0625, 5.0 / 128.0])

    def test_coefficients_positive_decreasing(self):
        c = subordination_coefficients(0.3, 200)
        assert np.all(c > 0)
        assert np.all(np.diff(c[1:]) < 0)

    def test_sum_to_one(self):
        # partial sums approach 1; the K = 10^4 tail is K^{-a}/Gamma(1-a) ~ 5.6e-3
        c = subordination_coefficients(0.5, 10_000)
        assert 1.0 - 6e-3 <= c.sum() < 1.0
        assert subordination_tail_bound(0.5, 10_000) < 1e-2
        assert subordination_coefficients(0.5, 400_000).sum() >= 1.0 - 1e-3

    def test_near_one_limit(self):
        c = subordination_coefficients(1.0 - 1e-9, 4)
        assert c[0] == pytest.approx(1.0)
        assert abs(c[1]) < 1e-9

    def test_tail_bound_dominates(self):
        c = subordination_coefficients(0.5, 5000)
        for m in (10, 100, 1000):
            assert 1.0 - c[:m].sum() <= subordination_tail_bound(0.5, m)

    def test_series_mass_and_symmetry(self):
        mu = subordinate(uniform_ball(Z, 1), 0.5, terms=256)
        assert mu.mass + mu.deficit == pytest.approx(1.0, abs=1e-12)
        assert check_symmetric(mu)

    def test_heavier_tails_for_smaller_a(self):
        srw = uniform_ball(Z, 1)
        tails = []
        for a in (0.8, 0.5, 0.3):
            mu = subordinate(srw, a, terms=512)
            w, off = mu.dense1d()
            xs = np.arange(off, off + len(w))
            tails.append(w[np.abs(xs) > 10].sum())
        assert tails[0] < tails[1] < tails[2]

    def test_requires_symmetry(self):
        with pytest.raises(UsageError):
            subordinate(from_atoms(Z, {(1,): 1.0}), 0.5, terms=16)

    def test_spectral_matches_series_at_center(self):
        srw = uniform_ball(Z, 1)
        terms = 512
        series = subordinate(srw, 0.5, terms=terms)
        spectral = subordinate(srw, 0.5, method="spectral", window=1 << 15)
        tail = subordination_tail_bound(0.5, terms)
        for x in (0, 1, 5, 20):
            diff = spectral.weight((x,)) - series.weight((x,))
            assert -1e-12 <= diff <= tail

    def test_spectral_needs_nn_base(self):
        with pytest.raises(UsageError):
            subordinate(uniform_ball(Z, 2), 0.5, method="spectral")

    def test_sparse_series_on_lamplighter(self):
        lamp = Group("lamplighter", d=1)
        q = lamplighter_switch(from_atoms(Z, {(-1,): 0.5, (1,): 0.5}))
        mu = subordinate(q, 0.5, terms=12)
        assert check_symmetric(mu)
        assert mu.deficit == pytest.approx(1.0 - subordination_coefficients(0.5, 12).sum(),
                                           abs=1e-12)


class TestLamplighterSwitch:
    def test_dirac_base(self):
        q = lamplighter_switch(dirac(Z))
        lamp = Group("lamplighter", d=1)
        assert q.atoms_dict() == {((), (0,)): 0.5, (((0,),), (0,)): 0.5}

    def test_pm_one_base(self):
        q = lamplighter_switch(from_atoms(Z, {(-1,): 0.5, (1,): 0.5}))
        atoms = q.atoms_dict()
        assert len(atoms) == 8
        assert all(w == pytest.approx(1 / 8) for w in atoms.values())

    def test_mass_and_support_bound(self):
        base = stable_like(1, 1.0, 100)
        q = lamplighter_switch(base)
        assert q.mass + q.deficit == pytest.approx(1.0, abs=1e-12)
        assert q.support_size() <= 4 * base.support_size()
        assert check_symmetric(q)

    def test_rejects_lamp_support(self):
        lamp = Group("lamplighter", d=1)
        bad = from_atoms(lamp, {lamp_element([0], 0): 1.0})
        with pytest.raises(UsageError):
            lamplighter_switch(bad)


class TestCheckSymmetric:
    def test_asymmetric_dirac(self):
        assert not check_symmetric(from_atoms(Z2, {(1, 0): 1.0}))

    def test_reversed_convolution_symmetric(self):
        mu = from_atoms(Z, {(-1,): 0.2, (0,): 0.3, (2,): 0.5})
        mu_rev = from_atoms(Z, {(1,): 0.2, (0,): 0.3, (-2,): 0.5})
        conv = convolve(mu_rev, mu, eps=0.0)
        assert check_symmetric(conv)


class TestMeasureSpecs:
    def test_ball(self):
        mu = parse_measure_spec("ball:r=2", Z)
        assert mu.support_size() == 5

    def test_mixture(self):
        mu = parse_measure_spec("mixture:rho=power:1.0,K=3", Z)
        assert check_symmetric(mu)

    def test_stable(self):
        mu = parse_measure_spec("stable:a=1.0,cutoff=1000", Z)
        assert mu.deficit > 0

    def test_subordinate_nested(self):
        mu = parse_measure_spec("subordinate:base=ball:r=1,a=0.5,terms=32", Z)
        assert check_symmetric(mu)

    def test_switchwalk(self):
        lamp = Group("lamplighter", d=1)
        mu = parse_measure_spec("switchwalk:base=stable:a=1.0,cutoff=200", lamp)
        assert mu.group is lamp
        assert check_symmetric(mu)

    def test_unknown(self):
        with pytest.raises(UsageError):
            parse_measure_spec("gaussian:sigma=1", Z)
