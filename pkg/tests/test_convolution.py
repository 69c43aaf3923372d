import math
from fractions import Fraction

import numpy as np
import pytest

from walklab.convolution import (ReturnSeries, convolve, convolve_rational,
                                 mixture_sup_bound, rational_return_values,
                                 read_measure_cache, return_series,
                                 write_measure_cache)
from walklab.errors import KindMismatchError, ResourceLimitError, UsageError
from walklab.groups import Group
from walklab.measures import (ball_mixture, dirac, from_atoms, mixture_from_levels,
                              stable_like, uniform_ball)
from walklab.scales import make_moment_scale

Z = Group("lattice", d=1)


def dict_convolve_oracle(group, a, b):
    out = {}
    for g, wg in a.items():
        for h, wh in b.items():
            z = group.multiply(g, h)
            out[z] = out.get(z, 0.0) + wg * wh
    return out


class TestConvolve:
    def test_srw_squared(self):
        mu = uniform_ball(Z, 1)
        out = convolve(mu, mu, eps=0.0)
        expected = {(-2,): 1 / 9, (-1,): 2 / 9, (0,): 3 / 9, (1,): 2 / 9, (2,): 1 / 9}
        for g, w in expected.items():
            assert out.weight(g) == pytest.approx(w, abs=1e-15)

    def test_dirac_product(self):
        g = Group("heisenberg3")
        a, b = (1, 0, 0), (0, 1, 0)
        out = convolve(dirac(g, a), dirac(g, b), eps=0.0)
        assert out.atoms_dict() == {g.multiply(a, b): 1.0}

    def test_noncommutative_free(self):
        f = Group("free", k=2)
        ab = convolve(dirac(f, (1,)), dirac(f, (2,)), eps=0.0)
        ba = convolve(dirac(f, (2,)), dirac(f, (1,)), eps=0.0)
        assert ab.atoms_dict() != ba.atoms_dict()

    def test_group_mismatch(self):
        with pytest.raises(KindMismatchError):
            convolve(uniform_ball(Z, 1), uniform_ball(Group("lattice", d=2), 1))

    def test_dense_matches_dict_oracle(self):
        a = from_atoms(Z, {(-2,): 0.3, (0,): 0.4, (2,): 0.3})
        b = from_atoms(Z, {(-1,): 0.5, (1,): 0.5})
        out = convolve(a, b, eps=0.0)
        oracle = dict_convolve_oracle(Z, a.atoms_dict(), b.atoms_dict())
        for g, w in oracle.items():
            assert out.weight(g) == pytest.approx(w, abs=1e-12)

    def test_eps_drops_into_deficit(self):
        a = from_atoms(Z, {(0,): 1.0 - 1e-6, (5,): 1e-6})
        out = convolve(a, a, eps=1e-9)
        assert out.deficit > 0
        assert out.mass + out.deficit == pytest.approx(1.0, abs=1e-12)

    def test_sparse_support_cap(self):
        f = Group("free", k=2)
        mu = uniform_ball(f, 2)
        with pytest.raises(ResourceLimitError):
            power = mu
            for _ in range(12):
                power = convolve(power, power, eps=0.0, support_cap=3000)


class TestRationalMode:
    def test_associativity_exact(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            measures = []
            for _ in range(3):
                xs = rng.integers(-3, 4, size=3)
                ws = rng.integers(1, 9, size=3)
                atoms = {}
                for x, w in zip(xs, ws):
                    atoms[(int(x),)] = atoms.get((int(x),), Fraction(0)) + Fraction(int(w))
                total = sum(atoms.values())
                measures.append({g: w / total for g, w in atoms.items()})
            a, b, c = measures
            left = convolve_rational(Z, convolve_rational(Z, a, b), c)
            right = convolve_rational(Z, a, convolve_rational(Z, b, c))
            assert left == right  # exact equality of rationals

    def test_trinomial_oracle(self):
        vals = rational_return_values(uniform_ball(Z, 1), 4)
        assert vals[2] == Fraction(1, 3)
        assert vals[4] == Fraction(19, 81)


class TestReturnSeries:
    def test_srw_exact_records(self):
        rs = return_series(uniform_ball(Z, 1), 2, eps=1e-14)
        assert abs(rs.bracket(2).lower - 1 / 3) <= 1e-12
        assert abs(rs.bracket(4).lower - 19 / 81) <= 1e-12

    def test_dirac_returns_one(self):
        rs = return_series(dirac(Z), 8, eps=0.0)
        assert all(r.lower == pytest.approx(1.0) for r in rs.records)

    def test_bracket_width_at_512(self):
        rs = return_series(uniform_ball(Group("lattice", d=2), 1), 256, eps=1e-14)
        rec = rs.bracket(512)
        assert rec.upper - rec.lower < 1e-8

    def test_lower_nonincreasing(self):
        rs = return_series(uniform_ball(Z, 1), 64)
        lows = [r.lower for r in rs.records]
        assert all(b <= a + 1e-13 for a, b in zip(lows, lows[1:]))

    def test_exact_mode_has_zero_width(self):
        rs = return_series(uniform_ball(Z, 1), 16, eps=0.0)
        assert all(r.upper == r.lower for r in rs.records)

    def test_requires_symmetry(self):
        with pytest.raises(UsageError):
            return_series(from_atoms(Z, {(1,): 1.0}), 4)

    def test_schedule_is_doubling(self):
        rs = return_series(uniform_ball(Z, 1), 24)
        assert rs.ns() == [2, 4, 6, 8, 12, 16, 24, 32, 48]

    def test_bracket_covers_truth_under_drops(self):
        # aggressive drops must still bracket the eps=0 values
        mu = stable_like(1, 1.0, 300)
        exact = return_series(mu, 16, eps=0.0)
        lossy = return_series(mu, 16, eps=1e-7)
        for rec in lossy.records:
            truth = exact.bracket(rec.n)
            assert rec.lower <= truth.lower + 1e-15
            assert rec.upper >= truth.upper - 1e-15

    def test_sparse_engine_on_lamplighter(self):
        lamp = Group("lamplighter", d=1)
        mu = uniform_ball(lamp, 1)
        rs = return_series(mu, 4, eps=0.0)
        # oracle: exact sparse powers via dict convolution
        atoms = mu.atoms_dict()
        power = atoms
        for _ in range(1, 4):
            power = dict_convolve_oracle(lamp, power, atoms)
        expected = math.fsum(v * v for v in power.values())
        assert rs.bracket(8).lower == pytest.approx(expected, abs=1e-12)


class TestMixtureBound:
    def test_two_level_hand_value(self):
        mu, spec = mixture_from_levels(Z, [1, 4], [0.5, 0.5])
        bound = mixture_sup_bound(spec, 1)
        assert bound == pytest.approx((2 / 9) * math.exp(-0.5) + 1 / 9, abs=1e-12)
        assert bound == pytest.approx(0.2459, abs=5e-5)
        assert mu.max_weight() == pytest.approx(2 / 9, abs=1e-15)

    def test_limits(self):
        _, spec = ball_mixture(Z, make_moment_scale("power", 1.0), 3)
        assert mixture_sup_bound(spec, 0) == pytest.approx(spec.b[0])
        assert mixture_sup_bound(spec, 10 ** 9) == pytest.approx(spec.b[-1])

    def test_dominates_exact_sup(self):
        mu, spec = ball_mixture(Z, make_moment_scale("power", 1.0), 3)
        power = mu
        for n in range(1, 17):
            if n > 1:
                power = convolve(power, mu, eps=0.0)
            assert power.max_weight() <= mixture_sup_bound(spec, n) + 1e-12


class TestSeriesIO:
    def test_csv_roundtrip(self, tmp_path):
        rs = return_series(uniform_ball(Z, 1), 8, measure_spec="ball:r=1")
        path = tmp_path / "series.csv"
        rs.to_csv(path)
        back = ReturnSeries.from_csv(path)
        assert back.measure_spec == "ball:r=1"
        assert [(r.n, r.lower, r.upper) for r in back.records] == \
               [(r.n, r.lower, r.upper) for r in rs.records]

    def test_measure_cache_roundtrip(self, tmp_path):
        lamp = Group("lamplighter", d=1)
        mu = uniform_ball(lamp, 2)
        path = tmp_path / "measure.cache"
        write_measure_cache(mu, path, measure_spec="ball:r=2", n=1, eps=0.0)
        back = read_measure_cache(path, lamp)
        assert back.atoms_dict() == mu.atoms_dict()
