import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from walklab.errors import KindMismatchError, OutOfRangeError, ResourceLimitError, UsageError
from walklab.groups import FiniteQuotient, Group, lamp_element, parse_group_spec


def bfs_oracle(group, r_max):
    """Independent breadth-first distances, used as the metric oracle."""
    dist = {group.identity: 0}
    frontier = [group.identity]
    for r in range(r_max):
        nxt = []
        for g in frontier:
            for s in group.generators:
                h = group.multiply(g, s)
                if h not in dist:
                    dist[h] = r + 1
                    nxt.append(h)
        frontier = nxt
    return dist


class TestMultiply:
    def test_lattice_componentwise(self):
        g = Group("lattice", d=2)
        assert g.multiply((1, 2), (3, -1)) == (4, 1)

    def test_lamplighter_toggle_cancels(self):
        g = Group("lamplighter", d=1)
        a = lamp_element([0], 0)
        b = lamp_element([0], 1)
        # eta''_i = eta_i + eta'_{i-k} makes the two lamps at 0 cancel
        assert g.multiply(a, b) == ((), (1,))

    def test_free_reduction(self):
        g = Group("free", k=2)
        assert g.multiply((1, 2), (-2, 1)) == (1, 1)

    def test_kind_mismatch(self):
        g = Group("lattice", d=2)
        with pytest.raises(KindMismatchError):
            g.multiply((1, 2), (1, 2, 3))


class TestInvert:
    def test_lattice(self):
        assert Group("lattice", d=2).invert((3, -4)) == (-3, 4)

    def test_heisenberg(self):
        g = Group("heisenberg3")
        assert g.invert((1, 0, 0)) == (-1, 0, 0)
        # derived by solving (x,y,z)(x',y',z') = 0
        assert g.invert((1, 1, 0)) == (-1, -1, 1)
        assert g.multiply((1, 1, 0), g.invert((1, 1, 0))) == (0, 0, 0)

    def test_lamplighter_brute_force(self):
        g = Group("lamplighter", d=1)
        el = lamp_element([1], 2)
        inv = g.invert(el)
        assert inv == lamp_element([-1], -2)
        assert g.multiply(el, inv) == g.identity

    @pytest.mark.parametrize("kind,d", [("lattice", 2), ("heisenberg3", 3),
                                        ("lamplighter", 1), ("free", 2), ("sol", 3)])
    def test_inverse_identity_everywhere(self, kind, d):
        g = Group(kind, d=d) if kind != "free" else Group("free", k=2)
        elems, _ = g.ball(3)
        for el in elems:
            assert g.multiply(el, g.invert(el)) == g.identity


class TestWordLength:
    def test_lattice_l1(self):
        g = Group("lattice", d=1)
        assert g.word_length((5,)) == 5

    def test_lamplighter_go_toggle_return(self):
        g = Group("lamplighter", d=1)
        assert g.word_length(lamp_element([1], 0)) == 3
        oracle = bfs_oracle(Group("lamplighter", d=1), 5)
        for el, dist in oracle.items():
            assert g.word_length(el) == dist

    def test_free_reduced_length(self):
        assert Group("free", k=2).word_length((1, 2, -1)) == 3

    def test_out_of_range_carries_bound(self):
        g = Group("lamplighter", d=1, r_max=4)
        far = lamp_element([], 40)
        with pytest.raises(OutOfRangeError) as exc:
            g.word_length(far)
        assert exc.value.lower_bound == 5

    def test_symmetric_length(self):
        g = Group("sol")
        elems, _ = g.ball(4)
        for el in elems:
            assert g.word_length(g.invert(el)) == g.word_length(el)


class TestBall:
    def test_z_ball(self):
        elems, vol = Group("lattice", d=1).ball(3)
        assert vol == 7 and sorted(elems) == [(k,) for k in range(-3, 4)]

    def test_heisenberg_degree_four(self):
        import numpy as np

        g = Group("heisenberg3", r_max=12)
        rs = range(4, 13)
        vols = [g.volume(r) for r in rs]
        slope = np.polyfit(np.log(list(rs)), np.log(vols), 1)[0]
        assert abs(slope - 4.0) <= 0.5

    def test_lamplighter_exponential(self):
        g = Group("lamplighter", d=1, r_max=12)
        vols = [g.volume(r) for r in range(4, 13)]
        assert all(b / a >= 1.2 for a, b in zip(vols, vols[1:]))

    def test_matches_independent_bfs(self):
        g = Group("heisenberg3")
        oracle = bfs_oracle(Group("heisenberg3"), 4)
        elems, vol = g.ball(4)
        assert set(elems) == set(oracle)
        assert vol == len(oracle)

    def test_strictly_increasing(self):
        for kind in ("lattice", "heisenberg3", "lamplighter", "free", "sol"):
            g = Group(kind)
            vols = [g.ball(r)[1] for r in range(5)]
            assert all(b > a for a, b in zip(vols, vols[1:]))

    def test_doubling(self):
        g = Group("lattice", d=2)
        for r in (8, 12, 16, 20):
            assert g.volume(r) >= 2 * g.volume(-(-r // 4))

    def test_memory_guard(self):
        g = Group("free", k=2, ball_cap=50)
        with pytest.raises(ResourceLimitError):
            g.ball(8)

    def test_lattice_volume_formula(self):
        for d in (1, 2, 3):
            g = Group("lattice", d=d)
            for r in range(0, 7):
                assert g.volume(r) == g.ball(r)[1]


class TestAssociativity:
    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_random_triples(self, data):
        kind = data.draw(st.sampled_from(
            ["lattice", "heisenberg3", "lamplighter", "free", "sol"]))
        g = Group(kind, d=2) if kind == "lattice" else Group(kind)
        elems, _ = g.ball(3)
        pick = st.sampled_from(elems)
        a, b, c = data.draw(pick), data.draw(pick), data.draw(pick)
        assert g.multiply(g.multiply(a, b), c) == g.multiply(a, g.multiply(b, c))


class TestEncoding:
    @pytest.mark.parametrize("kind", ["lattice", "heisenberg3", "lamplighter",
                                      "free", "sol"])
    def test_roundtrip(self, kind):
        g = Group(kind, d=2) if kind == "lattice" else Group(kind)
        elems, _ = g.ball(3)
        for el in elems:
            assert g.decode(g.encode(el)) == el

    def test_encodings_distinct(self):
        g = Group("lamplighter", d=1)
        elems, _ = g.ball(4)
        blobs = {g.encode(el) for el in elems}
        assert len(blobs) == len(elems)


class TestQuotient:
    def test_sizes(self):
        z = Group("lattice", d=1)
        assert FiniteQuotient(z, 8).size == 8
        lamp = Group("lamplighter", d=1)
        assert FiniteQuotient(lamp, 3).size == 24

    def test_lattice_projection(self):
        q = parse_group_spec("quotient:lattice:d=2:m=5")
        assert q.size == 25
        assert q._site_coord(q.project((7, -1))) == (2, 4)

    @pytest.mark.parametrize("spec", ["quotient:lattice:d=2:m=5",
                                      "quotient:lamplighter:d=1:m=3"])
    def test_projection_is_homomorphism(self, spec):
        import numpy as np

        q = parse_group_spec(spec)
        g = q.parent
        elems, _ = g.ball(4)
        rng = np.random.default_rng(5)
        for _ in range(1000):
            a, b = (elems[i] for i in rng.integers(0, len(elems), 2))
            assert q.project(g.multiply(a, b)) == q.multiply(q.project(a),
                                                             q.project(b))

    def test_quotient_inverse(self):
        q = parse_group_spec("quotient:lamplighter:d=1:m=3")
        for i in range(q.size):
            assert q.multiply(i, q.invert(i)) == 0

    def test_word_length_table(self):
        z = Group("lattice", d=1)
        q = FiniteQuotient(z, 8)
        assert q.word_length_table() == [0, 1, 2, 3, 4, 3, 2, 1]

    def test_guards(self):
        with pytest.raises(UsageError):
            FiniteQuotient(Group("free", k=2), 3)
        with pytest.raises(UsageError):
            FiniteQuotient(Group("lattice", d=1), 2)
        with pytest.raises(ResourceLimitError):
            FiniteQuotient(Group("lamplighter", d=1), 9, size_cap=1000)


class TestSpecs:
    def test_roundtrip(self):
        for spec in ("lattice:d=2", "lamplighter:d=1", "heisenberg3", "sol",
                     "free:k=3"):
            assert parse_group_spec(spec).spec_string() == spec

    def test_bad_spec(self):
        with pytest.raises(UsageError):
            parse_group_spec("dihedral:d=4")
