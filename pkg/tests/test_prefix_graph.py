import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prefixlso import prefix_graph as pg

WIDTHS = [2, 4, 8, 16, 32, 64]


def oracle_depth(graph):
    """Independent recursive depth via the split-point definition."""
    rows = graph.rows

    def level(hi, lo):
        if hi == lo:
            return 0
        m = next(x for x in rows[hi] if x > lo)
        return 1 + max(level(hi, m), level(m - 1, lo))

    return max(level(hi, lo) for hi, lo in graph.nodes)


def oracle_gray(width, gray):
    """b_{N-1} = g_{N-1}; b_j = b_{j+1} ^ g_j."""
    b = [0] * width
    b[width - 1] = (gray >> (width - 1)) & 1
    for j in range(width - 2, -1, -1):
        b[j] = b[j + 1] ^ ((gray >> j) & 1)
    return sum(v << j for j, v in enumerate(b))


def rand_operand(rng, width):
    v = int(rng.integers(0, 1 << min(width, 32)))
    if width > 32:
        v |= int(rng.integers(0, 1 << (width - 32))) << 32
    return v


def random_legal(width, rng, n_mutations=None):
    if n_mutations is None:
        n_mutations = 2 * pg.n_slots(width)
    base = "ripple" if width & (width - 1) else ("ripple", "sklansky")[rng.integers(2)]
    bits = pg.random_bits(width, rng, base, n_mutations)
    out, _ = pg.legalize_bits(width, bits[None, :])
    return pg.graph_from_bits(width, out[0])


class TestConstructors:
    def test_ripple_chain(self):
        for width in (2, 4, 16):
            g = pg.ripple_carry(width)
            assert g.non_input_nodes == {(i, 0) for i in range(1, width)}
            assert pg.levels(g)[1] == width - 1

    def test_sklansky_width4_nodes(self):
        assert pg.sklansky(4).non_input_nodes == {(1, 0), (3, 2), (2, 0), (3, 0)}

    def test_sklansky_width2_degenerate(self):
        assert pg.sklansky(2).non_input_nodes == {(1, 0)}
        assert pg.sklansky(2) == pg.ripple_carry(2)

    def test_kogge_stone_width4_nodes(self):
        assert pg.kogge_stone(4).non_input_nodes == {(1, 0), (2, 1), (3, 2), (2, 0), (3, 0)}

    def test_kogge_stone_width2(self):
        assert pg.kogge_stone(2).non_input_nodes == {(1, 0)}

    def test_brent_kung_width4_nodes(self):
        assert pg.brent_kung(4).non_input_nodes == {(1, 0), (3, 2), (3, 0), (2, 0)}

    def test_brent_kung_width8(self):
        g = pg.brent_kung(8)
        assert len(g.non_input_nodes) == 11
        assert pg.levels(g)[1] == 4

    def test_width16_counts_and_depths(self):
        expected = {
            pg.ripple_carry: (15, 15),
            pg.sklansky: (32, 4),
            pg.kogge_stone: (49, 4),
            pg.brent_kung: (26, 6),
        }
        for ctor, (count, depth) in expected.items():
            g = ctor(16)
            assert len(g.non_input_nodes) == count
            assert pg.levels(g)[1] == depth
            assert oracle_depth(g) == depth

    def test_every_constructor_is_legal(self):
        for width in WIDTHS:
            for ctor in (pg.ripple_carry, pg.sklansky, pg.kogge_stone, pg.brent_kung):
                if ctor is pg.brent_kung and width < 4:
                    continue
                rep = pg.validate(ctor(width))
                assert rep.legal and not rep.violations and not rep.missing_outputs

    def test_brent_kung_legalize_inserts_nothing(self):
        for width in (4, 8, 16, 32, 64):
            _, inserted = pg.legalize(pg.brent_kung(width))
            assert inserted == 0

    def test_width_errors(self):
        for bad in (0, 1, 65):
            with pytest.raises(ValueError):
                pg.ripple_carry(bad)
        with pytest.raises(ValueError):
            pg.sklansky(12)
        with pytest.raises(ValueError):
            pg.brent_kung(2)


class TestBitvector:
    def test_ripple4_slots(self):
        bits = pg.to_bitvector(pg.ripple_carry(4)).bits
        assert bits == (1, 1, 0, 1, 0, 0)  # slots b(1,0)=0, b(2,0)=1, b(3,0)=3

    def test_all_zero_is_inputs_only(self):
        g = pg.from_bitvector(pg.Bitvector(4, (0,) * 6))
        assert g.non_input_nodes == frozenset()

    def test_round_trip_sklansky8(self):
        g = pg.sklansky(8)
        assert pg.from_bitvector(pg.to_bitvector(g)) == g

    @settings(max_examples=60, deadline=None)
    @given(st.sampled_from(WIDTHS), st.integers(0, 2**32 - 1))
    def test_round_trip_random(self, width, seed):
        rng = np.random.default_rng(seed)
        bits = rng.random(pg.n_slots(width)) < 0.5
        g = pg.graph_from_bits(width, bits)
        assert pg.to_bitvector(g).to_numpy().tolist() == bits.tolist()

    def test_hex_round_trip(self):
        rng = np.random.default_rng(7)
        for width in WIDTHS:
            bits = rng.random(pg.n_slots(width)) < 0.5
            bv = pg.Bitvector.from_numpy(width, bits)
            assert pg.Bitvector.from_hex(width, bv.to_hex()) == bv

    def test_hex_ripple4(self):
        assert pg.to_bitvector(pg.ripple_carry(4)).to_hex() == "0b"

    def test_hex_rejects_bad_input(self):
        with pytest.raises(ValueError):
            pg.hex_to_bits(4, "0b0b")  # wrong length
        with pytest.raises(ValueError):
            pg.hex_to_bits(4, "ff")  # nonzero padding (slots 6,7)

    def test_wrong_bit_length(self):
        with pytest.raises(ValueError):
            pg.Bitvector(4, (0,) * 5)


class TestBitmatrix:
    def test_inputs_only_width3(self):
        m = pg.to_bitmatrix(pg.PrefixGraph(3, frozenset()))
        assert (m == np.eye(3, dtype=np.uint8)).all()

    def test_ripple3(self):
        m = pg.to_bitmatrix(pg.ripple_carry(3))
        expected = np.eye(3, dtype=np.uint8)
        expected[0, 1] = expected[0, 2] = 1
        assert (m == expected).all()

    @settings(max_examples=40, deadline=None)
    @given(st.sampled_from([4, 8, 16]), st.integers(0, 2**32 - 1))
    def test_lower_triangle_zero(self, width, seed):
        rng = np.random.default_rng(seed)
        g = pg.random_graph(width, rng, "ripple", 30)
        m = pg.to_bitmatrix(g)
        assert (np.tril(m, k=-1) == 0).all()
        assert (np.diag(m) == 1).all()


class TestLegalize:
    def test_inputs_only_becomes_ripple(self):
        g, inserted = pg.legalize(pg.PrefixGraph(4, frozenset()))
        assert g == pg.ripple_carry(4)
        assert inserted == 3

    def test_hand_derived_extra_node(self):
        g, inserted = pg.legalize(pg.from_node_set(4, [(3, 1)]))
        assert g.non_input_nodes == {(1, 0), (2, 0), (2, 1), (3, 0), (3, 1)}
        assert inserted == 4

    def test_sklansky16_already_legal(self):
        _, inserted = pg.legalize(pg.sklansky(16))
        assert inserted == 0

    @settings(max_examples=30, deadline=None)
    @given(st.sampled_from(WIDTHS), st.integers(0, 2**32 - 1))
    def test_legalize_properties(self, width, seed):
        rng = np.random.default_rng(seed)
        bits = np.asarray(rng.random((8, pg.n_slots(width))) < 0.4)
        out, inserted = pg.legalize_bits(width, bits)
        again, inserted2 = pg.legalize_bits(width, out)
        assert (again == out).all()  # idempotent
        assert (inserted2 == 0).all()
        redo, _ = pg.legalize_bits(width, bits)
        assert (redo == out).all()  # deterministic
        assert not (bits & ~out).any()  # superset
        assert pg.check_legal_bits(width, out).all()
        assert (inserted == out.sum(axis=1) - bits.sum(axis=1)).all()

    def test_validate_inputs_only(self):
        rep = pg.validate(pg.PrefixGraph(4, frozenset()))
        assert not rep.legal
        assert rep.missing_outputs == ((1, 0), (2, 0), (3, 0))

    def test_validate_missing_parent(self):
        g = pg.from_node_set(4, [(1, 0), (2, 0), (3, 0), (3, 1)])
        rep = pg.validate(g)
        assert not rep.legal
        assert rep.violations == (((3, 1), (2, 1)),)
        assert rep.missing_outputs == ()

    def test_validate_ripple_legal(self):
        assert pg.validate(pg.ripple_carry(8)).legal


class TestParentsLevels:
    def test_ripple(self):
        assert pg.parents(pg.ripple_carry(4), (2, 0)) == ((2, 2), (1, 0))

    def test_sklansky(self):
        assert pg.parents(pg.sklansky(4), (3, 0)) == ((3, 2), (1, 0))

    def test_kogge_stone(self):
        assert pg.parents(pg.kogge_stone(4), (2, 0)) == ((2, 1), (0, 0))

    def test_parents_errors(self):
        g = pg.ripple_carry(4)
        with pytest.raises(ValueError):
            pg.parents(g, (3, 2))  # absent
        with pytest.raises(ValueError):
            pg.parents(g, (2, 2))  # input
        bad = pg.from_node_set(4, [(1, 0), (2, 0), (3, 0), (3, 1)])
        with pytest.raises(pg.IllegalGraphError):
            pg.parents(bad, (3, 1))

    def test_levels_requires_legal(self):
        with pytest.raises(pg.IllegalGraphError):
            pg.levels(pg.PrefixGraph(4, frozenset()))

    @settings(max_examples=25, deadline=None)
    @given(st.sampled_from([4, 8, 16]), st.integers(0, 2**32 - 1))
    def test_levels_match_recursive_oracle(self, width, seed):
        g = random_legal(width, np.random.default_rng(seed))
        assert pg.levels(g)[1] == oracle_depth(g)


class TestSimulateAdd:
    def test_spec_examples(self):
        assert pg.simulate_add(pg.ripple_carry(4), 5, 3) == (8, 0)
        assert pg.simulate_add(pg.kogge_stone(4), 15, 1) == (0, 1)
        assert pg.simulate_add(pg.sklansky(8), 200, 100) == (44, 1)

    def test_width4_exhaustive_classical(self):
        for ctor in (pg.ripple_carry, pg.sklansky, pg.kogge_stone, pg.brent_kung):
            g = ctor(4)
            for a in range(16):
                for b in range(16):
                    s, c = pg.simulate_add(g, a, b)
                    assert s + (c << 4) == a + b

    def test_random_graphs_match_integer_addition(self):
        rng = np.random.default_rng(0)
        for width in (8, 16, 32, 64):
            for _ in range(40):
                g = random_legal(width, rng)
                a = rand_operand(rng, width)
                b = rand_operand(rng, width)
                s, c = pg.simulate_add(g, a, b)
                assert s + (c << width) == a + b

    def test_operand_range_checked(self):
        with pytest.raises(ValueError):
            pg.simulate_add(pg.ripple_carry(4), 16, 0)


class TestSimulateGray:
    def test_spec_examples(self):
        g = pg.ripple_carry(4)
        assert pg.simulate_gray(g, 0b0000) == 0b0000
        assert pg.simulate_gray(g, 0b0001) == 0b0001
        assert pg.simulate_gray(g, 0b1100) == 0b1000

    def test_exhaustive_small_widths(self):
        rng = np.random.default_rng(1)
        for width in range(2, 9):
            graphs = [pg.ripple_carry(width)] + [random_legal(width, rng) for _ in range(3)]
            if not width & (width - 1):
                graphs.append(pg.sklansky(width))
            for g in graphs:
                for gray in range(1 << width):
                    assert pg.simulate_gray(g, gray) == oracle_gray(width, gray)

    def test_randomized_large_widths(self):
        rng = np.random.default_rng(2)
        for width in (16, 32, 64):
            for _ in range(25):
                g = random_legal(width, rng)
                gray = rand_operand(rng, width)
                assert pg.simulate_gray(g, gray) == oracle_gray(width, gray)


class TestRandomGraph:
    def test_zero_mutations_is_base(self):
        rng = np.random.default_rng(0)
        assert pg.random_graph(8, rng, "ripple", 0) == pg.ripple_carry(8)
        assert pg.random_graph(8, rng, "sklansky", 0) == pg.sklansky(8)

    def test_single_mutation_hamming_one(self):
        rng = np.random.default_rng(3)
        base = pg.to_bitvector(pg.ripple_carry(16)).to_numpy()
        for _ in range(20):
            bits = pg.random_bits(16, rng, "ripple", 1)
            assert (bits != base).sum() == 1

    def test_same_seed_same_graph(self):
        a = pg.random_graph(16, np.random.default_rng(42), "sklansky", 200)
        b = pg.random_graph(16, np.random.default_rng(42), "sklansky", 200)
        assert a == b

    def test_bad_base_rejected(self):
        with pytest.raises(ValueError):
            pg.random_bits(8, np.random.default_rng(0), "brent_kung", 1)
