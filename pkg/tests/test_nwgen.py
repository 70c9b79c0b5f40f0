import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kolext.bitcore import int_to_bits
from kolext.nwgen import (
    DegreeTooLarge,
    Design,
    DesignInfeasible,
    Generator,
    NotPrime,
    Predicate,
    TestStatistic,
    TooLargeForExact,
    audit_intersections,
    distinguisher_gap,
    generate,
    generate_batch,
    greedy_design,
    output_bit,
    poly_design,
)


def brute_max_intersection(sets):
    return max((len(set(a) & set(b)) for a, b in itertools.combinations(sets, 2)), default=0)


def test_poly_design_examples():
    d = poly_design(3, 2)
    assert len(d) == 9
    assert (0, 4, 8) in d.sets
    assert brute_max_intersection(d.sets) <= 1
    with pytest.raises(NotPrime):
        poly_design(4, 2)
    with pytest.raises(DegreeTooLarge):
        poly_design(3, 4)


def test_poly_design_order_and_shape():
    q, d = 5, 2
    des = poly_design(q, d)
    assert len(des) == q**d and len(set(des.sets)) == q**d
    assert all(len(s) == q for s in des.sets)
    # set index = coefficient vector (c0, c1) read base q, c0 most significant
    for idx, s in enumerate(des.sets):
        c0, c1 = divmod(idx, q)
        assert s == tuple(a * q + (c0 + c1 * a) % q for a in range(q))


@pytest.mark.parametrize("q,d", [(2, 1), (2, 2), (3, 1), (3, 3), (5, 3), (7, 2)])
def test_poly_design_intersections(q, d):
    des = poly_design(q, d)
    assert brute_max_intersection(des.sets) <= d - 1
    assert audit_intersections(des.sets) == brute_max_intersection(des.sets)


def test_greedy_examples():
    assert greedy_design(4, 2, 1, 3).sets == ((0, 1), (0, 2), (0, 3))
    assert greedy_design(4, 2, 0, 2).sets == ((0, 1), (2, 3))
    with pytest.raises(DesignInfeasible):
        greedy_design(4, 2, 0, 3)


def test_greedy_matches_reference_scan():
    def reference(l, t, rho, n):
        kept = []
        for c in itertools.combinations(range(l), t):
            if all(len(set(c) & set(k)) <= rho for k in kept):
                kept.append(c)
                if len(kept) == n:
                    return kept
        return None

    for l, t, rho, n in [(8, 3, 1, 7), (10, 4, 2, 18), (12, 3, 1, 17), (12, 3, 2, 40)]:
        assert list(greedy_design(l, t, rho, n).sets) == reference(l, t, rho, n)


def test_greedy_16_4_2_128():
    des = greedy_design(16, 4, 2, 128)
    assert len(des) == 128
    assert brute_max_intersection(des.sets) <= 2


def test_design_validation_and_text():
    des = greedy_design(8, 3, 1, 7)
    assert Design.from_text(des.to_text()) == des
    assert des.to_text().startswith("design-v1 l=8 t=3 rho=1 n=7")
    with pytest.raises(ValueError):
        Design(4, 2, 0, ((0, 1), (1, 2)))
    with pytest.raises(ValueError):
        Design(4, 2, 1, ((0, 4),))


def test_output_bit_examples():
    g = Generator(Design(3, 2, 1, ((0, 2),)))
    assert output_bit(g, "000", 0) == 0
    assert output_bit(g, "101", 0) == 0
    proj = Generator(Design(4, 2, 1, ((1, 3),)), Predicate.lookup("0011"))
    assert output_bit(proj, "0100", 0) == 1
    with pytest.raises(IndexError):
        output_bit(g, "000", 1)


def test_generate_examples():
    g = Generator(poly_design(3, 2))
    assert generate(g, "0" * 9, 9) == "0" * 9
    out = generate(g, "100000000", 9)
    # bit is 1 exactly for polynomials with zero constant term
    assert [i for i, b in enumerate(out) if b == "1"] == [0, 1, 2]
    with pytest.raises(IndexError):
        generate(g, 0, 10)


def test_locality_exhaustive_ground_9():
    g = Generator(poly_design(3, 2), Predicate.lookup("01101001" ))
    for i, members in enumerate(g.design.sets):
        outside = [j for j in range(9) if j not in members]
        for seed in range(512):
            bit = output_bit(g, seed, i)
            for j in outside:
                assert output_bit(g, seed ^ (1 << (8 - j)), i) == bit


@given(st.integers(0, 2**16 - 1))
@settings(max_examples=50)
def test_locality_sampled_ground_16(seed):
    g = Generator(greedy_design(16, 4, 2, 40))
    for i in range(0, 40, 7):
        outside = [j for j in range(16) if j not in g.design.sets[i]]
        for j in outside:
            assert output_bit(g, seed ^ (1 << (15 - j)), i) == output_bit(g, seed, i)


@given(st.lists(st.integers(0, 2**12 - 1), min_size=1, max_size=20))
@settings(max_examples=40)
def test_generate_batch_consistent(seeds):
    g = Generator(greedy_design(12, 3, 2, 40), Predicate.lookup("00010111"))
    batch = generate_batch(g, np.array(seeds), 40)
    for row, seed in zip(batch, seeds):
        assert "".join(map(str, row)) == generate(g, seed, 40)
        assert generate(g, int_to_bits(seed, 12), 40) == generate(g, seed, 40)


def test_predicate_validation():
    with pytest.raises(ValueError):
        Predicate.lookup("011")
    with pytest.raises(ValueError):
        Generator(greedy_design(8, 3, 1, 4), Predicate.lookup("0110"))


def test_gap_examples():
    g = Generator(poly_design(3, 2))
    bit0 = TestStatistic(1, lambda a: a[:, 0] == 1)
    assert distinguisher_gap(g, bit0) == 0
    assert distinguisher_gap(g, TestStatistic(4, lambda a: np.ones(len(a), bool))) == 0
    # XOR of the two most-overlapping outputs
    sets = g.design.sets
    i, j = max(itertools.combinations(range(len(sets)), 2), key=lambda p: len(set(sets[p[0]]) & set(sets[p[1]])))
    xor = TestStatistic(9, lambda a: (a[:, i] ^ a[:, j]) == 0)
    assert distinguisher_gap(g, xor) == 0


def test_gap_detects_correlation():
    # two identical sets: outputs always equal
    g = Generator(Design(4, 2, 2, ((0, 1), (0, 1))))
    eq = TestStatistic(2, lambda a: a[:, 0] == a[:, 1])
    assert distinguisher_gap(g, eq) == Fraction(1, 2)


def test_gap_guards_and_montecarlo():
    big = Generator(greedy_design(25, 2, 1, 4))
    with pytest.raises(TooLargeForExact):
        distinguisher_gap(big, TestStatistic(1, lambda a: a[:, 0] == 1))
    with pytest.raises(TooLargeForExact):
        distinguisher_gap(Generator(greedy_design(12, 2, 1, 30)), TestStatistic(30, lambda a: a[:, 0] == 1))
    g = Generator(greedy_design(12, 3, 1, 8))
    bit0 = TestStatistic(1, lambda a: a[:, 0] == 1)
    mc = distinguisher_gap(g, bit0, "montecarlo", trials=20000, rng_seed=3)
    assert mc < 0.03
    assert mc == distinguisher_gap(g, bit0, "montecarlo", trials=20000, rng_seed=3)


def test_greedy_capacity_exhausted():
    with pytest.raises(DesignInfeasible):
        greedy_design(12, 3, 1, 18)
