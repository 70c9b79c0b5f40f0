"""Deliberately plain reference implementations used to cross-check the fast paths.

Nothing here touches numpy or the batched helpers; tables are read cell by
cell through ``Table.colour`` and thresholds are compared as Fractions.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations

from .bitcore import Table, int_to_bits


def colour_count(t: Table, s1, s2, palette) -> int:
    count = 0
    for x in s1:
        for y in s2:
            if t.colour(x, y) in palette:
                count += 1
    return count


def below(count: int, e: int, b_mult) -> bool:
    return Fraction(count) < Fraction(b_mult) * Fraction(2) ** e


def weak_balanced(t: Table, sets, palettes, b_mult):
    """``sets``: list of (members, level); ``palettes``: list of (colours, level)."""
    for i, (s1, l1) in enumerate(sets):
        for j, (s2, l2) in enumerate(sets):
            for qi, (pal, q) in enumerate(palettes):
                if not below(colour_count(t, s1, s2, set(pal)), l1 + l2 + q - t.m, b_mult):
                    return False, (i, j, qi)
    return True, None


def rainbow_marks(t: Table, s_along, anchor, palettes, columns: bool):
    marks = []
    for line, pal in zip(anchor, palettes):
        c = 0
        for z in s_along:
            colour = t.colour(line, z) if columns else t.colour(z, line)
            if colour in set(pal):
                c += 1
        marks.append(c)
    return marks


def weak_rainbow_balanced(t: Table, sets, tuples, k, b_mult):
    """``tuples``: list of (anchor members, palettes, q)."""
    for columns in (False, True):
        for i, (s, l) in enumerate(sets):
            for r, (anchor, pals, q) in enumerate(tuples):
                e = l + q - t.m
                total = 0
                for c in rainbow_marks(t, s, anchor, pals, columns):
                    if Fraction(c) > Fraction(b_mult) * Fraction(2) ** e:
                        total += c
                if not below(total, e + k, b_mult):
                    return False, ("column" if columns else "row", i, r)
    return True, None


def subsets(side: int, min_size: int):
    out = []
    for r in range(max(min_size, 1), side + 1):
        out.extend(combinations(range(side), r))
    return out


def popular(t: Table, count: int):
    freq = {}
    for x in range(t.side):
        for y in range(t.side):
            c = t.colour(x, y)
            freq[c] = freq.get(c, 0) + 1
    for c in range(1 << t.m):
        freq.setdefault(c, 0)
    return sorted(sorted(freq), key=lambda c: -freq[c])[:count]


def balanced_exact(t: Table, k_size: int, q_count: int) -> bool:
    pal = set(popular(t, q_count))
    for s1 in subsets(t.side, k_size):
        for s2 in subsets(t.side, k_size):
            frac = Fraction(colour_count(t, s1, s2, pal), len(s1) * len(s2))
            if frac >= Fraction(2 * q_count, 1 << t.m):
                return False
    return True


def multisource_extractor(t: Table, k: int, eps) -> bool:
    eps = Fraction(eps)
    palettes = [set(p) for r in range((1 << t.m) + 1) for p in combinations(range(1 << t.m), r)]
    for s1 in subsets(t.side, 1 << k):
        for s2 in subsets(t.side, 1 << k):
            for pal in palettes:
                frac = Fraction(colour_count(t, s1, s2, pal), len(s1) * len(s2))
                if abs(frac - Fraction(len(pal), 1 << t.m)) > eps:
                    return False
    return True


def verify(t: Table, n: int, m: int, k: int, delta: int, q: int, plain, cond, pair_above, strong: bool):
    """Plain/strong extractor check by direct enumeration; returns (qualifying, violations)."""
    qualifying = 0
    bad = []
    for xi in range(1 << n):
        for yi in range(1 << n):
            x, y = int_to_bits(xi, n), int_to_bits(yi, n)
            if not (plain(x) > k and plain(y) > k and pair_above(x, y, plain(x) + plain(y) - delta)):
                continue
            qualifying += 1
            w = int_to_bits(t.colour(x, y), m)
            if not strong:
                if plain(w) < q:
                    bad.append((x, y, "plain"))
            else:
                if cond(w, y) < q:
                    bad.append((x, y, "row"))
                if cond(w, x) < q:
                    bad.append((x, y, "column"))
    return qualifying, bad
