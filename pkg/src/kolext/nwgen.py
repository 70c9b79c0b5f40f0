"""Nisan-Wigderson style generators over explicit combinatorial designs.

Output bit ``i`` is a predicate applied to the seed bits indexed by the i-th
design set, so every bit can be computed on its own from ``t`` seed bits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .bitcore import BitString, KolextError, MalformedFile, int_to_bits, splitmix64, stream_bits


class NotPrime(KolextError, ValueError):
    pass


class DegreeTooLarge(KolextError, ValueError):
    pass


class DesignInfeasible(KolextError, ValueError):
    pass


class TooLargeForExact(KolextError, ValueError):
    pass


MAX_EXACT_BITS = 24


@dataclass(frozen=True)
class Design:
    ground_size: int
    set_size: int
    rho: int
    sets: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        sets = tuple(tuple(sorted(s)) for s in self.sets)
        object.__setattr__(self, "sets", sets)
        for s in sets:
            if len(set(s)) != self.set_size or (s and (s[0] < 0 or s[-1] >= self.ground_size)):
                raise ValueError(f"bad design set {s}")
        worst = audit_intersections(sets)
        if worst > self.rho:
            raise ValueError(f"sets intersect in {worst} > rho={self.rho} indices")

    def __len__(self) -> int:
        return len(self.sets)

    def max_intersection(self) -> int:
        return audit_intersections(self.sets)

    def to_text(self) -> str:
        head = f"design-v1 l={self.ground_size} t={self.set_size} rho={self.rho} n={len(self.sets)}"
        return "\n".join([head] + [" ".join(map(str, s)) for s in self.sets]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Design":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("design-v1"):
            raise MalformedFile("design file must start with design-v1")
        try:
            head = dict(tok.split("=", 1) for tok in lines[0].split()[1:])
            sets = tuple(tuple(int(v) for v in ln.split()) for ln in lines[1:])
            d = cls(int(head["l"]), int(head["t"]), int(head["rho"]), sets)
            count = int(head["n"])
        except (KeyError, ValueError) as exc:
            raise MalformedFile(f"bad design file: {exc}") from None
        if count != len(sets):
            raise MalformedFile(f"header promises {count} sets, body has {len(sets)}")
        return d


def audit_intersections(sets: Sequence[Sequence[int]]) -> int:
    """Largest pairwise intersection, by brute force."""
    as_sets = [set(s) for s in sets]
    return max((len(a & b) for a, b in combinations(as_sets, 2)), default=0)


def _is_prime(q: int) -> bool:
    return q >= 2 and all(q % p for p in range(2, int(q ** 0.5) + 1))


def poly_design(q: int, d: int) -> Design:
    """Graphs of all polynomials of degree < d over Z_q, as subsets of a q x q grid.

    Point ``(a, v)`` is index ``a*q + v``.  Sets come in order of the
    coefficient vector ``(c_0, .., c_{d-1})`` read as a base-q number with
    ``c_0`` most significant.
    """
    if not _is_prime(q):
        raise NotPrime(f"{q} is not prime")
    if not 1 <= d <= q:
        raise DegreeTooLarge(f"degree bound {d} must lie in [1, {q}]")
    sets = []
    for code in range(q ** d):
        coeffs = [(code // q ** (d - 1 - j)) % q for j in range(d)]
        graph = []
        for a in range(q):
            v = 0
            for c in reversed(coeffs):
                v = (v * a + c) % q
            graph.append(a * q + v)
        sets.append(tuple(graph))
    design = Design(q * q, q, d - 1, tuple(sets))
    assert design.max_intersection() <= d - 1
    return design


def greedy_design(l: int, t: int, rho: int, n_sets: int) -> Design:
    """First ``n_sets`` t-subsets of range(l), lexicographically, with pairwise overlap <= rho."""
    if t > l:
        raise DesignInfeasible(f"set size {t} exceeds ground size {l}")
    kept: list[int] = []
    for combo in combinations(range(l), t):
        if len(kept) == n_sets:
            break
        bits = 0
        for i in combo:
            bits |= 1 << i
        if all((bits & k).bit_count() <= rho for k in kept):
            kept.append(bits)
    if len(kept) < n_sets:
        raise DesignInfeasible(f"only {len(kept)} sets fit (l={l}, t={t}, rho={rho})")
    sets = tuple(tuple(i for i in range(l) if k >> i & 1) for k in kept)
    design = Design(l, t, rho, sets)
    assert design.max_intersection() <= rho
    return design


@dataclass(frozen=True)
class Predicate:
    """Either parity or a lookup table indexed by the selected bits read big-endian."""

    kind: str = "parity"
    table: BitString = ""

    def __post_init__(self) -> None:
        if self.kind not in ("parity", "table"):
            raise ValueError(f"unknown predicate kind {self.kind!r}")
        if self.kind == "table" and (len(self.table) & (len(self.table) - 1) or not self.table):
            raise ValueError("lookup table length must be a power of two")

    @classmethod
    def lookup(cls, table: BitString) -> "Predicate":
        return cls("table", table)

    @property
    def arity(self) -> int | None:
        return None if self.kind == "parity" else len(self.table).bit_length() - 1

    def __call__(self, bits: Sequence[int]) -> int:
        if self.kind == "parity":
            return sum(bits) & 1
        idx = 0
        for b in bits:
            idx = idx << 1 | b
        return int(self.table[idx])

    def apply_batch(self, selected: np.ndarray) -> np.ndarray:
        """Predicate over the last axis of a 0/1 array."""
        if self.kind == "parity":
            return (selected.sum(axis=-1) & 1).astype(np.uint8)
        weights = 1 << np.arange(selected.shape[-1] - 1, -1, -1)
        lut = np.frombuffer(self.table.encode("ascii"), dtype=np.uint8) - ord("0")
        return lut[selected.astype(np.int64) @ weights]


@dataclass(frozen=True)
class Generator:
    design: Design
    predicate: Predicate = field(default_factory=Predicate)

    def __post_init__(self) -> None:
        arity = self.predicate.arity
        if arity is not None and arity != self.design.set_size:
            raise ValueError(f"predicate arity {arity} != design set size {self.design.set_size}")

    @property
    def seed_bits(self) -> int:
        return self.design.ground_size

    @property
    def output_length(self) -> int:
        return len(self.design)


def _seed_bits(seed: BitString | int, length: int) -> BitString:
    if isinstance(seed, int):
        return int_to_bits(seed, length)
    if len(seed) != length:
        raise ValueError(f"seed must have {length} bits")
    return seed


def output_bit(g: Generator, seed: BitString | int, i: int) -> int:
    if not 0 <= i < len(g.design):
        raise IndexError(f"output index {i} out of range")
    seed = _seed_bits(seed, g.seed_bits)
    return g.predicate([int(seed[j]) for j in g.design.sets[i]])


def generate(g: Generator, seed: BitString | int, count: int) -> BitString:
    if count > len(g.design):
        raise IndexError(f"design has only {len(g.design)} sets")
    return "".join(str(output_bit(g, seed, i)) for i in range(count))


def seed_matrix(seeds: np.ndarray, length: int) -> np.ndarray:
    """Rows of seed bits, most significant first."""
    seeds = np.asarray(seeds, dtype=np.int64)
    shifts = np.arange(length - 1, -1, -1, dtype=np.int64)
    return ((seeds[:, None] >> shifts) & 1).astype(np.uint8)


def generate_batch(g: Generator, seeds: np.ndarray, count: int) -> np.ndarray:
    """``(B, count)`` outputs for integer seeds; row b equals ``generate(g, seeds[b], count)``."""
    if count > len(g.design):
        raise IndexError(f"design has only {len(g.design)} sets")
    bits = seed_matrix(seeds, g.seed_bits)
    idx = np.array(g.design.sets[:count], dtype=np.int64).reshape(count, g.design.set_size)
    return g.predicate.apply_batch(bits[:, idx])


# ---------------------------------------------------------------- distinguishers

@dataclass(frozen=True)
class TestStatistic:
    """A boolean test on output prefixes.

    ``fn`` maps a ``(B, prefix_len)`` 0/1 array to ``B`` booleans.  Supply
    ``uniform_acceptance`` when the prefix is too long to enumerate.
    """

    __test__ = False  # not a pytest class

    prefix_len: int
    fn: Callable[[np.ndarray], np.ndarray]
    uniform_acceptance: Fraction | None = None


def _all_strings_matrix(length: int, start: int, stop: int) -> np.ndarray:
    return seed_matrix(np.arange(start, stop, dtype=np.int64), length)


def _exact_uniform(test: TestStatistic, chunk: int) -> Fraction:
    if test.uniform_acceptance is not None:
        return Fraction(test.uniform_acceptance)
    if test.prefix_len > MAX_EXACT_BITS:
        raise TooLargeForExact(f"prefix length {test.prefix_len} too long to enumerate")
    total = 1 << test.prefix_len
    hits = 0
    for lo in range(0, total, chunk):
        hits += int(np.count_nonzero(test.fn(_all_strings_matrix(test.prefix_len, lo, min(total, lo + chunk)))))
    return Fraction(hits, total)


def distinguisher_gap(g: Generator, test: TestStatistic, mode: str = "exact", *,
                      trials: int = 10000, rng_seed: int = 0, chunk: int = 1 << 16):
    """``|P[test(G(seed))] - P[test(uniform)]|``.

    ``mode="exact"`` enumerates every seed and returns a Fraction;
    ``mode="montecarlo"`` samples ``trials`` seeds and uniform strings from the
    splitmix64 stream and returns a float.
    """
    if test.prefix_len > len(g.design):
        raise ValueError("test prefix longer than generator output")
    if mode == "exact":
        if g.seed_bits > MAX_EXACT_BITS:
            raise TooLargeForExact(f"{g.seed_bits}-bit seeds too many to enumerate")
        total = 1 << g.seed_bits
        hits = 0
        for lo in range(0, total, chunk):
            seeds = np.arange(lo, min(total, lo + chunk), dtype=np.int64)
            hits += int(np.count_nonzero(test.fn(generate_batch(g, seeds, test.prefix_len))))
        return abs(Fraction(hits, total) - _exact_uniform(test, chunk))
    if mode == "montecarlo":
        seeds = (splitmix64(rng_seed, 0, trials) >> np.uint64(64 - g.seed_bits)).astype(np.int64)
        gen_rate = np.count_nonzero(test.fn(generate_batch(g, seeds, test.prefix_len))) / trials
        uni = stream_bits(rng_seed ^ 0x5DEECE66D, 0, trials * test.prefix_len)
        uni_rate = np.count_nonzero(test.fn(uni.reshape(trials, test.prefix_len))) / trials
        return abs(gen_rate - uni_rate)
    raise ValueError(f"unknown mode {mode!r}")
