"""Balanced-table checkers: exact (exhaustive) and weakened, plain and rainbow.

The weakened checks restrict attention to explicit systems of level sets and
palettes and compare exact counts against ``b_mult * 2^e`` with rational
``b_mult`` (201/100 stands for b = 1.01, since 2^1.01 ~ 2.01).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .bitcore import (
    KolextError,
    LevelSet,
    Palette,
    Table,
    bits_to_int,
    popular_palette,
    random_tables,
)

DEFAULT_B_MULT = Fraction(201, 100)
MAX_EXPONENT = 64


class ExponentOutOfRange(KolextError, ValueError):
    pass


class TooLargeForExhaustive(KolextError, ValueError):
    pass


class NotADistribution(KolextError, ValueError):
    pass


class DomainMismatch(KolextError, ValueError):
    pass


# ---------------------------------------------------------------- systems

@dataclass(frozen=True)
class SystemS:
    sets: tuple[LevelSet, ...]
    origin: str = ""
    max_size: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "sets", tuple(self.sets))
        if self.max_size is not None and len(self.sets) > self.max_size:
            raise ValueError(f"system has {len(self.sets)} sets, limit {self.max_size}")

    def __len__(self) -> int:
        return len(self.sets)

    def by_level(self, level: int) -> LevelSet | None:
        for s in self.sets:
            if s.level == level:
                return s
        return None


@dataclass(frozen=True)
class SystemQ:
    palettes: tuple[Palette, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "palettes", tuple(self.palettes))

    def __len__(self) -> int:
        return len(self.palettes)


@dataclass(frozen=True)
class RainbowTuple:
    """Palettes attached one-to-one to the members of an anchor set (sorted order)."""

    anchor: LevelSet
    palettes: tuple[Palette, ...]
    level: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "palettes", tuple(self.palettes))
        if len(self.palettes) != len(self.anchor):
            raise ValueError("palette count must equal anchor size")
        for p in self.palettes:
            if len(p) and len(p) >= (1 << max(self.level, 0)):
                raise ValueError(f"palette of size {len(p)} exceeds level {self.level}")


@dataclass(frozen=True)
class SystemR:
    tuples: tuple[RainbowTuple, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tuples", tuple(self.tuples))

    def __len__(self) -> int:
        return len(self.tuples)


# ---------------------------------------------------------------- thresholds

def _ratio(b_mult) -> tuple[int, int]:
    f = Fraction(b_mult)
    return f.numerator, f.denominator


def threshold_holds(count: int, e: int, b_mult) -> bool:
    """``count < b_mult * 2^e`` decided in integer arithmetic."""
    if abs(e) > MAX_EXPONENT:
        raise ExponentOutOfRange(f"exponent {e} outside [-{MAX_EXPONENT}, {MAX_EXPONENT}]")
    num, den = _ratio(b_mult)
    if e >= 0:
        return count * den < num << e
    return (count * den) << -e < num


def fail_count(e: int, b_mult) -> int:
    """Smallest count for which :func:`threshold_holds` is false."""
    if abs(e) > MAX_EXPONENT:
        raise ExponentOutOfRange(f"exponent {e} outside [-{MAX_EXPONENT}, {MAX_EXPONENT}]")
    return max(0, math.ceil(Fraction(b_mult) * Fraction(2) ** e))


def saturation_limit(e: int, b_mult) -> int:
    """Largest count that is *not* more than ``b_mult * 2^e``."""
    return math.floor(Fraction(b_mult) * Fraction(2) ** e)


# ---------------------------------------------------------------- exact checkers

EXHAUSTIVE_SIDE_LIMIT = 8


def _guard(t: Table) -> None:
    if t.side > EXHAUSTIVE_SIDE_LIMIT:
        raise TooLargeForExhaustive(f"2^n = {t.side} exceeds {EXHAUSTIVE_SIDE_LIMIT}")


def _subsets(side: int, min_size: int):
    for r in range(max(min_size, 1), side + 1):
        yield from combinations(range(side), r)


def is_balanced_exact(t: Table, k_size: int, q_count: int) -> bool:
    """Every rectangle with sides >= k_size has popular-colour fraction < 2Q/2^m.

    Popularity is global: the ``q_count`` most frequent colours of the whole table.
    """
    _guard(t)
    mask = np.isin(t.grid, popular_palette(t, q_count).colours).astype(np.int64)
    subsets = list(_subsets(t.side, k_size))
    for s1 in subsets:
        col_sums = mask[list(s1), :].sum(axis=0)
        for s2 in subsets:
            count = int(col_sums[list(s2)].sum())
            # count / (|S1||S2|) < 2Q / 2^m
            if count << t.m >= 2 * q_count * len(s1) * len(s2):
                return False
    return True


def _line_popular_count(colours: np.ndarray, q_count: int) -> int:
    """Cells of one row (restricted to a side set) in its q most popular colours."""
    freq = np.bincount(colours)
    return int(np.sort(freq)[::-1][:q_count].sum())


def _rainbow_direction(grid: np.ndarray, m: int, k_size: int, q_count: int) -> bool:
    # grid[a, b]: a is the side the popularity is taken along, b indexes the lines
    side = grid.shape[0]
    subsets = list(_subsets(side, k_size))
    for s_along in subsets:
        sub = grid[list(s_along), :]
        marked = np.array([_line_popular_count(sub[:, b], q_count) for b in range(side)])
        for s_lines in subsets:
            count = int(marked[list(s_lines)].sum())
            if count << m >= 2 * q_count * len(s_along) * len(s_lines):
                return False
    return True


def is_rainbow_balanced_exact(t: Table, k_size: int, q_count: int) -> bool:
    """Row- and column-rainbow balance, popularity taken per line inside the rectangle.

    Marking in row y of S1 x S2 picks the ``q_count`` most popular colours among
    ``{T(x, y) : x in S1}``; ties are irrelevant to the count.
    """
    _guard(t)
    return (_rainbow_direction(t.grid, t.m, k_size, q_count)
            and _rainbow_direction(t.grid.T, t.m, k_size, q_count))


def is_multisource_extractor(t: Table, k: int, eps) -> bool:
    """Every palette's share of every 2^k-sided rectangle is within eps of |A|/2^m."""
    _guard(t)
    eps = Fraction(eps)
    ncol = 1 << t.m
    if ncol > 16:
        raise TooLargeForExhaustive(f"2^m = {ncol} palettes too many")
    subsets = list(_subsets(t.side, 1 << k))
    grid = t.grid
    for s1 in subsets:
        for s2 in subsets:
            freq = np.bincount(grid[np.ix_(s1, s2)].ravel(), minlength=ncol)
            cells = len(s1) * len(s2)
            # worst palette: largest positive or negative deviations in one set
            dev = [Fraction(int(f), cells) - Fraction(1, ncol) for f in freq]
            if sum(d for d in dev if d > 0) > eps or -sum(d for d in dev if d < 0) > eps:
                return False
    return True


# ---------------------------------------------------------------- weakened checkers

def _indicator(sets: Sequence[LevelSet], side: int) -> np.ndarray:
    u = np.zeros((len(sets), side), dtype=np.int64)
    for i, s in enumerate(sets):
        if len(s):
            u[i, s.indices()] = 1
    return u


def is_weak_balanced(t: Table, sys_s: SystemS, sys_q: SystemQ, b_mult=DEFAULT_B_MULT):
    """Check ``|{cells of S1 x S2 coloured from Q}| < b_mult * 2^(l1+l2+q-m)`` for all triples.

    Returns ``(ok, first_violation)`` where the violation is the first
    ``(S1 index, S2 index, Q index)`` in lexicographic order.
    """
    if not len(sys_s) or not len(sys_q):
        return True, None
    u = _indicator(sys_s.sets, t.side)
    levels = [s.level for s in sys_s.sets]
    counts = []
    for p in sys_q.palettes:
        mask = np.isin(t.grid, np.asarray(p.colours, dtype=np.int64)).astype(np.int64)
        counts.append(u @ mask @ u.T)
    for i, l1 in enumerate(levels):
        for j, l2 in enumerate(levels):
            for qi, p in enumerate(sys_q.palettes):
                if not threshold_holds(int(counts[qi][i, j]), l1 + l2 + p.level - t.m, b_mult):
                    return False, (i, j, qi)
    return True, None


def row_marks(t: Table, s1: LevelSet, tup: RainbowTuple, *, columns: bool = False) -> np.ndarray:
    """Marked-cell count per anchor member (a row, or a column with ``columns``)."""
    grid = t.grid.T if columns else t.grid  # grid[along, line]
    along = s1.indices()
    out = np.zeros(len(tup.anchor), dtype=np.int64)
    if not len(along):
        return out
    for i, (member, pal) in enumerate(zip(tup.anchor.members, tup.palettes)):
        if len(pal):
            line = grid[along, bits_to_int(member)]
            out[i] = int(np.isin(line, np.asarray(pal.colours, dtype=np.int64)).sum())
    return out


def _rainbow_one_direction(t, sys_s, sys_r, k, b_mult, columns):
    for i, s in enumerate(sys_s.sets):
        for r, tup in enumerate(sys_r.tuples):
            e = s.level + tup.level - t.m
            marks = row_marks(t, s, tup, columns=columns)
            total = int(marks[marks > saturation_limit(e, b_mult)].sum())
            if not threshold_holds(total, e + k, b_mult):
                return False, ("column" if columns else "row", i, r)
    return True, None


def is_weak_rainbow_balanced(t: Table, sys_s: SystemS, sys_r: SystemR, k: int,
                             b_mult=DEFAULT_B_MULT, sys_r_columns: SystemR | None = None):
    """Weakened rainbow balance for rows, then columns.

    For each ``S1`` in ``sys_s`` and tuple ``(S2, Q_1..Q_|S2|, q)``, row ``y_i``
    marks ``{x in S1 : T(x, y_i) in Q_i}``; a row is saturated when its marks
    exceed ``b_mult * 2^(l1+q-m)``, and saturated rows together must hold fewer
    than ``b_mult * 2^(l1+q-m+k)`` marks.  Columns repeat this with the tuple
    anchored on the column side (``sys_r_columns``, default ``sys_r``).

    Returns ``(ok, first_violation)`` with violation ``(direction, S index, R index)``.
    """
    ok, where = _rainbow_one_direction(t, sys_s, sys_r, k, b_mult, columns=False)
    if not ok:
        return ok, where
    cols = sys_r if sys_r_columns is None else sys_r_columns
    return _rainbow_one_direction(t, sys_s, cols, k, b_mult, columns=True)


# ---------------------------------------------------------------- batched checks for seed scans

@dataclass
class BatchPlan:
    """Precomputed indicators and limits so many tables are checked with matrix ops."""

    n: int
    m: int
    u: np.ndarray
    levels: list[int]
    palettes: list[np.ndarray]
    fail_at: np.ndarray  # [q, i, j]


def plan_weak(n: int, m: int, sys_s: SystemS, sys_q: SystemQ, b_mult=DEFAULT_B_MULT) -> BatchPlan:
    levels = [s.level for s in sys_s.sets]
    fail_at = np.zeros((len(sys_q), len(levels), len(levels)), dtype=object)
    for qi, p in enumerate(sys_q.palettes):
        for i, l1 in enumerate(levels):
            for j, l2 in enumerate(levels):
                fail_at[qi, i, j] = fail_count(l1 + l2 + p.level - m, b_mult)
    pals = [np.asarray(p.colours, dtype=np.int64) for p in sys_q.palettes]
    return BatchPlan(n, m, _indicator(sys_s.sets, 1 << n), levels, pals, fail_at)


def weak_balanced_batch(colours: np.ndarray, plan: BatchPlan) -> np.ndarray:
    """Vectorised :func:`is_weak_balanced` verdicts for a ``(B, 4^n)`` colour batch."""
    side = 1 << plan.n
    ok = np.ones(colours.shape[0], dtype=bool)
    if not len(plan.levels):
        return ok
    grids = colours.reshape(-1, side, side)
    cap = np.iinfo(np.int64).max
    for qi, pal in enumerate(plan.palettes):
        if not pal.size:
            continue
        mask = np.isin(grids, pal).astype(np.int64)
        counts = np.einsum("si,bij,tj->bst", plan.u, mask, plan.u, optimize=True)
        limit = np.array(np.minimum(plan.fail_at[qi], cap), dtype=np.int64)
        ok &= (counts < limit).all(axis=(1, 2))
    return ok


def rainbow_batch(colours: np.ndarray, n: int, m: int, sys_s: SystemS, sys_r: SystemR, k: int,
                  b_mult=DEFAULT_B_MULT, sys_r_columns: SystemR | None = None) -> np.ndarray:
    """Vectorised :func:`is_weak_rainbow_balanced` verdicts for a colour batch."""
    side = 1 << n
    grids = colours.reshape(-1, side, side)
    ok = np.ones(colours.shape[0], dtype=bool)
    u = _indicator(sys_s.sets, side)
    for columns, system in ((False, sys_r), (True, sys_r if sys_r_columns is None else sys_r_columns)):
        g = grids.transpose(0, 2, 1) if columns else grids  # g[b, along, line]
        for tup in system.tuples:
            if not len(tup.anchor):
                continue
            # lines[b, i, along] coloured from Q_i
            line_idx = tup.anchor.indices()
            lines = g[:, :, line_idx].transpose(0, 2, 1)
            marked = np.zeros(lines.shape, dtype=np.int64)
            for i, pal in enumerate(tup.palettes):
                if len(pal):
                    marked[:, i, :] = np.isin(lines[:, i, :], np.asarray(pal.colours, dtype=np.int64))
            per_line = marked @ u.T  # [b, i, s]
            for si, s in enumerate(sys_s.sets):
                e = s.level + tup.level - m
                sat = saturation_limit(e, b_mult)
                counts = per_line[:, :, si]
                total = np.where(counts > sat, counts, 0).sum(axis=1)
                ok &= total < min(fail_count(e + k, b_mult), np.iinfo(np.int64).max)
    return ok


# ---------------------------------------------------------------- distributions

Distribution = Mapping[Hashable, Fraction] | Iterable[tuple[Hashable, Fraction]]


def _as_dist(d: Distribution) -> dict:
    items = d.items() if isinstance(d, Mapping) else d
    out: dict = {}
    for outcome, w in items:
        w = Fraction(w)
        if w < 0:
            raise NotADistribution(f"negative weight {w} on {outcome!r}")
        out[outcome] = out.get(outcome, Fraction(0)) + w
    if sum(out.values(), Fraction(0)) != 1:
        raise NotADistribution(f"weights sum to {sum(out.values(), Fraction(0))}")
    return out


def min_entropy(dist: Distribution) -> float:
    d = _as_dist(dist)
    top = max(d.values())
    # log2 of a rational without going through floats for the huge cases
    return -(math.log2(top.numerator) - math.log2(top.denominator))


def stat_distance(d1: Distribution, d2: Distribution) -> Fraction:
    """Total variation distance; both must be supported on the same outcome set."""
    a, b = _as_dist(d1), _as_dist(d2)
    if set(a) != set(b):
        raise DomainMismatch("distributions are over different outcome sets")
    return sum((abs(a[x] - b[x]) for x in a), Fraction(0)) / 2


# ---------------------------------------------------------------- Monte Carlo

@dataclass(frozen=True)
class SampleStats:
    trials: int
    passes: int
    alpha_hat: float
    ci_half_width: float
    rng_seed: int

    @property
    def sigma(self) -> float:
        p = self.alpha_hat
        return math.sqrt(p * (1 - p) / self.trials)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def binomial_stats(passes: int, trials: int, rng_seed: int) -> SampleStats:
    p = passes / trials
    return SampleStats(trials, passes, p, 1.96 * math.sqrt(p * (1 - p) / trials), rng_seed)


def _count_passes(n, m, plan, rng_seed, first, count) -> int:
    return int(weak_balanced_batch(random_tables(n, m, rng_seed, first, count), plan).sum())


def sample_balance_fraction(n: int, m: int, sys_s: SystemS, sys_q: SystemQ, b_mult=DEFAULT_B_MULT,
                            trials: int = 1000, rng_seed: int = 0, *, jobs: int = 1,
                            chunk: int = 4096) -> SampleStats:
    """Share of uniformly random tables passing :func:`is_weak_balanced`.

    Trial ``i`` uses the i-th table of the splitmix64 stream seeded by
    ``rng_seed`` (see :func:`kolext.bitcore.random_tables`), so the result does
    not depend on ``jobs``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    plan = plan_weak(n, m, sys_s, sys_q, b_mult)
    pieces = [(first, min(chunk, trials - first)) for first in range(0, trials, chunk)]
    if jobs <= 1 or len(pieces) == 1:
        passes = sum(_count_passes(n, m, plan, rng_seed, a, c) for a, c in pieces)
    else:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_count_passes, n, m, plan, rng_seed, a, c) for a, c in pieces]
            passes = sum(f.result() for f in futures)
    return binomial_stats(passes, trials, rng_seed)
