"""Relevant set systems from complexity profiles, and generator seed scans."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

from . import balance
from .balance import DEFAULT_B_MULT, RainbowTuple, SystemQ, SystemR, SystemS
from .bitcore import (
    BitString,
    KolextError,
    LevelSet,
    Palette,
    bits_to_int,
    colours_from_bit_rows,
    table_bit_count,
    table_from_bits,
)
from .bvm import ComplexityProfile
from .nwgen import Generator, generate, generate_batch, output_bit


class MissingProfile(KolextError, KeyError):
    pass


@dataclass(frozen=True)
class SearchParams:
    n: int
    m: int
    s: int
    k: int
    q: int
    l_max: int
    b_mult: Fraction = DEFAULT_B_MULT
    mode: str = "plain"
    seed_range: tuple[int, int] = (0, 1)

    def __post_init__(self) -> None:
        object.__setattr__(self, "b_mult", Fraction(self.b_mult))
        if not 1 <= self.k <= self.l_max:
            raise ValueError(f"need 1 <= k <= l_max, got k={self.k}, l_max={self.l_max}")
        if self.q > self.m:
            raise ValueError(f"palette level q={self.q} exceeds m={self.m}")
        if self.mode not in ("plain", "rainbow"):
            raise ValueError(f"mode must be plain or rainbow, not {self.mode!r}")
        lo, hi = self.seed_range
        if not 0 <= lo < hi:
            raise ValueError(f"empty or negative seed range {self.seed_range}")


@dataclass(frozen=True)
class Systems:
    s: SystemS
    q: SystemQ
    r: SystemR | None = None

    @property
    def working_palette(self) -> Palette:
        return self.q.palettes[0]

    def tuple_for(self, level: int) -> RainbowTuple | None:
        if self.r is None:
            return None
        for tup in self.r.tuples:
            anchor = self.s.by_level(level)
            if anchor is not None and tup.anchor == anchor:
                return tup
        return None


def build_system_s(profile: ComplexityProfile, k: int) -> SystemS:
    sets = [LevelSet(tuple(profile.below(l)), l) for l in range(k, profile.l_max + 1)]
    return SystemS(tuple(sets), origin=f"profile n={profile.n} s={profile.s} lmax={profile.l_max} k={k}")


def build_system_q(profile_m: ComplexityProfile, q: int, *, all_levels: bool = False) -> SystemQ:
    """The working palette ``{w : KS(w) < q}``, or every level ``1..m`` with ``all_levels``."""
    levels = range(1, profile_m.n + 1) if all_levels else [q]
    return SystemQ(tuple(Palette(tuple(bits_to_int(w) for w in profile_m.below(lv)), lv) for lv in levels))


def build_system_r(anchor: LevelSet, conditional_profiles: Mapping[BitString, ComplexityProfile],
                   q: int) -> RainbowTuple:
    palettes = []
    for member in anchor.members:
        if member not in conditional_profiles:
            raise MissingProfile(member)
        prof = conditional_profiles[member]
        palettes.append(Palette(tuple(bits_to_int(w) for w in prof.below(q)), q))
    return RainbowTuple(anchor, tuple(palettes), q)


def build_systems(params: SearchParams, profile_n: ComplexityProfile, profile_m: ComplexityProfile,
                  conditional_profiles: Mapping[BitString, ComplexityProfile] | None = None) -> Systems:
    sys_s = build_system_s(profile_n, params.k)
    sys_q = build_system_q(profile_m, params.q)
    sys_r = None
    if params.mode == "rainbow":
        if conditional_profiles is None:
            raise MissingProfile("rainbow mode needs conditional profiles")
        sys_r = SystemR(tuple(build_system_r(s, conditional_profiles, params.q) for s in sys_s.sets))
    return Systems(sys_s, sys_q, sys_r)


# ---------------------------------------------------------------- goodness

def _check_table(t, params: SearchParams, systems: Systems):
    if params.mode == "plain":
        return balance.is_weak_balanced(t, systems.s, systems.q, params.b_mult)
    return balance.is_weak_rainbow_balanced(t, systems.s, systems.r, params.k, params.b_mult)


class _StreamedCells:
    """Cell colours computed bit by bit from the generator, never storing the table."""

    def __init__(self, g: Generator, seed: int, n: int, m: int):
        self.g, self.seed, self.n, self.m = g, seed, n, m

    def colour(self, x: int, y: int) -> int:
        base = ((x << self.n) + y) * self.m
        c = 0
        for j in range(self.m):
            c = c << 1 | output_bit(self.g, self.seed, base + j)
        return c


def _streamed_plain(cells: _StreamedCells, params: SearchParams, systems: Systems):
    for i, s1 in enumerate(systems.s.sets):
        for j, s2 in enumerate(systems.s.sets):
            for qi, pal in enumerate(systems.q.palettes):
                count = sum(cells.colour(bits_to_int(x), bits_to_int(y)) in pal.colours
                            for x in s1 for y in s2)
                if not balance.threshold_holds(count, s1.level + s2.level + pal.level - params.m, params.b_mult):
                    return False, (i, j, qi)
    return True, None


def _streamed_rainbow(cells: _StreamedCells, params: SearchParams, systems: Systems):
    for direction in ("row", "column"):
        for i, s in enumerate(systems.s.sets):
            for r, tup in enumerate(systems.r.tuples):
                e = s.level + tup.level - params.m
                sat = balance.saturation_limit(e, params.b_mult)
                total = 0
                for member, pal in zip(tup.anchor.members, tup.palettes):
                    line = bits_to_int(member)
                    marks = 0
                    for z in s:
                        x, y = (bits_to_int(z), line) if direction == "row" else (line, bits_to_int(z))
                        marks += cells.colour(x, y) in pal.colours
                    if marks > sat:
                        total += marks
                if not balance.threshold_holds(total, e + params.k, params.b_mult):
                    return False, (direction, i, r)
    return True, None


def seed_is_good(g: Generator, seed: int, params: SearchParams, systems: Systems, *, streamed: bool = False):
    """Goodness of one seed: ``(ok, first_violation)``.

    ``streamed=True`` evaluates cells from individual output bits instead of
    materialising the table.
    """
    need = table_bit_count(params.n, params.m)
    if len(g.design) < need:
        raise ValueError(f"generator gives {len(g.design)} bits, table needs {need}")
    if streamed:
        cells = _StreamedCells(g, seed, params.n, params.m)
        if params.mode == "plain":
            return _streamed_plain(cells, params, systems)
        return _streamed_rainbow(cells, params, systems)
    t = table_from_bits(generate(g, seed, need), params.n, params.m)
    return _check_table(t, params, systems)


def table_for_seed(g: Generator, seed: int, n: int, m: int):
    need = table_bit_count(n, m)
    bits = generate_batch(g, np.array([seed]), need)[0]
    return table_from_bits(bits, n, m)


# ---------------------------------------------------------------- scans

@dataclass
class GoodSeedReport:
    found: int | None
    seeds_checked: int
    first_violations: dict[int, tuple] = field(default_factory=dict)
    wall_time: float = 0.0

    def to_dict(self, params: SearchParams) -> dict:
        return {
            "params": params_dict(params),
            "found_seed": self.found,
            "seeds_checked": self.seeds_checked,
            "timing": {"elapsed_ms": round(self.wall_time * 1000, 3)},
        }


def params_dict(params: SearchParams) -> dict:
    return {
        "n": params.n, "m": params.m, "s": params.s, "k": params.k, "q": params.q,
        "l_max": params.l_max, "b_mult": f"{params.b_mult.numerator}/{params.b_mult.denominator}",
        "mode": params.mode, "seed_range": list(params.seed_range),
    }


def _verdicts(g: Generator, seeds: np.ndarray, params: SearchParams, systems: Systems, plan) -> np.ndarray:
    need = table_bit_count(params.n, params.m)
    colours = colours_from_bit_rows(generate_batch(g, seeds, need), params.n, params.m)
    if params.mode == "plain":
        return balance.weak_balanced_batch(colours, plan)
    return balance.rainbow_batch(colours, params.n, params.m, systems.s, systems.r, params.k, params.b_mult)


def _scan(g: Generator, lo: int, hi: int, params: SearchParams, systems: Systems, chunk: int) -> int | None:
    plan = balance.plan_weak(params.n, params.m, systems.s, systems.q, params.b_mult) if params.mode == "plain" else None
    for start in range(lo, hi, chunk):
        seeds = np.arange(start, min(hi, start + chunk), dtype=np.int64)
        good = np.flatnonzero(_verdicts(g, seeds, params, systems, plan))
        if good.size:
            return int(seeds[good[0]])
    return None


def find_good_seed(g: Generator, params: SearchParams, systems: Systems, *, jobs: int = 1,
                   chunk: int = 2048, keep_violations: bool = False) -> GoodSeedReport:
    """Smallest good seed in ``params.seed_range`` (ascending scan).

    With ``jobs > 1`` the range is cut into contiguous pieces scanned in worker
    processes; the minimum over pieces is the same answer as a sequential scan.
    """
    need = table_bit_count(params.n, params.m)
    if len(g.design) < need:
        raise ValueError(f"generator gives {len(g.design)} bits, table needs {need}")
    lo, hi = params.seed_range
    if hi > 1 << g.seed_bits:
        raise ValueError(f"seed range exceeds the {g.seed_bits}-bit seed space")
    started = time.perf_counter()
    if jobs <= 1:
        found = _scan(g, lo, hi, params, systems, chunk)
    else:
        step = -(-(hi - lo) // jobs)
        pieces = [(a, min(hi, a + step)) for a in range(lo, hi, step)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_scan, *zip(*[(g, a, b, params, systems, chunk) for a, b in pieces])))
        hits = [r for r in results if r is not None]
        found = min(hits) if hits else None
    checked = (found - lo + 1) if found is not None else hi - lo
    violations = {}
    if keep_violations:
        for seed in range(lo, lo + checked):
            ok, where = seed_is_good(g, seed, params, systems)
            if not ok:
                violations[seed] = where
    return GoodSeedReport(found, checked, violations, time.perf_counter() - started)
