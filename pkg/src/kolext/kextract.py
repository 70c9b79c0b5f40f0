"""Kolmogorov-extractor verification and short-description certificates.

A pair qualifies when ``KS^s(x) > k``, ``KS^s(y) > k`` and
``KS^{mu s}(x, y) > KS^s(x) + KS^s(y) - delta``.  The plain property asks that
every qualifying pair gets a colour of complexity at least ``q = m - d`` where
``d = delta + ceil(c log2 n)``; the strong property asks the same of the
colour conditioned on ``x`` and on ``y``.

Certificates describe a cell by its levels and its ordinal among the cells
of ``S1 x S2`` that satisfy a membership predicate, enumerated with ``S1``
ascending in the outer loop and ``S2`` ascending in the inner loop.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Protocol

from . import balance
from .bitcore import (
    BitString,
    KolextError,
    LevelSet,
    MalformedFile,
    Table,
    all_strings,
    encode_pair,
    from_hex,
    int_to_bits,
)
from .bvm import ComplexityProfile, complexity_profile
from .seedsearch import Systems

MODE_BITS = 3
MODES = ("plain", "saturated-row", "row", "saturated-column", "column")


class Undecided(KolextError):
    """The oracle cannot settle a query; ``lower_bound`` is what it does know."""

    def __init__(self, what: str, lower_bound: int = 0):
        super().__init__(what)
        self.lower_bound = lower_bound


class NotAMember(KolextError, ValueError):
    pass


class LevelOutOfRange(KolextError, ValueError):
    pass


class OrdinalOutOfRange(KolextError, ValueError):
    pass


@dataclass(frozen=True)
class ExtractorParams:
    n: int
    m: int
    s: int
    k: int
    delta: int
    c: float = 2
    mu: int = 4
    l_max: int = 0
    pair_l_max: int = 0
    b_mult: Fraction = balance.DEFAULT_B_MULT

    def __post_init__(self) -> None:
        object.__setattr__(self, "b_mult", Fraction(self.b_mult))
        if self.k <= 1 or self.delta <= 0:
            raise ValueError("need k > 1 and delta >= 1")
        if self.mu < 1:
            raise ValueError("mu must be a positive integer")
        if self.l_max == 0:
            object.__setattr__(self, "l_max", 2 * self.n)

    @property
    def d(self) -> int:
        return self.delta + math.ceil(self.c * math.log2(self.n)) if self.n > 1 else self.delta

    @property
    def q(self) -> int:
        return self.m - self.d

    @property
    def overhead(self) -> int:
        return 4 * field_width(self.n) + 8

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(b_mult=f"{self.b_mult.numerator}/{self.b_mult.denominator}", d=self.d, q=self.q)
        return out


def field_width(n: int) -> int:
    return math.ceil(math.log2(n + 2))


class ComplexityOracle(Protocol):
    def plain(self, x: BitString) -> int: ...

    def conditional(self, w: BitString, v: BitString) -> int: ...

    def pair_above(self, x: BitString, y: BitString, threshold: int) -> bool: ...


class StubOracle:
    """Complexities from explicit tables (tests, planted fixtures, stub files).

    Missing entries fall back to the defaults, or raise :class:`Undecided`.
    """

    def __init__(self, plain=None, cond=None, pairmin=None, *, default_plain=None,
                 default_cond=None, default_pairmin=None):
        self._plain = dict(plain or {})
        self._cond = dict(cond or {})
        self._pairmin = dict(pairmin or {})
        self.default_plain = default_plain
        self.default_cond = default_cond
        self.default_pairmin = default_pairmin

    @staticmethod
    def _lookup(table, key, default, what):
        if key in table:
            return table[key]
        if default is None:
            raise Undecided(f"no {what} value for {key!r}")
        return default

    def plain(self, x):
        return self._lookup(self._plain, x, self.default_plain, "plain")

    def conditional(self, w, v):
        return self._lookup(self._cond, (w, v), self.default_cond, "conditional")

    def pair_above(self, x, y, threshold):
        return self._lookup(self._pairmin, (x, y), self.default_pairmin, "pair") > threshold

    @classmethod
    def from_text(cls, text: str) -> "StubOracle":
        plain, cond, pairmin = {}, {}, {}
        for lineno, line in enumerate(text.splitlines(), 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "plain" and len(parts) == 3:
                    plain[from_hex(parts[1])] = int(parts[2])
                elif parts[0] == "cond" and len(parts) == 4:
                    cond[(from_hex(parts[1]), from_hex(parts[2]))] = int(parts[3])
                elif parts[0] == "pairmin" and len(parts) == 4:
                    pairmin[(from_hex(parts[1]), from_hex(parts[2]))] = int(parts[3])
                else:
                    raise ValueError(parts[0])
            except ValueError:
                raise MalformedFile(f"stub oracle line {lineno}: {line!r}") from None
        return cls(plain, cond, pairmin)


class BvmOracle:
    """Complexities from machine profiles, built lazily and memoised.

    Plain and conditional values come from profiles enumerated to ``l_max``;
    pair queries use one profile of all pair codes at space ``mu * s``
    enumerated to ``pair_l_max``.
    """

    def __init__(self, params: ExtractorParams, *, cache: Path | None = None):
        self.params = params
        self.cache = cache
        self._profile = lru_cache(maxsize=None)(self._build)

    def _build(self, length: int, condition: BitString, s: int, l_max: int) -> ComplexityProfile:
        return complexity_profile(length, condition, s, l_max, cache=self.cache, allow_large=True)

    def profile(self, length: int, condition: BitString = "") -> ComplexityProfile:
        return self._profile(length, condition, self.params.s, self.params.l_max)

    def _value(self, prof: ComplexityProfile, x: BitString) -> int:
        v = prof[x]
        if v == prof.sentinel:
            raise Undecided(f"KS of {x!r} exceeds l_max", lower_bound=prof.sentinel)
        return v

    def plain(self, x):
        return self._value(self.profile(len(x)), x)

    def conditional(self, w, v):
        return self._value(self.profile(len(w), v), w)

    def pair_profile(self) -> ComplexityProfile:
        p = self.params
        return self._profile(3 * p.n + 2, "", p.mu * p.s, p.pair_l_max)

    def pair_above(self, x, y, threshold):
        prof = self.pair_profile()
        v = prof[encode_pair(x, y)]
        if v == prof.sentinel and threshold > self.params.pair_l_max:
            raise Undecided(f"pair threshold {threshold} beyond pair_l_max", lower_bound=v)
        return v > threshold


def qualifies(x: BitString, y: BitString, params: ExtractorParams, oracle: ComplexityOracle) -> bool:
    l1 = oracle.plain(x)
    if l1 <= params.k:
        return False
    l2 = oracle.plain(y)
    if l2 <= params.k:
        return False
    return oracle.pair_above(x, y, l1 + l2 - params.delta)


def _at_least(query, q: int) -> bool | None:
    """True/False for ``query() >= q``; None if the oracle cannot tell."""
    try:
        return query() >= q
    except Undecided as u:
        return True if u.lower_bound >= q else None


# ---------------------------------------------------------------- verification

@dataclass(frozen=True)
class Violation:
    x: BitString
    y: BitString
    colour: BitString
    values: dict
    direction: str = "plain"

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "colour": self.colour, "direction": self.direction,
                "values": dict(sorted(self.values.items()))}


@dataclass
class VerificationReport:
    qualifying_pairs: int = 0
    violations: list[Violation] = field(default_factory=list)
    undecided_pairs: int = 0
    undecided_colours: int = 0
    certificates: list = field(default_factory=list)

    @property
    def vacuous(self) -> bool:
        return self.qualifying_pairs == 0

    def to_dict(self, params: ExtractorParams) -> dict:
        return {
            "params": params.to_dict(),
            "qualifying_pairs": self.qualifying_pairs,
            "undecided_pairs": self.undecided_pairs,
            "undecided_colours": self.undecided_colours,
            "vacuous": self.vacuous,
            "violations": [v.to_dict() for v in self.violations],
            "certificates_audited": len(self.certificates),
            "max_certificate_bits": max((c.encoded_bits for c in self.certificates), default=0),
        }


def _verify(t: Table, params: ExtractorParams, oracle: ComplexityOracle, strong: bool) -> VerificationReport:
    if (t.n, t.m) != (params.n, params.m):
        raise ValueError("table dimensions do not match parameters")
    rep = VerificationReport()
    q = params.q
    for x in all_strings(params.n):
        for y in all_strings(params.n):
            try:
                if not qualifies(x, y, params, oracle):
                    continue
            except Undecided:
                rep.undecided_pairs += 1
                continue
            rep.qualifying_pairs += 1
            w = int_to_bits(t.colour(x, y), params.m)
            if not strong:
                checks = [("plain", lambda: oracle.plain(w))]
            else:
                checks = [("row", lambda: oracle.conditional(w, y)),
                          ("column", lambda: oracle.conditional(w, x))]
            for direction, query in checks:
                ok = _at_least(query, q)
                if ok is None:
                    rep.undecided_colours += 1
                elif not ok:
                    values = {"ks_x": oracle.plain(x), "ks_y": oracle.plain(y), "q": q}
                    values["ks_colour" if direction == "plain" else f"ks_colour_given_{'y' if direction == 'row' else 'x'}"] = query()
                    rep.violations.append(Violation(x, y, w, values, direction))
    return rep


def verify_plain(t: Table, params: ExtractorParams, oracle: ComplexityOracle) -> VerificationReport:
    return _verify(t, params, oracle, strong=False)


def verify_strong(t: Table, params: ExtractorParams, oracle: ComplexityOracle) -> VerificationReport:
    return _verify(t, params, oracle, strong=True)


# ---------------------------------------------------------------- certificates

@dataclass(frozen=True)
class Certificate:
    n: int
    l1: int
    l2: int
    q: int
    ordinal: int
    mode: str = "plain"
    line_index: int | None = None  # position of the fixed row/column in its level set

    @property
    def encoded_bits(self) -> int:
        bits = max(1, self.ordinal.bit_length()) + 4 * field_width(self.n) + MODE_BITS
        if self.mode == "row":
            bits += self.l2
        elif self.mode == "column":
            bits += self.l1
        return bits


def _level_set(systems: Systems, level: int) -> LevelSet:
    s = systems.s.by_level(level)
    if s is None:
        raise LevelOutOfRange(f"no level set at level {level}")
    return s


def _palette_for(systems: Systems, level: int, member: BitString):
    tup = systems.tuple_for(level)
    if tup is None:
        raise LevelOutOfRange(f"no rainbow tuple anchored at level {level}")
    return tup.palettes[tup.anchor.members.index(member)].colours, tup.level


def _cells(t: Table, systems: Systems, params: ExtractorParams, mode: str, l1: int, l2: int,
           line: BitString | None):
    """Yield cells satisfying the mode's predicate in canonical order."""
    s1, s2 = _level_set(systems, l1), _level_set(systems, l2)
    b = params.b_mult
    if mode == "plain":
        pal = set(systems.working_palette.colours)
        for x in s1:
            for y in s2:
                if t.colour(x, y) in pal:
                    yield x, y
    elif mode in ("row", "saturated-row"):
        pals = {y: _palette_for(systems, l2, y) for y in s2}

        def marks(y):
            return sum(t.colour(x, y) in pals[y][0] for x in s1)

        sat = {y: marks(y) > balance.saturation_limit(l1 + pals[y][1] - params.m, b) for y in s2}
        for x in s1:
            for y in s2:
                if mode == "row" and y != line:
                    continue
                if mode == "saturated-row" and not sat[y]:
                    continue
                if t.colour(x, y) in pals[y][0]:
                    yield x, y
    elif mode in ("column", "saturated-column"):
        pals = {x: _palette_for(systems, l1, x) for x in s1}

        def marks(x):
            return sum(t.colour(x, y) in pals[x][0] for y in s2)

        sat = {x: marks(x) > balance.saturation_limit(l2 + pals[x][1] - params.m, b) for x in s1}
        for x in s1:
            if mode == "column" and x != line:
                continue
            if mode == "saturated-column" and not sat[x]:
                continue
            for y in s2:
                if t.colour(x, y) in pals[x][0]:
                    yield x, y
    else:
        raise ValueError(f"unknown certificate mode {mode!r}")


def describe_cell(t: Table, x: BitString, y: BitString, systems: Systems, params: ExtractorParams,
                  mode: str = "plain", *, l1: int, l2: int) -> Certificate:
    """Certificate for (x, y) inside ``S(l1) x S(l2)``; raises NotAMember if the predicate fails."""
    s1, s2 = _level_set(systems, l1), _level_set(systems, l2)
    if x not in s1.members or y not in s2.members:
        raise NotAMember(f"({x}, {y}) not in S({l1}) x S({l2})")
    line = y if mode == "row" else x if mode == "column" else None
    for ordinal, cell in enumerate(_cells(t, systems, params, mode, l1, l2, line)):
        if cell == (x, y):
            line_index = None
            if mode == "row":
                line_index = s2.members.index(y)
            elif mode == "column":
                line_index = s1.members.index(x)
            return Certificate(params.n, l1, l2, params.q, ordinal, mode, line_index)
    raise NotAMember(f"({x}, {y}) fails the {mode} predicate")


def reconstruct_cell(cert: Certificate, t: Table, systems: Systems, params: ExtractorParams) -> tuple[BitString, BitString]:
    line = None
    if cert.mode == "row":
        line = _level_set(systems, cert.l2).members[cert.line_index]
    elif cert.mode == "column":
        line = _level_set(systems, cert.l1).members[cert.line_index]
    for ordinal, cell in enumerate(_cells(t, systems, params, cert.mode, cert.l1, cert.l2, line)):
        if ordinal == cert.ordinal:
            return cell
    raise OrdinalOutOfRange(f"ordinal {cert.ordinal} beyond the {cert.mode} cells")


# ---------------------------------------------------------------- dichotomy audit

@dataclass
class AuditReport:
    cells_checked: int = 0
    cells_skipped: int = 0
    precondition_ok: bool = True
    dual_violations: list[dict] = field(default_factory=list)
    certificates: list[Certificate] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.dual_violations

    def to_dict(self) -> dict:
        return {
            "cells_checked": self.cells_checked,
            "cells_skipped": self.cells_skipped,
            "precondition_ok": self.precondition_ok,
            "dual_violations": self.dual_violations,
            "certificates_audited": len(self.certificates),
            "max_certificate_bits": max((c.encoded_bits for c in self.certificates), default=0),
        }


def dichotomy_audit(t: Table, params: ExtractorParams, oracle: ComplexityOracle, systems: Systems,
                    *, strong: bool = False) -> AuditReport:
    """Every cell has a complex colour or a short certificate.

    Cells ``(x, y)`` are taken at levels ``KS(x) + 1`` and ``KS(y) + 1`` (the
    smallest level sets containing them).  A certificate is short when its
    encoded length is at most ``l1 + l2 - d + overhead``.  The table is
    expected to pass the goodness check for ``systems``; if it does not,
    ``precondition_ok`` is False and dual violations are reported, not raised.
    """
    rep = AuditReport()
    if strong:
        rep.precondition_ok = balance.is_weak_rainbow_balanced(t, systems.s, systems.r, params.k, params.b_mult)[0]
    else:
        rep.precondition_ok = balance.is_weak_balanced(t, systems.s, systems.q, params.b_mult)[0]
    levels = {s.level for s in systems.s.sets}

    def level_of(z):
        try:
            lv = oracle.plain(z) + 1
        except Undecided:
            return None
        return lv if lv in levels else None

    lv = {z: level_of(z) for z in all_strings(params.n)}
    for x in all_strings(params.n):
        for y in all_strings(params.n):
            l1, l2 = lv[x], lv[y]
            if l1 is None or l2 is None:
                rep.cells_skipped += 1
                continue
            rep.cells_checked += 1
            w = int_to_bits(t.colour(x, y), params.m)
            bound = l1 + l2 - params.d + params.overhead
            arms = [("plain", lambda: oracle.plain(w))]
            if strong:
                arms = [("row", lambda: oracle.conditional(w, y)), ("column", lambda: oracle.conditional(w, x))]
            for direction, query in arms:
                if _at_least(query, params.q):
                    continue
                modes = [direction] if direction == "plain" else [f"saturated-{direction}", direction]
                cert = None
                for mode in modes:
                    try:
                        cert = describe_cell(t, x, y, systems, params, mode, l1=l1, l2=l2)
                        break
                    except NotAMember:
                        continue
                if cert is not None and cert.encoded_bits <= bound:
                    rep.certificates.append(cert)
                else:
                    rep.dual_violations.append({
                        "x": x, "y": y, "colour": w, "direction": direction,
                        "certificate_bits": None if cert is None else cert.encoded_bits, "bound": bound,
                    })
    return rep
