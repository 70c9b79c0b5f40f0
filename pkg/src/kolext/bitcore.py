"""Bitstrings, tables, palettes, level sets and exact counting primitives.

Bitstrings are plain ``str`` objects over ``{'0', '1'}``.  A string of length
``n`` stands for the integer it spells in big-endian order, so sorting strings
of one length sorts them numerically.

A table colours the ``2^n x 2^n`` grid of pairs ``(x, y)`` with ``m``-bit
colours.  ``x`` is the column, ``y`` the row, and the cell lives at flat index
``x * 2^n + y``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

BitString = str


class KolextError(Exception):
    """Base class for all errors raised by this package."""


class MalformedPair(KolextError, ValueError):
    pass


class InsufficientBits(KolextError, ValueError):
    pass


class MalformedFile(KolextError, ValueError):
    pass


def check_bits(bits: str) -> str:
    if any(c not in "01" for c in bits):
        raise ValueError(f"not a bitstring: {bits!r}")
    return bits


def bits_to_int(bits: BitString) -> int:
    return int(bits, 2) if bits else 0


def int_to_bits(value: int, length: int) -> BitString:
    if length == 0:
        if value:
            raise ValueError("nonzero value does not fit in 0 bits")
        return ""
    if value < 0 or value >> length:
        raise ValueError(f"{value} does not fit in {length} bits")
    return format(value, f"0{length}b")


def all_strings(n: int) -> list[BitString]:
    """All strings of length ``n`` in ascending order."""
    return [int_to_bits(v, n) for v in range(1 << n)]


# Self-delimiting hex: the string's value with a leading 1 marker bit, so that
# leading zeros and the empty string survive the round trip ("1" is epsilon).
def to_hex(bits: BitString) -> str:
    return format(int("1" + bits, 2), "x")


def from_hex(text: str) -> BitString:
    try:
        value = int(text, 16)
    except ValueError:
        raise MalformedFile(f"bad hex string {text!r}") from None
    if value < 1:
        raise MalformedFile(f"hex string {text!r} lacks the marker bit")
    return format(value, "b")[1:]


# ---------------------------------------------------------------- pairs

def encode_pair(x: BitString, y: BitString) -> BitString:
    """Self-delimiting pair code: every bit of x doubled, then ``01``, then y."""
    return "".join(c + c for c in x) + "01" + y


def decode_pair(z: BitString) -> tuple[BitString, BitString]:
    for i in range(0, len(z) - 1, 2):
        a, b = z[i], z[i + 1]
        if a != b:
            if (a, b) == ("0", "1"):
                return z[:i:2], z[i + 2:]
            break
    raise MalformedPair(f"no separator in {z!r}")


# ---------------------------------------------------------------- tables

@dataclass(frozen=True, eq=False)
class Table:
    n: int
    m: int
    colours: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        colours = np.ascontiguousarray(self.colours, dtype=np.int64)
        if colours.shape != (1 << (2 * self.n),):
            raise ValueError(f"table needs {1 << (2 * self.n)} cells, got {colours.shape}")
        if colours.size and (colours.min() < 0 or colours.max() >= (1 << self.m)):
            raise ValueError(f"colour out of range for m={self.m}")
        colours.flags.writeable = False
        object.__setattr__(self, "colours", colours)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Table):
            return NotImplemented
        return (self.n, self.m) == (other.n, other.m) and np.array_equal(self.colours, other.colours)

    def __hash__(self) -> int:
        return hash((self.n, self.m, self.colours.tobytes()))

    @property
    def side(self) -> int:
        return 1 << self.n

    @property
    def grid(self) -> np.ndarray:
        """Colours as a ``[x, y]`` indexed 2-d view."""
        return self.colours.reshape(self.side, self.side)

    def colour(self, x: BitString | int, y: BitString | int) -> int:
        xi = bits_to_int(x) if isinstance(x, str) else x
        yi = bits_to_int(y) if isinstance(y, str) else y
        return int(self.colours[xi * self.side + yi])

    def to_bits(self) -> BitString:
        return "".join(int_to_bits(int(c), self.m) for c in self.colours)

    @classmethod
    def constant(cls, n: int, m: int, colour: int) -> "Table":
        return cls(n, m, np.full(1 << (2 * n), colour, dtype=np.int64))


def table_bit_count(n: int, m: int) -> int:
    return (1 << (2 * n)) * m


def table_from_bits(bits: BitString | Sequence[int] | np.ndarray, n: int, m: int) -> Table:
    need = table_bit_count(n, m)
    if isinstance(bits, str):
        arr = np.frombuffer(bits.encode("ascii"), dtype=np.uint8) - ord("0")
    else:
        arr = np.asarray(bits, dtype=np.uint8)
    if arr.size < need:
        raise InsufficientBits(f"need {need} bits for n={n}, m={m}, got {arr.size}")
    return Table(n, m, colours_from_bit_rows(arr[None, :need], n, m)[0])


def colours_from_bit_rows(rows: np.ndarray, n: int, m: int) -> np.ndarray:
    """Batch form of :func:`table_from_bits`: ``(B, >=4^n*m)`` bits to ``(B, 4^n)`` colours."""
    cells = 1 << (2 * n)
    rows = np.asarray(rows)
    if rows.shape[1] < cells * m:
        raise InsufficientBits(f"need {cells * m} bits per row, got {rows.shape[1]}")
    chunks = rows[:, : cells * m].reshape(rows.shape[0], cells, m).astype(np.int64)
    weights = 1 << np.arange(m - 1, -1, -1, dtype=np.int64)
    return chunks @ weights


# ---------------------------------------------------------------- palettes and level sets

def _least_level(size: int) -> int:
    """Least q with size < 2^q."""
    return size.bit_length()


@dataclass(frozen=True)
class Palette:
    colours: tuple[int, ...]
    level: int

    def __post_init__(self) -> None:
        cols = tuple(sorted(set(int(c) for c in self.colours)))
        object.__setattr__(self, "colours", cols)
        if self.level < 0 and cols or (self.level >= 0 and len(cols) >= (1 << self.level)):
            raise ValueError(f"palette of size {len(cols)} does not fit level {self.level}")
        if cols and cols[0] < 0:
            raise ValueError("negative colour")

    @classmethod
    def of(cls, colours: Iterable[int], level: int | None = None) -> "Palette":
        cols = tuple(sorted(set(int(c) for c in colours)))
        return cls(cols, _least_level(len(cols)) if level is None else level)

    def __len__(self) -> int:
        return len(self.colours)

    def __contains__(self, colour: object) -> bool:
        return colour in self._set

    @property
    def _set(self) -> frozenset[int]:
        return frozenset(self.colours)


@dataclass(frozen=True)
class LevelSet:
    members: tuple[BitString, ...]
    level: int

    def __post_init__(self) -> None:
        mems = tuple(sorted(set(self.members)))
        if len({len(s) for s in mems}) > 1:
            raise ValueError("level set mixes string lengths")
        object.__setattr__(self, "members", mems)
        if len(mems) >= (1 << max(self.level, 0)) or (self.level < 0 and mems):
            raise ValueError(f"{len(mems)} members do not fit level {self.level}")

    @classmethod
    def of(cls, members: Iterable[BitString], level: int | None = None) -> "LevelSet":
        mems = tuple(sorted(set(members)))
        return cls(mems, _least_level(len(mems)) if level is None else level)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[BitString]:
        return iter(self.members)

    def indices(self) -> np.ndarray:
        return np.array([bits_to_int(s) for s in self.members], dtype=np.int64)


def popular_palette(t: Table, count: int) -> Palette:
    """The ``count`` most frequent colours, ties going to the smaller colour."""
    if not 1 <= count <= (1 << t.m):
        raise ValueError(f"count must lie in [1, 2^{t.m}]")
    freq = np.bincount(t.colours, minlength=1 << t.m)
    # stable sort on -freq keeps ascending colour order within ties
    order = np.argsort(-freq, kind="stable")[:count]
    return Palette.of(order.tolist())


def palette_mask(t: Table, p: Palette) -> np.ndarray:
    """Boolean ``[x, y]`` grid marking cells coloured from ``p``."""
    return np.isin(t.grid, np.asarray(p.colours, dtype=np.int64))


def colour_count(t: Table, s1: LevelSet, s2: LevelSet, p: Palette) -> int:
    if not len(p) or not len(s1) or not len(s2):
        return 0
    mask = palette_mask(t, p)
    return int(mask[np.ix_(s1.indices(), s2.indices())].sum())


# ---------------------------------------------------------------- deterministic random stream

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK64 = (1 << 64) - 1


def splitmix64(seed: int, start: int, count: int) -> np.ndarray:
    """Words ``start .. start+count-1`` of the splitmix64 stream seeded by ``seed``.

    Word ``j`` is ``mix(seed + (j+1)*0x9E3779B97F4A7C15)`` with
    ``mix(z) = z ^= z>>30; z *= 0xBF58476D1CE4E5B9; z ^= z>>27;
    z *= 0x94D049BB133111EB; z ^= z>>31`` (all mod 2^64).
    """
    j = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & _MASK64) + j * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
    return z


def stream_bits(seed: int, start_word: int, nbits: int) -> np.ndarray:
    """``nbits`` bits read MSB-first from consecutive stream words."""
    words = splitmix64(seed, start_word, -(-nbits // 64))
    as_bytes = words.astype(">u8").view(np.uint8)
    return np.unpackbits(as_bytes)[:nbits]


def random_tables(n: int, m: int, rng_seed: int, first: int, count: int) -> np.ndarray:
    """Colours of random tables ``first .. first+count-1`` of the seeded stream.

    Table ``i`` consumes words ``[i*W, (i+1)*W)`` with ``W = ceil(4^n*m/64)``, so
    any trial can be drawn without drawing its predecessors.
    """
    nbits = table_bit_count(n, m)
    per = -(-nbits // 64)
    words = splitmix64(rng_seed, first * per, count * per)
    bits = np.unpackbits(words.astype(">u8").view(np.uint8)).reshape(count, per * 64)
    return colours_from_bit_rows(bits[:, :nbits], n, m)


def random_table(n: int, m: int, rng_seed: int, index: int = 0) -> Table:
    return Table(n, m, random_tables(n, m, rng_seed, index, 1)[0])


# ---------------------------------------------------------------- table file

def _bits_to_hex_dump(bits: BitString) -> str:
    padded = bits + "0" * (-len(bits) % 4)
    return "".join(format(int(padded[i:i + 4], 2), "x") for i in range(0, len(padded), 4))


def format_table(t: Table) -> str:
    return f"n={t.n} m={t.m}\n{_bits_to_hex_dump(t.to_bits())}\n"


def parse_table(text: str) -> Table:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MalformedFile("empty table file")
    try:
        header = dict(tok.split("=", 1) for tok in lines[0].split())
        n, m = int(header["n"]), int(header["m"])
    except (KeyError, ValueError):
        raise MalformedFile(f"bad table header {lines[0]!r}") from None
    hexdump = "".join(lines[1:])
    try:
        bits = "".join(format(int(h, 16), "04b") for h in hexdump)
    except ValueError:
        raise MalformedFile("bad hex in table body") from None
    return table_from_bits(bits, n, m)
