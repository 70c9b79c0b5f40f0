"""A small bounded machine and space-bounded Kolmogorov complexity by enumeration.

Programs are raw bitstrings read three bits at a time::

    000 HALT   001 LEFT   010 RIGHT   011 FLIP
    100 OUT    101 READ   110 JZ a    111 JMP a

``JZ`` and ``JMP`` take an extra 8-bit absolute instruction index.  Leftover
bits that cannot complete an instruction decode as one trailing ``HALT``.

The machine has a read-only input tape, a two-way work tape of bit cells
(all 0, head on cell 0, which counts as visited) and an append-only output.
Executing any instruction other than ``HALT`` costs one step; halting (by
``HALT``, by running off the end, or by jumping past the end) is free.

:func:`run` is the reference interpreter.  Enumeration goes through numba
kernels that reimplement the same semantics on packed integers; the test
suite keeps the two in agreement.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .bitcore import BitString, KolextError, MalformedFile, from_hex, int_to_bits, to_hex

MACHINE_VERSION = "bvm-v1"
MAX_SAFE_LMAX = 24
_INT64_MAX = (1 << 63) - 1

HALT, LEFT, RIGHT, FLIP, OUT, READ, JZ, JMP = range(8)
OPNAMES = ("HALT", "LEFT", "RIGHT", "FLIP", "OUT", "READ", "JZ", "JMP")
_OPCODES = {name: code for code, name in enumerate(OPNAMES)}


class BudgetTooLarge(KolextError, ValueError):
    pass


class Outcome(str, enum.Enum):
    HALTED = "Halted"
    SPACE_EXCEEDED = "SpaceExceeded"
    STEPS_EXHAUSTED = "StepsExhausted"
    OUTPUT_OVERFLOW = "OutputOverflow"


@dataclass(frozen=True)
class Program:
    raw: BitString
    instructions: tuple[tuple[int, int], ...] = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "instructions", decode(self.raw))

    @classmethod
    def assemble(cls, *words: str) -> "Program":
        """Build a program from mnemonics, e.g. ``Program.assemble("FLIP", "JMP 0")``."""
        bits = []
        for word in words:
            name, *arg = word.split()
            bits.append(int_to_bits(_OPCODES[name.upper()], 3))
            if arg:
                bits.append(int_to_bits(int(arg[0]), 8))
        return cls("".join(bits))

    def __len__(self) -> int:
        return len(self.raw)


def decode(raw: BitString) -> tuple[tuple[int, int], ...]:
    out = []
    pos = 0
    while len(raw) - pos >= 3:
        op = int(raw[pos:pos + 3], 2)
        pos += 3
        arg = 0
        if op >= JZ:
            if len(raw) - pos < 8:
                out.append((HALT, 0))
                return tuple(out)
            arg = int(raw[pos:pos + 8], 2)
            pos += 8
        out.append((op, arg))
    if pos < len(raw):
        out.append((HALT, 0))
    return tuple(out)


@dataclass(frozen=True)
class RunBudget:
    space: int
    step_cap: int
    output_cap: int

    def __post_init__(self) -> None:
        if min(self.space, self.step_cap, self.output_cap) < 0:
            raise ValueError("budget fields must be non-negative")


@dataclass(frozen=True)
class RunResult:
    outcome: Outcome
    output: BitString = ""
    steps: int = 0
    space_used: int = 0

    @property
    def halted(self) -> bool:
        return self.outcome is Outcome.HALTED


def run(p: Program, input: BitString, budget: RunBudget) -> RunResult:
    ins = p.instructions
    if budget.space < 1:
        return RunResult(Outcome.SPACE_EXCEEDED)
    pc = steps = inhead = head = lo = hi = 0
    tape: dict[int, int] = {}
    out: list[str] = []
    while True:
        if pc >= len(ins) or ins[pc][0] == HALT:
            return RunResult(Outcome.HALTED, "".join(out), steps, hi - lo + 1)
        if steps >= budget.step_cap:
            return RunResult(Outcome.STEPS_EXHAUSTED)
        steps += 1
        op, arg = ins[pc]
        pc += 1
        if op == LEFT or op == RIGHT:
            head += 1 if op == RIGHT else -1
            lo, hi = min(lo, head), max(hi, head)
            if hi - lo + 1 > budget.space:
                return RunResult(Outcome.SPACE_EXCEEDED)
        elif op == FLIP:
            tape[head] = 1 - tape.get(head, 0)
        elif op == OUT:
            if len(out) >= budget.output_cap:
                return RunResult(Outcome.OUTPUT_OVERFLOW)
            out.append(str(tape.get(head, 0)))
        elif op == READ:
            if inhead < len(input):
                tape[head] = int(input[inhead])
                inhead += 1
            else:
                tape[head] = 0
        elif op == JZ:
            if tape.get(head, 0) == 0:
                pc = arg
        elif op == JMP:
            pc = arg


def max_steps(s: int, n_instr: int, input_len: int) -> int:
    """Configuration-count bound: a run still going after this many steps loops forever."""
    if s < 1:
        raise ValueError("space bound must be at least 1")
    bound = (n_instr + 1) * (input_len + 1) * (s + 1) * (1 << s) + 1
    if bound > _INT64_MAX:
        raise BudgetTooLarge(f"step bound for s={s} overflows 64-bit integers")
    return bound


# ---------------------------------------------------------------- numba kernels

_HALTED, _SPACE, _STEPS, _OVERFLOW = 0, 1, 2, 3
_MAX_KERNEL_SPACE = 30
_MAX_OUTPUT = 62


@numba.njit(cache=True)
def _decode_packed(v, length, ops, args):
    pos = 0
    n = 0
    while length - pos >= 3:
        op = (v >> (length - pos - 3)) & 7
        pos += 3
        if op >= 6:
            if length - pos < 8:
                ops[n] = 0
                return n + 1
            args[n] = (v >> (length - pos - 8)) & 255
            pos += 8
        else:
            args[n] = 0
        ops[n] = op
        n += 1
    if pos < length:
        ops[n] = 0
        n += 1
    return n


@numba.njit(cache=True)
def _execute(ops, args, ninstr, inp, inlen, s, step_cap, out_cap):
    """Returns (status, output value, output length)."""
    if s < 1:
        return _SPACE, 0, 0
    pc = 0
    steps = 0
    inhead = 0
    head = s  # absolute bit index of work cell 0
    lo = s
    hi = s
    tape = 0
    outv = 0
    outl = 0
    while True:
        if pc >= ninstr:
            return _HALTED, outv, outl
        op = ops[pc]
        if op == 0:
            return _HALTED, outv, outl
        if steps >= step_cap:
            return _STEPS, 0, 0
        steps += 1
        pc += 1
        if op == 1:
            head -= 1
            if head < lo:
                lo = head
                if hi - lo + 1 > s:
                    return _SPACE, 0, 0
        elif op == 2:
            head += 1
            if head > hi:
                hi = head
                if hi - lo + 1 > s:
                    return _SPACE, 0, 0
        elif op == 3:
            tape ^= 1 << head
        elif op == 4:
            if outl >= out_cap:
                return _OVERFLOW, 0, 0
            outv = (outv << 1) | ((tape >> head) & 1)
            outl += 1
        elif op == 5:
            if inhead < inlen:
                bit = inp[inhead]
                inhead += 1
            else:
                bit = 0
            tape = (tape & ~(1 << head)) | (bit << head)
        elif op == 6:
            if (tape >> head) & 1 == 0:
                pc = args[pc - 1]
        else:
            pc = args[pc - 1]


@numba.njit(cache=True)
def _kernel_max_steps(s, ninstr, inlen):
    return (ninstr + 1) * (inlen + 1) * (s + 1) * (1 << s) + 1


@numba.njit(cache=True)
def _profile_kernel(n, inp, s, l_max, values):
    """Fill ``values[x]`` with the least program length printing x (|x| = n)."""
    sentinel = l_max + 1
    ops = np.zeros(l_max // 3 + 2, dtype=np.int64)
    args = np.zeros(l_max // 3 + 2, dtype=np.int64)
    inlen = inp.shape[0]
    remaining = values.shape[0]
    for length in range(l_max + 1):
        for v in range(1 << length):
            ninstr = _decode_packed(v, length, ops, args)
            cap = _kernel_max_steps(s, ninstr, inlen)
            status, outv, outl = _execute(ops, args, ninstr, inp, inlen, s, cap, n)
            if status == _HALTED and outl == n and values[outv] == sentinel:
                values[outv] = length
                remaining -= 1
        if remaining == 0:
            break


@numba.njit(cache=True)
def _ks_kernel(target, n, inp, s, l_max):
    ops = np.zeros(l_max // 3 + 2, dtype=np.int64)
    args = np.zeros(l_max // 3 + 2, dtype=np.int64)
    inlen = inp.shape[0]
    for length in range(l_max + 1):
        for v in range(1 << length):
            ninstr = _decode_packed(v, length, ops, args)
            cap = _kernel_max_steps(s, ninstr, inlen)
            status, outv, outl = _execute(ops, args, ninstr, inp, inlen, s, cap, n)
            if status == _HALTED and outl == n and outv == target:
                return length
    return l_max + 1


@numba.njit(cache=True)
def _run_packed(v, length, inp, s, step_cap, out_cap):
    ops = np.zeros(length // 3 + 2, dtype=np.int64)
    args = np.zeros(length // 3 + 2, dtype=np.int64)
    ninstr = _decode_packed(v, length, ops, args)
    status, outv, outl = _execute(ops, args, ninstr, inp, inp.shape[0], s, step_cap, out_cap)
    return status, outv, outl, ninstr


def _as_input(bits: BitString) -> np.ndarray:
    return np.array([int(c) for c in bits], dtype=np.int64)


def _check_kernel_budget(n: int, condition: BitString, s: int, l_max: int, allow_large: bool) -> None:
    if s < 1:
        raise ValueError("space bound must be at least 1")
    if s > _MAX_KERNEL_SPACE:
        raise BudgetTooLarge(f"space bound {s} exceeds the kernel limit {_MAX_KERNEL_SPACE}")
    if n > _MAX_OUTPUT:
        raise BudgetTooLarge(f"string length {n} exceeds the kernel limit {_MAX_OUTPUT}")
    if l_max > MAX_SAFE_LMAX and not allow_large:
        raise BudgetTooLarge(f"l_max={l_max} means 2^{l_max + 1} programs; pass allow_large to insist")
    max_steps(s, l_max // 3 + 1, len(condition))


def run_fast(p: Program, input: BitString, budget: RunBudget) -> tuple[Outcome, BitString]:
    """Kernel-backed run returning only outcome and output (for cross-checks)."""
    status, outv, outl, _ = _run_packed(
        int(p.raw, 2) if p.raw else 0, len(p.raw), _as_input(input),
        budget.space, budget.step_cap, budget.output_cap,
    )
    outcome = [Outcome.HALTED, Outcome.SPACE_EXCEEDED, Outcome.STEPS_EXHAUSTED, Outcome.OUTPUT_OVERFLOW][status]
    return outcome, int_to_bits(outv, outl) if outcome is Outcome.HALTED else ""


def ks(x: BitString, condition: BitString, s: int, l_max: int, *, allow_large: bool = False) -> int:
    """KS^s(x | condition), or ``l_max + 1`` when no program of length <= l_max prints x."""
    _check_kernel_budget(len(x), condition, s, l_max, allow_large)
    target = int(x, 2) if x else 0
    return int(_ks_kernel(target, len(x), _as_input(condition), s, l_max))


# ---------------------------------------------------------------- profiles

@dataclass(frozen=True, eq=False)
class ComplexityProfile:
    n: int
    condition: BitString
    s: int
    l_max: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=np.int64)
        if vals.shape != (1 << self.n,):
            raise ValueError(f"profile over length {self.n} needs {1 << self.n} values")
        if vals.size and (vals.min() < 0 or vals.max() > self.l_max + 1):
            raise ValueError("profile value out of range")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ComplexityProfile):
            return NotImplemented
        return self.key == other.key and np.array_equal(self.values, other.values)

    @property
    def sentinel(self) -> int:
        return self.l_max + 1

    @property
    def key(self) -> tuple:
        return (MACHINE_VERSION, self.n, self.condition, self.s, self.l_max)

    def __getitem__(self, x: BitString) -> int:
        if len(x) != self.n:
            raise KeyError(x)
        return int(self.values[int(x, 2) if x else 0])

    def as_dict(self) -> dict[BitString, int]:
        return {int_to_bits(i, self.n): int(v) for i, v in enumerate(self.values)}

    def below(self, level: int) -> list[BitString]:
        """Strings with value < level, ascending."""
        return [int_to_bits(int(i), self.n) for i in np.flatnonzero(self.values < level)]

    @classmethod
    def from_dict(cls, n: int, values: dict[BitString, int], *, l_max: int,
                  s: int = 1, condition: BitString = "") -> "ComplexityProfile":
        """Profile from explicit values; strings not listed get the sentinel."""
        arr = np.full(1 << n, l_max + 1, dtype=np.int64)
        for x, v in values.items():
            arr[int(x, 2) if x else 0] = min(v, l_max + 1)
        return cls(n, condition, s, l_max, arr)

    def to_text(self) -> str:
        lines = [f"{MACHINE_VERSION} n={self.n} s={self.s} lmax={self.l_max} cond={to_hex(self.condition)}"]
        lines += [f"{to_hex(int_to_bits(i, self.n))} {int(v)}" for i, v in enumerate(self.values)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ComplexityProfile":
        lines = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0][0] != MACHINE_VERSION:
            raise MalformedFile(f"profile file must start with {MACHINE_VERSION}")
        try:
            head = dict(tok.split("=", 1) for tok in lines[0][1:])
            n, s, l_max = int(head["n"]), int(head["s"]), int(head["lmax"])
            cond = from_hex(head["cond"])
            values = {from_hex(a): int(b) for a, b in lines[1:]}
        except (KeyError, ValueError) as exc:
            raise MalformedFile(f"bad profile file: {exc}") from None
        if len(values) != 1 << n or any(len(x) != n for x in values):
            raise MalformedFile("profile body does not cover all strings")
        return cls.from_dict(n, values, l_max=l_max, s=s, condition=cond)


def cache_dir() -> Path | None:
    env = os.environ.get("KEXTRACT_CACHE_DIR")
    return Path(env) if env else None


def _cache_path(root: Path, n: int, condition: BitString, s: int, l_max: int) -> Path:
    return root / f"{MACHINE_VERSION}_n{n}_s{s}_l{l_max}_c{to_hex(condition)}.prof"


def complexity_profile(n: int, condition: BitString, s: int, l_max: int, *,
                       allow_large: bool = False, cache: Path | None = None) -> ComplexityProfile:
    """KS^s(x | condition) for every x of length n, in one enumeration pass.

    With a cache directory (argument or ``KEXTRACT_CACHE_DIR``) profiles are
    read from and written to ``<dir>/<key>.prof``.
    """
    _check_kernel_budget(n, condition, s, l_max, allow_large)
    root = cache if cache is not None else cache_dir()
    if root is not None:
        path = _cache_path(root, n, condition, s, l_max)
        if path.exists():
            prof = ComplexityProfile.from_text(path.read_text())
            if prof.key == (MACHINE_VERSION, n, condition, s, l_max):
                return prof
    values = np.full(1 << n, l_max + 1, dtype=np.int64)
    _profile_kernel(n, _as_input(condition), s, l_max, values)
    prof = ComplexityProfile(n, condition, s, l_max, values)
    if root is not None:
        root.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(prof.to_text())
        tmp.replace(path)
    return prof
