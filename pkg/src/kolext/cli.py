"""Command-line entry point: ``kolext <subcommand> ...``.

Subcommands: profile, design, nw, sample, search, verify, pipeline.  Reports
are JSON with sorted keys; anything wall-clock dependent sits under a
top-level ``"timing"`` key.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, fields
from fractions import Fraction
from pathlib import Path

from . import balance, seedsearch
from .bitcore import KolextError, all_strings, format_table, from_hex, parse_table
from .bvm import ComplexityProfile, complexity_profile
from .kextract import (
    BvmOracle,
    ExtractorParams,
    StubOracle,
    Undecided,
    dichotomy_audit,
    verify_plain,
    verify_strong,
)
from .nwgen import Design, Generator, Predicate, generate, greedy_design, poly_design

log = logging.getLogger("kolext")

EXIT_OK = 0
EXIT_CONFIG = 2


class ConfigError(KolextError, ValueError):
    pass


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def parse_fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a rational number: {text!r}") from None


def parse_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split("..")
        return int(lo), int(hi)
    except ValueError:
        raise ConfigError(f"seed range must look like a..b, got {text!r}") from None


# ---------------------------------------------------------------- experiment config

@dataclass
class ExperimentConfig:
    n: int
    m: int
    s: int
    k: int
    delta: int = 1
    c: float = 2
    mu: int = 4
    l_max: int = 0
    pair_l_max: int = 0
    b_mult: Fraction = balance.DEFAULT_B_MULT
    mode: str = "plain"
    design: str = "greedy:16,4,2,128"
    predicate: str = "parity"
    seed_range: str = "0..1"
    rng_seed: int = 0
    jobs: int = 1

    @classmethod
    def from_text(cls, text: str, base: Path | None = None) -> "ExperimentConfig":
        raw: dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line {lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            raw[key] = value
        known = {f.name: f for f in fields(cls)}
        unknown = set(raw) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        missing = [name for name in ("n", "m", "s", "k") if name not in raw]
        if missing:
            raise ConfigError(f"missing config keys: {', '.join(missing)}")
        kwargs = {}
        for key, value in raw.items():
            kind = known[key].type
            try:
                if kind == "int":
                    kwargs[key] = int(value)
                elif kind == "float":
                    kwargs[key] = float(value) if "." in value else int(value)
                elif kind == "Fraction":
                    kwargs[key] = parse_fraction(value)
                else:
                    kwargs[key] = value
            except ValueError:
                raise ConfigError(f"bad value for {key}: {value!r}") from None
        cfg = cls(**kwargs)
        if base is not None:
            cfg.design = _rebase(cfg.design, base)
            cfg.predicate = _rebase(cfg.predicate, base)
        return cfg

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Fraction):
                v = f"{v.numerator}/{v.denominator}"
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    def extractor_params(self) -> ExtractorParams:
        return ExtractorParams(self.n, self.m, self.s, self.k, self.delta, self.c, self.mu,
                               self.l_max, self.pair_l_max, self.b_mult)

    def search_params(self) -> seedsearch.SearchParams:
        ep = self.extractor_params()
        return seedsearch.SearchParams(self.n, self.m, self.s, self.k, ep.q, ep.l_max, self.b_mult,
                                       self.mode, parse_range(self.seed_range))


def _rebase(spec: str, base: Path) -> str:
    kind, _, arg = spec.partition(":")
    if kind in ("file", "table") and arg and not Path(arg).is_absolute():
        return f"{kind}:{base / arg}"
    return spec


def load_design(spec: str) -> Design:
    kind, _, arg = spec.partition(":")
    try:
        if kind == "poly":
            q, d = (int(v) for v in arg.split(","))
            return poly_design(q, d)
        if kind == "greedy":
            l, t, rho, count = (int(v) for v in arg.split(","))
            return greedy_design(l, t, rho, count)
    except ValueError as exc:
        raise ConfigError(f"bad design spec {spec!r}: {exc}") from None
    if kind == "file":
        path = Path(arg)
        if not path.is_file():
            raise ConfigError(f"design file not found: {path}")
        return Design.from_text(path.read_text())
    raise ConfigError(f"design spec must be poly:q,d | greedy:l,t,rho,N | file:path, got {spec!r}")


def load_predicate(spec: str) -> Predicate:
    if spec == "parity":
        return Predicate()
    kind, _, arg = spec.partition(":")
    if kind == "table":
        path = Path(arg)
        if not path.is_file():
            raise ConfigError(f"predicate table file not found: {path}")
        return Predicate.lookup(path.read_text().strip())
    raise ConfigError(f"predicate must be parity or table:file, got {spec!r}")


def validate(cfg: ExperimentConfig) -> tuple[ExtractorParams, seedsearch.SearchParams, Generator]:
    try:
        ep = cfg.extractor_params()
        sp = cfg.search_params()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if ep.pair_l_max <= 0:
        raise ConfigError("pair_l_max must be set")
    gen = Generator(load_design(cfg.design), load_predicate(cfg.predicate))
    need = (1 << (2 * cfg.n)) * cfg.m
    if len(gen.design) < need:
        raise ConfigError(f"design gives {len(gen.design)} output bits, a table needs {need}")
    if sp.seed_range[1] > 1 << gen.seed_bits:
        raise ConfigError(f"seed range exceeds the {gen.seed_bits}-bit seed space")
    return ep, sp, gen


# ---------------------------------------------------------------- pipeline

def profiles_from_oracle(oracle, length: int, l_max: int, condition: str = "") -> ComplexityProfile:
    """Profile-shaped view of an oracle; undecided values become the sentinel."""
    values = {}
    for z in all_strings(length):
        try:
            values[z] = oracle.conditional(z, condition) if condition else oracle.plain(z)
        except Undecided:
            values[z] = l_max + 1
    return ComplexityProfile.from_dict(length, values, l_max=l_max, condition=condition)


def systems_for(ep: ExtractorParams, sp: seedsearch.SearchParams, oracle) -> seedsearch.Systems:
    if isinstance(oracle, BvmOracle):
        prof_n, prof_m = oracle.profile(ep.n), oracle.profile(ep.m)
        conds = {v: oracle.profile(ep.m, v) for v in all_strings(ep.n)} if sp.mode == "rainbow" else None
    else:
        prof_n = profiles_from_oracle(oracle, ep.n, ep.l_max)
        prof_m = profiles_from_oracle(oracle, ep.m, ep.l_max)
        conds = ({v: profiles_from_oracle(oracle, ep.m, ep.l_max, v) for v in all_strings(ep.n)}
                 if sp.mode == "rainbow" else None)
    return seedsearch.build_systems(sp, prof_n, prof_m, conds)


def run_pipeline(cfg: ExperimentConfig, out_dir: Path) -> dict:
    """Profiles, systems, generator, seed search and (if a seed is found) verification.

    Writes one JSON report per stage plus ``summary.json`` into ``out_dir``
    and returns the summary.
    """
    ep, sp, gen = validate(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    timing = {}

    started = time.perf_counter()
    oracle = BvmOracle(ep)
    systems = systems_for(ep, sp, oracle)
    pair_prof = oracle.pair_profile()
    timing["profiles_ms"] = round((time.perf_counter() - started) * 1000, 3)
    profiles_report = {
        "plain_n": oracle.profile(ep.n).as_dict(),
        "plain_m": oracle.profile(ep.m).as_dict(),
        "pair_codes_found": int((pair_prof.values <= ep.pair_l_max).sum()),
    }
    (out_dir / "profiles.json").write_text(dump_json(profiles_report))

    systems_report = {
        "S": [{"level": s.level, "members": list(s.members)} for s in systems.s.sets],
        "Q": [{"level": p.level, "colours": list(p.colours)} for p in systems.q.palettes],
        "R_tuples": 0 if systems.r is None else len(systems.r),
    }
    (out_dir / "systems.json").write_text(dump_json(systems_report))

    report = seedsearch.find_good_seed(gen, sp, systems, jobs=cfg.jobs)
    timing["search_ms"] = round(report.wall_time * 1000, 3)
    (out_dir / "search.json").write_text(dump_json(report.to_dict(sp)))
    log.info("search: found=%s after %d seeds", report.found, report.seeds_checked)

    summary = {
        "config": {f.name: str(getattr(cfg, f.name)) for f in fields(cfg)
                   if f.name not in ("design", "predicate", "jobs")},
        "generator": {"seed_bits": gen.seed_bits, "output_bits": len(gen.design),
                      "predicate": gen.predicate.kind},
        "extractor_params": ep.to_dict(),
        "found_seed": report.found,
        "seeds_checked": report.seeds_checked,
    }
    if report.found is not None:
        started = time.perf_counter()
        table = seedsearch.table_for_seed(gen, report.found, ep.n, ep.m)
        (out_dir / "table.txt").write_text(format_table(table))
        strong = sp.mode == "rainbow"
        ver = (verify_strong if strong else verify_plain)(table, ep, oracle)
        audit = dichotomy_audit(table, ep, oracle, systems, strong=strong)
        ver.certificates = audit.certificates
        verification = ver.to_dict(ep)
        (out_dir / "verify.json").write_text(dump_json(verification))
        (out_dir / "audit.json").write_text(dump_json(audit.to_dict()))
        timing["verify_ms"] = round((time.perf_counter() - started) * 1000, 3)
        summary["verification"] = {k: v for k, v in verification.items() if k != "params"}
        summary["audit"] = audit.to_dict()
    summary["timing"] = timing
    (out_dir / "summary.json").write_text(dump_json(summary))
    return summary


def strip_timing(report: dict) -> dict:
    return {k: v for k, v in report.items() if k != "timing"}


# ---------------------------------------------------------------- subcommands

def _write(text: str, dest: str | None) -> None:
    if dest:
        Path(dest).write_text(text)
    else:
        sys.stdout.write(text)


def _condition_arg(text: str) -> str:
    if text.startswith("hex:"):
        return from_hex(text[4:])
    if set(text) - {"0", "1"}:
        raise argparse.ArgumentTypeError(f"not a bitstring: {text!r}")
    return text


def cmd_profile(args) -> int:
    if args.read:
        prof = ComplexityProfile.from_text(Path(args.read).read_text())
    else:
        prof = complexity_profile(args.n, args.cond, args.s, args.lmax, allow_large=args.allow_large)
    _write(prof.to_text(), args.out)
    return EXIT_OK


def cmd_design(args) -> int:
    design = load_design(args.spec)  # construction re-audits the rho bound
    _write(design.to_text(), args.out)
    return EXIT_OK


def cmd_nw(args) -> int:
    gen = Generator(load_design(args.design), load_predicate(args.predicate))
    if args.n is None:
        _write(generate(gen, args.seed, len(gen.design)) + "\n", args.out)
        return EXIT_OK
    table = seedsearch.table_for_seed(gen, args.seed, args.n, args.m)
    _write(format_table(table), args.out)
    return EXIT_OK


def _profile_arg(path: str | None, length: int, s: int, l_max: int) -> ComplexityProfile:
    if path:
        return ComplexityProfile.from_text(Path(path).read_text())
    return complexity_profile(length, "", s, l_max)


def cmd_sample(args) -> int:
    b = parse_fraction(args.bmult)
    prof_n = _profile_arg(args.profile, args.n, args.s, args.lmax)
    prof_m = _profile_arg(args.colour_profile, args.m, args.s, args.lmax)
    sys_s = seedsearch.build_system_s(prof_n, args.k)
    sys_q = seedsearch.build_system_q(prof_m, args.q)
    stats = balance.sample_balance_fraction(args.n, args.m, sys_s, sys_q, b, args.trials, args.rng_seed,
                                            jobs=args.jobs)
    _write(dump_json(json.loads(stats.to_json())), args.report)
    if args.emit_table:
        from .bitcore import random_table

        Path(args.emit_table).write_text(format_table(random_table(args.n, args.m, args.rng_seed, 0)))
    return EXIT_OK


def cmd_search(args) -> int:
    sp = seedsearch.SearchParams(args.n, args.m, args.s, args.k, args.q, args.lmax, parse_fraction(args.bmult),
                                 args.mode, parse_range(args.seed_range))
    gen = Generator(load_design(args.design), load_predicate(args.predicate))
    prof_n = complexity_profile(sp.n, "", sp.s, sp.l_max)
    prof_m = complexity_profile(sp.m, "", sp.s, sp.l_max)
    conds = None
    if sp.mode == "rainbow":
        conds = {v: complexity_profile(sp.m, v, sp.s, sp.l_max) for v in all_strings(sp.n)}
    systems = seedsearch.build_systems(sp, prof_n, prof_m, conds)
    report = seedsearch.find_good_seed(gen, sp, systems, jobs=args.jobs)
    _write(dump_json(report.to_dict(sp)), args.report)
    return EXIT_OK


def cmd_verify(args) -> int:
    table_path, params_path = Path(args.table), Path(args.params)
    for p in (table_path, params_path):
        if not p.is_file():
            raise ConfigError(f"file not found: {p}")
    cfg = ExperimentConfig.from_text(params_path.read_text(), base=params_path.parent)
    ep = cfg.extractor_params()
    table = parse_table(table_path.read_text())
    if (table.n, table.m) != (ep.n, ep.m):
        raise ConfigError(f"table is n={table.n} m={table.m}, params say n={ep.n} m={ep.m}")
    if args.oracle == "bvm":
        oracle = BvmOracle(ep)
    elif args.oracle.startswith("stub:"):
        path = Path(args.oracle[5:])
        if not path.is_file():
            raise ConfigError(f"stub oracle file not found: {path}")
        oracle = StubOracle.from_text(path.read_text())
    else:
        raise ConfigError(f"oracle must be bvm or stub:file, got {args.oracle!r}")
    if args.mode == "audit":
        sp = seedsearch.SearchParams(ep.n, ep.m, ep.s, ep.k, ep.q, ep.l_max, ep.b_mult, cfg.mode, (0, 1))
        audit = dichotomy_audit(table, ep, oracle, systems_for(ep, sp, oracle), strong=cfg.mode == "rainbow")
        out = {"params": ep.to_dict(), **audit.to_dict()}
    else:
        rep = (verify_strong if args.mode == "strong" else verify_plain)(table, ep, oracle)
        out = rep.to_dict(ep)
    _write(dump_json(out), args.report)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cfg = ExperimentConfig.from_text(path.read_text(), base=path.parent)
    if args.jobs is not None:
        cfg.jobs = args.jobs
    summary = run_pipeline(cfg, Path(args.out_dir))
    _write(dump_json(summary), None)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kolext", description="Space-bounded Kolmogorov extractor laboratory.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="compute or re-emit a complexity profile")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--s", type=int, default=1)
    p.add_argument("--lmax", type=int, default=9)
    p.add_argument("--cond", default="", type=_condition_arg,
                   help="condition as a bitstring, or hex:<marker-bit hex>")
    p.add_argument("--read", help="read a profile file instead of enumerating")
    p.add_argument("--allow-large", action="store_true", help="permit lmax above 24")
    p.add_argument("--out")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("design", help="build and audit a combinatorial design")
    p.add_argument("spec", help="poly:q,d | greedy:l,t,rho,N | file:path")
    p.add_argument("--out")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("nw", help="emit generator output (as a table file when --n/--m given)")
    p.add_argument("--design", required=True)
    p.add_argument("--predicate", default="parity")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_nw)

    p = sub.add_parser("sample", help="Monte Carlo share of random tables passing weak balance")
    for flag in ("n", "m", "k", "q"):
        p.add_argument(f"--{flag}", type=int, required=True)
    p.add_argument("--s", type=int, default=1)
    p.add_argument("--lmax", type=int, default=0)
    p.add_argument("--profile", help="profile file over length-n strings")
    p.add_argument("--colour-profile", help="profile file over length-m colours")
    p.add_argument("--bmult", default="201/100")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--emit-table", help="also write trial 0's table to this file")
    p.add_argument("--report")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("search", help="scan generator seeds for a good table")
    for flag in ("n", "m", "s", "k", "q", "lmax"):
        p.add_argument(f"--{flag}", type=int, required=True)
    p.add_argument("--bmult", default="201/100")
    p.add_argument("--mode", choices=("plain", "rainbow"), default="plain")
    p.add_argument("--design", required=True)
    p.add_argument("--predicate", default="parity")
    p.add_argument("--seed-range", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--report")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("verify", help="verify the extractor property of a table")
    p.add_argument("--table", required=True)
    p.add_argument("--params", required=True, help="experiment config file")
    p.add_argument("--mode", choices=("plain", "strong", "audit"), default="plain")
    p.add_argument("--oracle", default="bvm", help="bvm | stub:file")
    p.add_argument("--report")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("pipeline", help="run the full experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default="kolext-out")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_pipeline)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, KolextError, ValueError) as exc:
        print(f"kolext {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
