"""The ten acceptance criteria, one test each, at their stated sizes and tolerances.

Each test records a one-line verdict (shown in the terminal summary) before
asserting, so a failing criterion still reports what was measured.
"""

import itertools
import json
import math
from fractions import Fraction
import time

import numpy as np
import pytest

from kolext import naive
from kolext.balance import (
    DEFAULT_B_MULT,
    RainbowTuple,
    SystemQ,
    SystemR,
    SystemS,
    is_balanced_exact,
    is_weak_balanced,
    is_weak_rainbow_balanced,
    plan_weak,
    row_marks,
    sample_balance_fraction,
    weak_balanced_batch,
)
from kolext.bitcore import LevelSet, Palette, Table, all_strings, colour_count, colours_from_bit_rows, parse_table, random_table, table_from_bits
from kolext.bvm import ComplexityProfile, Outcome, Program, RunBudget, complexity_profile, ks, max_steps, run
from kolext.cli import ExperimentConfig, dump_json, run_pipeline, strip_timing
from kolext.kextract import BvmOracle, Undecided, verify_plain, verify_strong
from kolext.nwgen import Generator, TestStatistic, distinguisher_gap, generate_batch, greedy_design, output_bit, poly_design
from kolext.seedsearch import SearchParams, Systems, build_systems, table_for_seed

from conftest import DATA, random_colours, record
from kfixtures import PLANT_PARAMS, planted, random_fixture
from test_kextract import roundtrip_all
from test_nwgen import brute_max_intersection

B = DEFAULT_B_MULT

# alpha values of criterion 7, frozen from the first validated run
FROZEN_ALPHA_RANDOM = (10000, 10000)   # (passes, trials)
FROZEN_ALPHA_NW = (65536, 65536)
FROZEN_ALPHA_RANDOM_M5 = (6107, 10000)
FROZEN_ALPHA_NW_M5 = (43968, 65536)


def programs(max_len):
    for length in range(max_len + 1):
        for v in range(1 << length):
            yield Program(format(v, f"0{length}b") if length else "")


def soundness_sweep(max_len):
    runs = halted = late = nondeterministic = looping = 0
    for p in programs(max_len):
        for inp in ("", "1"):
            for s in (1, 2):
                bound = max_steps(s, len(p.instructions), len(inp))
                budget = RunBudget(s, 10 * bound, 10 * bound)
                first, second = run(p, inp, budget), run(p, inp, budget)
                runs += 1
                nondeterministic += first != second
                if first.halted:
                    halted += 1
                    late += first.steps > bound
                looping += first.outcome is Outcome.STEPS_EXHAUSTED
    return runs, halted, late, nondeterministic, looping


def test_criterion_01_bvm_soundness():
    started = time.perf_counter()
    runs, halted, late, nondet, _ = soundness_sweep(10)
    elapsed = time.perf_counter() - started
    # programs of <= 10 bits cannot hold a jump (3 + 8 bits), so the sweep is
    # repeated up to 14 bits where looping programs exist
    runs14, _, late14, nondet14, loops14 = soundness_sweep(14)
    ok = late == nondet == 0 and late14 == nondet14 == 0 and elapsed < 10 and runs == 4 * (2**11 - 1)
    record(1, ok, f"{runs} runs (<=10 bits), {halted} halted, late halts {late}, nondeterministic {nondet}, "
                  f"{elapsed:.2f}s; extended <=14 bits: {runs14} runs, {loops14} loops, late halts {late14}")
    assert ok


def inf(v, l_max):
    return math.inf if v == l_max + 1 else v


def test_criterion_02_complexity_laws():
    started = time.perf_counter()
    problems = []
    for n in (1, 2):
        l_max = 9 * n
        profiles = {s: complexity_profile(n, "", s, l_max) for s in (1, 2, 3)}
        shorter = {s: complexity_profile(n, "", s, l_max - 1) for s in (1, 2, 3)}
        for s, prof in profiles.items():
            for level in range(l_max + 1):
                if len(prof.below(level)) > (1 << level) - 1:
                    problems.append(f"counting n={n} s={s} L={level}")
            for x in all_strings(n):
                if prof[x] > 9 * n:
                    problems.append(f"literal n={n} s={s} x={x}")
                if s < 3 and inf(prof[x], l_max) < inf(profiles[s + 1][x], l_max):
                    problems.append(f"space-monotone n={n} s={s} x={x}")
                if inf(shorter[s][x], l_max - 1) < inf(prof[x], l_max):
                    problems.append(f"lmax-monotone n={n} s={s} x={x}")
    exact = (ks("0", "", 1, 9), ks("1", "", 1, 9))
    if exact != (3, 6):
        problems.append(f"ks values {exact}")
    elapsed = time.perf_counter() - started
    ok = not problems and elapsed < 60
    record(2, ok, f"ks('0')={exact[0]} ks('1')={exact[1]}, {len(problems)} law violations, {elapsed:.2f}s")
    assert ok, problems


def _levelset(rng, n):
    members = [z for z in all_strings(n) if rng.random() < 0.7]
    return LevelSet.of(members, len(members).bit_length() + int(rng.integers(0, 2)))


def _palette(rng, m):
    pool = [0, 1] + rng.permutation(np.arange(2, 1 << m)).tolist()
    cols = pool[:int(rng.integers(0, (1 << m) // 2 + 1))]
    return Palette.of(cols, len(cols).bit_length() + int(rng.integers(0, 2)))


def _table(rng, n, m):
    if rng.random() < 0.5:
        return random_colours(rng, n, m)
    return Table(n, m, rng.integers(0, int(rng.integers(1, 3)), size=1 << (2 * n)))


def _tuple(rng, n, m):
    anchor = _levelset(rng, n)
    q = int(rng.integers(1, m + 1))
    pals = []
    for _ in anchor:
        pool = [0, 1] + rng.permutation(np.arange(2, 1 << m)).tolist()
        pals.append(Palette(tuple(pool[:int(rng.integers(0, min(1 << q, 1 << m)))]), q))
    return RainbowTuple(anchor, tuple(pals), q)


def test_criterion_03_oracle_equality():
    rng = np.random.default_rng(20261015)
    discrepancies = {"colour_count": 0, "weak": 0, "rainbow": 0}
    verdicts = {"weak": set(), "rainbow": set()}
    for _ in range(200):
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        t = _table(rng, n, m)
        s1, s2, pal = _levelset(rng, n), _levelset(rng, n), _palette(rng, m)
        discrepancies["colour_count"] += colour_count(t, s1, s2, pal) != naive.colour_count(
            t, s1.members, s2.members, set(pal.colours))
    for _ in range(200):
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        t = _table(rng, n, m)
        sys_s = SystemS(tuple(_levelset(rng, n) for _ in range(int(rng.integers(1, 4)))))
        sys_q = SystemQ(tuple(_palette(rng, m) for _ in range(int(rng.integers(1, 3)))))
        fast = is_weak_balanced(t, sys_s, sys_q, B)
        slow = naive.weak_balanced(t, [(s.members, s.level) for s in sys_s.sets],
                                   [(p.colours, p.level) for p in sys_q.palettes], B)
        batch = bool(weak_balanced_batch(t.colours[None, :], plan_weak(n, m, sys_s, sys_q, B))[0])
        discrepancies["weak"] += fast != slow or batch != fast[0]
        verdicts["weak"].add(fast[0])
    for _ in range(200):
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        t = _table(rng, n, m)
        sys_s = SystemS(tuple(_levelset(rng, n) for _ in range(int(rng.integers(1, 3)))))
        sys_r = SystemR(tuple(_tuple(rng, n, m) for _ in range(int(rng.integers(1, 3)))))
        k = int(rng.integers(1, 3))
        fast = is_weak_rainbow_balanced(t, sys_s, sys_r, k, B)
        slow = naive.weak_rainbow_balanced(
            t, [(s.members, s.level) for s in sys_s.sets],
            [(tp.anchor.members, [p.colours for p in tp.palettes], tp.level) for tp in sys_r.tuples], k, B)
        marks_ok = all(
            row_marks(t, s, tp, columns=c).tolist() == naive.rainbow_marks(
                t, s.members, tp.anchor.members, [p.colours for p in tp.palettes], c)
            for s in sys_s.sets for tp in sys_r.tuples for c in (False, True))
        discrepancies["rainbow"] += fast != slow or not marks_ok
        verdicts["rainbow"].add(fast[0])
    ok = sum(discrepancies.values()) == 0
    record(3, ok, f"200 instances per path, discrepancies {discrepancies}, "
                  f"weak verdicts seen {sorted(verdicts['weak'])}, rainbow verdicts seen {sorted(verdicts['rainbow'])}")
    assert ok


def rectangle_systems(t, k_size, q_count):
    sets = [LevelSet.of([all_strings(t.n)[i] for i in sub]) for sub in naive.subsets(t.side, k_size)]
    return SystemS(tuple(sets)), SystemQ((Palette.of(naive.popular(t, q_count)),))


def test_criterion_04_exact_implies_weak():
    exceptions = exact_passes = checked = 0
    tables = [table_from_bits("".join(bits), 1, 1) for bits in itertools.product("01", repeat=4)]
    tables += [random_table(2, 2, 404, i) for i in range(500)]
    for t in tables:
        for k_size in range(1, t.side + 1):
            for q_count in range(1, (1 << t.m) + 1):
                checked += 1
                if not is_balanced_exact(t, k_size, q_count):
                    continue
                exact_passes += 1
                exceptions += not is_weak_balanced(t, *rectangle_systems(t, k_size, q_count), 2)[0]
    ok = exceptions == 0 and exact_passes > 0
    record(4, ok, f"{len(tables)} tables, {checked} (K, Q) settings, {exact_passes} exact passes, "
                  f"{exceptions} weak failures")
    assert ok


def test_criterion_05_design_audit():
    started = time.perf_counter()
    poly = poly_design(5, 2)
    pairs = list(itertools.combinations(poly.sets, 2))
    poly_ok = len(poly) == 25 and len(pairs) == 300 and max(len(set(a) & set(b)) for a, b in pairs) <= 1
    greedy = greedy_design(16, 4, 2, 128)
    greedy_ok = len(greedy) == 128 and brute_max_intersection(greedy.sets) <= 2
    g = Generator(poly_design(3, 2))
    locality_breaks = 0
    for i, members in enumerate(g.design.sets):
        outside = [j for j in range(9) if j not in members]
        for seed in range(1 << 9):
            bit = output_bit(g, seed, i)
            locality_breaks += sum(output_bit(g, seed ^ (1 << (8 - j)), i) != bit for j in outside)
    elapsed = time.perf_counter() - started
    ok = poly_ok and greedy_ok and locality_breaks == 0 and elapsed < 5
    record(5, ok, f"poly(5,2): 25 sets/300 pairs ok={poly_ok}; greedy(16,4,2,128) ok={greedy_ok}; "
                  f"locality breaks at ground 9: {locality_breaks}; {elapsed:.2f}s")
    assert ok


def test_criterion_06_distinguisher_sanity():
    started = time.perf_counter()
    gaps = []
    for design in (poly_design(3, 2), greedy_design(12, 3, 2, 40), greedy_design(16, 4, 2, 128),
                   greedy_design(16, 1, 0, 16)):
        g = Generator(design)
        for i in range(0, len(design), max(1, len(design) // 8)):
            test = TestStatistic(i + 1, lambda a, i=i: a[:, i] == 1, Fraction(1, 2))
            gaps.append(distinguisher_gap(g, test))
    elapsed = time.perf_counter() - started
    ok = all(gap == 0 for gap in gaps) and elapsed < 30
    record(6, ok, f"{len(gaps)} single-bit tests, max gap {max(gaps)}, {elapsed:.2f}s")
    assert ok


def _alpha_pair(sys_s, sys_q, n, m, design):
    stats = sample_balance_fraction(n, m, sys_s, sys_q, B, 10000, 0)
    g = Generator(design)
    seeds = np.arange(1 << g.seed_bits, dtype=np.int64)
    plan = plan_weak(n, m, sys_s, sys_q, B)
    need = (1 << (2 * n)) * m
    nw_pass = sum(int(weak_balanced_batch(colours_from_bit_rows(generate_batch(g, chunk, need), n, m), plan).sum())
                  for chunk in np.array_split(seeds, 16))
    return stats, nw_pass, len(seeds)


def test_criterion_07_balance_fraction_random_vs_generator():
    started = time.perf_counter()
    prof_n = ComplexityProfile.from_text((DATA / "stub_profile_n3.txt").read_text())
    prof_m = ComplexityProfile.from_text((DATA / "stub_profile_m2.txt").read_text())
    params = SearchParams(3, 2, 3, 2, 1, prof_n.l_max, B, seed_range=(0, 1 << 16))
    systems = build_systems(params, prof_n, prof_m)
    design = greedy_design(16, 4, 2, 128)
    first = _alpha_pair(systems.s, systems.q, 3, 2, design)
    second = _alpha_pair(systems.s, systems.q, 3, 2, design)
    stats, nw_pass, nw_total = first
    reproducible = first == second and (stats.passes, stats.trials) == FROZEN_ALPHA_RANDOM \
        and (nw_pass, nw_total) == FROZEN_ALPHA_NW
    alpha_nw = nw_pass / nw_total
    holds = alpha_nw >= stats.alpha_hat / 2 - 3 * stats.sigma

    # the same measurement where the weakened check is not vacuous (m=5, singletons)
    sing_s = SystemS(tuple(LevelSet((z,), 1) for z in all_strings(2)))
    sing_q = SystemQ((Palette((0,), 1),))
    stats5, nw5, total5 = _alpha_pair(sing_s, sing_q, 2, 5, design)
    reproducible5 = (stats5.passes, stats5.trials) == FROZEN_ALPHA_RANDOM_M5 and (nw5, total5) == FROZEN_ALPHA_NW_M5
    holds5 = nw5 / total5 >= stats5.alpha_hat / 2 - 3 * stats5.sigma
    exact5 = (31 / 32) ** 16
    oracle5 = abs(stats5.alpha_hat - exact5) <= 4 * math.sqrt(exact5 * (1 - exact5) / stats5.trials)

    elapsed = time.perf_counter() - started
    ok = reproducible and reproducible5 and oracle5 and elapsed < 300
    finding = "" if holds and holds5 else " FINDING: inequality fails, recorded as measured gap"
    record(7, ok, f"n=3 m=2: alpha_random={stats.alpha_hat:.4f} (sigma {stats.sigma:.4f}), "
                  f"alpha_NW={alpha_nw:.4f}, inequality {'holds' if holds else 'fails'}; "
                  f"m=5 check: alpha_random={stats5.alpha_hat:.4f} (exact {exact5:.4f}), "
                  f"alpha_NW={nw5 / total5:.4f}, inequality {'holds' if holds5 else 'fails'}; "
                  f"reproducible={reproducible and reproducible5}; {elapsed:.1f}s{finding}")
    assert ok


def _pipeline_parts():
    cfg = ExperimentConfig.from_text((DATA / "pipeline_n3.cfg").read_text(), base=DATA)
    return cfg, cfg.extractor_params()


def test_criterion_08_pipeline_fixture(tmp_path):
    started = time.perf_counter()
    cfg, ep = _pipeline_parts()
    summary = run_pipeline(cfg, tmp_path)
    golden = (DATA / "pipeline_n3.golden.json").read_text()
    matches = dump_json(strip_timing(summary)) == golden
    verification, audit = summary.get("verification", {}), summary.get("audit", {})
    found = summary["found_seed"] is not None
    clean = not found or (verification["violations"] == [] and audit["dual_violations"] == []
                          and audit["precondition_ok"])
    # independent re-check of the verification with the loop-only verifier
    table = parse_table((tmp_path / "table.txt").read_text())
    oracle = BvmOracle(ep)

    def safe(fn):
        def call(*a):
            try:
                return fn(*a)
            except Undecided:
                return None
        return call

    def pair_above(x, y, thr):
        return bool(safe(oracle.pair_above)(x, y, thr))

    plain = safe(oracle.plain)
    count, bad = naive.verify(table, ep.n, ep.m, ep.k, ep.delta, ep.q,
                              lambda z: -1 if plain(z) is None else plain(z),
                              oracle.conditional, pair_above, False)
    naive_ok = count == verification.get("qualifying_pairs") and bad == []
    elapsed = time.perf_counter() - started
    ok = matches and clean and naive_ok and elapsed < 600
    record(8, ok, f"found_seed={summary['found_seed']}, qualifying={verification.get('qualifying_pairs')}, "
                  f"violations={len(verification.get('violations', []))}, "
                  f"dual violations={len(audit.get('dual_violations', []))}, golden match={matches}, "
                  f"naive verifier agrees={naive_ok}, q={ep.q}; {elapsed:.1f}s")
    assert ok


def test_criterion_09_planted_violations():
    started = time.perf_counter()
    outcomes = []
    for seed in range(10):
        t, oracle, plant = planted(seed, plant=(all_strings(2)[seed % 4], all_strings(2)[(seed * 3 + 1) % 4]))
        rep = verify_plain(t, PLANT_PARAMS, oracle)
        outcomes.append([(v.x, v.y) for v in rep.violations] == [plant])
        t, oracle, plant = planted(seed, strong=True)
        rep = verify_strong(t, PLANT_PARAMS, oracle)
        outcomes.append([(v.x, v.y, v.direction) for v in rep.violations] == [(*plant, "row")])
    from kolext.kextract import StubOracle

    t = Table.constant(2, 4, 9)
    vac = verify_plain(t, PLANT_PARAMS, StubOracle(default_plain=1, default_pairmin=0))
    clean = verify_strong(t, PLANT_PARAMS, StubOracle(default_plain=9, default_pairmin=99, default_cond=9))
    outcomes.append(vac.vacuous and not vac.violations)
    outcomes.append(not clean.vacuous and not clean.violations and clean.qualifying_pairs == 16)
    elapsed = time.perf_counter() - started
    ok = all(outcomes) and elapsed < 5
    record(9, ok, f"{sum(outcomes)}/{len(outcomes)} fixtures reported exactly as planted; {elapsed:.2f}s")
    assert ok


def test_criterion_10_certificate_roundtrip():
    total = failures = 0
    for seed in range(20):
        t, systems, params, _ = random_fixture(seed)
        try:
            total += roundtrip_all(t, systems, params)
        except AssertionError:
            failures += 1
    cfg, ep = _pipeline_parts()
    table = table_for_seed(Generator(greedy_design(16, 4, 2, 128)),
                           json.loads((DATA / "pipeline_n3.golden.json").read_text())["found_seed"], ep.n, ep.m)
    oracle = BvmOracle(ep)
    sp = cfg.search_params()
    own = build_systems(sp, oracle.profile(ep.n), oracle.profile(ep.m))
    pipeline_own = roundtrip_all(table, own, ep)
    # the working palette is empty at this q, so also use a full diagnostic palette
    full = Palette(tuple(range(1 << ep.m)), ep.m + 1)
    diag = Systems(own.s, SystemQ((full,)),
                   SystemR(tuple(RainbowTuple(s, (full,) * len(s), ep.m + 1) for s in own.s.sets)))
    pipeline_diag = roundtrip_all(table, diag, ep)
    ok = failures == 0 and total > 0 and pipeline_diag > 0
    record(10, ok, f"random fixtures: {total} certificates, {failures} failing fixtures; pipeline fixture: "
                   f"{pipeline_own} with its own systems, {pipeline_diag} with a full diagnostic palette")
    assert ok
