"""Space-bounded Kolmogorov extractors: machine, balance checks, generator, seed search, verification."""

from .bitcore import (
    BitString,
    KolextError,
    LevelSet,
    Palette,
    Table,
    all_strings,
    decode_pair,
    encode_pair,
    from_hex,
    random_table,
    to_hex,
)
from .bvm import MACHINE_VERSION, ComplexityProfile, Outcome, Program, RunBudget, complexity_profile, ks, run
from .kextract import (
    BvmOracle,
    ExtractorParams,
    StubOracle,
    dichotomy_audit,
    verify_plain,
    verify_strong,
)
from .nwgen import Design, Generator, Predicate, generate, greedy_design, poly_design
from .seedsearch import SearchParams, build_systems, find_good_seed, seed_is_good

__version__ = "0.1.0"
