"""Dependency reduction for Horn-clause programs.

A data-driven, tabulating transformation that eliminates dependency paths
connecting two non-variable terms while preserving proof trees, with
dependency-link compilation for skips; under the smallest-arity and
link-compilation strategies it realizes left-corner parsing.
"""

from .analysis import (
    Activity,
    ArgRef,
    DLink,
    DPath,
    GapLink,
    compile_dlinks,
    enumerate_dpaths,
    mark_active,
    refresh_dlinks,
    to_dot,
)
from .engine import (
    MemoEntry,
    PendingMover,
    ProgramState,
    Reduction,
    ReductionOptions,
    TraceEvent,
    absorb_equality,
    eliminate_ground_pair,
    fold_with_memo,
    reducible_pairs,
    run_reduction,
    select_move,
)
from .grammars import (
    CFGrammar,
    GrammarError,
    GrowthTable,
    LexiconError,
    TAGRule,
    copy_language_rules,
    encode_cfg,
    encode_tag,
    measure_growth,
    parse_grammar,
    parse_tag,
    string_predicates,
)
from .oracle import AnswerSet, check_equivalence, default_queries, sld_solve
from .terms import (
    Clause,
    Fn,
    Literal,
    ParseError,
    Program,
    ProgramError,
    Term,
    Var,
    alpha_equivalent,
    canonical_clause,
    format_clause,
    format_program,
    normalize_clause,
    normalize_program,
    parse_program,
    unify,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
