"""Acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line (run pytest with -s to see them
all).  Tolerances are pinned here and nowhere else.
"""

import random
import time

import pytest

from depred.analysis import ArgRef
from depred.engine import ReductionOptions, run_reduction
from depred.grammars import encode_cfg, measure_growth, string_predicates
from depred.oracle import check_equivalence, default_queries, sld_solve
from depred.terms import (
    Literal,
    Var,
    canonical_clause,
    normalize_program,
    parse_program,
)

from conftest import (
    PARSE_ACTIVE,
    PARSE_SOURCE,
    PQ_SOURCE,
    SEED,
    cyk_accepts,
    random_chain_grammar,
    random_cfg,
    random_horn_program,
)


def report(name: str, ok: bool, detail: str = "") -> None:
    print(f"{name}: {'PASS' if ok else 'FAIL'}{' - ' + detail if detail else ''}")
    assert ok, f"{name} failed: {detail}"


def canon(text: str) -> str:
    return canonical_clause(parse_program(text).clauses[0])


# ---------------------------------------------------------------------------
# 1. Worked-example replay
# ---------------------------------------------------------------------------

def test_ac1_worked_example_replay():
    t0 = time.monotonic()
    program = parse_program(PQ_SOURCE)
    state = run_reduction(program, {"p"})
    elapsed = time.monotonic() - t0

    steps = max((e.step for e in state.trace), default=0)
    got = {canonical_clause(c) for c in state.program.clauses}
    labels = {c.label for c in state.program.clauses}
    expected = [
        "<- p1 & q1(U,Y) & r(Y,Z).",            # (A')
        "<- p1 & q2(U) & r1(Z).",               # (A'')
        "q2(U) <- U=b.",                        # (D')
        "q1(U,Z) <- U=g(V) & q1(V,Y) & Y=f(Z).",  # (E')
    ]
    missing = [t for t in expected if canon(t) not in got]
    memo_shapes = sorted((e.base, e.mover, e.arg, e.arity) for e in state.memo)
    want_memo = sorted([
        ("p", "p", 1, 0),    # p1: p extracted from itself
        ("q", "p", 2, 2),    # q1(U,Y) == some X { q(U,X,Y) & p(X) }
        ("q1", "p", 2, 1),   # q2(U)  == some X { q1(U,X) & p(X) }
        ("r", "p", 1, 1),    # r1(Z)  == some Y { r(Y,Z) & p(Y) }
    ])
    ok = (
        steps <= 50
        and not missing
        and "A" in state.replaced
        and {"D", "E"} <= labels
        and memo_shapes == want_memo
        and not state.truncated
        and elapsed < 1.0
    )
    report("AC1 (worked-example replay)", ok,
           f"steps={steps} missing={missing} memo={memo_shapes} {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 2. Left-corner replay
# ---------------------------------------------------------------------------

def test_ac2_left_corner_replay():
    t0 = time.monotonic()
    program = parse_program(PARSE_SOURCE)
    state = run_reduction(program, PARSE_ACTIVE)
    elapsed = time.monotonic() - t0

    links = {l.link_id: l for l in state.dlinks}

    def link_between(a, b):
        for l in state.dlinks:
            if frozenset(l.ends[0] | l.ends[1]) == frozenset({a, b}):
                return l
        return None

    alpha = link_between(ArgRef("str0", 1), ArgRef("det", 1))
    events = list(state.trace)

    # str0 passed along the precompiled link alpha
    first = events[0]
    ok_alpha = (
        alpha is not None and alpha.origin == "static" and alpha.maximal
        and first.kind == "pass-down" and first.detail.get("mover") == "str0"
        and first.detail.get("link") == alpha.link_id
    )

    got = {canonical_clause(c) for c in state.program.clauses}
    goldens = {
        "(d')": "det1(Y) <- str1(Y).",
        "det''": "det2.",
        "(c')": "np1(Z) <- det2 & n1(Z).",
        "(e')": "n1(Y) <- str2(Y).",
        "(b')": "s1(Z) <- np2 & vp1(Z).",
    }
    missing = [name for name, text in goldens.items() if canon(text) not in got]

    # the gap over (a)(b)(c) is consulted to derive (c'), with dynamic pi
    pi = link_between(ArgRef("np1", 1), ArgRef("n1", 1))
    expand_events = [e for e in events if e.kind == "gap-expand" and e.detail.get("derived")]
    ok_gap = bool(expand_events) and any(
        "c'" in e.detail.get("derived", []) for e in expand_events
    )
    ok_pi = pi is not None and pi.origin == "dynamic"

    # str2 moved along the composed maximal link tau = pi . theta
    tau = link_between(ArgRef("np1", 1), ArgRef("str2", 1))
    ok_tau = (
        tau is not None
        and tau.maximal
        and pi is not None
        and pi.link_id in tau.composed_of
        and any(
            e.kind == "pass-up"
            and e.detail.get("mover") == "str2"
            and e.detail.get("link") == tau.link_id
            for e in events
        )
    )

    ok = ok_alpha and not missing and ok_gap and ok_pi and ok_tau and elapsed < 1.0
    report("AC2 (left-corner replay)", ok,
           f"alpha={ok_alpha} missing={missing} gap={ok_gap} pi={ok_pi} tau={ok_tau} {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 3. Left-corner emergence properties
# ---------------------------------------------------------------------------

def test_ac3_left_corner_emergence():
    rng = random.Random(SEED)
    violations = []
    for trial in range(25):
        grammar, sentence = random_chain_grammar(rng)
        assert len(sentence) <= 8 and len(grammar.binary) + len(grammar.lexical) <= 8
        program = encode_cfg(grammar, sentence)
        state = run_reduction(program, string_predicates(sentence))
        rule_labels = {
            c.label: ("X", "Y", "Z")
            for c in program.clauses
            if c.label.startswith("r")
        }
        final = {c.label: c for c in state.program.clauses}
        for ev in state.trace:
            src = ev.detail.get("source")
            if src not in rule_labels or "derived" not in ev.detail:
                continue
            derived = final.get(ev.detail["derived"])
            if derived is None:
                continue
            survivors = {
                v.name for lit in derived.literals for v in lit.args if isinstance(v, Var)
            }
            folded = set(rule_labels[src]) - survivors
            rightmost = rule_labels[src][-1]
            if len(folded) < 2:
                violations.append((trial, src, "fewer than two positions bound"))
            if rightmost in folded:
                violations.append((trial, src, "rightmost position instantiated"))
    report("AC3 (left-corner emergence)", not violations, f"violations={violations[:3]}")


# ---------------------------------------------------------------------------
# 4. Semantic preservation
# ---------------------------------------------------------------------------

def test_ac4_semantic_preservation():
    t0 = time.monotonic()
    cases = [
        (parse_program(PQ_SOURCE), frozenset({"p"})),
        (parse_program(PARSE_SOURCE), PARSE_ACTIVE),
    ]
    rng = random.Random(SEED)
    while len(cases) < 22:
        cases.append((random_horn_program(rng), None))
    discrepancies = 0
    states_checked = 0
    for program, active in cases:
        base = normalize_program(program)
        queries = default_queries(base)
        state = run_reduction(program, active,
                              ReductionOptions(max_steps=60, keep_snapshots=True))
        for snap in state.snapshots:
            states_checked += 1
            if not check_equivalence(base, snap, queries, depth=8).equal:
                discrepancies += 1
    elapsed = time.monotonic() - t0
    ok = discrepancies == 0 and elapsed < 60.0
    report("AC4 (semantic preservation)", ok,
           f"programs=22 states={states_checked} discrepancies={discrepancies} {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 5. Growth slopes
# ---------------------------------------------------------------------------

def test_ac5_growth_slopes():
    t0 = time.monotonic()
    cfg = measure_growth("cfg", range(2, 9))
    cfg_slope = cfg.slope("events")
    tag = measure_growth("tag", range(2, 9))
    tag_space = tag.slope("clause_instances")
    tag_steps = tag.slope("events")
    elapsed = time.monotonic() - t0
    ok = (
        cfg_slope is not None and abs(cfg_slope - 1.0) <= 0.3
        and tag_space is not None and tag_space <= 5.5
        and tag_steps is not None and tag_steps <= 6.5
        and elapsed < 120.0
    )
    report("AC5 (growth slopes)", ok,
           f"cfg_steps={cfg_slope:.2f} tag_space={tag_space:.2f} tag_steps={tag_steps:.2f} {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 6. Strategy ablation
# ---------------------------------------------------------------------------

def test_ac6_strategy_ablation():
    program = parse_program(PQ_SOURCE)
    default = run_reduction(program, {"p"})
    # predicates created while passing p beyond its first insertion
    passing = [e for e in default.memo if e.kind in ("exit", "insert")]
    ok_default = passing and max(e.arity for e in passing) <= 1

    downward = run_reduction(parse_program(PQ_SOURCE), {"p"},
                             ReductionOptions(downward_only=True, max_steps=30))
    combos = [e for e in downward.memo if e.kind == "combine"]
    beyond_first = combos[1:] if combos else []
    ok_down = bool(beyond_first) and max(e.arity for e in beyond_first) >= 2
    ok = bool(ok_default and ok_down)
    report("AC6 (strategy ablation)", ok,
           f"default_passing={[(e.name, e.arity) for e in passing]} "
           f"downward_combines={[(e.name, e.arity) for e in combos]}")


# ---------------------------------------------------------------------------
# 7. Recognition oracle
# ---------------------------------------------------------------------------

def test_ac7_recognition_oracle():
    rng = random.Random(SEED + 7)
    mismatches = []
    for trial in range(50):
        grammar, words = random_cfg(rng)
        n = rng.randint(1, 5)
        sentence = [rng.choice(words) for _ in range(n)]
        try:
            program = encode_cfg(grammar, sentence)
        except Exception:
            mismatches.append((trial, "encode failed"))
            continue
        # string-first query, with the whole input consumed (QY = nil)
        query = (
            Literal("str0", (Var("QX"),)),
            Literal(grammar.start.lower(), (Var("QX"), Var("QY"))),
            Literal("=", (Var("QY"), parse_program("<- p(nil).").clauses[0].body[0].args[0])),
        )
        answers = sld_solve(program, query, depth=2 * n + 8)
        accepted = not answers.empty
        if accepted != cyk_accepts(grammar, sentence):
            mismatches.append((trial, grammar, sentence))
    report("AC7 (recognition oracle)", not mismatches, f"mismatches={mismatches[:2]}")
