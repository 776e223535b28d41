"""Grammar frontends: encode CFGs and TAGs as Horn-clause programs.

A context-free grammar with binary and lexical rules becomes a program in
the difference-list style: a binary rule A -> B C becomes
``a(X,Z) <- b(X,Y) & c(Y,Z).``, a lexical rule A -> 'w' becomes
``a(X,Y) <- X=w(Y).``, and the input string w1..wn becomes the chain
``str0(X) <- X=w1(Y) & str1(Y).`` ... ``strn(X) <- X=nil.`` with the top
clause ``<- s(X,Y) & str0(X).``.

A TAG auxiliary tree spans two strings (differential lists); its predicate
carries four positions.  An adjunction rule decomposes a tree into two, and
an anchor rule ties the two spans to lexical material.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .engine import ReductionOptions, run_reduction
from .terms import Clause, Fn, Literal, Program, Var


class GrammarError(Exception):
    pass


class LexiconError(GrammarError):
    pass


@dataclass(frozen=True)
class CFGrammar:
    start: str
    binary: tuple[tuple[str, str, str], ...]    # A -> B C
    lexical: tuple[tuple[str, str], ...]        # A -> 'w'

    def __post_init__(self) -> None:
        if not any(r[0] == self.start for r in self.binary + self.lexical):
            raise GrammarError(f"start symbol {self.start!r} has no rule")

    @property
    def nonterminals(self) -> frozenset[str]:
        out = {a for a, _, _ in self.binary} | {a for a, _ in self.lexical}
        out |= {b for _, b, _ in self.binary} | {c for _, _, c in self.binary}
        return frozenset(out)

    @property
    def terminals(self) -> frozenset[str]:
        return frozenset(w for _, w in self.lexical)


def parse_grammar(text: str) -> CFGrammar:
    """Grammar file format: a "start: S" header, then "A -> B C" and
    "A -> 'word'" lines.  "%" starts a comment."""
    start = None
    binary: list[tuple[str, str, str]] = []
    lexical: list[tuple[str, str]] = []
    for raw in text.splitlines():
        line = raw.split("%")[0].strip()
        if not line:
            continue
        if line.startswith("start:"):
            start = line.split(":", 1)[1].strip()
            continue
        if "->" not in line:
            raise GrammarError(f"unrecognized grammar line: {raw!r}")
        lhs, rhs = (part.strip() for part in line.split("->", 1))
        parts = rhs.split()
        if len(parts) == 1 and parts[0].startswith("'") and parts[0].endswith("'"):
            lexical.append((lhs, parts[0].strip("'")))
        elif len(parts) == 2:
            binary.append((lhs, parts[0], parts[1]))
        else:
            raise GrammarError(f"rules must be binary or lexical: {raw!r}")
    if start is None:
        raise GrammarError("missing start: header")
    return CFGrammar(start, tuple(binary), tuple(lexical))


def _pred(symbol: str) -> str:
    name = symbol.lower()
    if not name[0].isalpha():
        raise GrammarError(f"cannot encode symbol {symbol!r} as a predicate")
    return name


def encode_cfg(grammar: CFGrammar, sentence: list[str] | tuple[str, ...]) -> Program:
    """Encode a grammar plus an input string, nil-terminated."""
    if not sentence:
        raise GrammarError("sentence must be non-empty")
    lexicon = grammar.terminals
    for w in sentence:
        if w not in lexicon:
            raise LexiconError(f"word {w!r} not in lexicon")
    clauses = [
        Clause("top", None, (
            Literal(_pred(grammar.start), (Var("X"), Var("Y"))),
            Literal("str0", (Var("X"),)),
        ))
    ]
    for idx, (a, b, c) in enumerate(grammar.binary, start=1):
        clauses.append(Clause(
            f"r{idx}",
            Literal(_pred(a), (Var("X"), Var("Z"))),
            (Literal(_pred(b), (Var("X"), Var("Y"))), Literal(_pred(c), (Var("Y"), Var("Z")))),
        ))
    for idx, (a, w) in enumerate(grammar.lexical, start=1):
        clauses.append(Clause(
            f"w{idx}",
            Literal(_pred(a), (Var("X"), Var("Y"))),
            (Literal("=", (Var("X"), Fn(w, (Var("Y"),)))),),
        ))
    n = len(sentence)
    for i, w in enumerate(sentence):
        clauses.append(Clause(
            f"s{i}",
            Literal(f"str{i}", (Var("X"),)),
            (
                Literal("=", (Var("X"), Fn(w, (Var("Y"),)))),
                Literal(f"str{i + 1}", (Var("Y"),)),
            ),
        ))
    clauses.append(Clause(
        f"s{n}", Literal(f"str{n}", (Var("X"),)),
        (Literal("=", (Var("X"), Fn("nil"))),),
    ))
    return Program(tuple(clauses))


def string_predicates(sentence: list[str] | tuple[str, ...]) -> frozenset[str]:
    return frozenset(f"str{i}" for i in range(len(sentence) + 1))


# ---------------------------------------------------------------------------
# Tree-adjoining grammars
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TAGRule:
    """Either an adjunction t = u . v over 4-argument tree predicates, or a
    lexical anchor t = 'left' 'right' binding the two spans."""
    target: str
    left: str | None = None       # adjunction: inner trees
    right: str | None = None
    words: tuple[str, str] | None = None   # anchor: (left word, right word)

    @property
    def is_anchor(self) -> bool:
        return self.words is not None


def parse_tag(text: str) -> list[TAGRule]:
    """TAG rule lines: "a/4 = b/4 . c/4" for adjunction,
    "a/4 = 'x' 'y'" for a lexical anchor."""
    rules = []
    for raw in text.splitlines():
        line = raw.split("%")[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise GrammarError(f"unrecognized TAG line: {raw!r}")
        lhs, rhs = (part.strip() for part in line.split("=", 1))
        target = lhs.split("/")[0].strip()
        parts = rhs.split()
        if len(parts) == 2 and all(p.startswith("'") for p in parts):
            rules.append(TAGRule(target, words=(parts[0].strip("'"), parts[1].strip("'"))))
        elif len(parts) == 3 and parts[1] == ".":
            rules.append(TAGRule(target, left=parts[0].split("/")[0], right=parts[2].split("/")[0]))
        else:
            raise GrammarError(f"malformed TAG rule: {raw!r}")
    return rules


def encode_tag(rules: list[TAGRule], sentence: list[str] | tuple[str, ...]) -> Program:
    """Four-argument tree predicates over differential-list positions.

    t(X,Z,U,W) dominates the two strings X-Z and U-W.  An adjunction rule
    decomposes it into two inner trees; an anchor binds one word on each
    span.  The top clause requires one tree whose spans are adjacent and
    exhaust the input.
    """
    if not sentence:
        raise GrammarError("sentence must be non-empty")
    clauses: list[Clause] = []
    targets = sorted({r.target for r in rules})
    if targets:
        root = _pred(targets[0])
        clauses.append(Clause("top", None, (
            Literal("eq", (Var("Y"), Var("Y2"))),
            Literal("str0", (Var("X"),)),
            Literal("=", (Var("W"), Fn("nil"))),
            Literal(root, (Var("X"), Var("Y"), Var("Y2"), Var("W"))),
        )))
    for idx, r in enumerate(rules, start=1):
        if r.is_anchor:
            lw, rw = r.words  # type: ignore[misc]
            clauses.append(Clause(
                f"t{idx}",
                Literal(_pred(r.target), (Var("X"), Var("Z"), Var("U"), Var("W"))),
                (
                    Literal("=", (Var("X"), Fn(lw, (Var("Z"),)))),
                    Literal("=", (Var("U"), Fn(rw, (Var("W"),)))),
                ),
            ))
        else:
            assert r.left is not None and r.right is not None
            clauses.append(Clause(
                f"t{idx}",
                Literal(_pred(r.target), (Var("X"), Var("Z"), Var("U"), Var("W"))),
                (
                    Literal(_pred(r.left), (Var("X"), Var("Y"), Var("V"), Var("W"))),
                    Literal(_pred(r.right), (Var("Y"), Var("Z"), Var("U"), Var("V"))),
                ),
            ))
    n = len(sentence)
    for i, w in enumerate(sentence):
        clauses.append(Clause(
            f"s{i}",
            Literal(f"str{i}", (Var("X"),)),
            (
                Literal("=", (Var("X"), Fn(w, (Var("Y"),)))),
                Literal(f"str{i + 1}", (Var("Y"),)),
            ),
        ))
    clauses.append(Clause(
        f"s{n}", Literal(f"str{n}", (Var("X"),)),
        (Literal("=", (Var("X"), Fn("nil"))),),
    ))
    return Program(tuple(clauses))


def copy_language_rules() -> list[TAGRule]:
    """The a^n b^n fragment: one anchor and one adjunction over t/4."""
    return [
        TAGRule("t", words=("a", "b")),
        TAGRule("t", left="t", right="t"),
    ]


# ---------------------------------------------------------------------------
# Growth measurement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GrowthRow:
    n: int
    clause_instances: int   # clauses plus memo entries in the final state
    events: int             # total trace events


@dataclass(frozen=True)
class GrowthTable:
    frontend: str
    rows: tuple[GrowthRow, ...]

    def slope(self, field: str) -> float | None:
        """Least-squares log-log slope; None for fewer than two rows."""
        pts = [(math.log(r.n), math.log(max(1, getattr(r, field)))) for r in self.rows if r.n >= 1]
        if len(pts) < 2:
            return None
        mx = sum(x for x, _ in pts) / len(pts)
        my = sum(y for _, y in pts) / len(pts)
        num = sum((x - mx) * (y - my) for x, y in pts)
        den = sum((x - mx) ** 2 for x, y in pts)
        return num / den if den else 0.0

    def as_text(self) -> str:
        lines = [f"frontend: {self.frontend}", "n\tspace\tevents"]
        for r in self.rows:
            lines.append(f"{r.n}\t{r.clause_instances}\t{r.events}")
        s1, s2 = self.slope("clause_instances"), self.slope("events")
        if s1 is not None:
            lines.append(f"space slope: {s1:.3f}")
            lines.append(f"event slope: {s2:.3f}")
        return "\n".join(lines)


class TruncatedReduction(Exception):
    pass


def bench_grammar() -> CFGrammar:
    """Fixed unambiguous right-branching grammar used by the benchmark."""
    return CFGrammar("S", (("S", "A", "S"),), (("S", "a"), ("A", "a")))


def measure_growth(
    frontend: str,
    n_range: range,
    opts: ReductionOptions | None = None,
) -> GrowthTable:
    """Clause-instance and trace-event counts of final states per length n."""
    rows = []
    for n in n_range:
        if frontend == "cfg":
            g = bench_grammar()
            sentence = ["a"] * n
            program = encode_cfg(g, sentence)
        elif frontend == "tag":
            if n % 2:
                continue
            sentence = ["a"] * (n // 2) + ["b"] * (n // 2)
            program = encode_tag(copy_language_rules(), sentence)
        else:
            raise ValueError(f"unknown frontend {frontend!r}")
        active = string_predicates(sentence)
        state = run_reduction(program, active, opts or ReductionOptions(max_steps=2000))
        if state.truncated:
            raise TruncatedReduction(f"reduction truncated at n={n}")
        rows.append(GrowthRow(
            n=n,
            clause_instances=len(state.program.clauses) + len(state.memo),
            events=len(state.trace),
        ))
    return GrowthTable(frontend, tuple(rows))
