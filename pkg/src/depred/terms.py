"""First-order terms, literals, Horn clauses, and the textual program format.

A program is an ordered collection of labeled clauses.  A clause without a
head is a top clause (a query).  Equality ``X=t`` is a built-in body literal
and needs no defining clauses.  ``eq(V1,...,Vk)`` is the variadic junction
literal introduced by occurrence normalization; analysis code treats it as a
transparent junction where any two of its arguments are connected.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

EQ = "="          # built-in binary equality, written infix in source text
JUNCTION = "eq"   # variadic equality junction from normalization

BUILTINS = frozenset({EQ, JUNCTION})


@dataclass(frozen=True)
class Var:
    name: str

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Fn:
    functor: str
    args: tuple["Term", ...] = ()

    def __post_init__(self) -> None:
        if not self.functor:
            raise ValueError("functor name must be non-empty")

    def __repr__(self) -> str:
        if not self.args:
            return self.functor
        return f"{self.functor}({', '.join(map(repr, self.args))})"


Term = Var | Fn


@dataclass(frozen=True)
class Literal:
    pred: str
    args: tuple[Term, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def is_eq(self) -> bool:
        return self.pred == EQ

    @property
    def is_junction(self) -> bool:
        return self.pred == JUNCTION

    @property
    def is_builtin(self) -> bool:
        return self.pred in BUILTINS

    def __repr__(self) -> str:
        if self.is_eq:
            return f"{self.args[0]!r}={self.args[1]!r}"
        if not self.args:
            return self.pred
        return f"{self.pred}({', '.join(map(repr, self.args))})"


@dataclass(frozen=True)
class Clause:
    label: str
    head: Literal | None
    body: tuple[Literal, ...]

    @property
    def is_top(self) -> bool:
        return self.head is None

    @property
    def literals(self) -> tuple[Literal, ...]:
        """All literals, head first when present."""
        if self.head is None:
            return self.body
        return (self.head,) + self.body

    def __repr__(self) -> str:
        body = " & ".join(map(repr, self.body))
        if self.head is None:
            return f"<- {body}." if body else "<- ."
        if not self.body:
            return f"{self.head!r}."
        return f"{self.head!r} <- {body}."


class ProgramError(Exception):
    pass


class ParseError(ProgramError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{msg} (line {line}, column {col})")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Program:
    clauses: tuple[Clause, ...]

    def __post_init__(self) -> None:
        seen = set()
        for c in self.clauses:
            if c.label in seen:
                raise ProgramError(f"duplicate clause label {c.label!r}")
            seen.add(c.label)

    @property
    def top_clauses(self) -> tuple[Clause, ...]:
        return tuple(c for c in self.clauses if c.is_top)

    def by_label(self, label: str) -> Clause:
        for c in self.clauses:
            if c.label == label:
                return c
        raise KeyError(label)

    def defs_of(self, pred: str) -> tuple[Clause, ...]:
        return tuple(c for c in self.clauses if c.head is not None and c.head.pred == pred)

    def call_sites(self, pred: str) -> tuple[tuple[Clause, int], ...]:
        """All (clause, body index) pairs where pred is called."""
        out = []
        for c in self.clauses:
            for i, lit in enumerate(c.body):
                if lit.pred == pred:
                    out.append((c, i))
        return tuple(out)

    def predicates(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for c in self.clauses:
            for lit in c.literals:
                if not lit.is_builtin:
                    seen.setdefault(lit.pred, None)
        return tuple(seen)

    def defined_predicates(self) -> frozenset[str]:
        return frozenset(c.head.pred for c in self.clauses if c.head is not None)

    def external_predicates(self) -> frozenset[str]:
        """Body predicates without defining clauses; treated as external."""
        defined = self.defined_predicates()
        out = set()
        for c in self.clauses:
            for lit in c.body:
                if not lit.is_builtin and lit.pred not in defined:
                    out.add(lit.pred)
        return frozenset(out)

    def add(self, clause: Clause) -> "Program":
        return Program(self.clauses + (clause,))

    def remove(self, label: str) -> "Program":
        return Program(tuple(c for c in self.clauses if c.label != label))

    def replace(self, label: str, clause: Clause) -> "Program":
        return Program(tuple(clause if c.label == label else c for c in self.clauses))

    def __repr__(self) -> str:
        return format_program(self)


# ---------------------------------------------------------------------------
# Variables and substitutions
# ---------------------------------------------------------------------------

Subst = dict[Var, Term]


def walk(t: Term, s: Subst) -> Term:
    """Follow variable bindings to the representative term."""
    while isinstance(t, Var) and t in s:
        t = s[t]
    return t


def resolve(t: Term, s: Subst) -> Term:
    t = walk(t, s)
    if isinstance(t, Fn) and t.args:
        return Fn(t.functor, tuple(resolve(a, s) for a in t.args))
    return t


def resolve_literal(lit: Literal, s: Subst) -> Literal:
    return Literal(lit.pred, tuple(resolve(a, s) for a in lit.args))


def occurs(v: Var, t: Term, s: Subst) -> bool:
    t = walk(t, s)
    if t == v:
        return True
    if isinstance(t, Fn):
        return any(occurs(v, a, s) for a in t.args)
    return False


def unify(t1: Term, t2: Term, s: Subst | None = None) -> Subst | None:
    """Most general unifier with the occurs-check; None means failure."""
    s = dict(s) if s else {}
    stack = [(t1, t2)]
    while stack:
        a, b = stack.pop()
        a, b = walk(a, s), walk(b, s)
        if a == b:
            continue
        if isinstance(a, Var):
            if occurs(a, b, s):
                return None
            s[a] = b
        elif isinstance(b, Var):
            if occurs(b, a, s):
                return None
            s[b] = a
        else:
            if a.functor != b.functor or len(a.args) != len(b.args):
                return None
            stack.extend(zip(a.args, b.args))
    return s


def unify_literals(l1: Literal, l2: Literal, s: Subst | None = None) -> Subst | None:
    if l1.pred != l2.pred or len(l1.args) != len(l2.args):
        return None
    s = dict(s) if s else {}
    for a, b in zip(l1.args, l2.args):
        s2 = unify(a, b, s)
        if s2 is None:
            return None
        s = s2
    return s


def term_vars(t: Term, acc: list[Var] | None = None) -> list[Var]:
    """Variables in textual order, with repeats."""
    if acc is None:
        acc = []
    if isinstance(t, Var):
        acc.append(t)
    else:
        for a in t.args:
            term_vars(a, acc)
    return acc


def clause_vars(c: Clause) -> list[Var]:
    acc: list[Var] = []
    for lit in c.literals:
        for a in lit.args:
            term_vars(a, acc)
    return acc


_fresh_counter = itertools.count(1)


def fresh_var(hint: str = "G") -> Var:
    return Var(f"_{hint}{next(_fresh_counter)}")


def rename_apart(c: Clause) -> Clause:
    """Fresh copy of a clause; used before any cross-clause unification."""
    mapping: Subst = {}
    for v in clause_vars(c):
        if v not in mapping:
            mapping[v] = fresh_var(v.name.lstrip("_"))
    return apply_to_clause(c, mapping)


def apply_to_clause(c: Clause, s: Subst) -> Clause:
    head = resolve_literal(c.head, s) if c.head else None
    return Clause(c.label, head, tuple(resolve_literal(b, s) for b in c.body))


def canonical_clause(c: Clause) -> str:
    """Alpha-canonical rendering: variables renamed V1, V2, ... in order."""
    mapping: Subst = {}
    for v in clause_vars(c):
        if v not in mapping:
            mapping[v] = Var(f"V{len(mapping) + 1}")
    return format_clause(apply_to_clause(c, mapping), with_label=False)


def alpha_equivalent(c1: Clause, c2: Clause) -> bool:
    return canonical_clause(c1) == canonical_clause(c2)


# ---------------------------------------------------------------------------
# Normalization: every variable occurs at most twice in a clause
# ---------------------------------------------------------------------------

def normalize_clause(c: Clause) -> Clause:
    """Split variables with more than two occurrences.

    A variable with k > 2 occurrences is replaced by k fresh variables tied
    together by one variadic junction literal eq(V1,...,Vk), so each fresh
    variable occurs exactly twice (once at its site, once in the junction).
    """
    counts: dict[Var, int] = {}
    for v in clause_vars(c):
        counts[v] = counts.get(v, 0) + 1
    crowded = [v for v, n in counts.items() if n > 2]
    if not crowded:
        return c

    replacements: dict[Var, list[Var]] = {
        v: [Var(f"{v.name}_{i}") for i in range(1, counts[v] + 1)] for v in crowded
    }
    used = {v.name for v in counts}
    for v, vs in replacements.items():
        for i, nv in enumerate(vs):
            while nv.name in used:
                nv = Var(nv.name + "x")
            used.add(nv.name)
            vs[i] = nv

    cursors = {v: iter(vs) for v, vs in replacements.items()}

    def rw(t: Term) -> Term:
        if isinstance(t, Var):
            return next(cursors[t]) if t in cursors else t
        return Fn(t.functor, tuple(rw(a) for a in t.args))

    def rw_lit(lit: Literal) -> Literal:
        return Literal(lit.pred, tuple(rw(a) for a in lit.args))

    head = rw_lit(c.head) if c.head else None
    body = tuple(rw_lit(b) for b in c.body)
    junctions = tuple(
        Literal(JUNCTION, tuple(replacements[v])) for v in sorted(crowded, key=lambda v: v.name)
    )
    return Clause(c.label, head, junctions + body)


def normalize_program(p: Program) -> Program:
    return Program(tuple(normalize_clause(c) for c in p.clauses))


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+)
      | (?P<comment>%[^\n]*)
      | (?P<arrow><-)
      | (?P<name>[a-z][A-Za-z0-9_]*)
      | (?P<var>[A-Z_][A-Za-z0-9_]*)
      | (?P<punct>[().,&=:])
      | (?P<quoted>'[^']*')
    """,
    re.VERBOSE,
)


class _Tokens:
    def __init__(self, text: str):
        self.toks: list[tuple[str, str, int, int]] = []
        line, col = 1, 1
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if not m:
                raise ParseError(f"unexpected character {text[pos]!r}", line, col)
            kind = m.lastgroup or ""
            val = m.group()
            if kind not in ("ws", "comment"):
                self.toks.append((kind, val, line, col))
            for ch in val:
                if ch == "\n":
                    line += 1
                    col = 1
                else:
                    col += 1
            pos = m.end()
        self.i = 0

    def peek(self) -> tuple[str, str, int, int] | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self) -> tuple[str, str, int, int]:
        t = self.peek()
        if t is None:
            last = self.toks[-1] if self.toks else ("", "", 1, 1)
            raise ParseError("unexpected end of input", last[2], last[3])
        self.i += 1
        return t

    def expect(self, val: str) -> tuple[str, str, int, int]:
        t = self.next()
        if t[1] != val:
            raise ParseError(f"expected {val!r}, found {t[1]!r}", t[2], t[3])
        return t


def _parse_term(tk: _Tokens) -> Term:
    kind, val, line, col = tk.next()
    if kind == "var":
        return Var(val)
    if kind == "quoted":
        return Fn(val.strip("'"))
    if kind != "name":
        raise ParseError(f"expected a term, found {val!r}", line, col)
    nxt = tk.peek()
    if nxt and nxt[1] == "(":
        tk.next()
        args = [_parse_term(tk)]
        while tk.peek() and tk.peek()[1] == ",":  # type: ignore[index]
            tk.next()
            args.append(_parse_term(tk))
        tk.expect(")")
        return Fn(val, tuple(args))
    return Fn(val)


def _parse_literal(tk: _Tokens) -> Literal:
    t1 = _parse_term(tk)
    nxt = tk.peek()
    if nxt and nxt[1] == "=":
        tk.next()
        t2 = _parse_term(tk)
        return Literal(EQ, (t1, t2))
    if isinstance(t1, Var):
        kind, val, line, col = tk.toks[tk.i - 1]
        raise ParseError(f"a literal cannot be a bare variable {val!r}", line, col)
    return Literal(t1.functor, t1.args)


def _parse_body(tk: _Tokens) -> tuple[Literal, ...]:
    lits = [_parse_literal(tk)]
    while tk.peek() and tk.peek()[1] == "&":  # type: ignore[index]
        tk.next()
        lits.append(_parse_literal(tk))
    return tuple(lits)


def parse_program(text: str) -> Program:
    """Parse the textual program format.

    One clause per line style, terminated by ".".  "<-" separates head and
    body, "&" separates body literals, "%" starts a comment.  A top clause is
    written "<- body.".  An optional "label:" prefix names the clause.
    """
    tk = _Tokens(text)
    clauses: list[Clause] = []
    auto = itertools.count(1)
    seen_labels: set[str] = set()
    while tk.peek() is not None:
        label = None
        t = tk.peek()
        assert t is not None
        nxt = tk.toks[tk.i + 1] if tk.i + 1 < len(tk.toks) else None
        if t[0] in ("name", "var") and nxt and nxt[1] == ":":
            label = t[1]
            tk.next()
            tk.next()
        head: Literal | None
        if tk.peek() and tk.peek()[1] == "<-":  # type: ignore[index]
            tk.next()
            head = None
        else:
            head = _parse_literal(tk)
            if tk.peek() and tk.peek()[1] == "<-":  # type: ignore[index]
                tk.next()
            else:
                tk.expect(".")
                lbl = label or f"C{next(auto)}"
                if lbl in seen_labels:
                    raise ParseError(f"duplicate clause label {lbl!r}", t[2], t[3])
                seen_labels.add(lbl)
                clauses.append(Clause(lbl, head, ()))
                continue
        body: tuple[Literal, ...] = ()
        if tk.peek() and tk.peek()[1] != ".":  # type: ignore[index]
            body = _parse_body(tk)
        tk.expect(".")
        lbl = label or f"C{next(auto)}"
        if lbl in seen_labels:
            raise ParseError(f"duplicate clause label {lbl!r}", t[2], t[3])
        seen_labels.add(lbl)
        clauses.append(Clause(lbl, head, body))
    return Program(tuple(clauses))


# ---------------------------------------------------------------------------
# Formatting
# ---------------------------------------------------------------------------

def format_term(t: Term) -> str:
    return repr(t)


def format_literal(lit: Literal) -> str:
    return repr(lit)


def format_clause(c: Clause, with_label: bool = True) -> str:
    text = repr(c)
    if with_label:
        return f"{c.label}: {text}"
    return text


def format_program(p: Program) -> str:
    return "\n".join(format_clause(c) for c in p.clauses)
