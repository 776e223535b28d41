"""Independent correctness reference: depth-bounded SLD resolution.

This module depends only on the term layer.  It knows nothing about
dependency links or the memoization table; the engine hands it plain clause
programs.  Answers are enumerated left-to-right, depth-first, with a cutoff
on proof-tree depth (each clause resolution consumes one unit on its branch;
built-in equalities are free).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator

from .terms import (
    EQ,
    JUNCTION,
    Clause,
    Fn,
    Literal,
    Program,
    Subst,
    Term,
    Var,
    apply_to_clause,
    fresh_var,
    clause_vars,
    rename_apart,
    resolve,
    term_vars,
    unify,
)


@dataclass(frozen=True)
class AnswerSet:
    query: tuple[Literal, ...]
    depth: int
    answers: frozenset[tuple[str, ...]]
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.answers)

    @property
    def empty(self) -> bool:
        return not self.answers


def _canonical_answer(qvars: list[Var], s: Subst) -> tuple[str, ...]:
    """Render one answer substitution with canonically renamed free variables."""
    mapping: dict[Var, Var] = {}

    def canon(t: Term) -> Term:
        t = resolve(t, s)
        return _rename(t)

    def _rename(t: Term) -> Term:
        if isinstance(t, Var):
            if t not in mapping:
                mapping[t] = Var(f"_A{len(mapping) + 1}")
            return mapping[t]
        return Fn(t.functor, tuple(_rename(a) for a in t.args))

    return tuple(f"{v.name}={canon(v)!r}" for v in qvars)


def _solve(
    program: Program,
    goals: tuple[Literal, ...],
    s: Subst,
    depth: int,
    defs: dict[str, tuple[Clause, ...]],
) -> Iterator[Subst]:
    if not goals:
        yield s
        return
    goal, rest = goals[0], goals[1:]
    if goal.pred == EQ:
        s2 = unify(goal.args[0], goal.args[1], s)
        if s2 is not None:
            yield from _solve(program, rest, s2, depth, defs)
        return
    if goal.pred == JUNCTION:
        s2: Subst | None = dict(s)
        for a, b in zip(goal.args, goal.args[1:]):
            s2 = unify(a, b, s2)
            if s2 is None:
                return
        yield from _solve(program, rest, s2, depth, defs)
        return
    if depth <= 0:
        return
    for clause in defs.get(goal.pred, ()):
        c = rename_apart(clause)
        assert c.head is not None
        s2: Subst | None = dict(s)
        for a, b in zip(goal.args, c.head.args):
            s2 = unify(a, b, s2)
            if s2 is None:
                break
        if s2 is None:
            continue
        for s3 in _solve(program, c.body, s2, depth - 1, defs):
            yield from _solve(program, rest, s3, depth, defs)


def sld_solve(program: Program, query: tuple[Literal, ...] | list[Literal], depth: int) -> AnswerSet:
    """All answers with proof trees of depth at most `depth`, deduplicated."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    query = tuple(query)
    defs: dict[str, tuple[Clause, ...]] = {}
    for c in program.clauses:
        if c.head is not None:
            defs.setdefault(c.head.pred, ())
            defs[c.head.pred] = defs[c.head.pred] + (c,)
    qvars: list[Var] = []
    for lit in query:
        for a in lit.args:
            for v in term_vars(a):
                if v not in qvars:
                    qvars.append(v)
    answers = set()
    for s in _solve(program, query, {}, depth, defs):
        answers.add(_canonical_answer(qvars, s))
    return AnswerSet(query, depth, frozenset(answers))


# ---------------------------------------------------------------------------
# Equivalence checking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QueryReport:
    query: tuple[Literal, ...]
    equal: bool
    only_left: tuple[tuple[str, ...], ...]
    only_right: tuple[tuple[str, ...], ...]


@dataclass(frozen=True)
class EquivalenceReport:
    reports: tuple[QueryReport, ...]
    depth: int

    @property
    def equal(self) -> bool:
        return all(r.equal for r in self.reports)

    def as_text(self) -> str:
        lines = []
        for r in self.reports:
            q = " & ".join(map(repr, r.query))
            if r.equal:
                lines.append(f"ok    {q}")
            else:
                lines.append(f"DIFF  {q}")
                for w in r.only_left:
                    lines.append(f"      only in first:  {', '.join(w) or '(yes)'}")
                for w in r.only_right:
                    lines.append(f"      only in second: {', '.join(w) or '(yes)'}")
        verdict = "all queries agree" if self.equal else "DISCREPANCY FOUND"
        return "\n".join(lines + [verdict])

    def as_json(self) -> str:
        return json.dumps(
            {
                "equal": self.equal,
                "depth": self.depth,
                "queries": [
                    {
                        "query": " & ".join(map(repr, r.query)),
                        "equal": r.equal,
                        "only_left": [list(w) for w in r.only_left],
                        "only_right": [list(w) for w in r.only_right],
                    }
                    for r in self.reports
                ],
            },
            indent=2,
        )


def default_queries(p: Program) -> list[tuple[Literal, ...]]:
    """Top-clause bodies plus every defined predicate on fresh variables."""
    queries: list[tuple[Literal, ...]] = [c.body for c in p.top_clauses if c.body]
    for pred in p.predicates():
        arities = {c.head.arity for c in p.defs_of(pred)}
        for lit in (l for c in p.clauses for l in c.literals if l.pred == pred):
            arities.add(lit.arity)
        for n in sorted(arities):
            queries.append((Literal(pred, tuple(Var(f"Q{i}") for i in range(1, n + 1))),))
    return queries


def check_equivalence(
    p1: Program,
    p2: Program,
    queries: list[tuple[Literal, ...]] | None = None,
    depth: int = 8,
) -> EquivalenceReport:
    """Per-query comparison of depth-bounded answer sets of two programs."""
    if queries is None:
        queries = default_queries(p1)
    reports = []
    for q in queries:
        a1 = sld_solve(p1, q, depth)
        a2 = sld_solve(p2, q, depth)
        only_left = tuple(sorted(a1.answers - a2.answers))
        only_right = tuple(sorted(a2.answers - a1.answers))
        reports.append(QueryReport(tuple(q), a1.answers == a2.answers, only_left, only_right))
    return EquivalenceReport(tuple(reports), depth)
