import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depred.terms import (
    Clause,
    Fn,
    Literal,
    ParseError,
    Var,
    alpha_equivalent,
    canonical_clause,
    format_program,
    normalize_clause,
    parse_program,
    unify,
)


def test_parse_top_clause():
    p = parse_program("<- p(X) & q(U,X,Y) & r(Y,Z).")
    (c,) = p.clauses
    assert c.head is None
    assert [(l.pred, l.arity) for l in c.body] == [("p", 1), ("q", 3), ("r", 2)]


def test_parse_fact_style_clause():
    p = parse_program("B: p(X) <- X=a.")
    c = p.by_label("B")
    assert c.head == Literal("p", (Var("X"),))
    assert c.body[0].is_eq


def test_parse_empty_file():
    assert parse_program("").clauses == ()


def test_parse_headless_fact_and_comments():
    p = parse_program("% comment\nfact: done.\n")
    c = p.by_label("fact")
    assert c.head == Literal("done") and c.body == ()


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as exc:
        parse_program("p(X <- q.")
    assert exc.value.line == 1
    assert exc.value.col > 1


def test_duplicate_label_rejected():
    with pytest.raises(ParseError):
        parse_program("A: p(X) <- X=a.\nA: q(X) <- X=b.\n")


def test_roundtrip_through_formatting(pq_program):
    again = parse_program(format_program(pq_program))
    assert again.clauses == pq_program.clauses


def test_normalize_splits_triple_occurrence():
    c = parse_program("<- q(X) & r(X) & s(X).").clauses[0]
    n = normalize_clause(c)
    junction = n.body[0]
    assert junction.is_junction and junction.arity == 3
    rest = [l.args[0] for l in n.body[1:]]
    assert set(rest) == set(junction.args)


def test_normalize_leaves_twice_occurring_alone(pq_program):
    for label in ("B", "E"):
        c = pq_program.by_label(label)
        assert normalize_clause(c) == c


def test_normalize_idempotent():
    c = parse_program("<- q(X) & r(X,X) & s(X).").clauses[0]
    once = normalize_clause(c)
    assert alpha_equivalent(normalize_clause(once), once)


def test_unify_binds_variable():
    s = unify(Fn("f", (Var("Y"),)), Fn("f", (Fn("a"),)))
    assert s == {Var("Y"): Fn("a")}


def test_unify_constant_clash():
    assert unify(Fn("a"), Fn("b")) is None


def test_unify_string_terms():
    s = unify(Fn("the", (Var("Y"),)), Fn("the", (Fn("boy", (Var("Z"),)),)))
    assert s == {Var("Y"): Fn("boy", (Var("Z"),))}


def test_unify_occurs_check():
    assert unify(Var("X"), Fn("f", (Var("X"),))) is None


simple_terms = st.recursive(
    st.sampled_from([Var("X"), Var("Y"), Fn("a"), Fn("b")]),
    lambda inner: st.builds(lambda t: Fn("f", (t,)), inner),
    max_leaves=4,
)


@settings(max_examples=60, deadline=None)
@given(simple_terms, simple_terms)
def test_unify_symmetric(t1, t2):
    assert (unify(t1, t2) is None) == (unify(t2, t1) is None)


def test_alpha_equivalence_of_renamings():
    c1 = parse_program("p(X) <- q(X,Y) & r(Y).").clauses[0]
    c2 = parse_program("p(A) <- q(A,B) & r(B).").clauses[0]
    assert alpha_equivalent(c1, c2)
    assert canonical_clause(c1) == canonical_clause(c2)
