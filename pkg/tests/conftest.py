import os
import random
from pathlib import Path

import pytest

from depred.terms import Clause, Fn, Literal, Program, Var, normalize_program, parse_program

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

SEED = int(os.environ.get("DEPRED_SEED", "0"))

PQ_SOURCE = (FIXTURES / "pq.hc").read_text(encoding="utf-8")
PARSE_SOURCE = (FIXTURES / "parse.hc").read_text(encoding="utf-8")


@pytest.fixture
def pq_program() -> Program:
    return parse_program(PQ_SOURCE)


@pytest.fixture
def parse_program_fixture() -> Program:
    return parse_program(PARSE_SOURCE)


PARSE_ACTIVE = frozenset({"str0", "str1", "str2", "str3"})


# ---------------------------------------------------------------------------
# Random Horn programs (for preservation checks)
# ---------------------------------------------------------------------------

def random_horn_program(rng: random.Random) -> Program:
    """Up to 10 clauses over predicates of arity <= 3, function depth <= 2."""
    preds = [("p", 1), ("q", 2), ("r", 3), ("s", 1)]
    funs = [("a", 0), ("b", 0), ("f", 1)]

    def mk_term(depth: int, vars: list[Var]):
        if depth <= 0 or rng.random() < 0.45:
            if vars and rng.random() < 0.6:
                return rng.choice(vars)
            return Fn(rng.choice(["a", "b"]))
        f, n = rng.choice(funs[2:])
        return Fn(f, tuple(mk_term(depth - 1, vars) for _ in range(n)))

    clauses = []
    n = rng.randint(3, 10)
    for i in range(n):
        vars = [Var(v) for v in "XYZW"[: rng.randint(1, 3)]]
        top = (i == 0) or rng.random() < 0.15
        head = None
        if not top:
            pr, ar = rng.choice(preds)
            head = Literal(pr, tuple(rng.choice(vars) for _ in range(ar)))
        body = []
        for _ in range(rng.randint(1, 3)):
            if rng.random() < 0.4:
                v = rng.choice(vars)
                body.append(Literal("=", (v, mk_term(2, [w for w in vars if w != v]))))
            else:
                pr, ar = rng.choice(preds)
                body.append(Literal(pr, tuple(
                    mk_term(1, vars) if rng.random() < 0.2 else rng.choice(vars)
                    for _ in range(ar)
                )))
        clauses.append(Clause(f"c{i}", head, tuple(body)))
    return Program(tuple(clauses))


# ---------------------------------------------------------------------------
# Random grammars
# ---------------------------------------------------------------------------

def random_chain_grammar(rng: random.Random):
    """Unambiguous chain-shaped binary CFG with <= 8 rules, plus its unique
    sentence.  Returns (grammar, sentence)."""
    from depred.grammars import CFGrammar

    k = rng.randint(2, 4)  # chain length
    words = rng.sample(
        ["alpha", "bravo", "carol", "delta", "edgar", "fovea", "gamma", "hotel"], k
    )
    binary = tuple((f"N{i}", f"T{i}", f"N{i + 1}") for i in range(1, k))
    lexical = tuple((f"T{i}", words[i - 1]) for i in range(1, k)) + ((f"N{k}", words[k - 1]),)
    sentence = [words[i - 1] for i in range(1, k)] + [words[k - 1]]
    return CFGrammar("N1", binary, lexical), sentence


def random_cfg(rng: random.Random):
    """Random binary CFG without left recursion (left children strictly
    descend a tier order), possibly ambiguous."""
    from depred.grammars import CFGrammar

    nts = ["S", "B", "C", "D"][: rng.randint(2, 4)]
    words = ["u", "v", "w"][: rng.randint(1, 3)]
    tier = {nt: i for i, nt in enumerate(nts)}
    binary = []
    lexical = []
    for _ in range(rng.randint(1, 4)):
        a = rng.choice(nts[:-1])
        b = rng.choice([nt for nt in nts if tier[nt] > tier[a]])
        c = rng.choice(nts)
        binary.append((a, b, c))
    for nt in nts:
        if rng.random() < 0.8 or nt == nts[-1]:
            lexical.append((nt, rng.choice(words)))
    if not any(a == "S" for a, *_ in binary + lexical):
        lexical.append(("S", rng.choice(words)))
    return CFGrammar("S", tuple(binary), tuple(lexical)), words


def cyk_accepts(grammar, sentence: list[str]) -> bool:
    """Brute-force CYK membership over binary + lexical rules."""
    n = len(sentence)
    if n == 0:
        return False
    table: dict[tuple[int, int], set[str]] = {}
    for i, w in enumerate(sentence):
        table[(i, i + 1)] = {a for (a, word) in grammar.lexical if word == w}
    for span in range(2, n + 1):
        for i in range(0, n - span + 1):
            k = i + span
            cell = set()
            for j in range(i + 1, k):
                left = table.get((i, j), set())
                right = table.get((j, k), set())
                for (a, b, c) in grammar.binary:
                    if b in left and c in right:
                        cell.add(a)
            table[(i, k)] = cell
    return grammar.start in table.get((0, n), set())
