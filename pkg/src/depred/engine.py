"""The dependency-reduction engine.

Reduction eliminates dependency paths connecting two non-variable terms
while preserving proof trees.  A run is a sequence of journeys: a journey
picks the smallest-arity predicate on such a path (the mover), extracts it
from its call site, and passes it along maximal dependency links, deriving
new clauses as it crosses predicate definitions, exits upward through heads,
or is absorbed by equalities.  Skipped regions are recorded as gap links and
rewritten on demand.  Every combined predicate is entered in a memoization
table keyed by its definition, so re-deriving a combination is a table hit.

Derived clauses always define fresh predicates, so the answers of the
original vocabulary are preserved by construction; the only clauses ever
replaced are top clauses rewritten at the journey's own call site (an
equivalence under the memo definitions) and clauses rewritten or deleted by
ground-pair elimination.
"""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field, replace

from .analysis import (
    Activity,
    ArgRef,
    DLink,
    DPath,
    GapLink,
    Hop,
    compile_dlinks,
    mark_active,
    refresh_dlinks,
)
from .terms import (
    Clause,
    Fn,
    Literal,
    Program,
    Subst,
    Term,
    Var,
    alpha_equivalent,
    canonical_clause,
    clause_vars,
    normalize_program,
    resolve,
    resolve_literal,
    term_vars,
    unify,
)


# ---------------------------------------------------------------------------
# Memoization table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MemoEntry:
    """A dynamically created predicate and its defining combination.

    The new predicate stands for the base predicate with the mover folded in
    at one argument: name(kept...) == exists X { base(..X..) & mover(X,..) }.
    Its arity is the total arity of the two predicates minus the shared
    arguments.
    """

    name: str
    base: str
    base_arity: int
    mover: str
    mover_arity: int
    arg: int              # 1-based argument of base where the mover attaches
    mover_arg: int        # 1-based argument of the mover carrying the link
    kind: str             # extract | enter | exit | insert | combine
    step: int

    @property
    def arity(self) -> int:
        return self.base_arity + self.mover_arity - 2

    @property
    def key(self) -> tuple[str, str, int, int]:
        return (self.base, self.mover, self.arg, self.mover_arg)

    def definition(self) -> tuple[tuple[Var, ...], tuple[Literal, ...]]:
        """Exported variables and the defining conjunction."""
        shared = Var("X")
        base_args = tuple(
            shared if i == self.arg else Var(f"A{i}") for i in range(1, self.base_arity + 1)
        )
        mover_args = tuple(
            shared if i == self.mover_arg else Var(f"M{i}") for i in range(1, self.mover_arity + 1)
        )
        exported = tuple(a for a in base_args if a != shared) + tuple(
            a for a in mover_args if a != shared
        )
        lits = (Literal(self.base, base_args), Literal(self.mover, mover_args))
        return exported, lits

    def bridge_clause(self) -> Clause:
        exported, lits = self.definition()
        return Clause(f"memo_{self.name}", Literal(self.name, exported), lits)

    def __repr__(self) -> str:
        exported, lits = self.definition()
        head = Literal(self.name, exported)
        hidden = "X"
        body = " & ".join(map(repr, lits))
        return f"{head!r} == some {hidden} {{ {body} }}"


def fold_literal(lit: Literal, arg: int, entry: MemoEntry, extra: tuple[Term, ...] = ()) -> Literal:
    kept = tuple(t for i, t in enumerate(lit.args, start=1) if i != arg)
    return Literal(entry.name, kept + tuple(extra))


def fold_with_memo(clause: Clause, memo: list[MemoEntry] | tuple[MemoEntry, ...]) -> Clause:
    """Fold every body subconjunction matching a memo definition, to fixpoint."""
    body = list(clause.body)
    changed = True
    while changed:
        changed = False
        for entry in memo:
            for i, base_lit in enumerate(body):
                if base_lit.pred != entry.base or base_lit.arity != entry.base_arity:
                    continue
                shared = base_lit.args[entry.arg - 1]
                if not isinstance(shared, Var):
                    continue
                for j, mover_lit in enumerate(body):
                    if j == i or mover_lit.pred != entry.mover:
                        continue
                    if mover_lit.arity != entry.mover_arity:
                        continue
                    if mover_lit.args[entry.mover_arg - 1] != shared:
                        continue
                    occurrences = sum(
                        1
                        for lit in ([clause.head] if clause.head else []) + body
                        for v in (t for a in lit.args for t in term_vars(a))
                        if v == shared
                    )
                    if occurrences != 2:
                        continue  # the shared variable must be hidden by the fold
                    extra = tuple(
                        t for k, t in enumerate(mover_lit.args, start=1) if k != entry.mover_arg
                    )
                    folded = fold_literal(base_lit, entry.arg, entry, extra)
                    lo, hi = sorted((i, j))
                    body = body[:lo] + [folded] + body[lo + 1 : hi] + body[hi + 1 :]
                    changed = True
                    break
                if changed:
                    break
            if changed:
                break
    return Clause(clause.label, clause.head, tuple(body))


# ---------------------------------------------------------------------------
# Trace
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceEvent:
    step: int
    kind: str     # pass-down | pass-up | fold | eliminate-unify | eliminate-delete
                  # | dlink-create | gap-expand
    detail: dict

    def to_json(self) -> str:
        return json.dumps({"step": self.step, "kind": self.kind, **self.detail}, sort_keys=True)


# ---------------------------------------------------------------------------
# Pending movers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PendingMover:
    mover: str
    mover_arity: int
    mover_arg: int
    state: str                      # cross | exit | rest
    iface: tuple[str, int] | None   # (pred, arg) for cross/exit
    rest_label: str | None = None
    rest_lit: int | None = None
    extra: tuple[Term, ...] = ()
    journey: int = 0
    via_gap: str | None = None      # gap to consult when crossing along a link

    def __repr__(self) -> str:
        where = self.iface if self.state != "rest" else (self.rest_label, self.rest_lit)
        return f"<{self.mover} {self.state} @ {where}>"


# ---------------------------------------------------------------------------
# Options, state snapshots
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReductionOptions:
    max_steps: int = 10000
    use_links: bool = True          # (compile): skip along D-links
    downward_only: bool = False     # ablation: no upward passing
    path_bound: int = 4
    keep_snapshots: bool = False
    check_depth: int = 0            # >0: oracle-check every state against the input


@dataclass(frozen=True)
class ProgramState:
    program: Program
    dlinks: tuple[DLink, ...]
    gaplinks: tuple[GapLink, ...]
    memo: tuple[MemoEntry, ...]
    active: frozenset[str]
    trace: tuple[TraceEvent, ...]
    pending: tuple[PendingMover, ...]
    original_predicates: frozenset[str]
    replaced: tuple[str, ...]
    deleted: tuple[str, ...]
    truncated: bool = False
    unrepresentable: tuple[str, ...] = ()
    snapshots: tuple[Program, ...] = ()
    link_snapshots: tuple[tuple[DLink, ...], ...] = ()
    gap_snapshots: tuple[tuple[GapLink, ...], ...] = ()

    def as_program(self, bridges: bool = True) -> Program:
        clauses = self.program.clauses
        if bridges:
            clauses = clauses + tuple(e.bridge_clause() for e in self.memo)
        return Program(clauses)

    def memo_names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.memo)


class ReductionError(Exception):
    pass


# ---------------------------------------------------------------------------
# Reducible-pair scan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReduciblePair:
    left: tuple[str, str]            # (clause label, term text)
    right: tuple[str, str]
    candidates: tuple[tuple[str, int], ...]          # (pred, arity) on the path
    sites: tuple[tuple[str, str, int, int], ...]     # (pred, label, body index, arg)

    @property
    def key(self) -> tuple:
        return tuple(sorted((self.left, self.right)))


def _live_labels(program: Program) -> set[str]:
    """Clauses reachable from top clauses through the call graph."""
    defs: dict[str, list[Clause]] = {}
    for c in program.clauses:
        if c.head is not None:
            defs.setdefault(c.head.pred, []).append(c)
    live: set[str] = set()
    todo = [c for c in program.top_clauses]
    seen_preds: set[str] = set()
    while todo:
        c = todo.pop()
        if c.label in live:
            continue
        live.add(c.label)
        for lit in c.body:
            if lit.is_builtin or lit.pred in seen_preds:
                continue
            seen_preds.add(lit.pred)
            todo.extend(defs.get(lit.pred, ()))
    return live


def reducible_pairs(program: Program, depth: int = 8) -> list[ReduciblePair]:
    """Dependency paths connecting two non-variable terms, found statically.

    Anchors are root unifications of a variable with a non-variable term
    (equality right-hand sides and term-valued interface arguments).  Two
    anchors reachable from the two occurrences of one junction variable form
    a reducible pair.  Paths may cross any predicate interface of a clause
    reachable from a top clause; the crossing predicates are reported as the
    movable candidates.
    """
    live = _live_labels(program)
    by_label = {c.label: c for c in program.clauses}
    defs: dict[str, list[Clause]] = {}
    sites: dict[str, list[tuple[Clause, int]]] = {}
    for c in program.clauses:
        if c.label not in live:
            continue
        if c.head is not None:
            defs.setdefault(c.head.pred, []).append(c)
        for i, lit in enumerate(c.body):
            if not lit.is_builtin:
                sites.setdefault(lit.pred, []).append((c, i))

    Anchor = tuple[str, str]  # (label, term text)

    def occs(c: Clause, v: Var) -> list[tuple[int, int]]:
        out = []
        for i, lit in enumerate(c.literals):
            for a, t in enumerate(lit.args, start=1):
                if t == v:
                    out.append((i, a))
        return out

    cache: dict[tuple[str, int, int], dict] = {}
    in_progress: set[tuple[str, int, int]] = set()

    def reach(c: Clause, pos: tuple[int, int], visited: frozenset, d: int) -> dict[Anchor, dict]:
        """Anchors reachable through the interface or equality at pos."""
        if d <= 0:
            return {}
        i, a = pos
        lit = c.literals[i]
        key = (c.label, i, a)
        if key in cache:
            return cache[key]
        if key in in_progress:
            return {}
        in_progress.add(key)
        found: dict[Anchor, dict] = {}

        def merge(anchors: dict, crossing: tuple[str, str, int, int] | None) -> None:
            for anchor, info in anchors.items():
                prev = found.setdefault(anchor, {"preds": {}, })
                for pred, site in info["preds"].items():
                    prev["preds"].setdefault(pred, site)
                if crossing is not None:
                    pred = crossing[0]
                    prev["preds"].setdefault(pred, crossing)

        def via_var(c2: Clause, v2: Var, skip: tuple[int, int]) -> dict[Anchor, dict]:
            acc: dict[Anchor, dict] = {}
            for pos2 in occs(c2, v2):
                if pos2 == skip:
                    continue
                sub = reach(c2, pos2, visited, d - 1)
                for anchor, info in sub.items():
                    prev = acc.setdefault(anchor, {"preds": {}})
                    for pred, site in info["preds"].items():
                        prev["preds"].setdefault(pred, site)
            return acc

        def finish() -> dict[Anchor, dict]:
            in_progress.discard(key)
            cache[key] = found
            return found

        if lit.is_eq:
            other = lit.args[1] if a == 1 else lit.args[0]
            if isinstance(other, Fn):
                found[(c.label, repr(other))] = {"preds": {}}
            else:
                merge(via_var(c, other, pos), None)
            return finish()
        if lit.is_junction:
            for b, t in enumerate(lit.args, start=1):
                if b != a and isinstance(t, Var):
                    merge(via_var(c, t, (i, b)), None)
            return finish()

        is_head = c.head is not None and i == 0
        if not is_head:
            # descend into the callee's definitions
            for dcl in defs.get(lit.pred, ()):
                assert dcl.head is not None
                if a > len(dcl.head.args):
                    continue
                t = dcl.head.args[a - 1]
                crossing = (lit.pred, c.label, i - (1 if c.head is not None else 0), a)
                if isinstance(t, Fn):
                    merge({(dcl.label, repr(t)): {"preds": {}}}, crossing)
                else:
                    merge(via_var(dcl, t, (0, a)), crossing)
        else:
            # ascend into callers
            for (c2, j) in sites.get(lit.pred, ()):
                if a > len(c2.body[j].args):
                    continue
                t = c2.body[j].args[a - 1]
                crossing = (lit.pred, c2.label, j, a)
                lit_idx = j + (1 if c2.head is not None else 0)
                if isinstance(t, Fn):
                    merge({(c2.label, repr(t)): {"preds": {}}}, crossing)
                else:
                    merge(via_var(c2, t, (lit_idx, a)), crossing)
        return finish()

    arities: dict[str, int] = {}
    for c in program.clauses:
        for lit in c.literals:
            if not lit.is_builtin:
                arities.setdefault(lit.pred, lit.arity)

    pairs: dict[tuple, ReduciblePair] = {}
    for c in program.clauses:
        if c.label not in live:
            continue
        grouped: dict[Var, list[tuple[int, int]]] = {}
        for v in set(clause_vars(c)):
            positions = occs(c, v)
            if len(positions) >= 2:
                grouped[v] = positions
        for v, positions in sorted(grouped.items(), key=lambda kv: kv[0].name):
            reaches = [reach(c, pos, frozenset(), depth) for pos in positions]
            for (ri, rj) in itertools.combinations(range(len(reaches)), 2):
                for a1, info1 in reaches[ri].items():
                    for a2, info2 in reaches[rj].items():
                        key = tuple(sorted((a1, a2)))
                        if key in pairs:
                            continue
                        preds: dict[str, tuple] = {}
                        preds.update(info1["preds"])
                        for p, s in info2["preds"].items():
                            preds.setdefault(p, s)
                        cands = tuple(
                            sorted(((p, arities.get(p, 0)) for p in preds), key=lambda x: (x[1], x[0]))
                        )
                        site_list = tuple(
                            (p, s[1], s[2], s[3]) for p, s in sorted(preds.items())
                        )
                        pairs[key] = ReduciblePair(min(a1, a2), max(a1, a2), cands, site_list)
    return [pairs[k] for k in sorted(pairs)]


def zero_length_pairs(program: Program) -> list[tuple[str, int, int]]:
    """Clauses with two root terms tied to the same variable group.

    Returns (label, eq index 1, eq index 2) body positions.
    """
    out = []
    for c in program.clauses:
        groups: dict[Var, set[Var]] = {}

        def find(v: Var) -> Var:
            while groups.get(v, v) != v:
                v = groups[v]
            return v

        for v in set(clause_vars(c)):
            groups.setdefault(v, v)
        for lit in c.literals:
            if lit.is_junction or (lit.is_eq and all(isinstance(t, Var) for t in lit.args)):
                vs = [t for t in lit.args if isinstance(t, Var)]
                for v2 in vs[1:]:
                    groups[find(v2)] = find(vs[0])
        anchored: dict[Var, list[int]] = {}
        for i, lit in enumerate(c.body):
            if lit.is_eq:
                a, b = lit.args
                if isinstance(a, Var) and isinstance(b, Fn):
                    anchored.setdefault(find(a), []).append(i)
                elif isinstance(b, Var) and isinstance(a, Fn):
                    anchored.setdefault(find(b), []).append(i)
        for root, idxs in sorted(anchored.items(), key=lambda kv: kv[0].name):
            if len(idxs) >= 2:
                out.append((c.label, idxs[0], idxs[1]))
    return out


# ---------------------------------------------------------------------------
# The reducer
# ---------------------------------------------------------------------------

class Reduction:
    def __init__(self, program: Program, active: frozenset[str] | set[str] | None, opts: ReductionOptions):
        program = normalize_program(program)
        self.opts = opts
        self.clauses: dict[str, Clause] = {c.label: c for c in program.clauses}
        self.order: list[str] = [c.label for c in program.clauses]
        self.original_labels = frozenset(self.order)
        self.original_preds = frozenset(program.predicates())
        self.memo: list[MemoEntry] = []
        self.memo_by_key: dict[tuple, MemoEntry] = {}
        self.name_root: dict[str, str] = {p: p for p in self.original_preds}
        self.used_names: set[str] = set(self.original_preds)
        self.links: list[DLink] = []
        self.gaps: dict[str, GapLink] = {}
        self.closed_gaps: list[GapLink] = []
        self.gap_counter = itertools.count(1)
        self.pending: deque[PendingMover] = deque()
        self.trace: list[TraceEvent] = []
        self.crossed: set[tuple[str, int, str]] = set()
        self.retired: set[tuple] = set()
        self.step_no = 0
        self.journeys = itertools.count(1)
        self.replaced: list[str] = []
        self.deleted: list[str] = []
        self.truncated = False
        self.unrepresentable: list[str] = []
        self.snapshots: list[Program] = []
        self.link_snapshots: list[tuple[DLink, ...]] = []
        self.gap_snapshots: list[tuple[GapLink, ...]] = []
        self.user_active = frozenset(active) if active else None
        self.journey_movers: set[str] = set()
        self._var_counter = itertools.count(1)

    # -- helpers ------------------------------------------------------------

    def program(self) -> Program:
        return Program(tuple(self.clauses[l] for l in self.order))

    def active_set(self) -> frozenset[str]:
        base = set(self.user_active or ())
        base |= {m.mover for m in self.pending}
        base |= self.journey_movers
        return frozenset(base)

    def bridges(self) -> dict[str, list[tuple[Literal, ...]]]:
        out: dict[str, list[tuple[Literal, ...]]] = {}
        for e in self.memo:
            out.setdefault(e.name, []).append(e.definition()[1])
        return out

    def activity(self) -> Activity:
        return mark_active(self.program(), self.active_set(), self.bridges())

    def snapshot_program(self) -> Program:
        return Program(
            tuple(self.clauses[l] for l in self.order)
            + tuple(e.bridge_clause() for e in self.memo)
        )

    def state(self) -> ProgramState:
        return ProgramState(
            program=self.program(),
            dlinks=tuple(self.links),
            gaplinks=tuple(self.gaps.values()) + tuple(self.closed_gaps),
            memo=tuple(self.memo),
            active=self.active_set(),
            trace=tuple(self.trace),
            pending=tuple(self.pending),
            original_predicates=self.original_preds,
            replaced=tuple(self.replaced),
            deleted=tuple(self.deleted),
            truncated=self.truncated,
            unrepresentable=tuple(self.unrepresentable),
            snapshots=tuple(self.snapshots),
            link_snapshots=tuple(self.link_snapshots),
            gap_snapshots=tuple(self.gap_snapshots),
        )

    def event(self, kind: str, **detail) -> None:
        self.trace.append(TraceEvent(self.step_no, kind, detail))

    def fresh_name(self, root: str) -> str:
        sep = "_" if root and root[-1].isdigit() else ""
        n = 1
        while f"{root}{sep}{n}" in self.used_names:
            n += 1
        name = f"{root}{sep}{n}"
        self.used_names.add(name)
        return name

    def memo_entry(
        self, base: str, base_arity: int, mover: str, mover_arity: int, arg: int,
        kind: str, mover_arg: int = 1,
    ) -> tuple[MemoEntry, bool]:
        key = (base, mover, arg, mover_arg)
        if key in self.memo_by_key:
            return self.memo_by_key[key], False
        root = self.name_root.get(base, base)
        name = self.fresh_name(root)
        entry = MemoEntry(name, base, base_arity, mover, mover_arity, arg, mover_arg, kind, self.step_no)
        assert entry.arity == base_arity + mover_arity - 2
        self.memo.append(entry)
        self.memo_by_key[key] = entry
        self.name_root[name] = root
        return entry, True

    def fresh_label(self, source: str) -> str:
        label = source + "'"
        while label in self.clauses:
            label += "'"
        return label

    def add_clause(self, c: Clause, source: str, replace_source: bool, **detail) -> Clause | None:
        """Store a derived clause; None when an alpha-equivalent one exists.

        A derived clause must define a fresh predicate (or be a top clause):
        original predicates keep their definitions untouched, which is what
        makes reduction answer-preserving on the original vocabulary.
        """
        if c.head is not None and c.head.pred in self.original_preds:
            return None
        for other in self.clauses.values():
            if (other.head is None) == (c.head is None) and alpha_equivalent(other, c):
                return None
        self.clauses[c.label] = c
        if replace_source and source in self.clauses:
            del self.clauses[source]
            self.order[self.order.index(source)] = c.label
            self.replaced.append(source)
        else:
            self.order.append(c.label)
        return c

    def arity_of(self, pred: str) -> int:
        for c in self.clauses.values():
            for lit in c.literals:
                if lit.pred == pred:
                    return lit.arity
        for e in self.memo:
            if e.name == pred:
                return e.arity
        return 0

    def defs_of(self, pred: str) -> list[Clause]:
        return [self.clauses[l] for l in self.order
                if self.clauses[l].head is not None and self.clauses[l].head.pred == pred]

    def call_sites(self, pred: str) -> list[tuple[Clause, int]]:
        out = []
        for l in self.order:
            c = self.clauses[l]
            for i, lit in enumerate(c.body):
                if lit.pred == pred:
                    out.append((c, i))
        return out

    def restore_dlinks(self) -> None:
        """Maintain the invariant: every maximal D-path has a stored D-link."""
        if not self.opts.use_links:
            return
        self.links, created = refresh_dlinks(
            self.program(), self.activity(), tuple(self.links), self.opts.path_bound
        )
        for link in created:
            self.event(
                "dlink-create",
                link=link.link_id,
                near=repr(link.near),
                far=repr(link.far),
                maximal=link.maximal,
                signatures=sorted("-".join(s) for s in link.signatures),
                composed_of=list(link.composed_of),
            )

    def new_gap(self, parent: DLink, mover: str, far: ArgRef,
                fill: tuple[Hop, ...], origin: tuple[str, int] | None) -> GapLink:
        gap = GapLink(f"G{next(self.gap_counter)}", parent.link_id, mover, far, fill, origin)
        self.gaps[gap.gap_id] = gap
        return gap

    # -- variable hygiene for derivations ------------------------------------

    def _rename_for(self, c: Clause, taken: set[str]) -> Clause:
        mapping: Subst = {}
        for v in clause_vars(c):
            if v.name in taken and v not in mapping:
                new = v.name
                while new in taken:
                    new = new + "_"
                mapping[v] = Var(new)
                taken.add(new)
        if not mapping:
            return c
        head = resolve_literal(c.head, mapping) if c.head else None
        return Clause(c.label, head, tuple(resolve_literal(b, mapping) for b in c.body))

    # -- ground pair elimination ---------------------------------------------

    def eliminate_zero_length(self) -> bool:
        """Resolve one intra-clause pair of root terms; True when a step ran."""
        pairs = zero_length_pairs(self.program())
        if not pairs:
            return False
        label, i1, i2 = pairs[0]
        self.step_no += 1
        c = self.clauses[label]
        e1, e2 = c.body[i1], c.body[i2]
        t1 = e1.args[1] if isinstance(e1.args[0], Var) else e1.args[0]
        t2 = e2.args[1] if isinstance(e2.args[0], Var) else e2.args[0]
        s = unify(t1, t2)
        if s is None:
            del self.clauses[label]
            self.order.remove(label)
            self.deleted.append(label)
            self.event("eliminate-delete", clause=label, terms=[repr(t1), repr(t2)])
            return True
        v1 = e1.args[0] if isinstance(e1.args[0], Var) else e1.args[1]
        v2 = e2.args[0] if isinstance(e2.args[0], Var) else e2.args[1]
        s[v2] = resolve(t1, s)
        body = tuple(
            resolve_literal(lit, s) for k, lit in enumerate(c.body) if k not in (i1, i2)
        ) + ((Literal("=", (v1, resolve(t1, s))),) if v1 != v2 else ())
        head = resolve_literal(c.head, s) if c.head else None
        new = Clause(label, head, tuple(b for b in body if not (b.is_eq and b.args[0] == b.args[1])))
        self.clauses[label] = new
        self.event("eliminate-unify", clause=label, terms=[repr(t1), repr(t2)],
                   result=canonical_clause(new))
        return True

    # -- absorb: mover meets a term through an equality ----------------------

    def absorb(
        self, mover: str, mover_arity: int, mover_arg: int, extra: tuple[Term, ...],
        target: Term, taken: set[str],
    ) -> list[tuple[tuple[Literal, ...], str, Subst]] | None:
        """Resolve the mover against its definitions with the link argument
        bound to `target`.  Returns residual bodies with the defining clause
        label and the unifier (to be applied to the host clause), or None
        when no definition matches (the clause dies)."""
        results = []
        for d in self.defs_of(mover):
            d2 = self._rename_for(d, set(taken))
            assert d2.head is not None
            s = unify(d2.head.args[mover_arg - 1], target)
            if s is None:
                continue
            ok = True
            k = 0
            for i, t in enumerate(d2.head.args, start=1):
                if i == mover_arg:
                    continue
                if k < len(extra):
                    s2 = unify(t, extra[k], s)
                    if s2 is None:
                        ok = False
                        break
                    s = s2
                k += 1
            if not ok:
                continue
            body = [resolve_literal(lit, s) for lit in d2.body]
            # run ground-pair elimination inside the residual
            out: list[Literal] = []
            dead = False
            for lit in body:
                if lit.is_eq and isinstance(lit.args[0], Fn) and isinstance(lit.args[1], Fn):
                    s3 = unify(lit.args[0], lit.args[1], s)
                    if s3 is None:
                        dead = True
                        break
                    s = s3
                else:
                    out.append(lit)
            if dead:
                continue
            residual = tuple(resolve_literal(lit, s) for lit in out)
            residual = tuple(
                lit for lit in residual if not (lit.is_eq and lit.args[0] == lit.args[1])
            )
            results.append((residual, d.label, s))
        if not results:
            return None
        return results

    # -- journeys -------------------------------------------------------------

    def pick_link(self, ref: ArgRef, at: tuple[str, int, int] | None) -> DLink | None:
        """Longest maximal link anchored at `ref`, optionally required to have
        a path starting at clause position `at` (label, literal index, arg)."""
        best: DLink | None = None
        for link in self.links:
            if not link.maximal:
                continue
            if ref not in link.ends[0] and ref not in link.ends[1]:
                continue
            if ref in link.ends[1] and ref not in link.ends[0]:
                continue  # only move from the near end
            if at is not None:
                lbl, lit_idx, arg = at
                hit = any(
                    p.hops[0].label == lbl and p.hops[0].entry == (lit_idx, arg)
                    for p in link.paths
                )
                if not hit:
                    continue
            if best is None or link.span > best.span or (
                link.span == best.span and link.link_id < best.link_id
            ):
                if best is None or link.span > best.span:
                    best = link
        return best

    def link_direction(self, link: DLink) -> str:
        """down: the far end crosses into definitions; up: into call sites."""
        for p in link.paths:
            last = p.hops[-1]
            c = self.clauses.get(last.label)
            if c is None:
                continue
            lit_idx = last.exit[0]
            if c.head is not None and lit_idx == 0:
                return "up"
            return "down"
        return "down"

    def start_journey(self, pair: ReduciblePair) -> bool:
        """Extract the smallest-arity predicate on the path and set it moving."""
        for pred, arity in pair.candidates:
            site = next((s for s in pair.sites if s[0] == pred), None)
            if site is None:
                continue
            _, label, body_idx, arg = site
            if label not in self.clauses:
                continue
            c = self.clauses[label]
            if body_idx >= len(c.body) or c.body[body_idx].pred != pred:
                continue
            lit = c.body[body_idx]
            link_var = lit.args[arg - 1]
            if not isinstance(link_var, Var):
                continue
            # detachable: the mover's other variables occur nowhere else
            others = [v for i, a in enumerate(lit.args, 1) if i != arg for v in term_vars(a)]
            all_vars = clause_vars(c)
            if any(all_vars.count(v) > 1 for v in others):
                continue
            if self.opts.downward_only:
                lit_idx = body_idx + (1 if c.head is not None else 0)
                other = self._other_occurrence(c, link_var, (lit_idx, arg))
                if other is None or other[0] == 0 and c.head is not None:
                    continue  # only sideways combines are possible downward
                if c.literals[other[0]].is_builtin:
                    continue
            return self._launch(pair, pred, arity, c, body_idx, arg)
        self.retired.add(pair.key)
        return False

    def _launch(self, pair: ReduciblePair, pred: str, arity: int,
                c: Clause, body_idx: int, arg: int) -> bool:
        journey = next(self.journeys)
        self.journey_movers.add(pred)
        self.step_no += 1
        extraction, _ = self.memo_entry(pred, arity, pred, arity, arg, "extract", mover_arg=arg)
        lit = c.body[body_idx]
        extra = tuple(t for i, t in enumerate(lit.args, 1) if i != arg)
        lit_idx = body_idx + (1 if c.head is not None else 0)
        link = self.pick_link(ArgRef(pred, arg), (c.label, lit_idx, arg)) if self.opts.use_links else None
        if self.opts.downward_only:
            link = None
        if link is not None and link.span >= 1:
            fill = tuple(dict.fromkeys(h for p in link.paths for h in p.hops))
            gap = self.new_gap(link, pred, link.far, fill, (c.label, body_idx))
            direction = self.link_direction(link)
            self.event(
                "pass-down", mover=pred, link=link.link_id, gap=gap.gap_id,
                journey=journey, far=repr(link.far), extraction=extraction.name,
                pair=[list(pair.left), list(pair.right)],
            )
            if direction == "down":
                m = PendingMover(pred, arity, arg, "cross", (link.far.pred, link.far.arg),
                                 extra=extra, journey=journey, via_gap=gap.gap_id)
                self.do_cross(m)
            else:
                landing, _ = self.memo_entry(
                    link.far.pred, self.arity_of(link.far.pred), pred, arity,
                    link.far.arg, "exit", mover_arg=arg,
                )
                self.pending.append(
                    PendingMover(pred, arity, arg, "exit", (link.far.pred, link.far.arg),
                                 extra=extra, journey=journey)
                )
            self.restore_dlinks()
            self.retired.add(pair.key)
            return True
        # adjacent move: rewrite the origin clause now
        v = lit.args[arg - 1]
        assert isinstance(v, Var)
        other = self._other_occurrence(c, v, (lit_idx, arg))
        if other is None:
            self.retired.add(pair.key)
            self.event("pass-down", mover=pred, journey=journey, link=None,
                       note="mover has no continuation", pair=[list(pair.left), list(pair.right)])
            return True
        marker = Literal(extraction.name, extra + extra)
        o_idx, o_arg = other
        o_lit = c.literals[o_idx]
        if self.opts.downward_only or not (c.head is not None and o_idx == 0):
            if o_lit.is_builtin:
                self.retired.add(pair.key)
                return True
            kind = "combine" if self.opts.downward_only else "enter"
            enter, _ = self.memo_entry(o_lit.pred, o_lit.arity, pred, arity, o_arg, kind, mover_arg=arg)
            body = list(c.body)
            body[body_idx] = marker
            o_body_idx = o_idx - (1 if c.head is not None else 0)
            body[o_body_idx] = fold_literal(o_lit, o_arg, enter, extra)
            derived = Clause(self.fresh_label(c.label), c.head, tuple(body))
            if self.add_clause(derived, c.label, replace_source=c.is_top):
                self.event("pass-down" if not self.opts.downward_only else "fold",
                           mover=pred, journey=journey, link=None, source=c.label,
                           derived=derived.label, memo=enter.name,
                           replaced=c.is_top, folded_vars=[v.name])
            self.pending.append(
                PendingMover(pred, arity, arg, "cross", (o_lit.pred, o_arg),
                             extra=extra, journey=journey)
            )
        else:
            ex, _ = self.memo_entry(c.head.pred, c.head.arity, pred, arity, o_arg, "exit", mover_arg=arg)
            body = tuple(b for i, b in enumerate(c.body) if i != body_idx) + (marker,)
            derived = Clause(self.fresh_label(c.label), fold_literal(c.head, o_arg, ex, extra), body)
            self.add_clause(derived, c.label, replace_source=False)
            self.event("pass-up", mover=pred, journey=journey, link=None,
                       source=c.label, derived=derived.label, memo=ex.name,
                       folded_vars=[v.name])
            self.pending.append(
                PendingMover(pred, arity, arg, "exit", (c.head.pred, o_arg),
                             extra=extra, journey=journey)
            )
        self.restore_dlinks()
        self.retired.add(pair.key)
        return True

    @staticmethod
    def _other_occurrence(c: Clause, v: Var, skip: tuple[int, int]) -> tuple[int, int] | None:
        for i, lit in enumerate(c.literals):
            for a, t in enumerate(lit.args, start=1):
                if (i, a) == skip:
                    continue
                if t == v or (isinstance(t, Fn) and v in term_vars(t)):
                    return (i, a)
        return None

    # -- crossing into a predicate's definitions ------------------------------

    def do_cross(self, m: PendingMover) -> None:
        assert m.iface is not None
        T, j = m.iface
        key = (T, j, m.mover)
        if key in self.crossed:
            return  # tabulation hit: this combination was already expanded
        self.crossed.add(key)
        gap = self.gaps.get(m.via_gap) if m.via_gap else None
        enter, _ = self.memo_entry(T, self.arity_of(T), m.mover, m.mover_arity, j,
                                   "enter", mover_arg=m.mover_arg)
        for d in self.defs_of(T):
            assert d.head is not None
            if j > len(d.head.args):
                continue
            cont = self._def_continuation(d, j)
            if gap is not None and cont == ("call", T, j):
                continue  # interior of the skipped family: derived on demand
            self._derive_through(d, j, enter, m)

    def _def_continuation(self, d: Clause, j: int):
        assert d.head is not None
        t = d.head.args[j - 1]
        if not isinstance(t, Var):
            return ("term",)
        other = self._other_occurrence(d, t, (0, j))
        if other is None:
            return ("dangle",)
        i, a = other
        lit = d.literals[i]
        if i == 0:
            return ("exit", a)
        if lit.is_builtin:
            return ("eq", i, a)
        return ("call", lit.pred, a)

    def _derive_through(self, d: Clause, j: int, enter: MemoEntry, m: PendingMover) -> None:
        """Derive the definition clause of the combined predicate from d."""
        assert d.head is not None
        folded_head = fold_literal(d.head, j, enter, m.extra)
        t = d.head.args[j - 1]
        taken = {v.name for v in clause_vars(d)}
        label = self.fresh_label(d.label)
        if not isinstance(t, Var):
            residuals = self.absorb(m.mover, m.mover_arity, m.mover_arg, m.extra, t, taken)
            if residuals is None:
                self.event("eliminate-delete", source=d.label, mover=m.mover,
                           term=repr(t), note="no mover definition matches")
                return
            self._emit_residual_clauses(d, folded_head, tuple(d.body), residuals, m, [])
            return
        other = self._other_occurrence(d, t, (0, j))
        if other is None:
            return  # the mover dangles here; derive nothing (lazy)
        i, a = other
        lit = d.literals[i]
        folded_vars = [t.name]
        if i == 0:
            if self.opts.downward_only:
                # upward passing disabled: keep the mover resident in the body
                mover_args = list(m.extra)
                mover_args.insert(m.mover_arg - 1, d.head.args[a - 1])
                resident = Literal(m.mover, tuple(mover_args))
                derived = Clause(label, folded_head, d.body + (resident,))
                if self.add_clause(derived, d.label, replace_source=False):
                    self.event("pass-down", mover=m.mover, source=d.label, derived=derived.label,
                               memo=enter.name, journey=m.journey, folded_vars=folded_vars,
                               link=None)
                return
            # exit upward through the head
            k = a - (1 if a > j else 0)
            ex, _ = self.memo_entry(enter.name, enter.arity, m.mover, m.mover_arity, k,
                                    "exit", mover_arg=m.mover_arg)
            head2 = fold_literal(folded_head, k, ex, ())
            derived = Clause(label, head2, d.body)
            if self.add_clause(derived, d.label, replace_source=False):
                self.event("pass-down", mover=m.mover, source=d.label, derived=derived.label,
                           memo=ex.name, journey=m.journey, folded_vars=folded_vars,
                           link=self.gaps[m.via_gap].parent if m.via_gap in self.gaps else None)
            self.pending.append(replace(m, state="exit", iface=(enter.name, k), via_gap=None))
            return
        body_idx = i - (1 if d.head is not None else 0)
        if lit.is_builtin:
            if lit.is_eq and t in lit.args:
                target = lit.args[1] if lit.args[0] == t else lit.args[0]
                rest = tuple(b for q, b in enumerate(d.body) if q != body_idx)
                residuals = self.absorb(m.mover, m.mover_arity, m.mover_arg, m.extra, target, taken)
                if residuals is None:
                    self.event("eliminate-delete", source=d.label, mover=m.mover,
                               term=repr(target), note="no mover definition matches")
                    return
                self._emit_residual_clauses(d, folded_head, rest, residuals, m, folded_vars)
            return
        # insert into the next body call
        callee, _ = self.memo_entry(lit.pred, lit.arity, m.mover, m.mover_arity, a,
                                    "enter", mover_arg=m.mover_arg)
        body = list(d.body)
        body[body_idx] = fold_literal(lit, a, callee, m.extra)
        derived = Clause(label, folded_head, tuple(body))
        if self.add_clause(derived, d.label, replace_source=False):
            self.event("pass-down", mover=m.mover, source=d.label, derived=derived.label,
                       memo=callee.name, journey=m.journey, folded_vars=folded_vars,
                       link=self.gaps[m.via_gap].parent if m.via_gap in self.gaps else None)
        self.pending.append(replace(m, state="cross", iface=(lit.pred, a), via_gap=None))

    def _emit_residual_clauses(
        self, d: Clause, folded_head: Literal | None, rest: tuple[Literal, ...],
        residuals: list[tuple[tuple[Literal, ...], str, Subst]], m: PendingMover,
        folded_vars: list[str],
    ) -> None:
        for residual, via, s in residuals:
            label = self.fresh_label(d.label)
            head = resolve_literal(folded_head, s) if folded_head is not None else None
            body = tuple(resolve_literal(b, s) for b in rest) + residual
            derived = Clause(label, head, body)
            stored = self.add_clause(derived, d.label, replace_source=False)
            if stored is None:
                continue
            self.event("eliminate-unify", mover=m.mover, source=d.label, via=via,
                       derived=label, journey=m.journey, folded_vars=folded_vars,
                       residual=[repr(l) for l in residual])
            next_idx = next(
                (i for i, lit in enumerate(stored.body) if not lit.is_builtin and lit in residual),
                None,
            )
            if next_idx is not None:
                lit = stored.body[next_idx]
                link_arg = self._residual_link_arg(stored, next_idx)
                if link_arg is not None:
                    self.pending.append(
                        PendingMover(lit.pred, lit.arity, link_arg, "rest", None,
                                     rest_label=label, rest_lit=next_idx,
                                     extra=tuple(t for i, t in enumerate(lit.args, 1) if i != link_arg),
                                     journey=m.journey)
                    )

    @staticmethod
    def _residual_link_arg(c: Clause, body_idx: int) -> int | None:
        lit = c.body[body_idx]
        lit_idx = body_idx + (1 if c.head is not None else 0)
        for a, t in enumerate(lit.args, start=1):
            if isinstance(t, Var):
                if Reduction._other_occurrence(c, t, (lit_idx, a)) is not None:
                    return a
        return None

    # -- resting movers --------------------------------------------------------

    def do_rest(self, m: PendingMover) -> None:
        if m.rest_label not in self.clauses:
            return
        c = self.clauses[m.rest_label]
        if m.rest_lit >= len(c.body) or c.body[m.rest_lit].pred != m.mover:
            return
        lit = c.body[m.rest_lit]
        v = lit.args[m.mover_arg - 1]
        if not isinstance(v, Var):
            return
        lit_idx = m.rest_lit + (1 if c.head is not None else 0)
        other = self._other_occurrence(c, v, (lit_idx, m.mover_arg))
        if other is None:
            return  # nowhere to go; the literal stays as a plain call
        i, a = other
        o_lit = c.literals[i]
        if i == 0 and c.head is not None:
            if self.opts.downward_only:
                return  # upward passing disabled
            link = self.pick_link(ArgRef(m.mover, m.mover_arg), (c.label, lit_idx, m.mover_arg)) \
                if self.opts.use_links else None
            if link is not None and link.span >= 1 and self.link_direction(link) == "up":
                landing, _ = self.memo_entry(
                    link.far.pred, self.arity_of(link.far.pred), m.mover, m.mover_arity,
                    link.far.arg, "exit", mover_arg=m.mover_arg,
                )
                fill = tuple(dict.fromkeys(h for p in link.paths for h in p.hops))
                gap = self.new_gap(link, m.mover, link.far, fill, None)
                self.event("pass-up", mover=m.mover, link=link.link_id, gap=gap.gap_id,
                           memo=landing.name, journey=m.journey,
                           composed_of=list(link.composed_of))
                if link.span == 1:
                    self._derive_fill_up(fill[0], m, landing)
                    del self.gaps[gap.gap_id]
                    self.closed_gaps.append(gap)
                self.pending.append(
                    replace(m, state="exit", iface=(link.far.pred, link.far.arg),
                            rest_label=None, rest_lit=None)
                )
                return
            ex, _ = self.memo_entry(c.head.pred, c.head.arity, m.mover, m.mover_arity, a,
                                    "exit", mover_arg=m.mover_arg)
            body = tuple(b for q, b in enumerate(c.body) if q != m.rest_lit)
            derived = Clause(self.fresh_label(c.label), fold_literal(c.head, a, ex, m.extra), body)
            if self.add_clause(derived, c.label, replace_source=False):
                self.event("pass-up", mover=m.mover, source=c.label, derived=derived.label,
                           memo=ex.name, journey=m.journey, folded_vars=[v.name], link=None)
            self.pending.append(
                replace(m, state="exit", iface=(c.head.pred, a), rest_label=None, rest_lit=None)
            )
            return
        if o_lit.is_builtin:
            if not (o_lit.is_eq and v in o_lit.args):
                return  # the path enters a term below its root: nowhere to go
            target = o_lit.args[1] if o_lit.args[0] == v else o_lit.args[0]
            taken = {w.name for w in clause_vars(c)}
            residuals = self.absorb(m.mover, m.mover_arity, m.mover_arg, m.extra, target, taken)
            o_body = i - (1 if c.head is not None else 0)
            rest = tuple(b for q, b in enumerate(c.body) if q not in (m.rest_lit, o_body))
            if residuals is None:
                self.event("eliminate-delete", source=c.label, mover=m.mover, term=repr(target))
                return
            self._emit_residual_clauses(c, c.head, rest, residuals, m, [v.name])
            return
        enter, _ = self.memo_entry(o_lit.pred, o_lit.arity, m.mover, m.mover_arity, a,
                                   "enter" if not self.opts.downward_only else "combine",
                                   mover_arg=m.mover_arg)
        body = list(c.body)
        o_body = i - (1 if c.head is not None else 0)
        body[o_body] = fold_literal(o_lit, a, enter, m.extra)
        body = [b for q, b in enumerate(body) if q != m.rest_lit]
        derived = Clause(self.fresh_label(c.label), c.head, tuple(body))
        if self.add_clause(derived, c.label, replace_source=False):
            self.event("pass-down", mover=m.mover, source=c.label, derived=derived.label,
                       memo=enter.name, journey=m.journey, folded_vars=[v.name], link=None)
        self.pending.append(
            replace(m, state="cross", iface=(o_lit.pred, a), rest_label=None, rest_lit=None)
        )

    def _derive_fill_up(self, hop: Hop, m: PendingMover, landing: MemoEntry) -> None:
        """Eager rewrite for a one-clause upward skip (no real gap)."""
        c = self.clauses.get(hop.label)
        if c is None or c.head is None:
            return
        body = tuple(
            b for q, b in enumerate(c.body)
            if q + (1 if c.head is not None else 0) != hop.entry[0]
        )
        derived = Clause(self.fresh_label(c.label),
                         fold_literal(c.head, hop.exit[1], landing, m.extra), body)
        if self.add_clause(derived, c.label, replace_source=False):
            self.event("pass-up", mover=m.mover, source=c.label, derived=derived.label,
                       memo=landing.name, journey=m.journey,
                       folded_vars=[], link=None)

    # -- exits and arrivals ------------------------------------------------------

    def do_exit(self, m: PendingMover) -> None:
        assert m.iface is not None
        Q, k = m.iface
        if self.opts.downward_only:
            return
        sites = self.call_sites(Q)
        if sites:
            ex, _ = self.memo_entry(Q, self.arity_of(Q), m.mover, m.mover_arity, k,
                                    "exit", mover_arg=m.mover_arg)
            link = None
            if self.opts.use_links:
                for l in self.links:
                    if l.maximal and (ArgRef(Q, k) in l.ends[0] or ArgRef(Q, k) in l.ends[1]):
                        link = l
                        break
            onlink: list[tuple[Clause, int]] = []
            offlink: list[tuple[Clause, int]] = []
            for (c, i) in sites:
                lit_idx = i + (1 if c.head is not None else 0)
                on = link is not None and any(
                    h.label == c.label and (h.entry == (lit_idx, k) or h.exit == (lit_idx, k))
                    for p in link.paths for h in p.hops
                )
                (onlink if on else offlink).append((c, i))
            if link is not None and onlink:
                if offlink:
                    fill = tuple(
                        Hop(c.label, (i + (1 if c.head is not None else 0), k),
                            (i + (1 if c.head is not None else 0), k))
                        for (c, i) in offlink
                    )
                    gap = self.new_gap(link, m.mover, ArgRef(Q, k), fill, None)
                    self.event("pass-up", mover=m.mover, link=link.link_id, gap=gap.gap_id,
                               journey=m.journey, note="remaining call sites kept on demand")
                targets = onlink
            else:
                targets = sites
            for (c, i) in targets:
                self.do_arrive(m, c, i, k, ex)
            return
        # no call sites: consult a gap whose consumed end matches
        for gap in list(self.gaps.values()):
            entry = self.memo_by_key.get((gap.far.pred, gap.mover, gap.far.arg, 1))
            if entry is not None and entry.name == Q:
                inserted = self.do_expand(m, gap)
                if not inserted:
                    self.pending.append(m)
                return
        # dead end: the journey retires here

    def do_arrive(self, m: PendingMover, c: Clause, i: int, k: int, ex: MemoEntry) -> None:
        lit = c.body[i]
        u = lit.args[k - 1] if k <= len(lit.args) else None
        label = self.fresh_label(c.label)
        if u is None or not isinstance(u, Var):
            return  # a term argument cannot be hidden by the fold; branch ends
        folded = fold_literal(lit, k, ex, m.extra)
        lit_idx = i + (1 if c.head is not None else 0)
        other = self._other_occurrence(c, u, (lit_idx, k))
        body = list(c.body)
        body[i] = folded
        folded_vars = [u.name]
        if other is None:
            derived = Clause(label, c.head, tuple(body))
            if self.add_clause(derived, c.label, replace_source=False):
                self.event("pass-up", mover=m.mover, source=c.label, derived=derived.label,
                           memo=ex.name, journey=m.journey, folded_vars=folded_vars, link=None)
            return
        oi, oa = other
        o_lit = c.literals[oi]
        if oi == 0 and c.head is not None:
            ex2, _ = self.memo_entry(c.head.pred, c.head.arity, m.mover, m.mover_arity, oa,
                                     "exit", mover_arg=m.mover_arg)
            derived = Clause(label, fold_literal(c.head, oa, ex2, ()), tuple(body))
            if self.add_clause(derived, c.label, replace_source=False):
                self.event("pass-up", mover=m.mover, source=c.label, derived=derived.label,
                           memo=ex2.name, journey=m.journey, folded_vars=folded_vars, link=None)
            self.pending.append(replace(m, state="exit", iface=(c.head.pred, oa)))
            return
        if o_lit.is_builtin:
            if o_lit.is_eq and u in o_lit.args:
                target = o_lit.args[1] if o_lit.args[0] == u else o_lit.args[0]
                taken = {w.name for w in clause_vars(c)}
                residuals = self.absorb(m.mover, m.mover_arity, m.mover_arg, m.extra, target, taken)
                o_body = oi - (1 if c.head is not None else 0)
                if residuals is None:
                    self.event("eliminate-delete", source=c.label, mover=m.mover, term=repr(target))
                    return
                rest = tuple(b for q, b in enumerate(body) if q != o_body)
                self._emit_residual_clauses(c, c.head, rest, residuals, m, folded_vars)
            return
        ins, _ = self.memo_entry(o_lit.pred, o_lit.arity, m.mover, m.mover_arity, oa,
                                 "insert", mover_arg=m.mover_arg)
        o_body = oi - (1 if c.head is not None else 0)
        body[o_body] = fold_literal(o_lit, oa, ins, m.extra)
        folded_vars.append(u.name)
        derived = Clause(label, c.head, tuple(body))
        if self.add_clause(derived, c.label, replace_source=False):
            self.event("pass-up", mover=m.mover, source=c.label, derived=derived.label,
                       memo=f"{ex.name},{ins.name}", journey=m.journey,
                       folded_vars=sorted(set(folded_vars)), link=None)
        self.pending.append(replace(m, state="cross", iface=(o_lit.pred, oa)))

    # -- gap expansion -------------------------------------------------------------

    def do_expand(self, m: PendingMover, gap: GapLink) -> bool:
        """Consult the original clauses behind a gap and rewrite the ones
        adjacent to the consumed end; shrink the gap onto a shorter link.

        Returns True when the waiting mover was inserted into a rewrite."""
        far = gap.far
        by_label = self.clauses
        adjacent: list[Hop] = []
        remainder: list[Hop] = []
        for h in gap.fill:
            c = by_label.get(h.label)
            if c is None:
                continue
            ref = ArgRef(c.literals[h.exit[0]].pred, h.exit[1])
            (adjacent if ref == far else remainder).append(h)
        if not adjacent:
            self.unrepresentable.append(gap.gap_id)
            del self.gaps[gap.gap_id]
            self.closed_gaps.append(gap)
            self.event("gap-expand", gap=gap.gap_id, note="dead branch: no d-path touches the demand")
            return True  # the gapped branch is discarded; the mover dies with it
        derived_sites: list[tuple[Clause, int]] = []
        derived_labels: list[str] = []
        for h in sorted(adjacent, key=lambda h: h.label):
            out = self._derive_fill(h, gap)
            if out is not None:
                derived, site_idx = out
                derived_labels.append(derived.label)
                if site_idx is not None:
                    derived_sites.append((derived, site_idx))
        # shrink the gap
        if remainder:
            covering = self._covering_link(remainder)
            if covering is None:
                self.unrepresentable.append(gap.gap_id)
                self.event("gap-expand", gap=gap.gap_id, derived=derived_labels,
                           note="remainder not covered by any stored link")
            else:
                entry_ref = None
                for h in adjacent:
                    c = by_label.get(h.label)
                    if c is not None:
                        entry_ref = ArgRef(c.literals[h.entry[0]].pred, h.entry[1])
                        break
                new = GapLink(gap.gap_id, covering.link_id, gap.mover,
                              entry_ref or far, tuple(remainder), gap.origin_site)
                self.gaps[gap.gap_id] = new
                self.event("gap-expand", gap=gap.gap_id, derived=derived_labels,
                           parent=covering.link_id, remainder=sorted({h.label for h in remainder}))
        else:
            del self.gaps[gap.gap_id]
            self.closed_gaps.append(gap)
            self.event("gap-expand", gap=gap.gap_id, derived=derived_labels, remainder=[])
        # insert the waiting mover when it has exactly one landing site
        inserted = False
        if len(derived_sites) == 1 and m.iface is not None:
            c, i = derived_sites[0]
            site_pred = self.clauses[c.label].body[i].pred if c.label in self.clauses else None
            ex = self.memo_by_key.get((m.iface[0], m.mover, m.iface[1], m.mover_arg))
            if ex is not None and site_pred == m.iface[0]:
                self._inline_insert(m, c, i, ex)
                inserted = True
        self.restore_dlinks()
        return inserted

    def _covering_link(self, hops: list[Hop]) -> DLink | None:
        want = {(h.label, h.entry, h.exit) for h in hops}
        for link in self.links:
            have = {(h.label, h.entry, h.exit) for p in link.paths for h in p.hops}
            have |= {(h.label, h.exit, h.entry) for p in link.paths for h in p.hops}
            if want <= have:
                return link
        return None

    def _derive_fill(self, h: Hop, gap: GapLink) -> tuple[Clause, int | None] | None:
        """Rewrite one skipped clause: historical folds for the gap's mover."""
        c = self.clauses.get(h.label)
        if c is None:
            return None
        entry_lit = c.literals[h.entry[0]]
        exit_lit = c.literals[h.exit[0]]
        head: Literal | None = c.head
        body = list(c.body)
        folded_vars: list[str] = []
        is_origin = gap.origin_site is not None and gap.origin_site[0] == c.label
        # entry side
        if h.entry[0] == 0 and c.head is not None:
            enter, _ = self.memo_entry(entry_lit.pred, entry_lit.arity, gap.mover, 1,
                                       h.entry[1], "enter")
            head = fold_literal(entry_lit, h.entry[1], enter, ())
            t = entry_lit.args[h.entry[1] - 1]
            if isinstance(t, Var):
                folded_vars.append(t.name)
        else:
            body_idx = h.entry[0] - (1 if c.head is not None else 0)
            if entry_lit.pred == gap.mover:
                t = entry_lit.args[h.entry[1] - 1]
                if isinstance(t, Var):
                    folded_vars.append(t.name)
                if is_origin:
                    extraction = self.memo_by_key.get((gap.mover, gap.mover, h.entry[1], h.entry[1]))
                    if extraction is not None:
                        body[body_idx] = Literal(
                            extraction.name,
                            tuple(t for i, t in enumerate(entry_lit.args, 1) if i != h.entry[1]),
                        )
                    else:
                        body.pop(body_idx)
                else:
                    body.pop(body_idx)
                    if h.exit[0] > h.entry[0]:
                        pass
            else:
                enter, _ = self.memo_entry(entry_lit.pred, entry_lit.arity, gap.mover, 1,
                                           h.entry[1], "enter")
                body[body_idx] = fold_literal(entry_lit, h.entry[1], enter, ())
        # exit side
        site_idx: int | None = None
        if h.exit[0] == 0 and c.head is not None:
            ex, _ = self.memo_entry(exit_lit.pred, exit_lit.arity, gap.mover, 1, h.exit[1], "enter")
            head = fold_literal(exit_lit, h.exit[1], ex, ())
        else:
            exit_body_idx = h.exit[0] - (1 if c.head is not None else 0)
            shift = 0
            if h.entry[0] != 0 and c.literals[h.entry[0]].pred == gap.mover:
                entry_body_idx = h.entry[0] - (1 if c.head is not None else 0)
                if entry_body_idx < exit_body_idx and len(body) < len(c.body):
                    shift = 1
            ex, _ = self.memo_entry(exit_lit.pred, exit_lit.arity, gap.mover, 1, h.exit[1], "enter")
            body[exit_body_idx - shift] = fold_literal(exit_lit, h.exit[1], ex, ())
            site_idx = exit_body_idx - shift
            t = exit_lit.args[h.exit[1] - 1]
            if isinstance(t, Var) and t.name not in folded_vars:
                folded_vars.append(t.name)
        derived = Clause(self.fresh_label(c.label), head, tuple(body))
        replace_source = is_origin and c.is_top
        stored = self.add_clause(derived, c.label, replace_source=replace_source)
        if stored is None:
            return None
        self.event("gap-expand" if False else "pass-down", mover=gap.mover, source=c.label,
                   derived=derived.label, journey=-1, via_gap=gap.gap_id,
                   replaced=replace_source, folded_vars=sorted(set(folded_vars)), link=gap.parent)
        return stored, site_idx

    def _inline_insert(self, m: PendingMover, c: Clause, i: int, ex: MemoEntry) -> None:
        """Complete the waiting mover's insertion inside a just-derived rewrite."""
        if c.label not in self.clauses:
            return
        current = self.clauses[c.label]
        lit = current.body[i]
        k = ex.arg
        u = lit.args[k - 1] if k <= len(lit.args) else None
        if not isinstance(u, Var):
            return
        body = list(current.body)
        body[i] = fold_literal(lit, k, ex, m.extra)
        folded_vars = [u.name]
        lit_idx = i + (1 if current.head is not None else 0)
        other = self._other_occurrence(current, u, (lit_idx, k))
        next_pending: PendingMover | None = None
        if other is not None:
            oi, oa = other
            o_lit = current.literals[oi]
            if oi == 0 and current.head is not None:
                ex2, _ = self.memo_entry(current.head.pred, current.head.arity, m.mover,
                                         m.mover_arity, oa, "exit", mover_arg=m.mover_arg)
                updated = Clause(current.label, fold_literal(current.head, oa, ex2, ()), tuple(body))
                self.clauses[current.label] = updated
                next_pending = replace(m, state="exit", iface=(current.head.pred, oa))
                self.event("pass-up", mover=m.mover, source=current.label, derived=current.label,
                           memo=f"{ex.name},{ex2.name}", journey=m.journey,
                           folded_vars=folded_vars, link=None)
                self.pending.append(next_pending)
                return
            if not o_lit.is_builtin:
                ins, _ = self.memo_entry(o_lit.pred, o_lit.arity, m.mover, m.mover_arity, oa,
                                         "insert", mover_arg=m.mover_arg)
                o_body = oi - (1 if current.head is not None else 0)
                body[o_body] = fold_literal(o_lit, oa, ins, m.extra)
                folded_vars.append(u.name)
                next_pending = replace(m, state="cross", iface=(o_lit.pred, oa))
        updated = Clause(current.label, current.head, tuple(body))
        self.clauses[current.label] = updated
        self.event("pass-up", mover=m.mover, source=current.label, derived=current.label,
                   memo=ex.name, journey=m.journey, folded_vars=sorted(set(folded_vars)), link=None)
        if next_pending is not None:
            self.pending.append(next_pending)

    # -- main loop ----------------------------------------------------------------

    def run(self) -> ProgramState:
        if self.opts.use_links:
            self.links = compile_dlinks(self.program(), self.activity(), self.opts.path_bound)
        if self.opts.keep_snapshots:
            self.snapshots.append(self.snapshot_program())
            self.link_snapshots.append(tuple(self.links))
            self.gap_snapshots.append(tuple(self.gaps.values()))
        seen_signatures: set = set()
        while self.step_no < self.opts.max_steps:
            if self.eliminate_zero_length():
                self._after_step()
                continue
            if self.pending:
                m = self.pending.popleft()
                self.step_no += 1
                if m.state == "cross":
                    self.do_cross(m)
                elif m.state == "exit":
                    self.do_exit(m)
                else:
                    self.do_rest(m)
                self.restore_dlinks()
                self._after_step()
                continue
            pairs = [p for p in reducible_pairs(self.program()) if p.key not in self.retired]
            movable = [p for p in pairs if p.candidates]
            if not movable:
                break
            signature = tuple(sorted(p.key for p in movable))
            if signature in seen_signatures:
                for p in movable:
                    self.retired.add(p.key)
                continue
            seen_signatures.add(signature)
            chosen = min(movable, key=lambda p: (p.candidates[0][1], p.candidates[0][0], p.key))
            if not self.start_journey(chosen):
                continue
            self._after_step()
        else:
            self.truncated = True
        return self.state()

    def _after_step(self) -> None:
        if self.opts.keep_snapshots:
            self.snapshots.append(self.snapshot_program())
            self.link_snapshots.append(tuple(self.links))
            self.gap_snapshots.append(tuple(self.gaps.values()))


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def run_reduction(
    program: Program,
    active: frozenset[str] | set[str] | None = None,
    opts: ReductionOptions | None = None,
) -> ProgramState:
    """Reduce until no dependency path connects two non-variable terms,
    or the step cap hits (the returned state is then flagged truncated)."""
    return Reduction(program, active, opts or ReductionOptions()).run()


def restore_dlink_invariant(state: ProgramState) -> ProgramState:
    """Create any missing maximal D-links over the state's clauses.

    Idempotent: a state already satisfying the invariant comes back with the
    same link set."""
    bridges: dict[str, list[tuple[Literal, ...]]] = {}
    for e in state.memo:
        bridges.setdefault(e.name, []).append(e.definition()[1])
    activity = mark_active(state.program, state.active, bridges)
    links, _created = refresh_dlinks(state.program, activity, state.dlinks)
    return replace(state, dlinks=tuple(links))


def select_move(program: Program, active: frozenset[str] | set[str] | None = None):
    """The next move under the smallest-arity strategy, or None when done."""
    pairs = reducible_pairs(program)
    candidates = [p for p in pairs if p.candidates]
    if not candidates:
        return None
    chosen = min(candidates, key=lambda p: (p.candidates[0][1], p.candidates[0][0], p.key))
    pred, arity = chosen.candidates[0]
    return {"pred": pred, "arity": arity, "pair": chosen}


def eliminate_ground_pair(program: Program, label: str) -> tuple[Program, str]:
    """Resolve the first intra-clause pair of root terms in one clause.

    Returns the updated program and 'unified' | 'deleted' | 'none'.
    """
    r = Reduction(program, None, ReductionOptions(use_links=False))
    pairs = [p for p in zero_length_pairs(r.program()) if p[0] == label]
    if not pairs:
        return program, "none"
    before = set(r.clauses)
    r.clauses = {c.label: c for c in program.clauses}
    r.order = [c.label for c in program.clauses]
    lbl, i1, i2 = pairs[0]
    c = r.clauses[lbl]
    e1, e2 = c.body[i1], c.body[i2]
    t1 = e1.args[1] if isinstance(e1.args[0], Var) else e1.args[0]
    t2 = e2.args[1] if isinstance(e2.args[0], Var) else e2.args[0]
    if unify(t1, t2) is None:
        return r.program().remove(label), "deleted"
    r.eliminate_zero_length()
    return r.program(), "unified"


def absorb_equality(
    program: Program, call: Literal, eq: Literal
) -> list[tuple[Literal, ...]] | None:
    """One resolution step for `call` with its linked argument bound by `eq`.

    p(Y) & Y=f(Z) with p(X) <- X=f(W) & p(W) yields the residual p(Z).
    None means no definition matches and the clause dies.
    """
    shared = next((a for a in call.args if isinstance(a, Var) and a in eq.args), None)
    if shared is None:
        raise ValueError("the equality does not share a variable with the call")
    target = eq.args[1] if eq.args[0] == shared else eq.args[0]
    arg = call.args.index(shared) + 1
    extra = tuple(t for i, t in enumerate(call.args, 1) if i != arg)
    r = Reduction(program, None, ReductionOptions(use_links=False))
    out = r.absorb(call.pred, call.arity, arg, extra, target, set())
    if out is None:
        return None
    return [residual for residual, _, _ in out]
