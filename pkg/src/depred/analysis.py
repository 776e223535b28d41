"""Dependency analysis: active predicates, d-paths, and dependency links.

The engine moves predicates along stored dependency links.  A d-path is a
pure variable chain connecting two predicate arguments across a tree of
clause instances; it may not make a U-turn (enter and leave a clause through
two argument positions of the same literal occurrence), may not cross an
active predicate's interface, may not traverse an active clause, and may not
traverse two clauses with different numbers of active literals.  Junction
literals (eq/N and var=var equalities) are transparent and exempt from the
U-turn rule; they are not predicate positions themselves.

D-paths are grouped by the pair of argument interfaces they connect.  A
group is compiled into a DLink; a group is maximal when no member path can
be extended to reach a different interface pair.  Every stored multi-clause
link is also divided into two shorter links, far end first, recursively, so
partial skips stay available (the engine consults them when it shrinks a
gap).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

from .terms import (
    Clause,
    Literal,
    Program,
    Var,
    clause_vars,
)


# ---------------------------------------------------------------------------
# Activity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Activity:
    active_preds: frozenset[str]
    down_active: frozenset[str]
    up_active: frozenset[str]
    body_active: frozenset[tuple[str, int]]   # (label, body index)
    head_active: frozenset[str]               # labels with active head literal
    counts: dict[str, int]                    # active literals per clause
    active_clauses: frozenset[str]            # more than two active literals

    def literal_active(self, label: str, index: int, is_head: bool) -> bool:
        if is_head:
            return label in self.head_active
        return (label, index) in self.body_active


def mark_active(
    program: Program,
    active_preds: frozenset[str] | set[str],
    bridge_defs: dict[str, list[tuple[Literal, ...]]] | None = None,
) -> Activity:
    """Classify literals and clauses relative to the predicates to move.

    A body literal is active when an active predicate is reachable downward
    through it.  A head literal is active when the contexts calling its
    predicate contain an active predicate.  A clause with more than two
    active literals is an active clause.  `bridge_defs` supplies definition
    bodies for dynamically created predicates (their memoization entries),
    so reachability sees through them.
    """
    active_preds = frozenset(active_preds)
    bridge_defs = bridge_defs or {}

    bodies_of: dict[str, list[tuple[Literal, ...]]] = {}
    for c in program.clauses:
        if c.head is not None:
            bodies_of.setdefault(c.head.pred, []).append(c.body)
    for pred, defs in bridge_defs.items():
        for body in defs:
            bodies_of.setdefault(pred, []).append(tuple(body))

    down = set(active_preds)
    changed = True
    while changed:
        changed = False
        for pred, bodies in bodies_of.items():
            if pred in down:
                continue
            for body in bodies:
                if any((not l.is_builtin) and l.pred in down for l in body):
                    down.add(pred)
                    changed = True
                    break

    # up_active(P): some call site of P sits next to a down-active sibling,
    # or inside a clause whose own head is up-active.
    up: set[str] = set()
    changed = True
    while changed:
        changed = False
        for c in program.clauses:
            head_up = c.head is not None and c.head.pred in up
            for i, lit in enumerate(c.body):
                if lit.is_builtin or lit.pred in up:
                    continue
                sibling = any(
                    j != i and (not l.is_builtin) and l.pred in down
                    for j, l in enumerate(c.body)
                )
                if sibling or head_up:
                    up.add(lit.pred)
                    changed = True

    body_active = set()
    head_active = set()
    counts: dict[str, int] = {}
    for c in program.clauses:
        n = 0
        if c.head is not None and c.head.pred in up:
            head_active.add(c.label)
            n += 1
        for i, lit in enumerate(c.body):
            if not lit.is_builtin and lit.pred in down:
                body_active.add((c.label, i))
                n += 1
        counts[c.label] = n
    active_clauses = frozenset(label for label, n in counts.items() if n > 2)
    return Activity(
        active_preds=active_preds,
        down_active=frozenset(down),
        up_active=frozenset(up),
        body_active=frozenset(body_active),
        head_active=frozenset(head_active),
        counts=counts,
        active_clauses=active_clauses,
    )


# ---------------------------------------------------------------------------
# Positions, hops, d-paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class ArgRef:
    pred: str
    arg: int

    def __repr__(self) -> str:
        return f"{self.pred}/{self.arg}"


# A position inside a clause: (literal index into clause.literals, 1-based arg).
Pos = tuple[int, int]


@dataclass(frozen=True)
class Hop:
    label: str
    entry: Pos
    exit: Pos


@dataclass(frozen=True)
class DPath:
    endpoints: tuple[ArgRef, ArgRef]      # (entry side, exit side)
    clause_seq: tuple[str, ...]
    hops: tuple[Hop, ...]
    variable_chain: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.hops)


def _is_head(c: Clause, lit_idx: int) -> bool:
    return c.head is not None and lit_idx == 0


def _positions(c: Clause) -> list[tuple[Pos, Var]]:
    """Top-level variable argument positions at non-builtin literals."""
    out = []
    for i, lit in enumerate(c.literals):
        if lit.is_builtin:
            continue
        for a, t in enumerate(lit.args, start=1):
            if isinstance(t, Var):
                out.append(((i, a), t))
    return out


def _junction_vars(c: Clause) -> list[frozenset[Var]]:
    """Variable groups tied together by transparent junction literals."""
    groups = []
    for lit in c.literals:
        if lit.is_junction:
            groups.append(frozenset(t for t in lit.args if isinstance(t, Var)))
        elif lit.is_eq and all(isinstance(t, Var) for t in lit.args):
            groups.append(frozenset(lit.args))  # type: ignore[arg-type]
    return groups


def intra_links(c: Clause) -> list[tuple[Pos, Pos]]:
    """Pairs of predicate-argument positions connected inside one clause.

    Positions in the same literal are never paired (that would be a U-turn).
    """
    positions = _positions(c)
    junctions = _junction_vars(c)
    out = []
    for (p1, v1), (p2, v2) in itertools.combinations(positions, 2):
        if p1[0] == p2[0]:
            continue
        if v1 == v2 or any(v1 in g and v2 in g for g in junctions):
            out.append((p1, p2))
    return out


def _argref(c: Clause, pos: Pos) -> ArgRef:
    return ArgRef(c.literals[pos[0]].pred, pos[1])


class _PathSpace:
    """Shared machinery for enumerating d-paths over one program snapshot."""

    def __init__(self, program: Program, activity: Activity):
        self.program = program
        self.activity = activity
        self.by_label = {c.label: c for c in program.clauses}
        self.intra: dict[str, list[tuple[Pos, Pos]]] = {
            c.label: intra_links(c) for c in program.clauses
        }
        self.defs: dict[str, list[Clause]] = {}
        self.sites: dict[str, list[tuple[Clause, int]]] = {}
        for c in program.clauses:
            if c.head is not None:
                self.defs.setdefault(c.head.pred, []).append(c)
            for i, lit in enumerate(c.body):
                if not lit.is_builtin:
                    self.sites.setdefault(lit.pred, []).append((c, i))

    def clause_ok(self, label: str, ref_count: int) -> bool:
        a = self.activity
        return label not in a.active_clauses and a.counts[label] == ref_count

    def hops_from(self, c: Clause, entry: Pos) -> list[Hop]:
        return [Hop(c.label, entry, ex) for (en, ex) in self.intra[c.label] if en == entry] + [
            Hop(c.label, entry, en) for (en, ex) in self.intra[c.label] if ex == entry
        ]

    def continuations(self, c: Clause, exit_pos: Pos) -> list[tuple[Clause, Pos]]:
        """Clause entries reachable by crossing the interface at exit_pos."""
        lit_idx, arg = exit_pos
        lit = c.literals[lit_idx]
        if lit.pred in self.activity.active_preds:
            return []
        out = []
        if _is_head(c, lit_idx):
            for (c2, i) in self.sites.get(lit.pred, ()):
                if arg <= len(c2.body[i].args) and isinstance(c2.body[i].args[arg - 1], Var):
                    body_lit_idx = i + (1 if c2.head is not None else 0)
                    out.append((c2, (body_lit_idx, arg)))
        else:
            for d in self.defs.get(lit.pred, ()):
                assert d.head is not None
                if arg <= len(d.head.args) and isinstance(d.head.args[arg - 1], Var):
                    out.append((d, (0, arg)))
        return out

    def enumerate(self, bound: int = 4, cap: int = 4000) -> list[DPath]:
        paths: list[DPath] = []
        seen: set = set()

        def var_at(label: str, pos: Pos) -> str:
            c = self.by_label[label]
            t = c.literals[pos[0]].args[pos[1] - 1]
            return t.name if isinstance(t, Var) else repr(t)

        def emit(hops: tuple[Hop, ...]) -> None:
            first, last = hops[0], hops[-1]
            c1, c2 = self.by_label[first.label], self.by_label[last.label]
            ends = (_argref(c1, first.entry), _argref(c2, last.exit))
            key = tuple((h.label, h.entry, h.exit) for h in hops)
            rkey = tuple((h.label, h.exit, h.entry) for h in reversed(hops))
            if rkey < key:
                return  # the reversed orientation is (or will be) emitted
            if key in seen:
                return
            seen.add(key)
            chain = tuple(var_at(h.label, h.entry) for h in hops)
            paths.append(DPath(ends, tuple(h.label for h in hops), hops, chain))

        def extend(hops: tuple[Hop, ...], ref_count: int) -> None:
            if len(paths) >= cap:
                return
            emit(hops)
            if len(hops) >= bound:
                return
            last = hops[-1]
            c = self.by_label[last.label]
            for (c2, entry) in self.continuations(c, last.exit):
                if not self.clause_ok(c2.label, ref_count):
                    continue
                for hop in self.hops_from(c2, entry):
                    if hop in hops:
                        continue  # cycle: the starred part of the family
                    extend(hops + (hop,), ref_count)

        for c in self.program.clauses:
            for (p1, p2) in self.intra[c.label]:
                ref = self.activity.counts[c.label]
                if c.label in self.activity.active_clauses:
                    continue
                extend((Hop(c.label, p1, p2),), ref)
                extend((Hop(c.label, p2, p1),), ref)
        return paths

    def escapes(self, path: DPath, pair: frozenset[ArgRef]) -> bool:
        """True if one more hop reaches an interface pair different from `pair`."""
        ref = self.activity.counts[path.hops[0].label]
        for hops in (path.hops, tuple(Hop(h.label, h.exit, h.entry) for h in reversed(path.hops))):
            last = hops[-1]
            c = self.by_label[last.label]
            far_ref = _argref(self.by_label[hops[0].label], hops[0].entry)
            for (c2, entry) in self.continuations(c, last.exit):
                if not self.clause_ok(c2.label, ref):
                    continue
                for hop in self.hops_from(c2, entry):
                    if hop in hops:
                        continue
                    new_end = _argref(c2, hop.exit)
                    if frozenset((far_ref, new_end)) != pair:
                        return True
        return False


def enumerate_dpaths(program: Program, activity: Activity, bound: int = 4) -> list[DPath]:
    """All d-paths up to a clause-sequence length bound."""
    return _PathSpace(program, activity).enumerate(bound)


# ---------------------------------------------------------------------------
# D-links
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DLink:
    link_id: str
    ends: tuple[frozenset[ArgRef], frozenset[ArgRef]]   # (near, far)
    maximal: bool
    origin: str                                         # static | dynamic | split
    signatures: frozenset[tuple[str, ...]]
    paths: tuple[DPath, ...]                            # oriented near -> far
    composed_of: tuple[str, ...] = ()                   # split children ids

    @property
    def near(self) -> ArgRef:
        return next(iter(self.ends[0]))

    @property
    def far(self) -> ArgRef:
        return next(iter(self.ends[1]))

    @property
    def span(self) -> int:
        return max((len(p) for p in self.paths), default=0)

    def __repr__(self) -> str:
        m = "max " if self.maximal else ""
        sigs = ",".join("-".join(s) for s in sorted(self.signatures))
        return f"<{self.link_id} {m}{self.near}..{self.far} via {sigs}>"


@dataclass(frozen=True)
class GapLink:
    gap_id: str
    parent: str                  # DLink id it derives from
    mover: str                   # predicate whose skip created the gap
    far: ArgRef                  # interface at the consumed end
    fill: tuple[Hop, ...]        # clause rewrites available on demand
    origin_site: tuple[str, int] | None  # journey origin (label, body index)

    def __repr__(self) -> str:
        labels = ",".join(sorted({h.label for h in self.fill}))
        return f"<gap {self.gap_id} from {self.parent} mover={self.mover} fill={labels}>"


def _orient(path: DPath, near_preds: frozenset[str]) -> DPath:
    e0, e1 = path.endpoints
    swap = False
    if e1.pred in near_preds and e0.pred not in near_preds:
        swap = True
    elif (e0.pred in near_preds) == (e1.pred in near_preds) and (e1.pred, e1.arg) < (e0.pred, e0.arg):
        swap = True
    if not swap:
        return path
    hops = tuple(Hop(h.label, h.exit, h.entry) for h in reversed(path.hops))
    return DPath((e1, e0), tuple(h.label for h in hops), hops, tuple(reversed(path.variable_chain)))


def compile_dlinks(
    program: Program,
    activity: Activity,
    bound: int = 4,
    origin: str = "static",
    id_start: int = 1,
) -> list[DLink]:
    """Group d-paths into links, mark maximal ones, and store binary splits."""
    space = _PathSpace(program, activity)
    paths = space.enumerate(bound)
    groups: dict[frozenset[ArgRef], list[DPath]] = {}
    for p in paths:
        groups.setdefault(frozenset(p.endpoints), []).append(p)

    near_preds = activity.active_preds
    counter = itertools.count(id_start)
    links: dict[frozenset[ArgRef], DLink] = {}

    def get_or_make(pair: frozenset[ArgRef], members: list[DPath], maximal: bool, why: str) -> DLink:
        if pair in links:
            old = links[pair]
            merged = {(*(p.clause_seq),): p for p in old.paths}
            for p in members:
                merged.setdefault(p.clause_seq, p)
            updated = replace(
                old,
                maximal=old.maximal or maximal,
                paths=tuple(merged.values()),
                signatures=frozenset(merged),
            )
            links[pair] = updated
            return updated
        oriented = sorted((_orient(p, near_preds) for p in members), key=lambda p: p.clause_seq)
        ends = (frozenset({oriented[0].endpoints[0]}), frozenset({oriented[0].endpoints[1]}))
        link = DLink(
            link_id=f"L{next(counter)}",
            ends=ends,
            maximal=maximal,
            origin=why,
            signatures=frozenset(p.clause_seq for p in oriented),
            paths=tuple(oriented),
        )
        links[pair] = link
        return link

    maximal_pairs = []
    for pair, members in sorted(groups.items(), key=lambda kv: sorted(map(repr, kv[0]))):
        if all(not space.escapes(p, pair) for p in members):
            maximal_pairs.append((pair, members))

    for pair, members in maximal_pairs:
        get_or_make(pair, members, maximal=True, why=origin)

    # Binary splitting, far end first, recursively.
    def split(link: DLink, seen: set[frozenset[ArgRef]]) -> None:
        own_pair = frozenset(link.ends[0] | link.ends[1])
        if own_pair in seen:
            return
        seen.add(own_pair)
        multi = [p for p in link.paths if len(p) > 1]
        if not multi:
            return
        child_ids = []
        prefix_members: dict[frozenset[ArgRef], list[DPath]] = {}
        last_members: dict[frozenset[ArgRef], list[DPath]] = {}
        for p in multi:
            c_pref = p.hops[:-1]
            c_last = p.hops[-1:]
            for hops, store in ((c_pref, prefix_members), (c_last, last_members)):
                first, last = hops[0], hops[-1]
                cf = space.by_label[first.label]
                cl = space.by_label[last.label]
                ends = (_argref(cf, first.entry), _argref(cl, last.exit))
                sub = DPath(
                    ends,
                    tuple(h.label for h in hops),
                    hops,
                    tuple(),
                )
                store.setdefault(frozenset(ends), []).append(sub)
        for store in (prefix_members, last_members):
            for pair, members in sorted(store.items(), key=lambda kv: sorted(map(repr, kv[0]))):
                child = get_or_make(pair, members, maximal=False, why="split")
                child_ids.append(child.link_id)
                if any(len(p) > 1 for p in members):
                    split(links[pair], seen)
        key = next(k for k, v in links.items() if v.link_id == link.link_id)
        links[key] = replace(
            links[key],
            composed_of=tuple(i for i in dict.fromkeys(child_ids) if i != link.link_id),
        )

    seen_split: set[frozenset[ArgRef]] = set()
    for pair, _ in maximal_pairs:
        split(links[pair], seen_split)

    return sorted(links.values(), key=lambda l: int(l.link_id[1:]))


def refresh_dlinks(
    program: Program,
    activity: Activity,
    existing: tuple[DLink, ...] | list[DLink],
    bound: int = 4,
) -> tuple[list[DLink], list[DLink]]:
    """Recompute links, keeping ids of surviving ones.

    Returns (all links, newly created links).  Existing links that are no
    longer derivable stay stored (they may describe gapped regions); their
    maximal mark is refreshed when the endpoint pair is re-derived.
    """
    next_id = 1 + max((int(l.link_id[1:]) for l in existing), default=0)
    fresh = compile_dlinks(program, activity, bound, origin="dynamic", id_start=next_id)
    by_pair = {frozenset(l.ends[0] | l.ends[1]): l for l in existing}
    out: list[DLink] = list(existing)
    created: list[DLink] = []
    renumber: dict[str, str] = {}
    counter = itertools.count(next_id)
    for link in fresh:
        pair = frozenset(link.ends[0] | link.ends[1])
        if pair in by_pair:
            old = by_pair[pair]
            idx = out.index(old)
            merged = {p.clause_seq: p for p in old.paths}
            for p in link.paths:
                merged.setdefault(p.clause_seq, p)
            out[idx] = replace(
                old,
                maximal=link.maximal,
                paths=tuple(merged.values()),
                signatures=frozenset(merged),
                composed_of=link.composed_of or old.composed_of,
            )
            renumber[link.link_id] = old.link_id
        else:
            new_id = f"L{next(counter)}"
            renumber[link.link_id] = new_id
            made = replace(link, link_id=new_id)
            out.append(made)
            created.append(made)
    # rewrite composed_of references to the stable ids
    out = [replace(l, composed_of=tuple(renumber.get(c, c) for c in l.composed_of)) for l in out]
    created = [l for l in out if l.link_id in {c.link_id for c in created}]
    return out, created


# ---------------------------------------------------------------------------
# DOT emission
# ---------------------------------------------------------------------------

def to_dot(
    program: Program,
    links: tuple[DLink, ...] | list[DLink],
    gaps: tuple[GapLink, ...] | list[GapLink] = (),
) -> str:
    """D-link graph: predicates as nodes, D-links dotted (bold when maximal),
    gap links dashed."""
    lines = ["graph dlinks {"]
    preds = sorted(program.predicates())
    for p in preds:
        lines.append(f'  "{p}";')
    for l in sorted(links, key=lambda l: int(l.link_id[1:])):
        style = "bold" if l.maximal else "dotted"
        label = l.link_id
        lines.append(
            f'  "{l.near.pred}" -- "{l.far.pred}" [style={style}, label="{label}"];'
        )
    for g in sorted(gaps, key=lambda g: g.gap_id):
        lines.append(
            f'  "{g.mover}" -- "{g.far.pred}" [style=dashed, label="{g.gap_id}"];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"
