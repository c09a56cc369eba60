"""Compile an attack model into an indexed type graph.

The compiled graph carries, per edge, the full disjunction of equality
constraints between the two types, and per type the precomputed tables the
streaming correlator runs on: which attribute combinations must be indexed,
which value permutations are inserted when consequences are marked, which
fact subset governs duplicate detection, and how partially-known alerts are
reconstructed backwards through the graph.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .model import AttackModel, FactClass, HyperAlertType, ValueKind, expand_implications, find_cycle

MAX_COUNT = 2**64 - 1


class CycleError(Exception):
    """The may-prepare-for relation is not acyclic."""


@dataclass(frozen=True)
class EqualityConstraint:
    """A conjunction of pairwise fact equalities between two types.

    `pairs` holds (source fact, destination fact) names, ordered by the
    destination type's fact declaration order.  No source fact repeats on
    the left, no destination fact on the right.  The empty conjunction is
    valid and true on any alert pair.
    """

    pairs: tuple[tuple[str, str], ...]

    def src_facts(self) -> tuple[str, ...]:
        return tuple(u for u, _ in self.pairs)

    def dst_facts(self) -> tuple[str, ...]:
        return tuple(v for _, v in self.pairs)

    def render(self) -> str:
        if not self.pairs:
            return "true"
        return " and ".join(f"{u}={v}" for u, v in self.pairs)


@dataclass(frozen=True)
class TypeEdge:
    src: str
    dst: str
    constraints: tuple[EqualityConstraint, ...]  # disjunctive normal form


@dataclass(frozen=True)
class CorrelationEntry:
    """One indexable decomposition of a constraint.

    dst_subset is in the destination type's fact declaration order and
    src_perm lists the source facts whose values are inserted under the
    matching index key.
    """

    src_perm: tuple[str, ...]
    dst_subset: tuple[str, ...]


@dataclass(frozen=True)
class HypothesisTuple:
    """Backward-construction rule for one constraint of one incoming edge.

    When an alert of the edge's destination type is unexplained and exactly
    the facts in `known_subset` are available among `required_subset`, a
    partial alert of `src_type` is built by copying values along `assign`
    ((source fact, destination fact) pairs) and anchored via the source
    type's index on `index_subset`.
    """

    src_type: str
    index_subset: tuple[str, ...]
    assign: tuple[tuple[str, str], ...]
    known_subset: tuple[str, ...]
    required_subset: tuple[str, ...]


class TypeGraph:
    """Immutable compiled attack-type graph with per-type lookup tables."""

    def __init__(
        self,
        model: AttackModel,
        edges: list[TypeEdge],
        correlation_sets: dict[tuple[str, str], tuple[CorrelationEntry, ...]],
        index_sets: dict[str, tuple[tuple[str, ...], ...]],
        def10_index_sets: dict[str, tuple[tuple[str, ...], ...]],
        implicit_sets: dict[str, tuple[str, ...]],
        hypothesis_sets: dict[str, tuple[HypothesisTuple, ...]],
    ):
        self.model = model
        self.edges = tuple(edges)
        self.edge_map = {(e.src, e.dst): e for e in edges}
        self.correlation_sets = correlation_sets
        self.index_sets = index_sets
        self.def10_index_sets = def10_index_sets
        self.implicit_sets = implicit_sets
        self.hypothesis_sets = hypothesis_sets
        self.in_degree = {t.name: 0 for t in model.types}
        for e in edges:
            self.in_degree[e.dst] += 1

    def index_count(self, type_name: str) -> int:
        """Number of indexed fact combinations for one type."""
        return len(self.index_sets[type_name])


def _subset_key(type_: HyperAlertType):
    pos = {f: i for i, f in enumerate(type_.fact_names())}
    return lambda fact: pos[fact]


def _canon_subset(facts, type_: HyperAlertType) -> tuple[str, ...]:
    return tuple(sorted(facts, key=_subset_key(type_)))


def derive_constraints(a: HyperAlertType, b: HyperAlertType) -> list[EqualityConstraint]:
    """All distinct equality constraints induced by shared predicates of (a, b)."""
    pos_b = {f: i for i, f in enumerate(b.fact_names())}
    seen: dict[tuple, None] = {}
    for ca in a.conseq:
        for pb in b.prereq:
            if ca.predicate != pb.predicate:
                continue
            pairs = tuple(sorted(zip(ca.args, pb.args), key=lambda uv: pos_b[uv[1]]))
            seen.setdefault(pairs, None)
    return [EqualityConstraint(p) for p in seen]


def build_graph(
    model: AttackModel,
    edge_constraints: dict[tuple[str, str], list[EqualityConstraint]],
) -> TypeGraph:
    """Assemble a TypeGraph from explicit per-edge constraint disjunctions.

    Used by compile_model and by tests that inject synthetic constraint
    sets (e.g. ones containing the empty constraint, which the model
    grammar cannot express).
    """
    types = {t.name: t for t in model.types}
    order = {t.name: i for i, t in enumerate(model.types)}
    edges = [
        TypeEdge(src, dst, tuple(cs))
        for (src, dst), cs in sorted(edge_constraints.items(), key=lambda kv: (order[kv[0][0]], order[kv[0][1]]))
        if cs
    ]

    # cycle guard (normally already rejected during validation)
    adj: dict[str, list[str]] = {t.name: [] for t in model.types}
    for e in edges:
        if e.src == e.dst:
            raise CycleError(f"self-loop on type {e.src!r}")
        adj[e.src].append(e.dst)
    seen_depth: dict[str, int] = {}

    def depth(n: str, trail: tuple[str, ...]) -> int:
        if n in trail:
            raise CycleError("cyclic may-prepare-for: " + " -> ".join(trail + (n,)))
        if n not in seen_depth:
            seen_depth[n] = 1 + max((depth(m, trail + (n,)) for m in adj[n]), default=0)
        return seen_depth[n]

    for n in adj:
        depth(n, ())

    correlation_sets: dict[tuple[str, str], tuple[CorrelationEntry, ...]] = {}
    for e in edges:
        entries: dict[CorrelationEntry, None] = {}
        for c in e.constraints:
            entries.setdefault(CorrelationEntry(c.src_facts(), c.dst_facts()), None)
        correlation_sets[(e.src, e.dst)] = tuple(entries)

    # required indexes per type: destination-side fact subsets of incoming entries
    def10: dict[str, tuple[tuple[str, ...], ...]] = {}
    for t in model.types:
        subsets: dict[tuple[str, ...], None] = {}
        for e in edges:
            if e.dst != t.name:
                continue
            for entry in correlation_sets[(e.src, e.dst)]:
                subsets.setdefault(entry.dst_subset, None)
        def10[t.name] = tuple(subsets)

    implicit_sets: dict[str, tuple[str, ...]] = {}
    for t in model.types:
        facts: set[str] = set()
        for e in edges:
            if e.src != t.name:
                continue
            for entry in correlation_sets[(e.src, e.dst)]:
                facts.update(entry.src_perm)
        implicit_sets[t.name] = _canon_subset(facts, t)

    hypothesis_sets: dict[str, tuple[HypothesisTuple, ...]] = {}
    for t in model.types:
        tuples: dict[HypothesisTuple, None] = {}
        for e in edges:
            if e.dst != t.name:
                continue
            src_type = types[e.src]
            src_pos = {f: i for i, f in enumerate(src_type.fact_names())}
            for c in e.constraints:
                required = c.dst_facts()
                by_dst = {v: u for u, v in c.pairs}
                for size in range(len(required), 0, -1):
                    for s in itertools.combinations(required, size):
                        assign = tuple(
                            sorted(((by_dst[v], v) for v in s), key=lambda uv: src_pos[uv[0]])
                        )
                        index_subset = tuple(u for u, _ in assign)
                        tuples.setdefault(
                            HypothesisTuple(e.src, index_subset, assign, s, required), None
                        )
        hypothesis_sets[t.name] = tuple(tuples)

    # expand the index sets: partial attribute combinations referenced by
    # hypothesis tuples become additional indexes, provided they refine an
    # already-required index (otherwise nothing would ever populate them)
    index_sets: dict[str, tuple[tuple[str, ...], ...]] = {}
    for t in model.types:
        expanded: dict[tuple[str, ...], None] = {s: None for s in def10[t.name]}
        members = [set(s) for s in def10[t.name]]
        for owner in model.types:
            for tup in hypothesis_sets[owner.name]:
                if tup.src_type != t.name or not tup.index_subset:
                    continue
                sub = set(tup.index_subset)
                if any(sub <= m for m in members):
                    expanded.setdefault(tup.index_subset, None)
        index_sets[t.name] = tuple(expanded)

    return TypeGraph(model, edges, correlation_sets, index_sets, def10, implicit_sets, hypothesis_sets)


def compile_model(model: AttackModel) -> TypeGraph:
    """Compile a validated model (Def-2 edges, constraint DNF, all tables).

    Implications are expanded first; the result is deterministic for a
    given model source.  Raises CycleError on a cyclic relation.
    """
    expanded = expand_implications(model)
    types = list(expanded.types)
    edge_constraints: dict[tuple[str, str], list[EqualityConstraint]] = {}
    for a in types:
        for b in types:
            cs = derive_constraints(a, b)
            if cs:
                edge_constraints[(a.name, b.name)] = cs
    return build_graph(expanded, edge_constraints)


# ---------------------------------------------------------------------------
# Constraint counting and enumeration


def count_constraints(class_counts: dict[str | FactClass, int]) -> int:
    """Maximum number of distinct equality constraints on one ordered edge.

    For each comparability class with c attributes on both sides there are
    sum_j P(c,j)*C(c,j) ways to build j pairs; classes multiply.  The empty
    constraint is included (the all-j=0 term).
    """
    total = 1
    for cls, c in class_counts.items():
        if c < 0:
            raise ValueError(f"negative attribute count for {cls!r}")
        total *= sum(math.perm(c, j) * math.comb(c, j) for j in range(c + 1))
        if total > MAX_COUNT:
            raise OverflowError("constraint count exceeds 64 unsigned bits")
    return total


def _sorted_counts(class_counts: dict) -> list[tuple[str, int]]:
    return sorted(
        ((cls.name if isinstance(cls, FactClass) else cls, c) for cls, c in class_counts.items()),
        key=lambda kv: kv[0],
    )


def synthetic_fact_names(class_counts: dict) -> tuple[list[tuple[str, str]], list[tuple[str, str]]]:
    """Fact lists (name, class) for a synthetic source/destination type pair.

    Source facts are a1..aN and destination facts b1..bN, numbered across
    classes in class-name order.
    """
    src: list[tuple[str, str]] = []
    dst: list[tuple[str, str]] = []
    i = 1
    for cls, c in _sorted_counts(class_counts):
        for _ in range(c):
            src.append((f"a{i}", cls))
            dst.append((f"b{i}", cls))
            i += 1
    return src, dst


def enumerate_constraints(n_per_class: dict) -> list[EqualityConstraint]:
    """Every syntactically valid constraint between two synthetic types.

    Testing aid for the counting formula; counts above 5 per class are
    rejected.  Cardinality equals count_constraints on the same input.
    """
    counts = _sorted_counts(n_per_class)
    if any(c > 5 for _, c in counts):
        raise ValueError("enumerate_constraints is limited to 5 attributes per class")
    src, dst = synthetic_fact_names(n_per_class)
    by_class_src: dict[str, list[str]] = {cls: [] for cls, _ in counts}
    by_class_dst: dict[str, list[str]] = {cls: [] for cls, _ in counts}
    for (a, cls), (b, _) in zip(src, dst):
        by_class_src[cls].append(a)
        by_class_dst[cls].append(b)
    dst_pos = {b: i for i, (b, _) in enumerate(dst)}

    per_class: list[list[tuple[tuple[str, str], ...]]] = []
    for cls, c in counts:
        options: list[tuple[tuple[str, str], ...]] = []
        for m in range(c + 1):
            for left in itertools.combinations(by_class_src[cls], m):
                for chosen in itertools.combinations(by_class_dst[cls], m):
                    for right in itertools.permutations(chosen):
                        options.append(tuple(zip(left, right)))
        per_class.append(options)

    out: list[EqualityConstraint] = []
    for combo in itertools.product(*per_class) if per_class else [()]:
        pairs: list[tuple[str, str]] = []
        for part in combo:
            pairs.extend(part)
        pairs.sort(key=lambda uv: dst_pos[uv[1]])
        out.append(EqualityConstraint(tuple(pairs)))
    return out


def worst_case_graph(class_counts: dict) -> TypeGraph:
    """Two synthetic types joined by every possible constraint.

    Realizes the theoretical maximum of indexable attribute combinations on
    the destination type (2^n for n facts, empty combination included).
    """
    src, dst = synthetic_fact_names(class_counts)
    classes = tuple(
        FactClass(cls, ValueKind.INT) for cls, _ in _sorted_counts(class_counts)
    )
    model = AttackModel(
        classes=classes,
        predicates=(),
        rules=(),
        types=(
            HyperAlertType("A", tuple(src), (), ()),
            HyperAlertType("B", tuple(dst), (), ()),
        ),
    )
    return build_graph(model, {("A", "B"): enumerate_constraints(class_counts)})


# ---------------------------------------------------------------------------
# Reports


def render_report(tg: TypeGraph) -> str:
    """Human-readable compilation summary: edges and table sizes."""
    lines = [f"types: {len(tg.model.types)}  edges: {len(tg.edges)}"]
    for e in tg.edges:
        n = len(tg.correlation_sets[(e.src, e.dst)])
        lines.append(f"edge {e.src} -> {e.dst}: {len(e.constraints)} constraint(s), {n} entry(ies)")
    for t in tg.model.types:
        lines.append(
            f"type {t.name}: indexes={tg.index_count(t.name)} "
            f"implicit={len(tg.implicit_sets[t.name])} "
            f"hypothesis={len(tg.hypothesis_sets[t.name])}"
        )
    return "\n".join(lines) + "\n"


def render_dot(tg: TypeGraph) -> str:
    """DOT rendering of the type graph, edges labeled by constraint counts."""
    lines = ["digraph type_graph {"]
    for t in tg.model.types:
        lines.append(f'  "{t.name}";')
    for e in tg.edges:
        lines.append(f'  "{e.src}" -> "{e.dst}" [label="{len(e.constraints)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def canonical_dump(tg: TypeGraph) -> str:
    """Full deterministic text dump of edges and tables, for equality tests."""
    lines: list[str] = []
    for t in tg.model.types:
        lines.append(f"type {t.name} facts={','.join(t.fact_names())}")
    for e in tg.edges:
        for c in e.constraints:
            lines.append(f"edge {e.src}->{e.dst} [{c.render()}]")
        for entry in tg.correlation_sets[(e.src, e.dst)]:
            lines.append(
                f"entry {e.src}->{e.dst} perm=({','.join(entry.src_perm)}) "
                f"subset=({','.join(entry.dst_subset)})"
            )
    for t in tg.model.types:
        name = t.name
        for s in tg.index_sets[name]:
            kind = "exact" if s in tg.def10_index_sets[name] else "partial"
            lines.append(f"index {name} ({','.join(s)}) {kind}")
        lines.append(f"implicit {name} ({','.join(tg.implicit_sets[name])})")
        for h in tg.hypothesis_sets[name]:
            lines.append(
                f"hypo {name} src={h.src_type} i=({','.join(h.index_subset)}) "
                f"p=({';'.join(f'{u}<-{v}' for u, v in h.assign)}) "
                f"m=({','.join(h.known_subset)}) o=({','.join(h.required_subset)})"
            )
    return "\n".join(lines) + "\n"
