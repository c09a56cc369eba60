"""Brute-force batch correlator used as ground truth in tests.

Evaluates every ordered alert pair directly against the constraint
disjunction of the corresponding type edge; no indexes, no precomputed
tables, no implicit aggregation.  Quadratic, guarded to small inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .alerts import REAL, REAL_RANK, HyperAlert
from .model import AttackModel, canonical_value
from .typegraph import TypeGraph

SIZE_GUARD = 20_000


def build_alerts(model: AttackModel, records: list[dict]) -> list[HyperAlert]:
    """Fully-bound alerts from parsed records, in input order.

    Raises ValueError on unknown types, missing facts or bad values; the
    oracle has no notion of recoverable per-line errors.
    """
    types = model.type_map()
    cmap = model.class_map()
    out: list[HyperAlert] = []
    for n, rec in enumerate(records, 1):
        t = types.get(rec.get("type"))
        if t is None:
            raise ValueError(f"record {n}: unknown type {rec.get('type')!r}")
        facts = t.fact_names()
        kinds = tuple(cmap[c].kind for _, c in t.facts)
        attrs = rec.get("attrs") or {}
        values = []
        for f, k in zip(facts, kinds):
            if f not in attrs:
                raise ValueError(f"record {n}: missing fact {f!r}")
            values.append(canonical_value(k, attrs[f]))
        out.append(
            HyperAlert(
                rec.get("id") or f"a{n}", t.name, facts, kinds,
                tuple(values), rec.get("ts", 0), (n, REAL_RANK), REAL,
            )
        )
    return out


@dataclass
class EdgeReport:
    edges: set[tuple[str, str]] = field(default_factory=set)
    satisfied_constraint: dict[tuple[str, str], int] = field(default_factory=dict)


def batch_correlate(tg: TypeGraph, alerts: list[HyperAlert]) -> EdgeReport:
    """All pairs (h', h) where h' prepares for h, by direct evaluation.

    Alerts must be fully bound and listed in arrival order.  An edge is
    recorded with the index of the first constraint that held.
    """
    if len(alerts) > SIZE_GUARD:
        raise ValueError(f"batch_correlate is limited to {SIZE_GUARD} alerts")
    report = EdgeReport()
    by_type: dict[str, list[tuple[int, HyperAlert]]] = {}
    for i, a in enumerate(alerts):
        by_type.setdefault(a.type_name, []).append((i, a))

    for edge in tg.edges:
        srcs = by_type.get(edge.src)
        dsts = by_type.get(edge.dst)
        if not srcs or not dsts:
            continue
        src_type = tg.model.type_map()[edge.src]
        dst_type = tg.model.type_map()[edge.dst]
        spos = {f: i for i, f in enumerate(src_type.fact_names())}
        dpos = {f: i for i, f in enumerate(dst_type.fact_names())}
        compiled = [
            [(spos[u], dpos[v]) for u, v in c.pairs] for c in edge.constraints
        ]
        for i, a in srcs:
            av = a.values
            for j, b in dsts:
                if i >= j:
                    continue
                bv = b.values
                for ci, pairs in enumerate(compiled):
                    if all(av[u] == bv[v] for u, v in pairs):
                        report.edges.add((a.id, b.id))
                        report.satisfied_constraint[(a.id, b.id)] = ci
                        break
    return report


@dataclass
class DiffReport:
    oracle_only: list[tuple[str, str]]
    other_only: list[tuple[str, str]]
    explanations: dict[tuple[str, str], str]

    def empty(self) -> bool:
        return not self.oracle_only and not self.other_only

    def render(self) -> str:
        if self.empty():
            return "edge sets identical\n"
        lines = []
        for e in self.oracle_only:
            lines.append(f"oracle-only {e[0]} -> {e[1]} ({self.explanations[e]})")
        for e in self.other_only:
            lines.append(f"other-only {e[0]} -> {e[1]}")
        return "\n".join(lines) + "\n"


def diff(report: EdgeReport, other: set[tuple[str, str]]) -> DiffReport:
    """Symmetric difference with the oracle's matched constraint per edge."""
    oracle_only = sorted(report.edges - other)
    other_only = sorted(other - report.edges)
    explanations = {
        e: f"constraint #{report.satisfied_constraint[e]}" for e in oracle_only
    }
    return DiffReport(oracle_only, other_only, explanations)
