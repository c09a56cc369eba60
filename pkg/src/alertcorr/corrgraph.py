"""Output correlation graph: vertices are hyper-alerts, edges are
prepares-for relations.  Degree counters are maintained incrementally so
trivial (degree-zero) vertices can be dropped from exports cheaply.
"""

from __future__ import annotations

import json

from .alerts import HYPOTHESIZED, HyperAlert


class GraphError(Exception):
    pass


class CorrelationGraph:
    def __init__(self):
        self.vertices: dict[str, HyperAlert] = {}
        self.edges: set[tuple[str, str]] = set()
        self._indeg: dict[str, int] = {}
        self._outdeg: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self.vertices)

    def add_vertex(self, alert: HyperAlert) -> str:
        if alert.id in self.vertices:
            raise GraphError(f"duplicate vertex id {alert.id!r}")
        self.vertices[alert.id] = alert
        self._indeg[alert.id] = 0
        self._outdeg[alert.id] = 0
        return alert.id

    def add_edge(self, src: str, dst: str) -> bool:
        """Insert edge src->dst; returns False if already present.

        Both endpoints must exist and the source must order strictly before
        the destination, which keeps the graph acyclic by construction.
        """
        s = self.vertices.get(src)
        d = self.vertices.get(dst)
        if s is None or d is None:
            raise GraphError(f"unknown vertex in edge {src!r} -> {dst!r}")
        if s.seq >= d.seq:
            raise GraphError(f"edge {src!r} -> {dst!r} violates arrival order")
        if (src, dst) in self.edges:
            return False
        self.edges.add((src, dst))
        self._outdeg[src] += 1
        self._indeg[dst] += 1
        return True

    def degree(self, vertex_id: str) -> tuple[int, int]:
        return self._indeg[vertex_id], self._outdeg[vertex_id]

    def copy(self) -> "CorrelationGraph":
        g = CorrelationGraph()
        g.vertices = dict(self.vertices)
        g.edges = set(self.edges)
        g._indeg = dict(self._indeg)
        g._outdeg = dict(self._outdeg)
        return g

    def prune_trivial(self) -> "CorrelationGraph":
        """View without isolated vertices; edge set identical, original untouched."""
        g = CorrelationGraph()
        for vid, alert in self.vertices.items():
            if self._indeg[vid] or self._outdeg[vid]:
                g.vertices[vid] = alert
                g._indeg[vid] = self._indeg[vid]
                g._outdeg[vid] = self._outdeg[vid]
        g.edges = set(self.edges)
        return g


def _sorted_vertices(graph: CorrelationGraph) -> list[HyperAlert]:
    return sorted(graph.vertices.values(), key=lambda a: (a.seq, a.id))


def export_canonical(graph: CorrelationGraph) -> str:
    """Deterministic line-oriented export: node records sorted by sequence,
    then edge records sorted lexicographically.  Byte-stable for golden
    tests; records reuse the alert-stream JSON shape.
    """
    lines: list[str] = []
    for a in _sorted_vertices(graph):
        rec = {
            "kind": "node",
            "id": a.id,
            "type": a.type_name,
            "origin": a.origin,
            "ts": a.ts,
            "seq": list(a.seq),
            "attrs": a.rendered_attrs(),
        }
        if a.aggregated:
            rec["aggregated"] = a.aggregated
        lines.append(json.dumps(rec, sort_keys=True, separators=(",", ":")))
    for src, dst in sorted(graph.edges):
        lines.append(json.dumps({"kind": "edge", "src": src, "dst": dst}, sort_keys=True, separators=(",", ":")))
    return "\n".join(lines) + ("\n" if lines else "")


def export_dot(graph: CorrelationGraph) -> str:
    """DOT rendering; hypothesized vertices get dashed borders."""
    lines = ["digraph correlation {"]
    for a in _sorted_vertices(graph):
        attrs = a.rendered_attrs()
        label = "\\n".join(
            [a.type_name, a.id] + [f"{f}={attrs[f]}" for f in a.facts if f in attrs]
        )
        style = ' style="dashed"' if a.origin == HYPOTHESIZED else ""
        lines.append(f'  "{a.id}" [label="{label}"{style}];')
    for src, dst in sorted(graph.edges):
        lines.append(f'  "{src}" -> "{dst}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
