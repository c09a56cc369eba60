"""Backward reconstruction of missing attack steps.

An alert whose prerequisites were never satisfied is explained by walking
the type graph backwards: for each constraint that could have prepared it,
a partial alert is built from the constrained attribute values and either
anchored on an earlier real alert found through the indexes, or explained
recursively.  A chain enters the correlation graph only when a real alert
anchors it; failed branches leave no trace.
"""

from __future__ import annotations

from bisect import insort

from .alerts import HYPOTHESIZED, REAL, HyperAlert


class _Branch:
    """Scratch buffer for one explanation branch, committed atomically."""

    __slots__ = ("vertices", "edges", "pending", "keys")

    def __init__(self):
        self.vertices: list[HyperAlert] = []
        self.edges: list[tuple[HyperAlert, HyperAlert]] = []
        self.pending: dict = {}
        self.keys: list = []

    def add_vertex(self, alert: HyperAlert, dbkey) -> None:
        self.vertices.append(alert)
        if dbkey not in self.pending:
            self.pending[dbkey] = alert
            self.keys.append(dbkey)

    def mark(self):
        return len(self.vertices), len(self.edges), len(self.keys)

    def rollback(self, mark) -> None:
        nv, ne, nk = mark
        del self.vertices[nv:]
        del self.edges[ne:]
        for k in self.keys[nk:]:
            del self.pending[k]
        del self.keys[nk:]


def strategically_indistinguishable(h1: HyperAlert, h2: HyperAlert, target: HyperAlert) -> bool:
    """Same type, same known-fact combination with the same values, and both
    ordered before the alert they were hypothesized to explain."""
    if h1.type_name != h2.type_name:
        return False
    kp = h1.known_positions()
    if kp != h2.known_positions():
        return False
    if any(h1.values[q] != h2.values[q] for q in kp):
        return False
    return h1.seq < target.seq and h2.seq < target.seq


def explain(session, h: HyperAlert) -> bool:
    """Try to explain alert h; commits every branch that reaches a real anchor.

    Returns True iff at least one explanation was committed.  h must have no
    incoming correlation and a non-empty prerequisite set.
    """
    plan = session._plans[session._tid[h.type_name]]
    success = False
    for hp in plan.hypo:
        branch = _Branch()
        if _try_tuple(session, h, hp, branch):
            _commit(session, h, branch)
            success = True
    return success


def _try_tuple(session, h: HyperAlert, hp, branch: _Branch) -> bool:
    values = h.values
    # applicable iff the bound facts among the constraint's required facts
    # are exactly this tuple's combination
    for q in hp.known_pos:
        if values[q] is None:
            return False
    for q in hp.req_rest_pos:
        if values[q] is not None:
            return False

    splan = session._plans[hp.src_tid]
    cand = [None] * hp.nsrc
    for sp, dp in hp.assign:
        cand[sp] = values[dp]
    dbkey = (hp.src_known_pos, tuple(cand[sp] for sp in hp.src_known_pos))

    if session.config.consolidate_hypotheses:
        existing = session.hypo_db[hp.src_tid].get(dbkey)
        if existing is None:
            existing = branch.pending.get((hp.src_tid, dbkey))
        if existing is not None:
            branch.edges.append((existing, h))
            return True

    anchors = _anchor_hits(session, hp, values)
    if anchors:
        hypo = _new_hypo(session, splan, tuple(cand), h.ts)
        branch.add_vertex(hypo, (hp.src_tid, dbkey))
        for r in anchors:
            branch.edges.append((r, hypo))
        branch.edges.append((hypo, h))
        return True

    if hp.src_in_degree == 0:
        return False
    if not any(v is not None for v in cand):
        return False

    hypo = _new_hypo(session, splan, tuple(cand), h.ts)
    branch.add_vertex(hypo, (hp.src_tid, dbkey))
    if _explain_into(session, hypo, branch):
        branch.edges.append((hypo, h))
        return True
    return False


def _explain_into(session, h: HyperAlert, branch: _Branch) -> bool:
    plan = session._plans[session._tid[h.type_name]]
    success = False
    for hp in plan.hypo:
        mark = branch.mark()
        if _try_tuple(session, h, hp, branch):
            success = True
        else:
            branch.rollback(mark)
    return success


def _anchor_hits(session, hp, values) -> list[HyperAlert]:
    """Real alerts preparing for the candidate, from the widest matching index."""
    exact = session.indexes[hp.src_tid]
    partial = session.partial[hp.src_tid]
    for eslot, pslot, keypos in hp.anchors:
        key = values[keypos[0]] if len(keypos) == 1 else tuple([values[q] for q in keypos])
        reals: list[HyperAlert] = []
        seen: set[str] = set()
        for fam, slot in ((exact, eslot), (partial, pslot)):
            if slot < 0:
                continue
            hits = fam[slot].get(key)
            if not hits:
                continue
            for a in hits:
                if a.origin is REAL and a.id not in seen:
                    seen.add(a.id)
                    reals.append(a)
        if reals:
            return reals
    return []


def _new_hypo(session, splan, values, ts) -> HyperAlert:
    return HyperAlert(
        session._next_hypo_id(), splan.name, splan.fact_names, splan.kinds,
        values, ts, None, HYPOTHESIZED,
    )


def _commit(session, target: HyperAlert, branch: _Branch) -> None:
    """Enter one successful branch into the session.

    Vertices receive sequence ranks in topological order of the branch's
    internal edges, so every committed edge runs from a lower to a higher
    sequence number.
    """
    vertices = branch.vertices
    arrival = target.seq[0]
    index_of = {v.id: i for i, v in enumerate(vertices)}
    n = len(vertices)
    adj: list[list[int]] = [[] for _ in range(n)]
    indeg = [0] * n
    for u, w in branch.edges:
        iu = index_of.get(u.id)
        iw = index_of.get(w.id)
        if iu is not None and iw is not None:
            adj[iu].append(iw)
            indeg[iw] += 1
    avail = sorted(i for i in range(n) if indeg[i] == 0)
    order: list[int] = []
    while avail:
        i = avail.pop(0)
        order.append(i)
        for j in adj[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                insort(avail, j)

    for i in order:
        v = vertices[i]
        v.seq = (arrival, session._hypo_rank)
        session._hypo_rank += 1
        session.graph.add_vertex(v)
        dbkey = (v.known_positions(), tuple(v.values[q] for q in v.known_positions()))
        session.hypo_db[session._tid[v.type_name]].setdefault(dbkey, v)
        session.n_hypo += 1
        session._emit(("HYPO", v.id, v.type_name, v.bound_facts_text()))
        session._mark_partial(v)
    for u, w in branch.edges:
        if session.graph.add_edge(u.id, w.id):
            session.n_corr += 1
            session._emit(("CORR", u.id, w.id))
