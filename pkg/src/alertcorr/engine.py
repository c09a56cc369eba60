"""Streaming correlation engine.

A session ingests alerts in arrival order and maintains, per type, keyed
maps from attribute-value combinations to the earlier alerts whose
consequences cover them.  Processing one alert is a model-bounded constant
number of map searches and insertions: look up duplicates, look up
preparers, then insert the alert's own consequence keys.

The keyed maps are CPython dicts.  Their amortized cost is O(1); the
worst case under deliberately engineered key collisions is linear, which
is mitigated for string keys by interpreter-level hash randomization but
is not a hard O(log n) bound (a balanced-tree map could be substituted
behind the same plan structures if that guarantee is required).
"""

from __future__ import annotations

from dataclasses import dataclass

from . import hypothesize
from .alerts import REAL, REAL_RANK, RECORD_FIELDS, HyperAlert
from .corrgraph import CorrelationGraph
from .model import ValueKind, canonical_value
from .typegraph import TypeGraph

_KIND_CODE = {ValueKind.IPV4: 0, ValueKind.INT: 1, ValueKind.STR: 2}


@dataclass(frozen=True)
class EngineConfig:
    implicit_correlation: bool = True
    hypothesize: bool = False
    consolidate_hypotheses: bool = False

    def __post_init__(self):
        if self.consolidate_hypotheses and not self.hypothesize:
            raise ValueError("consolidate_hypotheses requires hypothesize")


VARIANTS = {
    "1a": EngineConfig(implicit_correlation=False),
    "1b": EngineConfig(),
    "2a": EngineConfig(hypothesize=True, consolidate_hypotheses=False),
    "2b": EngineConfig(hypothesize=True, consolidate_hypotheses=True),
}


def config_for_variant(name: str) -> EngineConfig:
    try:
        return VARIANTS[name]
    except KeyError:
        raise ValueError(f"unknown variant {name!r} (expected 1a, 1b, 2a or 2b)") from None


class _HypoPlan:
    __slots__ = (
        "src_tid", "known_pos", "req_rest_pos", "assign", "src_known_pos",
        "nsrc", "anchors", "src_in_degree",
    )

    def __init__(self, src_tid, known_pos, req_rest_pos, assign, nsrc, anchors, src_in_degree):
        self.src_tid = src_tid
        self.known_pos = known_pos            # positions (in the explained type) that must be bound
        self.req_rest_pos = req_rest_pos      # constraint positions that must be unbound
        self.assign = assign                  # (src position, dst position) value copies
        self.src_known_pos = tuple(sp for sp, _ in assign)
        self.nsrc = nsrc
        self.anchors = anchors                # (exact slot, partial slot, dst key positions), largest first
        self.src_in_degree = src_in_degree


class _TypePlan:
    __slots__ = (
        "tid", "name", "fact_names", "kinds", "kind_codes", "nfacts",
        "implicit_pos", "search1", "searchN", "empty_in",
        "inserts1", "insertsN", "partial_inserts", "empty_out",
        "hypo", "in_degree", "prereq_nonempty",
    )


def _positions(facts: tuple[str, ...], subset) -> tuple[int, ...]:
    pos = {f: i for i, f in enumerate(facts)}
    return tuple(pos[f] for f in subset)


def _build_plans(tg: TypeGraph):
    """Flatten the compiled tables into dense per-type slot plans."""
    model = tg.model
    tid_of = {t.name: i for i, t in enumerate(model.types)}

    exact_slot: list[dict[tuple, int]] = []
    partial_slot: list[dict[tuple, int]] = []
    for t in model.types:
        exact_slot.append({s: i for i, s in enumerate(x for x in tg.def10_index_sets[t.name] if x)})
        partial_slot.append({s: i for i, s in enumerate(x for x in tg.index_sets[t.name] if x)})

    empty_edge_slot: dict[tuple[str, str], int] = {}
    for e in tg.edges:
        if any(not c.pairs for c in e.constraints):
            empty_edge_slot[(e.src, e.dst)] = len(empty_edge_slot)

    plans: list[_TypePlan] = []
    for t in model.types:
        cmap = model.class_map()
        p = _TypePlan()
        p.tid = tid_of[t.name]
        p.name = t.name
        p.fact_names = t.fact_names()
        p.kinds = tuple(cmap[c].kind for _, c in t.facts)
        p.kind_codes = tuple(_KIND_CODE[k] for k in p.kinds)
        p.nfacts = len(p.fact_names)
        p.implicit_pos = _positions(p.fact_names, tg.implicit_sets[t.name])
        p.in_degree = tg.in_degree[t.name]
        p.prereq_nonempty = bool(t.prereq)

        search1, searchN = [], []
        for s, slot in exact_slot[p.tid].items():
            poss = _positions(p.fact_names, s)
            if len(poss) == 1:
                search1.append((slot, poss[0]))
            else:
                searchN.append((slot, poss))
        p.search1 = tuple(search1)
        p.searchN = tuple(searchN)
        p.empty_in = tuple(
            slot for (src, dst), slot in empty_edge_slot.items() if dst == t.name
        )
        p.empty_out = tuple(
            slot for (src, dst), slot in empty_edge_slot.items() if src == t.name
        )

        ins1, insN = [], []
        partial_ins: dict[tuple, None] = {}
        for (src, dst), entries in tg.correlation_sets.items():
            if src != t.name:
                continue
            dtid = tid_of[dst]
            dst_type = model.types[dtid]
            for entry in entries:
                if not entry.dst_subset:
                    continue  # empty constraint: handled via the per-edge presence list
                slot = exact_slot[dtid][entry.dst_subset]
                poss = _positions(p.fact_names, entry.src_perm)
                if len(poss) == 1:
                    ins1.append((dtid, slot, poss[0]))
                else:
                    insN.append((dtid, slot, poss))
                # project the entry onto every finer indexed combination
                by_dst = dict(zip(entry.dst_subset, entry.src_perm))
                for x, pslot in partial_slot[dtid].items():
                    if x == entry.dst_subset or not set(x) < set(entry.dst_subset):
                        continue
                    proj = _positions(p.fact_names, tuple(by_dst[v] for v in x))
                    partial_ins.setdefault((dtid, pslot, proj), None)
        p.inserts1 = tuple(ins1)
        p.insertsN = tuple(insN)
        p.partial_inserts = tuple(partial_ins)

        hypo = []
        for tup in tg.hypothesis_sets[t.name]:
            stid = tid_of[tup.src_type]
            src_type = model.types[stid]
            src_facts = src_type.fact_names()
            known_pos = _positions(p.fact_names, tup.known_subset)
            req_rest = tuple(
                q for q in _positions(p.fact_names, tup.required_subset) if q not in known_pos
            )
            assign = tuple(
                (src_facts.index(u), p.fact_names.index(v)) for u, v in tup.assign
            )
            dst_of_src = {u: v for u, v in tup.assign}
            anchors = []
            isub = set(tup.index_subset)
            for x in tg.index_sets[tup.src_type]:
                if not x or not set(x) <= isub:
                    continue
                keypos = tuple(p.fact_names.index(dst_of_src[u]) for u in x)
                anchors.append(
                    (
                        len(x),
                        _positions(src_facts, x),
                        exact_slot[stid].get(x, -1),
                        partial_slot[stid].get(x, -1),
                        keypos,
                    )
                )
            anchors.sort(key=lambda a: (-a[0], a[1]))
            hypo.append(
                _HypoPlan(
                    stid,
                    known_pos,
                    req_rest,
                    assign,
                    len(src_facts),
                    tuple((e, q, kp) for _, _, e, q, kp in anchors),
                    tg.in_degree[tup.src_type],
                )
            )
        p.hypo = tuple(hypo)
        plans.append(p)
    return plans, tid_of, len(empty_edge_slot), exact_slot, partial_slot


class EngineError(Exception):
    pass


class Session:
    """Single-writer streaming state over one compiled type graph.

    process() calls must be externally serialized in stream order; finalize
    snapshots may be taken between calls.  Distinct sessions over a shared
    TypeGraph are independent.
    """

    def __init__(self, tg: TypeGraph, config: EngineConfig | None = None):
        self.tg = tg
        self.config = config or EngineConfig()
        plans, tid_of, n_empty_edges, exact_slot, partial_slot = _build_plans(tg)
        self._plans = plans
        self._tid = tid_of
        self.indexes = [[{} for _ in exact_slot[i]] for i in range(len(plans))]
        if self.config.hypothesize:
            self.partial = [[{} for _ in partial_slot[i]] for i in range(len(plans))]
            self.hypo_db = [{} for _ in plans]
        else:
            self.partial = None
            self.hypo_db = None
        self.empty_edges = [[] for _ in range(n_empty_edges)]
        self.implicit = [{} for _ in plans]
        self.graph = CorrelationGraph()
        self.last_ts = 0
        self.arrivals = 0
        self.alerts_in = 0
        self.n_corr = 0
        self.n_aggr = 0
        self.n_hypo = 0
        self.n_err = 0
        self._hypo_ids = 0
        self._hypo_rank = 0
        self._events: list | None = None

    def index_map_count(self) -> int:
        n = sum(len(fam) for fam in self.indexes)
        if self.partial is not None:
            n += sum(len(fam) for fam in self.partial)
        return n

    # -- stream interface ---------------------------------------------------

    def process(self, record: dict) -> list[tuple]:
        """Run one alert through the correlator; returns the emitted events.

        Event tuples: ("CORR", src_id, dst_id), ("AGGR", vertex_id, raw_id),
        ("HYPO", new_id, type, bound_facts), ("ERR", reason).  A rejected
        alert emits a single ERR event and leaves the session unchanged.
        """
        events: list[tuple] = []
        if len(record) > 4 or any(k not in RECORD_FIELDS for k in record):
            bad = [k for k in record if k not in RECORD_FIELDS]
            events.append(("ERR", f"unknown record field(s): {', '.join(sorted(bad))}"))
            self.n_err += 1
            return events
        tname = record.get("type")
        tid = self._tid.get(tname)
        if tid is None:
            events.append(("ERR", f"unknown type {tname!r}"))
            self.n_err += 1
            return events
        ts = record.get("ts")
        if type(ts) is not int or ts < 0:
            events.append(("ERR", "ts must be a non-negative integer"))
            self.n_err += 1
            return events
        if ts < self.last_ts:
            events.append(("ERR", f"timestamp regression: {ts} < {self.last_ts}"))
            self.n_err += 1
            return events
        attrs = record.get("attrs")
        if not isinstance(attrs, dict):
            events.append(("ERR", "missing attrs"))
            self.n_err += 1
            return events
        plan = self._plans[tid]
        vals: list = []
        if len(attrs) != plan.nfacts:
            missing = [f for f in plan.fact_names if f not in attrs]
            extra = [k for k in attrs if k not in plan.fact_names]
            what = (f"missing fact(s): {', '.join(missing)}" if missing
                    else f"unknown fact(s): {', '.join(extra)}")
            events.append(("ERR", what))
            self.n_err += 1
            return events
        for f, kc, kind in zip(plan.fact_names, plan.kind_codes, plan.kinds):
            v = attrs.get(f)
            if v is None:
                events.append(("ERR", f"missing fact(s): {f}"))
                self.n_err += 1
                return events
            if kc == 0 and type(v) is int and 0 <= v < 4294967296:
                vals.append(v)
            elif kc == 1 and type(v) is int:
                vals.append(v)
            elif kc == 2 and type(v) is str:
                vals.append(v)
            else:
                try:
                    vals.append(canonical_value(kind, v))
                except ValueError as exc:
                    events.append(("ERR", f"bad value for {f}: {exc}"))
                    self.n_err += 1
                    return events
        alert_id = record.get("id")
        if alert_id is not None and alert_id in self.graph.vertices:
            events.append(("ERR", f"duplicate alert id {alert_id!r}"))
            self.n_err += 1
            return events

        # accepted from here on
        self.arrivals += 1
        self.alerts_in += 1
        n = self.arrivals
        self.last_ts = ts
        if alert_id is None:
            alert_id = f"a{n}"

        implicit_on = self.config.implicit_correlation
        if implicit_on:
            ipos = plan.implicit_pos
            if len(ipos) == 1:
                ikey = vals[ipos[0]]
            else:
                ikey = tuple([vals[q] for q in ipos])
            existing = self.implicit[tid].get(ikey)
            if existing is not None:
                if existing.aggregated is None:
                    existing.aggregated = [alert_id]
                else:
                    existing.aggregated.append(alert_id)
                events.append(("AGGR", existing.id, alert_id))
                self.n_aggr += 1
                return events

        values = tuple(vals)
        h = HyperAlert(alert_id, plan.name, plan.fact_names, plan.kinds,
                       values, ts, (n, REAL_RANK), REAL)
        graph = self.graph
        graph.add_vertex(h)

        # search for correlations among earlier alerts
        idx = self.indexes[tid]
        seen_src: set | None = None
        for slot, q in plan.search1:
            hits = idx[slot].get(values[q])
            if hits:
                if seen_src is None:
                    seen_src = set()
                for hp in hits:
                    if hp.id not in seen_src:
                        seen_src.add(hp.id)
                        graph.add_edge(hp.id, alert_id)
                        events.append(("CORR", hp.id, alert_id))
        for slot, poss in plan.searchN:
            hits = idx[slot].get(tuple([values[q] for q in poss]))
            if hits:
                if seen_src is None:
                    seen_src = set()
                for hp in hits:
                    if hp.id not in seen_src:
                        seen_src.add(hp.id)
                        graph.add_edge(hp.id, alert_id)
                        events.append(("CORR", hp.id, alert_id))
        for slot in plan.empty_in:
            for hp in self.empty_edges[slot]:
                if seen_src is None:
                    seen_src = set()
                if hp.id not in seen_src:
                    seen_src.add(hp.id)
                    graph.add_edge(hp.id, alert_id)
                    events.append(("CORR", hp.id, alert_id))
        if seen_src:
            self.n_corr += len(seen_src)

        if not seen_src and plan.prereq_nonempty and self.config.hypothesize:
            self._events = events
            self._hypo_rank = 0
            hypothesize.explain(self, h)
            self._events = None

        # mark consequences
        indexes = self.indexes
        for dtid, slot, q in plan.inserts1:
            d = indexes[dtid][slot]
            key = values[q]
            lst = d.get(key)
            if lst is None:
                d[key] = [h]
            else:
                lst.append(h)
        for dtid, slot, poss in plan.insertsN:
            d = indexes[dtid][slot]
            key = tuple([values[q] for q in poss])
            lst = d.get(key)
            if lst is None:
                d[key] = [h]
            else:
                lst.append(h)
        if self.partial is not None:
            partial = self.partial
            for dtid, slot, poss in plan.partial_inserts:
                d = partial[dtid][slot]
                key = values[poss[0]] if len(poss) == 1 else tuple([values[q] for q in poss])
                lst = d.get(key)
                if lst is None:
                    d[key] = [h]
                else:
                    lst.append(h)
        for slot in plan.empty_out:
            self.empty_edges[slot].append(h)

        if implicit_on:
            self.implicit[tid][ikey] = h
        return events

    # -- helpers used by the hypothesizer ------------------------------------

    def _next_hypo_id(self) -> str:
        while True:
            self._hypo_ids += 1
            hid = f"h{self._hypo_ids}"
            if hid not in self.graph.vertices:
                return hid

    def _emit(self, event: tuple) -> None:
        if self._events is not None:
            self._events.append(event)

    def _mark_partial(self, h: HyperAlert) -> None:
        """Mark consequences of a possibly partially-bound alert."""
        plan = self._plans[self._tid[h.type_name]]
        values = h.values
        indexes = self.indexes
        for dtid, slot, q in plan.inserts1:
            v = values[q]
            if v is None:
                continue
            d = indexes[dtid][slot]
            lst = d.get(v)
            if lst is None:
                d[v] = [h]
            else:
                lst.append(h)
        for dtid, slot, poss in plan.insertsN:
            key = tuple([values[q] for q in poss])
            if None in key:
                continue
            d = indexes[dtid][slot]
            lst = d.get(key)
            if lst is None:
                d[key] = [h]
            else:
                lst.append(h)
        if self.partial is not None:
            for dtid, slot, poss in plan.partial_inserts:
                key = values[poss[0]] if len(poss) == 1 else tuple([values[q] for q in poss])
                if key is None or (type(key) is tuple and None in key):
                    continue
                d = self.partial[dtid][slot]
                lst = d.get(key)
                if lst is None:
                    d[key] = [h]
                else:
                    lst.append(h)
        for slot in plan.empty_out:
            self.empty_edges[slot].append(h)

    # -- snapshots -----------------------------------------------------------

    def finalize(self) -> CorrelationGraph:
        """Read-only snapshot of the correlation graph; session stays usable."""
        return self.graph.copy()

    def stats(self) -> dict:
        return {
            "alerts_in": self.alerts_in,
            "vertices": len(self.graph.vertices),
            "edges": len(self.graph.edges),
            "hypotheses": self.n_hypo,
            "aggregated": self.n_aggr,
            "errors": self.n_err,
        }


def new_session(tg: TypeGraph, config: EngineConfig | None = None) -> Session:
    return Session(tg, config)


def process_alert(session: Session, record: dict) -> list[tuple]:
    return session.process(record)


def finalize(session: Session) -> CorrelationGraph:
    return session.finalize()


def render_event(event: tuple, line_no: int | None = None) -> str:
    if event[0] == "ERR":
        return f"ERR {line_no if line_no is not None else '-'} {event[1]}"
    return " ".join(str(x) for x in event)
