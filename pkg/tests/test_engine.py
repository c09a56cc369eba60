import pytest

import alertcorr as ac
from alertcorr.engine import EngineConfig, Session, config_for_variant, render_event
from alertcorr.model import AttackModel, FactClass, HyperAlertType, ValueKind, parse_model
from alertcorr.oracle import batch_correlate, build_alerts
from alertcorr.typegraph import EqualityConstraint, build_graph, compile_model

from conftest import random_model, random_stream


def mk(type_name, ts, dst_ip, src_ip="202.77.162.213", src_port=1000, dst_port=7, id=None):
    rec = {
        "type": type_name,
        "ts": ts,
        "attrs": {"SrcIP": src_ip, "SrcPort": src_port, "DstIP": dst_ip, "DstPort": dst_port},
    }
    if id is not None:
        rec["id"] = id
    return rec


def test_config_invariant():
    with pytest.raises(ValueError):
        EngineConfig(hypothesize=False, consolidate_hypotheses=True)
    with pytest.raises(ValueError):
        config_for_variant("3c")


def test_new_session_empty(lldos4_tg):
    s = Session(lldos4_tg)
    assert len(s.graph.vertices) == 0 and len(s.graph.edges) == 0
    assert s.last_ts == 0


def test_index_map_count_matches_compiled_tables(lldos4_tg):
    # variant 1(b): one keyed map per required index combination
    s = Session(lldos4_tg, config_for_variant("1b"))
    expected = sum(len(v) for v in lldos4_tg.index_sets.values())
    assert s.index_map_count() == expected == 3


def test_two_alert_correlation(lldos4_tg):
    s = Session(lldos4_tg)
    assert s.process(mk("PingSweep", 1, "10.0.0.5", id="a1")) == []
    events = s.process(mk("SadmindPing", 2, "10.0.0.5", id="a2"))
    assert events == [("CORR", "a1", "a2")]
    g = s.finalize()
    assert len(g.vertices) == 2 and g.edges == {("a1", "a2")}


def test_constraint_falsified(lldos4_tg):
    s = Session(lldos4_tg)
    s.process(mk("PingSweep", 1, "10.0.0.5"))
    events = s.process(mk("SadmindPing", 2, "10.0.0.6"))
    assert events == []
    assert len(s.graph.edges) == 0


def test_default_ids_assigned(lldos4_tg):
    s = Session(lldos4_tg)
    s.process(mk("PingSweep", 1, "10.0.0.5"))
    events = s.process(mk("SadmindPing", 2, "10.0.0.5"))
    assert events == [("CORR", "a1", "a2")]


def test_timestamp_ties_allowed_regressions_rejected(lldos4_tg):
    s = Session(lldos4_tg)
    s.process(mk("PingSweep", 5, "10.0.0.5", id="x1"))
    assert s.process(mk("SadmindPing", 5, "10.0.0.5", id="x2")) == [("CORR", "x1", "x2")]
    events = s.process(mk("SadmindPing", 4, "10.0.0.5", id="x3"))
    assert events[0][0] == "ERR" and "regression" in events[0][1]
    # rejected alert left no trace
    assert len(s.graph.vertices) == 2
    assert s.alerts_in == 2


@pytest.mark.parametrize(
    "record, fragment",
    [
        ({"type": "NoSuch", "ts": 1, "attrs": {}}, "unknown type"),
        ({"type": "PingSweep", "ts": -1, "attrs": {}}, "non-negative"),
        ({"type": "PingSweep", "ts": "1", "attrs": {}}, "non-negative"),
        ({"type": "PingSweep", "ts": 1}, "missing attrs"),
        ({"type": "PingSweep", "ts": 1, "attrs": {"SrcIP": "1.2.3.4"}}, "missing fact"),
        (dict(mk("PingSweep", 1, "bogus")), "bad value for DstIP"),
        ({"type": "PingSweep", "ts": 1, "attrs": {}, "extra": 1}, "unknown record field"),
    ],
)
def test_rejections(lldos4_tg, record, fragment):
    s = Session(lldos4_tg)
    events = s.process(record)
    assert events[0][0] == "ERR" and fragment in events[0][1]
    assert len(s.graph.vertices) == 0 and s.alerts_in == 0


def test_unknown_fact_rejected(lldos4_tg):
    s = Session(lldos4_tg)
    rec = mk("PingSweep", 1, "10.0.0.5")
    rec["attrs"]["Oops"] = 1
    events = s.process(rec)
    assert events[0][0] == "ERR" and "unknown fact" in events[0][1]


def test_duplicate_id_rejected(lldos4_tg):
    s = Session(lldos4_tg)
    s.process(mk("PingSweep", 1, "10.0.0.5", id="dup"))
    events = s.process(mk("PingSweep", 2, "10.0.0.6", id="dup"))
    assert events[0][0] == "ERR" and "duplicate" in events[0][1]


def test_aggregation_records_raw_ids(lldos4_tg):
    s = Session(lldos4_tg)  # implicit on by default
    s.process(mk("SadmindExploit", 1, "10.0.0.5", id="e1"))
    ev2 = s.process(mk("SadmindExploit", 2, "10.0.0.5", src_port=9999, id="e2"))
    ev3 = s.process(mk("SadmindExploit", 3, "10.0.0.5", id="e3"))
    assert ev2 == [("AGGR", "e1", "e2")]
    assert ev3 == [("AGGR", "e1", "e3")]
    assert s.graph.vertices["e1"].aggregated == ["e2", "e3"]
    assert len(s.graph.vertices) == 1
    assert s.n_aggr == 2


def test_implicit_off_keeps_duplicates(lldos4_tg):
    s = Session(lldos4_tg, EngineConfig(implicit_correlation=False))
    s.process(mk("SadmindExploit", 1, "10.0.0.5"))
    assert s.process(mk("SadmindExploit", 2, "10.0.0.5")) == []
    assert len(s.graph.vertices) == 2


def test_finalize_is_snapshot(lldos4_tg):
    s = Session(lldos4_tg)
    s.process(mk("PingSweep", 1, "10.0.0.5"))
    snap = s.finalize()
    s.process(mk("SadmindPing", 2, "10.0.0.5"))
    assert len(snap.vertices) == 1
    assert len(s.finalize().vertices) == 2  # session stayed usable


def test_scenario_graph_minimal(lldos4_tg, scenario_records):
    s = Session(lldos4_tg, EngineConfig(implicit_correlation=False))
    for r in scenario_records:
        s.process(r)
    assert sorted(s.graph.edges) == [
        ("s01", "s05"), ("s02", "s04"), ("s04", "s06"), ("s04", "s07"),
        ("s05", "s08"), ("s06", "s09"), ("s07", "s09"), ("s08", "s10"),
    ]
    pruned = s.finalize().prune_trivial()
    assert "s03" not in pruned.vertices and len(pruned.vertices) == 9


def test_scenario_graph_implicit(lldos4_tg, scenario_records):
    s = Session(lldos4_tg)
    events = [e for r in scenario_records for e in s.process(r)]
    aggr = [e for e in events if e[0] == "AGGR"]
    assert aggr == [("AGGR", "s06", "s07"), ("AGGR", "s09", "s10")]
    assert sorted(s.graph.edges) == [
        ("s01", "s05"), ("s02", "s04"), ("s04", "s06"), ("s05", "s08"), ("s06", "s09"),
    ]


# ---------------------------------------------------------------------------
# empty constraints (unreachable from the grammar; injected synthetically)


def _empty_constraint_graph():
    facts = (("SrcIP", "addr"), ("DstIP", "addr"))
    model = AttackModel(
        classes=(FactClass("addr", ValueKind.IPV4),),
        predicates=(),
        rules=(),
        types=(HyperAlertType("A", facts, (), ()), HyperAlertType("B", facts, (), ())),
    )
    return build_graph(model, {("A", "B"): [EqualityConstraint(())]})


def ab(type_name, ts, src, dst, id):
    return {"id": id, "type": type_name, "ts": ts, "attrs": {"SrcIP": src, "DstIP": dst}}


def test_empty_constraint_prepares_anything():
    tg = _empty_constraint_graph()
    assert () in tg.index_sets["B"]
    s = Session(tg, EngineConfig(implicit_correlation=False))
    s.process(ab("A", 1, "1.1.1.1", "2.2.2.2", "a1"))
    s.process(ab("A", 2, "3.3.3.3", "4.4.4.4", "a2"))
    events = s.process(ab("B", 3, "9.9.9.9", "8.8.8.8", "b1"))
    assert sorted(events) == [("CORR", "a1", "b1"), ("CORR", "a2", "b1")]
    # reversed order gives nothing: a later A does not prepare an earlier B
    assert s.process(ab("A", 4, "5.5.5.5", "6.6.6.6", "a3")) == []


def test_empty_constraint_with_implicit_aggregates_all_sources():
    tg = _empty_constraint_graph()
    s = Session(tg)
    s.process(ab("A", 1, "1.1.1.1", "2.2.2.2", "a1"))
    ev = s.process(ab("A", 2, "3.3.3.3", "4.4.4.4", "a2"))
    assert ev == [("AGGR", "a1", "a2")]  # empty implicit set: one class
    events = s.process(ab("B", 3, "9.9.9.9", "8.8.8.8", "b1"))
    assert events == [("CORR", "a1", "b1")]


# ---------------------------------------------------------------------------
# oracle equivalence and stream invariants


def run_engine(tg, records, config):
    s = Session(tg, config)
    events = []
    for r in records:
        events.extend(s.process(r))
    return s, events


def test_randomized_200_alert_oracle_equivalence():
    model = random_model(7, 5)
    tg = compile_model(model)
    records = random_stream(8, model, 200)
    s, _ = run_engine(tg, records, EngineConfig(implicit_correlation=False))
    report = batch_correlate(tg, build_alerts(tg.model, records))
    assert s.graph.edges == report.edges


def test_forward_causality_on_random_streams():
    for seed in range(3):
        model = random_model(20 + seed, 4)
        tg = compile_model(model)
        records = random_stream(30 + seed, model, 300)
        s, _ = run_engine(tg, records, EngineConfig())
        g = s.graph
        for src, dst in g.edges:
            a, b = g.vertices[src], g.vertices[dst]
            assert a.seq < b.seq
            assert a.ts <= b.ts


def test_implicit_monotonicity_and_class_identity():
    model = random_model(11, 5)
    tg = compile_model(model)
    records = random_stream(12, model, 400)
    s_off, _ = run_engine(tg, records, EngineConfig(implicit_correlation=False))
    s_on, _ = run_engine(tg, records, EngineConfig(implicit_correlation=True))
    assert len(s_on.graph.vertices) <= len(s_off.graph.vertices)

    def classes(session):
        out = set()
        for a in session.graph.vertices.values():
            ipos = [a.facts.index(f) for f in tg.implicit_sets[a.type_name]]
            out.add((a.type_name, tuple(a.values[i] for i in ipos)))
        return out

    assert classes(s_on) == classes(s_off)


def test_insertion_bound_minimal_mode():
    model = random_model(13, 5)
    tg = compile_model(model)
    records = random_stream(14, model, 500)
    s, _ = run_engine(tg, records, EngineConfig(implicit_correlation=False))
    stored = sum(len(lst) for fam in s.indexes for d in fam for lst in d.values())
    stored += sum(len(lst) for lst in s.empty_edges)
    per_type_max = max(
        (
            sum(len(en) for (src, _), en in tg.correlation_sets.items() if src == t.name)
            for t in tg.model.types
        ),
        default=0,
    )
    assert stored <= len(records) * max(per_type_max, 1)


def test_event_sequence_determinism():
    model = random_model(17, 5)
    tg = compile_model(model)
    records = random_stream(18, model, 300)
    _, ev1 = run_engine(tg, records, EngineConfig())
    _, ev2 = run_engine(tg, records, EngineConfig())
    assert ev1 == ev2


def test_render_event():
    assert render_event(("CORR", "a", "b")) == "CORR a b"
    assert render_event(("ERR", "boom"), 12) == "ERR 12 boom"
    assert render_event(("ERR", "boom")) == "ERR - boom"
    assert render_event(("HYPO", "h1", "T", "DstIP=1.2.3.4")) == "HYPO h1 T DstIP=1.2.3.4"


def test_module_level_op_aliases(lldos4_tg):
    s = ac.new_session(lldos4_tg, EngineConfig())
    ac.process_alert(s, mk("PingSweep", 1, "10.0.0.5"))
    assert len(ac.finalize(s).vertices) == 1
