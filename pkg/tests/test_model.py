import pytest

from alertcorr.model import (
    Diagnostic,
    ModelError,
    PredicateInstance,
    ValueKind,
    canonical_value,
    expand_implications,
    parse_model,
    render_model,
    render_value,
    validate,
)

MINI = """
class addr ipv4
class port int
predicate ExistsHost(addr)
predicate GainRoot(addr)
predicate GainAccess(addr)
implies GainRoot(x) => GainAccess(x)
type Probe {
  facts  { SrcIP: addr, DstIP: addr }
  prereq { }
  conseq { ExistsHost(DstIP) }
}
type Exploit {
  facts  { SrcIP: addr, DstIP: addr, DstPort: port }
  prereq { ExistsHost(DstIP) }
  conseq { GainRoot(DstIP) }
}
"""


def test_parse_mini_model():
    m = parse_model(MINI)
    assert [t.name for t in m.types] == ["Probe", "Exploit"]
    assert m.types[1].prereq == (PredicateInstance("ExistsHost", ("DstIP",)),)
    assert len(m.rules) == 1


def test_parse_bundled_four_type_model(lldos4_model):
    assert len(lldos4_model.types) == 4
    assert [t.name for t in lldos4_model.types] == [
        "PingSweep", "SadmindPing", "SadmindExploit", "MstreamZombie",
    ]


def test_empty_model_is_valid():
    m = parse_model("# nothing to see\n")
    assert m.types == ()
    assert validate(m) == []


def test_comments_and_whitespace_insensitivity():
    text = MINI.replace("{\n", "{").replace("\n}", "}")
    assert parse_model(text) == parse_model(MINI)


def test_repeated_fact_in_instance_rejected():
    bad = MINI.replace("ExistsHost(DstIP) }\n}", "ExistsHost(DstIP) }\n}", 1) + """
type Bad {
  facts  { DstIP: addr, SrcIP: addr }
  prereq { }
  conseq { TwoHosts(DstIP, DstIP) }
}
"""
    bad = bad.replace("predicate GainAccess(addr)", "predicate GainAccess(addr)\npredicate TwoHosts(addr, addr)")
    with pytest.raises(ModelError) as exc:
        parse_model(bad)
    assert any("repeated fact" in d.message for d in exc.value.diagnostics)


@pytest.mark.parametrize(
    "snippet, fragment",
    [
        ("class addr ipv4\nclass addr int\n", "duplicate class"),
        ("class addr ipv4\npredicate P(addr)\npredicate P(addr)\n", "duplicate predicate"),
        ("predicate P(nosuch)\n", "unknown class"),
        ("class addr ipv4\npredicate P(addr)\ntype T { facts { A: addr } prereq { P(A, A) } conseq { } }", "repeated fact"),
        ("class addr ipv4\npredicate P(addr)\ntype T { facts { A: addr } prereq { P(A, B) } conseq { } }", "arity mismatch"),
        ("class addr ipv4\npredicate P(addr)\ntype T { facts { A: addr } prereq { Q(A) } conseq { } }", "unknown predicate"),
        ("class addr ipv4\npredicate P(addr)\ntype T { facts { A: addr } prereq { P(B) } conseq { } }", "unknown fact"),
        ("class addr ipv4\npredicate P(addr)\nimplies P(x) => P(y)\n", "not bound"),
        ("type T { facts { } prereq { } conseq { } }\nclass addr ipv4\n", "out of order"),
        ("class addr bogus\n", "unknown class kind"),
    ],
)
def test_parse_diagnostics(snippet, fragment):
    with pytest.raises(ModelError) as exc:
        parse_model(snippet)
    assert any(fragment in d.message for d in exc.value.diagnostics), exc.value.diagnostics


def test_diagnostics_carry_positions():
    with pytest.raises(ModelError) as exc:
        parse_model("class addr ipv4\nclass addr int\n")
    d = exc.value.diagnostics[0]
    assert d.line == 2 and d.col is not None


def test_roundtrip_mini_and_bundled(lldos4_model):
    for m in (parse_model(MINI), lldos4_model):
        assert parse_model(render_model(m)) == m


def test_roundtrip_after_expansion(lldos4_model):
    m = expand_implications(lldos4_model)
    assert parse_model(render_model(m)) == m


def test_expand_single_rule():
    m = expand_implications(parse_model(MINI))
    exploit = m.type_map()["Exploit"]
    assert PredicateInstance("GainAccess", ("DstIP",)) in exploit.conseq
    assert PredicateInstance("GainRoot", ("DstIP",)) in exploit.conseq
    # prerequisite untouched
    assert exploit.prereq == (PredicateInstance("ExistsHost", ("DstIP",)),)


def test_expand_no_rules_is_identity():
    m = parse_model("class a int\npredicate P(a)\ntype T { facts { X: a } prereq { } conseq { P(X) } }")
    assert expand_implications(m) is m


def test_expand_chained_rules_transitive_closure():
    # hand-derived closure: {P(A)} -> {P(A), Q(A), R(A)}
    text = """
class addr ipv4
predicate P(addr)
predicate Q(addr)
predicate R(addr)
implies P(x) => Q(x)
implies Q(x) => R(x)
type T {
  facts  { A: addr }
  prereq { }
  conseq { P(A) }
}
"""
    m = expand_implications(parse_model(text))
    assert set(m.types[0].conseq) == {
        PredicateInstance("P", ("A",)),
        PredicateInstance("Q", ("A",)),
        PredicateInstance("R", ("A",)),
    }


def test_expand_idempotent(lldos4_model):
    once = expand_implications(lldos4_model)
    assert expand_implications(once) == once


def test_expansion_closure_property(lldos4_model):
    m = expand_implications(lldos4_model)
    for rule in m.rules:
        for t in m.types:
            for inst in t.conseq:
                if inst.predicate != rule.antecedent.predicate:
                    continue
                binding = dict(zip(rule.antecedent.args, inst.args))
                derived = PredicateInstance(
                    rule.consequent.predicate,
                    tuple(binding[v] for v in rule.consequent.args),
                )
                assert derived in t.conseq


def test_validate_bundled_clean(lldos4_model):
    assert validate(lldos4_model) == []


def test_validate_cycle():
    text = """
class addr ipv4
predicate P(addr)
predicate Q(addr)
type A {
  facts  { X: addr }
  prereq { Q(X) }
  conseq { P(X) }
}
type B {
  facts  { X: addr }
  prereq { P(X) }
  conseq { Q(X) }
}
"""
    diags = validate(parse_model(text))
    assert any("cyclic may-prepare-for" in d.message for d in diags)


def test_validate_self_loop_is_cyclic():
    text = """
class addr ipv4
predicate P(addr)
type A {
  facts  { X: addr }
  prereq { P(X) }
  conseq { P(X) }
}
"""
    diags = validate(parse_model(text))
    assert any("cyclic" in d.message for d in diags)


def test_validate_dead_prerequisite_warns():
    text = """
class addr ipv4
predicate P(addr)
predicate Ghost(addr)
type A {
  facts  { X: addr }
  prereq { Ghost(X) }
  conseq { P(X) }
}
"""
    diags = validate(parse_model(text))
    assert [d.severity for d in diags] == ["warning"]
    assert "unsatisfiable prerequisite predicate" in diags[0].message


def test_canonical_values():
    assert canonical_value(ValueKind.IPV4, "10.0.0.1") == (10 << 24) + 1
    assert canonical_value(ValueKind.IPV4, 42) == 42
    assert canonical_value(ValueKind.INT, "80") == 80
    assert canonical_value(ValueKind.STR, "abc") == "abc"
    assert render_value(ValueKind.IPV4, (10 << 24) + 1) == "10.0.0.1"
    for bad in ("1.2.3", "1.2.3.299", "01.2.3.4", 2**32, -1, None):
        with pytest.raises(ValueError):
            canonical_value(ValueKind.IPV4, bad)
    with pytest.raises(ValueError):
        canonical_value(ValueKind.INT, "8x")
    with pytest.raises(ValueError):
        canonical_value(ValueKind.STR, 5)


def test_diagnostic_rendering():
    assert str(Diagnostic("boom", 3, 7)) == "3:7: error: boom"
    assert str(Diagnostic("hmm", severity="warning")) == "warning: hmm"
