"""Attack model: fact classes, predicates, implication rules and alert types.

A model is written in a small line/block text format::

    class addr ipv4
    class port int
    predicate ExistsHost(addr)
    implies RootAccess(h) => GainAccess(h)
    type PingSweep {
      facts  { SrcIP: addr, SrcPort: port, DstIP: addr, DstPort: port }
      prereq { }
      conseq { ExistsHost(DstIP) }
    }

Declarations must appear in the order classes, predicates, implies, types.
`#` starts a comment running to end of line.  Whitespace and newlines are
free inside blocks.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class ValueKind(str, enum.Enum):
    """How attribute values of a fact class are canonicalized and compared."""

    IPV4 = "ipv4"
    INT = "int"
    STR = "str"


def canonical_value(kind: ValueKind, raw):
    """Canonicalize a raw attribute value (string or integer) for `kind`.

    ipv4 values become 32-bit integers, int values become Python ints and
    str values stay byte-wise comparable strings.  Raises ValueError on
    malformed input.
    """
    if kind is ValueKind.IPV4:
        if isinstance(raw, bool):
            raise ValueError("ipv4 value must be a dotted quad or integer")
        if isinstance(raw, int):
            if not 0 <= raw < 2**32:
                raise ValueError(f"ipv4 integer out of range: {raw}")
            return raw
        if isinstance(raw, str):
            parts = raw.split(".")
            if len(parts) != 4:
                raise ValueError(f"not a dotted quad: {raw!r}")
            value = 0
            for p in parts:
                if not p.isdigit() or (len(p) > 1 and p[0] == "0") or int(p) > 255:
                    raise ValueError(f"not a dotted quad: {raw!r}")
                value = (value << 8) | int(p)
            return value
        raise ValueError(f"ipv4 value must be str or int, got {type(raw).__name__}")
    if kind is ValueKind.INT:
        if isinstance(raw, bool):
            raise ValueError("integer value expected")
        if isinstance(raw, int):
            return raw
        if isinstance(raw, str):
            s = raw.strip()
            if not s or not (s.isdigit() or (s[0] == "-" and s[1:].isdigit())):
                raise ValueError(f"not an integer: {raw!r}")
            return int(s)
        raise ValueError(f"integer value must be str or int, got {type(raw).__name__}")
    if not isinstance(raw, str):
        raise ValueError(f"string value expected, got {type(raw).__name__}")
    return raw


def render_value(kind: ValueKind, value) -> str:
    """Format a canonical value back into its external representation."""
    if kind is ValueKind.IPV4:
        return f"{value >> 24 & 255}.{value >> 16 & 255}.{value >> 8 & 255}.{value & 255}"
    return str(value)


@dataclass(frozen=True)
class FactClass:
    name: str
    kind: ValueKind


@dataclass(frozen=True)
class Predicate:
    name: str
    arg_classes: tuple[str, ...]  # class names, arity >= 1


@dataclass(frozen=True)
class PredicateInstance:
    """A predicate applied to fact names (or rule variables)."""

    predicate: str
    args: tuple[str, ...]

    def render(self) -> str:
        return f"{self.predicate}({', '.join(self.args)})"


@dataclass(frozen=True)
class ImplicationRule:
    antecedent: PredicateInstance
    consequent: PredicateInstance


@dataclass(frozen=True)
class HyperAlertType:
    name: str
    facts: tuple[tuple[str, str], ...]  # (fact name, class name) in declaration order
    prereq: tuple[PredicateInstance, ...]
    conseq: tuple[PredicateInstance, ...]

    def fact_names(self) -> tuple[str, ...]:
        return tuple(f for f, _ in self.facts)

    def fact_class(self, fact: str) -> str:
        for f, c in self.facts:
            if f == fact:
                return c
        raise KeyError(fact)


@dataclass(frozen=True)
class AttackModel:
    classes: tuple[FactClass, ...]
    predicates: tuple[Predicate, ...]
    rules: tuple[ImplicationRule, ...]
    types: tuple[HyperAlertType, ...]

    def class_map(self) -> dict[str, FactClass]:
        return {c.name: c for c in self.classes}

    def predicate_map(self) -> dict[str, Predicate]:
        return {p.name: p for p in self.predicates}

    def type_map(self) -> dict[str, HyperAlertType]:
        return {t.name: t for t in self.types}


@dataclass(frozen=True)
class Diagnostic:
    message: str
    line: int | None = None
    col: int | None = None
    severity: str = "error"

    def __str__(self) -> str:
        pos = f"{self.line}:{self.col}: " if self.line is not None else ""
        return f"{pos}{self.severity}: {self.message}"


class ModelError(Exception):
    """Raised when a model source cannot be parsed into a valid AttackModel."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


# ---------------------------------------------------------------------------
# Tokenizer / parser


_PUNCT = "(){},:"
_KEYWORDS = ("class", "predicate", "implies", "type")
_KIND_NAMES = {k.value: k for k in ValueKind}


@dataclass
class _Token:
    text: str
    line: int
    col: int


def _tokenize(text: str) -> tuple[list[_Token], list[Diagnostic]]:
    tokens: list[_Token] = []
    diags: list[Diagnostic] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        i, n = 0, len(line)
        while i < n:
            ch = line[i]
            if ch == "#":
                break
            if ch.isspace():
                i += 1
                continue
            if ch in _PUNCT:
                tokens.append(_Token(ch, lineno, i + 1))
                i += 1
                continue
            if line.startswith("=>", i):
                tokens.append(_Token("=>", lineno, i + 1))
                i += 2
                continue
            if ch.isalnum() or ch == "_":
                j = i
                while j < n and (line[j].isalnum() or line[j] in "_-."):
                    j += 1
                tokens.append(_Token(line[i:j], lineno, i + 1))
                i = j
                continue
            diags.append(Diagnostic(f"unexpected character {ch!r}", lineno, i + 1))
            i += 1
    return tokens, diags


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0
        self.diags: list[Diagnostic] = []

    def error(self, message: str, tok: _Token | None = None) -> None:
        if tok is None:
            tok = self.peek() or (self.tokens[-1] if self.tokens else None)
        if tok is None:
            self.diags.append(Diagnostic(message))
        else:
            self.diags.append(Diagnostic(message, tok.line, tok.col))

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> _Token | None:
        tok = self.peek()
        if tok is not None:
            self.pos += 1
        return tok

    def expect(self, text: str) -> _Token | None:
        tok = self.next()
        if tok is None or tok.text != text:
            self.error(f"expected {text!r}" + (f", got {tok.text!r}" if tok else " at end of input"), tok)
            return None
        return tok

    def ident(self, what: str) -> _Token | None:
        tok = self.next()
        if tok is None or tok.text in _PUNCT or tok.text == "=>":
            self.error(f"expected {what}" + (f", got {tok.text!r}" if tok else " at end of input"), tok)
            return None
        return tok

    def sync_to_keyword(self) -> None:
        """Skip tokens until the next top-level declaration keyword."""
        depth = 0
        while True:
            tok = self.peek()
            if tok is None:
                return
            if tok.text == "{":
                depth += 1
            elif tok.text == "}":
                depth = max(0, depth - 1)
            elif depth == 0 and tok.text in _KEYWORDS:
                return
            self.pos += 1


def _parse_instance(p: _Parser) -> PredicateInstance | None:
    name = p.ident("predicate name")
    if name is None or p.expect("(") is None:
        return None
    args: list[str] = []
    while True:
        arg = p.ident("argument")
        if arg is None:
            return None
        args.append(arg.text)
        tok = p.next()
        if tok is None:
            p.error("expected ',' or ')'")
            return None
        if tok.text == ")":
            break
        if tok.text != ",":
            p.error(f"expected ',' or ')', got {tok.text!r}", tok)
            return None
    return PredicateInstance(name.text, tuple(args))


def _parse_instance_block(p: _Parser) -> tuple[PredicateInstance, ...] | None:
    if p.expect("{") is None:
        return None
    out: list[PredicateInstance] = []
    while True:
        tok = p.peek()
        if tok is None:
            p.error("unterminated block")
            return None
        if tok.text == "}":
            p.pos += 1
            break
        inst = _parse_instance(p)
        if inst is None:
            return None
        if inst not in out:
            out.append(inst)
        tok = p.peek()
        if tok is not None and tok.text == ",":
            p.pos += 1
    return tuple(out)


def parse_model(text: str) -> AttackModel:
    """Parse model source text.  Raises ModelError with diagnostics on failure.

    Implication rules are parsed but not applied; see expand_implications.
    """
    tokens, diags = _tokenize(text)
    p = _Parser(tokens)
    p.diags.extend(diags)

    classes: list[FactClass] = []
    predicates: list[Predicate] = []
    rules: list[ImplicationRule] = []
    types: list[HyperAlertType] = []
    class_names: dict[str, _Token] = {}
    pred_by_name: dict[str, Predicate] = {}
    type_names: set[str] = set()
    stage = 0  # 0 classes, 1 predicates, 2 implies, 3 types
    stage_of = {"class": 0, "predicate": 1, "implies": 2, "type": 3}

    def check_instance(inst: PredicateInstance, facts: dict[str, str], tok: _Token) -> bool:
        """Validate one predicate instance against declared facts."""
        ok = True
        pred = pred_by_name.get(inst.predicate)
        if pred is None:
            p.error(f"unknown predicate {inst.predicate!r}", tok)
            return False
        if len(inst.args) != len(pred.arg_classes):
            p.error(
                f"arity mismatch: {inst.predicate} takes {len(pred.arg_classes)} "
                f"argument(s), got {len(inst.args)}",
                tok,
            )
            ok = False
        seen: set[str] = set()
        for i, arg in enumerate(inst.args):
            if arg in seen:
                p.error(f"repeated fact {arg!r} in one predicate instance", tok)
                ok = False
            seen.add(arg)
            if arg not in facts:
                p.error(f"unknown fact {arg!r}", tok)
                ok = False
            elif i < len(pred.arg_classes) and facts[arg] != pred.arg_classes[i]:
                p.error(
                    f"fact {arg!r} has class {facts[arg]!r} but {inst.predicate} "
                    f"expects {pred.arg_classes[i]!r} at position {i + 1}",
                    tok,
                )
                ok = False
        return ok

    while True:
        tok = p.peek()
        if tok is None:
            break
        if tok.text not in _KEYWORDS:
            p.error(f"expected declaration keyword, got {tok.text!r}", tok)
            p.pos += 1
            p.sync_to_keyword()
            continue
        if stage_of[tok.text] < stage:
            p.error(
                f"{tok.text!r} declaration out of order "
                "(order is classes, predicates, implies, types)",
                tok,
            )
        stage = max(stage, stage_of[tok.text])
        p.pos += 1

        if tok.text == "class":
            name = p.ident("class name")
            kind = p.ident("class kind (ipv4|int|str)")
            if name is None or kind is None:
                p.sync_to_keyword()
                continue
            if kind.text not in _KIND_NAMES:
                p.error(f"unknown class kind {kind.text!r} (expected ipv4|int|str)", kind)
                continue
            if name.text in class_names:
                p.error(f"duplicate class name {name.text!r}", name)
                continue
            class_names[name.text] = name
            classes.append(FactClass(name.text, _KIND_NAMES[kind.text]))

        elif tok.text == "predicate":
            start = p.peek()
            inst = _parse_instance(p)
            if inst is None:
                p.sync_to_keyword()
                continue
            bad = [a for a in inst.args if a not in class_names]
            for a in bad:
                p.error(f"unknown class {a!r}", start)
            if inst.predicate in pred_by_name:
                p.error(f"duplicate predicate name {inst.predicate!r}", start)
                continue
            if not bad:
                pred = Predicate(inst.predicate, inst.args)
                pred_by_name[pred.name] = pred
                predicates.append(pred)

        elif tok.text == "implies":
            start = p.peek()
            ante = _parse_instance(p)
            if ante is None or p.expect("=>") is None:
                p.sync_to_keyword()
                continue
            cons = _parse_instance(p)
            if cons is None:
                p.sync_to_keyword()
                continue
            ok = True
            for inst in (ante, cons):
                pred = pred_by_name.get(inst.predicate)
                if pred is None:
                    p.error(f"unknown predicate {inst.predicate!r}", start)
                    ok = False
                elif len(inst.args) != len(pred.arg_classes):
                    p.error(
                        f"arity mismatch: {inst.predicate} takes "
                        f"{len(pred.arg_classes)} argument(s), got {len(inst.args)}",
                        start,
                    )
                    ok = False
            if ok:
                if len(set(ante.args)) != len(ante.args) or len(set(cons.args)) != len(cons.args):
                    p.error("repeated variable in implication pattern", start)
                    ok = False
                unbound = [v for v in cons.args if v not in ante.args]
                for v in unbound:
                    p.error(f"consequent variable {v!r} not bound by antecedent", start)
                    ok = False
            if ok:
                # classes of shared variables must line up
                ante_cls = dict(zip(ante.args, pred_by_name[ante.predicate].arg_classes))
                cons_cls = pred_by_name[cons.predicate].arg_classes
                for i, v in enumerate(cons.args):
                    if ante_cls[v] != cons_cls[i]:
                        p.error(
                            f"variable {v!r} has class {ante_cls[v]!r} in antecedent but "
                            f"{cons.predicate} expects {cons_cls[i]!r}",
                            start,
                        )
                        ok = False
            if ok:
                rules.append(ImplicationRule(ante, cons))

        else:  # type
            name = p.ident("type name")
            if name is None or p.expect("{") is None:
                p.sync_to_keyword()
                continue
            if name.text in type_names:
                p.error(f"duplicate type name {name.text!r}", name)
            facts: list[tuple[str, str]] = []
            fact_cls: dict[str, str] = {}
            prereq: tuple[PredicateInstance, ...] | None = ()
            conseq: tuple[PredicateInstance, ...] | None = ()
            bad = False
            if p.expect("facts") is None or p.expect("{") is None:
                p.sync_to_keyword()
                continue
            while True:
                t = p.peek()
                if t is None:
                    p.error("unterminated facts block")
                    bad = True
                    break
                if t.text == "}":
                    p.pos += 1
                    break
                fname = p.ident("fact name")
                if fname is None or p.expect(":") is None:
                    bad = True
                    break
                fcls = p.ident("class name")
                if fcls is None:
                    bad = True
                    break
                if fcls.text not in class_names:
                    p.error(f"unknown class {fcls.text!r}", fcls)
                    bad = True
                if fname.text in fact_cls:
                    p.error(f"duplicate fact name {fname.text!r}", fname)
                    bad = True
                else:
                    facts.append((fname.text, fcls.text))
                    fact_cls[fname.text] = fcls.text
                t = p.peek()
                if t is not None and t.text == ",":
                    p.pos += 1
            if bad:
                p.sync_to_keyword()
                continue
            for blockname, setter in (("prereq", 0), ("conseq", 1)):
                pos_before = p.peek()
                if p.expect(blockname) is None:
                    bad = True
                    break
                block = _parse_instance_block(p)
                if block is None:
                    bad = True
                    break
                for inst in block:
                    if not check_instance(inst, fact_cls, pos_before or tok):
                        bad = True
                if setter == 0:
                    prereq = block
                else:
                    conseq = block
            if bad:
                p.sync_to_keyword()
                continue
            if p.expect("}") is None:
                p.sync_to_keyword()
                continue
            if name.text not in type_names:
                type_names.add(name.text)
                types.append(HyperAlertType(name.text, tuple(facts), prereq, conseq))

    errors = [d for d in p.diags if d.severity == "error"]
    if errors:
        raise ModelError(errors)
    return AttackModel(tuple(classes), tuple(predicates), tuple(rules), tuple(types))


# ---------------------------------------------------------------------------
# Rendering, implication expansion and validation


def render_model(model: AttackModel) -> str:
    """Render a model back into its source form; parse(render(m)) == m."""
    lines: list[str] = []
    for c in model.classes:
        lines.append(f"class {c.name} {c.kind.value}")
    for p in model.predicates:
        lines.append(f"predicate {p.name}({', '.join(p.arg_classes)})")
    for r in model.rules:
        lines.append(f"implies {r.antecedent.render()} => {r.consequent.render()}")
    for t in model.types:
        lines.append(f"type {t.name} {{")
        lines.append("  facts  { " + ", ".join(f"{f}: {c}" for f, c in t.facts) + " }")
        lines.append("  prereq { " + ", ".join(i.render() for i in t.prereq) + " }")
        lines.append("  conseq { " + ", ".join(i.render() for i in t.conseq) + " }")
        lines.append("}")
    return "\n".join(lines) + "\n"


def expand_implications(model: AttackModel) -> AttackModel:
    """Close every type's consequence set under the implication rules.

    Least fixpoint; prerequisite sets are untouched.  Idempotent.
    """
    if not model.rules:
        return model
    new_types: list[HyperAlertType] = []
    for t in model.types:
        conseq = list(t.conseq)
        present = set(conseq)
        changed = True
        while changed:
            changed = False
            for rule in model.rules:
                for inst in list(conseq):
                    if inst.predicate != rule.antecedent.predicate:
                        continue
                    binding = dict(zip(rule.antecedent.args, inst.args))
                    derived = PredicateInstance(
                        rule.consequent.predicate,
                        tuple(binding[v] for v in rule.consequent.args),
                    )
                    if derived not in present:
                        conseq.append(derived)
                        present.add(derived)
                        changed = True
        new_types.append(HyperAlertType(t.name, t.facts, t.prereq, tuple(conseq)))
    return AttackModel(model.classes, model.predicates, model.rules, tuple(new_types))


def prepare_edges(model: AttackModel) -> list[tuple[str, str]]:
    """The may-prepare-for relation on type names over the expanded model.

    (A, B) is present iff some predicate name occurs in both the consequence
    of A and the prerequisite of B.
    """
    expanded = expand_implications(model)
    edges: list[tuple[str, str]] = []
    for a in expanded.types:
        conseq_preds = {i.predicate for i in a.conseq}
        for b in expanded.types:
            if any(i.predicate in conseq_preds for i in b.prereq):
                edges.append((a.name, b.name))
    return edges


def find_cycle(model: AttackModel) -> list[str] | None:
    """Return a cyclic type-name path in the may-prepare-for relation, if any."""
    adj: dict[str, list[str]] = {t.name: [] for t in model.types}
    for a, b in prepare_edges(model):
        adj[a].append(b)
    WHITE, GREY, BLACK = 0, 1, 2
    color = {n: WHITE for n in adj}
    stack: list[str] = []

    def visit(n: str) -> list[str] | None:
        color[n] = GREY
        stack.append(n)
        for m in adj[n]:
            if color[m] == GREY:
                return stack[stack.index(m):] + [m]
            if color[m] == WHITE:
                cyc = visit(m)
                if cyc is not None:
                    return cyc
        stack.pop()
        color[n] = BLACK
        return None

    for n in adj:
        if color[n] == WHITE:
            cyc = visit(n)
            if cyc is not None:
                return cyc
    return None


def validate(model: AttackModel) -> list[Diagnostic]:
    """Check all model invariants.  Returns diagnostics, never raises.

    Errors cover referential integrity, arity, duplicate names, repeated
    facts in one instance and a cyclic may-prepare-for relation.  A
    predicate required by some prerequisite but produced by no consequence
    is reported as a non-fatal warning.
    """
    diags: list[Diagnostic] = []
    class_names = [c.name for c in model.classes]
    if len(set(class_names)) != len(class_names):
        diags.append(Diagnostic("duplicate class name"))
    preds = model.predicate_map()
    pred_names = [p.name for p in model.predicates]
    if len(set(pred_names)) != len(pred_names):
        diags.append(Diagnostic("duplicate predicate name"))
    for p in model.predicates:
        if not p.arg_classes:
            diags.append(Diagnostic(f"predicate {p.name!r} has arity 0"))
        for c in p.arg_classes:
            if c not in class_names:
                diags.append(Diagnostic(f"predicate {p.name!r} references unknown class {c!r}"))
    for r in model.rules:
        for inst in (r.antecedent, r.consequent):
            pred = preds.get(inst.predicate)
            if pred is None:
                diags.append(Diagnostic(f"rule references unknown predicate {inst.predicate!r}"))
            elif len(inst.args) != len(pred.arg_classes):
                diags.append(Diagnostic(f"rule arity mismatch on {inst.predicate!r}"))
        if any(v not in r.antecedent.args for v in r.consequent.args):
            diags.append(Diagnostic("rule consequent variable not bound by antecedent"))

    type_names = [t.name for t in model.types]
    if len(set(type_names)) != len(type_names):
        diags.append(Diagnostic("duplicate type name"))
    for t in model.types:
        fact_cls = dict(t.facts)
        if len(fact_cls) != len(t.facts):
            diags.append(Diagnostic(f"type {t.name!r} declares a duplicate fact name"))
        for f, c in t.facts:
            if c not in class_names:
                diags.append(Diagnostic(f"type {t.name!r} fact {f!r} has unknown class {c!r}"))
        for inst in t.prereq + t.conseq:
            pred = preds.get(inst.predicate)
            if pred is None:
                diags.append(Diagnostic(f"type {t.name!r} uses unknown predicate {inst.predicate!r}"))
                continue
            if len(inst.args) != len(pred.arg_classes):
                diags.append(Diagnostic(f"type {t.name!r}: arity mismatch on {inst.predicate!r}"))
                continue
            if len(set(inst.args)) != len(inst.args):
                diags.append(
                    Diagnostic(f"type {t.name!r}: repeated fact in instance {inst.render()}")
                )
            for i, a in enumerate(inst.args):
                if a not in fact_cls:
                    diags.append(Diagnostic(f"type {t.name!r}: unknown fact {a!r}"))
                elif fact_cls[a] != pred.arg_classes[i]:
                    diags.append(
                        Diagnostic(
                            f"type {t.name!r}: fact {a!r} class mismatch in {inst.render()}"
                        )
                    )
    if diags:
        return diags

    cycle = find_cycle(model)
    if cycle is not None:
        diags.append(Diagnostic("cyclic may-prepare-for: " + " -> ".join(cycle)))

    expanded = expand_implications(model)
    produced = {i.predicate for t in expanded.types for i in t.conseq}
    wanted: list[str] = []
    for t in expanded.types:
        for i in t.prereq:
            if i.predicate not in produced and i.predicate not in wanted:
                wanted.append(i.predicate)
    for name in wanted:
        diags.append(
            Diagnostic(
                f"unsatisfiable prerequisite predicate {name!r} "
                "(appears in no consequence)",
                severity="warning",
            )
        )
    return diags
