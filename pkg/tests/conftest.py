"""Shared fixtures: bundled model, scenario stream, random model generator."""

from __future__ import annotations

import random

import pytest

import alertcorr as ac
from alertcorr.alerts import decode_record
from alertcorr.model import (
    AttackModel,
    FactClass,
    HyperAlertType,
    Predicate,
    PredicateInstance,
    ValueKind,
)

STANDARD_FACTS = (("SrcIP", "addr"), ("SrcPort", "port"), ("DstIP", "addr"), ("DstPort", "port"))


@pytest.fixture(scope="session")
def lldos4_model():
    return ac.load_bundled_model("lldos4.atg")


@pytest.fixture(scope="session")
def lldos4_tg(lldos4_model):
    return ac.compile_model(lldos4_model)


@pytest.fixture(scope="session")
def scenario_records():
    raw = ac.bundled_path("scenario.ndjson").read_bytes()
    return [decode_record(line) for line in raw.splitlines() if line.strip()]


def random_model(seed: int, n_types: int) -> AttackModel:
    """A random acyclic model over the four standard facts.

    Each predicate is owned by one type segment and may only be consumed by
    later segments, which keeps the may-prepare-for relation a DAG.
    """
    rng = random.Random(seed)
    classes = (FactClass("addr", ValueKind.IPV4), FactClass("port", ValueKind.INT))
    n_preds = rng.randint(n_types, 2 * n_types)
    predicates = []
    owner: dict[str, int] = {}
    for i in range(n_preds):
        arity = rng.choice((1, 1, 2))  # favor unary predicates
        args = tuple(rng.choice(("addr", "port")) for _ in range(arity))
        name = f"P{i}"
        predicates.append(Predicate(name, args))
        owner[name] = rng.randrange(n_types)

    facts_by_class = {"addr": ["SrcIP", "DstIP"], "port": ["SrcPort", "DstPort"]}

    def instance(pred: Predicate) -> PredicateInstance:
        chosen: list[str] = []
        for cls in pred.arg_classes:
            options = [f for f in facts_by_class[cls] if f not in chosen]
            chosen.append(rng.choice(options))
        return PredicateInstance(pred.name, tuple(chosen))

    types = []
    for i in range(n_types):
        own = [p for p in predicates if owner[p.name] == i]
        earlier = [p for p in predicates if owner[p.name] < i]
        conseq = tuple(
            dict.fromkeys(instance(p) for p in rng.sample(own, min(len(own), rng.randint(1, 2))))
        ) if own else ()
        prereq = tuple(
            dict.fromkeys(instance(p) for p in rng.sample(earlier, min(len(earlier), rng.randint(1, 2))))
        ) if earlier and rng.random() < 0.9 else ()
        types.append(HyperAlertType(f"T{i}", STANDARD_FACTS, prereq, conseq))
    return AttackModel(classes, tuple(predicates), (), tuple(types))


def random_stream(seed: int, model: AttackModel, count: int) -> list[dict]:
    """Random alerts over small value pools so constraints actually collide."""
    rng = random.Random(seed)
    addrs = [f"10.0.0.{i}" for i in range(1, 9)]
    ports = [21, 22, 80, 443]
    names = [t.name for t in model.types]
    ts = 0
    out = []
    for i in range(count):
        ts += rng.choice((0, 1, 1, 2))  # exercise timestamp ties
        out.append(
            {
                "id": f"r{i}",
                "type": rng.choice(names),
                "ts": ts,
                "attrs": {
                    "SrcIP": rng.choice(addrs),
                    "SrcPort": rng.choice(ports),
                    "DstIP": rng.choice(addrs),
                    "DstPort": rng.choice(ports),
                },
            }
        )
    return out


def stream_corpus(n_streams: int = 100, big: int = 4):
    """Seeded (model, stream) pairs: mostly small streams plus a few 1000-alert ones."""
    corpus = []
    for i in range(n_streams):
        model = random_model(1000 + i, 3 + i % 4)
        count = 1000 if i < big else 150 + (i * 13) % 150
        corpus.append((model, random_stream(2000 + i, model, count)))
    return corpus
