"""Hyper-alert instances and the newline-delimited record format.

Input records are one JSON object per line with fields `id` (optional),
`type`, `ts` (non-negative integer microseconds) and `attrs` (fact name to
string-or-integer value).  Values are canonicalized per fact class before
any comparison.
"""

from __future__ import annotations

import msgspec

from .model import ValueKind, render_value

REAL = "real"
HYPOTHESIZED = "hypothesized"

# sub-sequence rank reserved for real alerts; hypotheses committed while
# explaining arrival k are ranked (k, 0..) and therefore order before it
REAL_RANK = 1_000_000

RECORD_FIELDS = frozenset({"id", "type", "ts", "attrs"})

_decoder = msgspec.json.Decoder()
_encoder = msgspec.json.Encoder()

decode_record = _decoder.decode


def encode_record(record: dict) -> bytes:
    """One alert record as a compact JSON line (without trailing newline)."""
    return _encoder.encode(record)


class HyperAlert:
    """A typed tuple of attribute values, real or hypothesized.

    `values` is aligned with the type's fact declaration order; None marks
    an unknown attribute (hypotheses only).  `seq` is an (arrival, rank)
    pair that totally orders vertices along correlation edges.
    """

    __slots__ = ("id", "type_name", "facts", "kinds", "values", "ts", "seq", "origin", "aggregated")

    def __init__(self, id, type_name, facts, kinds, values, ts, seq, origin):
        self.id = id
        self.type_name = type_name
        self.facts = facts
        self.kinds = kinds
        self.values = values
        self.ts = ts
        self.seq = seq
        self.origin = origin
        self.aggregated: list | None = None

    def known_positions(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.values) if v is not None)

    def attrs(self) -> dict:
        """Known attributes as canonical values keyed by fact name."""
        return {f: v for f, v in zip(self.facts, self.values) if v is not None}

    def rendered_attrs(self) -> dict[str, str | int]:
        """Known attributes in external form (ipv4 back to dotted quads)."""
        out: dict[str, str | int] = {}
        for f, k, v in zip(self.facts, self.kinds, self.values):
            if v is None:
                continue
            out[f] = render_value(k, v) if k is ValueKind.IPV4 else v
        return out

    def bound_facts_text(self) -> str:
        items = self.rendered_attrs()
        return ",".join(f"{f}={items[f]}" for f in self.facts if f in items) or "-"

    def __repr__(self) -> str:
        return f"<{self.origin} {self.type_name} {self.id} {self.bound_facts_text()}>"
