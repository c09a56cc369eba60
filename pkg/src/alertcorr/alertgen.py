"""Seeded synthetic false-alarm streams for benchmarks and robustness tests.

Noise alerts model an IDS watching one network: per alert, one endpoint
address is drawn from the monitored class-B or class-C range and the other
from the whole address space outside it, one port is drawn below 1024 and
the other from the full 16-bit range, with two coin flips deciding which
side is which.

All randomness comes from random.Random (MT19937) consumed exclusively
through getrandbits, in a fixed draw order, so a spec plus seed always
reproduces the identical byte stream.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Iterator

from .model import AttackModel, ValueKind, canonical_value

STANDARD_FACTS = ("SrcIP", "SrcPort", "DstIP", "DstPort")

_HOST_BITS = {"B": 16, "C": 8}


def parse_prefix(text: str, host_bits: int) -> int:
    """Parse 'a.b.c.d/len' and return the network base address as an int."""
    addr, _, length = text.partition("/")
    if not length:
        raise ValueError(f"prefix must look like 10.0.0.0/{32 - host_bits}")
    base = canonical_value(ValueKind.IPV4, addr)
    if int(length) != 32 - host_bits:
        raise ValueError(
            f"prefix length /{length} does not match the network class "
            f"(expected /{32 - host_bits})"
        )
    mask = (1 << host_bits) - 1
    if base & mask:
        raise ValueError(f"prefix {text!r} has host bits set")
    return base


@dataclass(frozen=True)
class GenSpec:
    network_class: str  # "B" (2^16 addresses) or "C" (2^8 addresses)
    network_prefix: str
    count: int
    seed: int
    model: AttackModel
    type_pool: tuple[str, ...]

    def __post_init__(self):
        if self.network_class not in _HOST_BITS:
            raise ValueError(f"network class must be B or C, got {self.network_class!r}")
        if self.count < 0:
            raise ValueError("count must be >= 0")
        if not self.type_pool:
            raise ValueError("type pool is empty")
        types = self.model.type_map()
        cmap = self.model.class_map()
        for name in self.type_pool:
            t = types.get(name)
            if t is None:
                raise ValueError(f"type {name!r} not in model")
            facts = dict(t.facts)
            for f in STANDARD_FACTS:
                if f not in facts:
                    raise ValueError(f"type {name!r} lacks standard fact {f!r}")
            for f in ("SrcIP", "DstIP"):
                if cmap[facts[f]].kind is not ValueKind.IPV4:
                    raise ValueError(f"type {name!r}: fact {f!r} is not an ipv4 class")
            for f in ("SrcPort", "DstPort"):
                if cmap[facts[f]].kind is not ValueKind.INT:
                    raise ValueError(f"type {name!r}: fact {f!r} is not an int class")
        parse_prefix(self.network_prefix, self.host_bits())

    def host_bits(self) -> int:
        return _HOST_BITS[self.network_class]


def _randbelow(rng: random.Random, n: int) -> int:
    """Uniform int in [0, n) drawn via getrandbits only (stable draw order)."""
    bits = (n - 1).bit_length()
    while True:
        v = rng.getrandbits(bits)
        if v < n:
            return v


def generate_noise(spec: GenSpec) -> Iterator[dict]:
    """Yield `count` noise alert records with 1-unit-spaced timestamps."""
    rng = random.Random(spec.seed)
    host_bits = spec.host_bits()
    base = parse_prefix(spec.network_prefix, host_bits)
    pool = spec.type_pool
    npool = len(pool)
    for i in range(spec.count):
        # the "anywhere" endpoint is outside the monitored range so exactly
        # one endpoint per alert falls inside it
        while True:
            far_ip = rng.getrandbits(32)
            if (far_ip ^ base) >> host_bits:
                break
        far_port = rng.getrandbits(16)
        near_ip = base | rng.getrandbits(host_bits)
        near_port = rng.getrandbits(10)
        if rng.getrandbits(1):
            src_ip, dst_ip = far_ip, near_ip
        else:
            src_ip, dst_ip = near_ip, far_ip
        if rng.getrandbits(1):
            src_port, dst_port = far_port, near_port
        else:
            src_port, dst_port = near_port, far_port
        tname = pool[_randbelow(rng, npool)] if npool > 1 else pool[0]
        yield {
            "id": f"n{i + 1}",
            "type": tname,
            "ts": i + 1,
            "attrs": {
                "SrcIP": src_ip,
                "SrcPort": src_port,
                "DstIP": dst_ip,
                "DstPort": dst_port,
            },
        }


def interleave(
    scenario: Iterable[dict],
    noise: Iterable[dict],
    seed: int,
    noise_count: int | None = None,
) -> Iterator[dict]:
    """Merge a time-ordered scenario into noise at seeded-random positions.

    Both inputs keep their relative order; timestamps are rewritten to one
    monotone clock (the output slot index).  `noise_count` must be given
    when `noise` has no len().
    """
    scenario = list(scenario)
    if noise_count is None:
        noise_count = len(noise)  # type: ignore[arg-type]
    total = len(scenario) + noise_count
    rng = random.Random(seed)
    slots: set[int] = set()
    while len(slots) < len(scenario):
        slots.add(_randbelow(rng, total))
    scenario_slots = sorted(slots)

    noise_it = iter(noise)
    si = 0
    for pos in range(total):
        if si < len(scenario_slots) and pos == scenario_slots[si]:
            rec = dict(scenario[si])
            si += 1
        else:
            rec = dict(next(noise_it))
        rec["ts"] = pos + 1
        yield rec
