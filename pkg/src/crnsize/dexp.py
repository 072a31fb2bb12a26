"""Doubly exponential counter.

A layer-k meta-reaction ``S_i^k <-> H_i^k + 2^(2^k) X_i^k`` (production,
i in {1, 2}) or ``2^(2^k) X_i^k + S_i^k <-> H_i^k`` (consumption, i in {3, 4})
is implemented by nine reversible reactions that run a nested loop over the
four layer-(k-1) meta-reactions. Lower layers are shared between all boxes
that reference them, so a layer adds a constant number of reactions.

Species names follow ``S_i^k``, ``T1_i^k``, ``C3_i^k`` etc. A top-level box
may be placed in a namespace (``family``) and have its counted species
aliased to an external target; layers below the top always use the shared,
un-prefixed names.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

from .crn import Crn, Reaction

PRODUCE = "produce"
CONSUME = "consume"

LEADER_ROLES = ("S", "H", "T1", "T2")


def counter_value(k: int) -> int:
    return 2 ** (2**k)


def _name(role: str, i: int, k: int, family: str | None = None) -> str:
    base = f"{role}_{i}^{k}"
    return f"{family}.{base}" if family else base


@dataclass(frozen=True)
class MetaReactionSpec:
    layer: int
    index: int
    target: str | None = None
    family: str | None = None

    def __post_init__(self):
        if self.layer < 0:
            raise ValueError("layer must be >= 0")
        if self.index not in (1, 2, 3, 4):
            raise ValueError("index must be in 1..4")

    @property
    def direction(self) -> str:
        return PRODUCE if self.index in (1, 2) else CONSUME


@dataclass(frozen=True)
class Fragment:
    crn: Crn
    s_species: str
    h_species: str
    x_species: str
    leader_set: frozenset = field(default_factory=frozenset)
    layer: int = 0
    index: int = 1

    @property
    def expected_count(self) -> int:
        return counter_value(self.layer)

    @property
    def direction(self) -> str:
        return PRODUCE if self.index in (1, 2) else CONSUME

    def manifest(self) -> dict:
        return {
            "s_species": self.s_species,
            "h_species": self.h_species,
            "target": self.x_species,
            "leader_set": sorted(self.leader_set),
            "layer": self.layer,
            "index": self.index,
            "direction": self.direction,
            "expected_count": self.expected_count,
        }


def _box_reactions(k: int, i: int, family: str | None, target: str | None) -> list[Reaction]:
    """The reactions introduced by box (k, i) itself, lower boxes excluded."""
    S, H = _name("S", i, k, family), _name("H", i, k, family)
    X = target or _name("X", i, k, family)
    if k == 0:
        pair = ({S: 1}, {H: 1, X: 2}) if i in (1, 2) else ({X: 2, S: 1}, {H: 1})
        r = Reaction(*pair)
        return [r, r.reverse()]

    def low(role: str, j: int) -> str:
        return _name(role, j, k - 1)

    T1, T2 = _name("T1", i, k, family), _name("T2", i, k, family)
    C1, C2, C3, C4 = (_name(f"C{n}", i, k, family) for n in (1, 2, 3, 4))
    if i in (1, 2):
        five = ({T2: 1, low("X", 2): 1}, {T2: 1, low("X", 3): 1, X: 1})
    else:
        five = ({X: 1, T2: 1, low("X", 2): 1}, {T2: 1, low("X", 3): 1})
    forward = [
        ({S: 1}, {C1: 1, low("S", 1): 1}),                                   # (1)
        ({C1: 1, low("H", 1): 1}, {T1: 1}),                                  # (2)
        ({T1: 1, low("X", 1): 1}, {C2: 1, low("X", 4): 1, low("S", 2): 1}),  # (3)
        ({C2: 1, low("H", 2): 1}, {T2: 1}),                                  # (4)
        five,                                                                # (5)
        ({T2: 1}, {C3: 1, low("S", 3): 1}),                                  # (6)
        ({C3: 1, low("H", 3): 1}, {T1: 1}),                                  # (7)
        ({C3: 1, low("H", 3): 1}, {C4: 1, low("S", 4): 1}),                  # (8)
        ({C4: 1, low("H", 4): 1}, {H: 1}),                                   # (9)
    ]
    out: list[Reaction] = []
    for lhs, rhs in forward:
        r = Reaction(lhs, rhs)
        out += [r, r.reverse()]
    return out


@lru_cache(maxsize=None)
def _shared_layers(top: int) -> Crn:
    """All boxes of layers 0..top with shared names."""
    reactions: list[Reaction] = []
    for k in range(top + 1):
        for i in (1, 2, 3, 4):
            reactions += _box_reactions(k, i, None, None)
    return Crn(reactions)


def _leaders(crn: Crn) -> frozenset:
    out = set()
    for s in crn.species:
        role = s.rsplit(".", 1)[-1].split("_", 1)[0]
        if role in LEADER_ROLES:
            out.add(s)
    return frozenset(out)


def expand(spec: MetaReactionSpec) -> Fragment:
    """Expand a meta-reaction into ordinary reactions (all layers)."""
    k, i = spec.layer, spec.index
    top = Crn(_box_reactions(k, i, spec.family, spec.target))
    crn = top.merge(_shared_layers(k - 1)) if k > 0 else top
    return Fragment(
        crn=crn,
        s_species=_name("S", i, k, spec.family),
        h_species=_name("H", i, k, spec.family),
        x_species=spec.target or _name("X", i, k, spec.family),
        leader_set=_leaders(crn),
        layer=k,
        index=i,
    )


def base_layer() -> list[Fragment]:
    return [expand(MetaReactionSpec(0, i)) for i in (1, 2, 3, 4)]


def production_fragment(k: int, target: str | None = None, family: str | None = None) -> Fragment:
    return expand(MetaReactionSpec(k, 1, target, family))


def consumption_fragment(k: int, target: str | None = None, family: str | None = None) -> Fragment:
    return expand(MetaReactionSpec(k, 3, target, family))


def leader_species(names) -> frozenset:
    """Leader species (S, H, T roles) among ``names``."""
    return _leaders(Crn(species=names))
