"""Bounded register machine to CRN compiler.

Each register r with bound b is held by b tokens split between an active
species (the value) and an inactive one. ``Inc`` moves a token from inactive
to active, ``Dec`` back. The zero test needs all b tokens inactive and is
done either by a halving ladder ending in a unique indicator species
(``ladder`` mode, b = 2^n) or by a consumption/production pair of doubly
exponential counters (``dexp`` mode, b = 2^(2^k)). A single leader walks
through the state species; an initializer provisions the tokens first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .crn import Crn, CrnError, Reaction, reversible
from .dexp import consumption_fragment, production_fragment
from .machines import Copy, Dec, Halt, Inc, RegisterMachineProgram, lower_copies

LADDER = "ladder"
DEXP = "dexp"

LEADER = "L"
HALT = "H"
OUTPUT = "Y"


class UnboundedRegister(CrnError):
    pass


class BoundTooSmall(CrnError):
    pass


@dataclass(frozen=True)
class BoundSpec:
    """Register bound: 2^n tokens in ladder mode, 2^(2^n) in dexp mode."""

    mode: str
    n: int
    requested: int | None = None

    def __post_init__(self):
        if self.mode not in (LADDER, DEXP):
            raise ValueError(f"unknown counter mode {self.mode!r}")
        if self.n < (1 if self.mode == LADDER else 0):
            raise ValueError(f"bound exponent {self.n} too small for {self.mode}")

    @property
    def value(self) -> int:
        return 2**self.n if self.mode == LADDER else 2 ** (2**self.n)

    @classmethod
    def ladder(cls, n: int) -> "BoundSpec":
        return cls(LADDER, n)

    @classmethod
    def dexp(cls, k: int) -> "BoundSpec":
        return cls(DEXP, k)

    @classmethod
    def at_least(cls, value: int, mode: str = LADDER) -> "BoundSpec":
        """Smallest bound of the given mode that is >= value (and >= 1)."""
        value = max(int(value), 1)
        if mode == LADDER:
            n = max(1, math.ceil(math.log2(value)) if value > 1 else 1)
            while 2**n < value:
                n += 1
        else:
            n = 0
            while 2 ** (2**n) < value:
                n += 1
        return cls(mode, n, value)

    @classmethod
    def parse(cls, text: str) -> "BoundSpec":
        """``ladder:N`` or ``dexp:K``."""
        mode, _, num = text.partition(":")
        if mode not in (LADDER, DEXP) or not num.isdigit():
            raise ValueError(f"bound must look like ladder:N or dexp:K, got {text!r}")
        return cls(mode, int(num))

    def to_document(self) -> dict:
        return {"mode": self.mode, "n": self.n, "value": self.value, "requested": self.requested}


@dataclass
class Gadget:
    """A reaction fragment with the species it designates."""

    crn: Crn
    leaders: frozenset = frozenset()
    species: dict = field(default_factory=dict)


@dataclass
class CompileManifest:
    registers: dict                 # register -> (active, inactive)
    states: dict                    # instruction index -> species
    leader_set: frozenset
    leader: str = LEADER
    output: str = OUTPUT
    halt: str | None = HALT
    bounds: dict = field(default_factory=dict)
    counter_mode: str = LADDER
    conservation: dict = field(default_factory=dict)   # register -> {species: token weight}
    labels: dict = field(default_factory=dict)         # stage name -> state species
    notes: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def designated(self) -> dict:
        return {"leader": self.leader, "output": self.output, "halt": self.halt}

    def to_document(self) -> dict:
        return {
            "registers": {r: list(v) for r, v in self.registers.items()},
            "states": {str(j): s for j, s in self.states.items()},
            "leader_set": sorted(self.leader_set),
            "designated": self.designated,
            "bounds": {r: b.to_document() for r, b in self.bounds.items()},
            "counter_mode": self.counter_mode,
            "labels": dict(self.labels),
            "notes": list(self.notes),
            **self.extra,
        }

    def species_map(self) -> str:
        lines = [f"leader {self.leader}  output {self.output}  halt {self.halt}"]
        for r, (a, i) in self.registers.items():
            b = self.bounds.get(r)
            lines.append(f"register {r}: active {a}, inactive {i}, bound {b.value if b else '?'}")
        for j, s in self.states.items():
            lines.append(f"state {j}: {s}")
        return "\n".join(lines) + "\n"

    def conservation_ok(self, config: Mapping[str, int]) -> bool:
        """Token totals per register are 0 (not yet provisioned) or exactly the bound.

        Once any program state species is present every register must hold
        its full bound. Only ladder-mode registers are tracked.
        """
        running = any(config.get(s, 0) for s in set(self.states.values()))
        for r, weights in self.conservation.items():
            total = sum(w * config.get(s, 0) for s, w in weights.items())
            b = self.bounds[r].value
            if total not in (0, b) or (running and total != b):
                return False
        return True


@dataclass
class CompiledNetwork:
    crn: Crn
    manifest: CompileManifest

    @property
    def initial(self) -> dict:
        return {self.manifest.leader: 1}


def _register_species(r: str, output_register: str, prefix: str = "") -> tuple[str, str]:
    active = OUTPUT if r == output_register else f"{prefix}{r}.A"
    return active, f"{prefix}{r}.I"


def build_ladder_zero_check(register: str, n: int, sites: Iterable[tuple[str, str]] = (),
                            inactive: str | None = None, prefix: str = "") -> Gadget:
    """Reversible halving ladder ``2 I <-> C_n``, ``2 C_m <-> C_(m-1)`` plus jumps.

    ``C_1`` stands for 2^n inactive tokens, so it is producible exactly when
    the register is zero. Each site (state, zero target) gets a jump
    ``state + C_1 -> target + C_1``.
    """
    if n < 1:
        raise ValueError("ladder needs n >= 1")
    inactive = inactive or f"{prefix}{register}.I"
    c = [None] + [f"{prefix}{register}.C{m}" for m in range(1, n + 1)]
    rx: list[Reaction] = []
    rx += reversible({inactive: 2}, {c[n]: 1})
    for m in range(n, 1, -1):
        rx += reversible({c[m]: 2}, {c[m - 1]: 1})
    for state, target in sites:
        rx.append(Reaction({state: 1, c[1]: 1}, {target: 1, c[1]: 1}))
    weights = {inactive: 1, **{c[m]: 2 ** (n - m + 1) for m in range(1, n + 1)}}
    return Gadget(Crn(rx), frozenset(), {"indicator": c[1], "weights": weights})


def build_dexp_zero_check(register: str, k: int, sites: Iterable[tuple[str, str]] = (),
                          inactive: str | None = None, prefix: str = "") -> Gadget:
    """Commit gadget on a consumption/production counter pair.

    Per site: ``S <-> P + cons.S`` (reversible entry), ``P + cons.H -> Q +
    prod.S`` (commit once all 2^(2^k) inactive tokens were consumed) and
    ``Q + prod.H -> target`` after the tokens are restored.
    """
    inactive = inactive or f"{prefix}{register}.I"
    cons = consumption_fragment(k, inactive, f"{prefix}{register}.cons")
    prod = production_fragment(k, inactive, f"{prefix}{register}.prod")
    rx = [*cons.crn, *prod.crn]
    for state, target in sites:
        tag = state.replace(".", "_")
        p, q = f"{prefix}{register}.P_{tag}", f"{prefix}{register}.Q_{tag}"
        rx += reversible({state: 1}, {p: 1, cons.s_species: 1})
        rx.append(Reaction({p: 1, cons.h_species: 1}, {q: 1, prod.s_species: 1}))
        rx.append(Reaction({q: 1, prod.h_species: 1}, {target: 1}))
    return Gadget(Crn(rx), cons.leader_set | prod.leader_set,
                  {"consume": cons.s_species, "produce": prod.s_species})


def build_initializer(registers: Iterable[str], bounds: Mapping[str, BoundSpec], start: str,
                      inactive: Mapping[str, str] | None = None, leader: str = LEADER,
                      prefix: str = "") -> Gadget:
    """Provision every register with its bound of inactive tokens, one register at a time.

    Ladder registers use a doubling chain ``A_1 -> 2 A_2 -> ... -> 2 I``; the
    leader waits on the register's ladder indicator before moving on, so
    the next register starts only when the previous one is complete.
    Dexp registers use a production counter; its end species hands the
    leader to the next register. The last hand-off produces ``start``.
    """
    regs = list(registers)
    inactive = dict(inactive or {})
    rx: list[Reaction] = []
    leaders = {leader}
    weights: dict = {}
    # the leader hand-off still pending: (reactants, catalysts kept on the product side)
    pending: tuple[dict, dict] = ({leader: 1}, {})

    def hand_off(products: dict) -> Reaction:
        lhs, keep = pending
        return Reaction(lhs, {**keep, **products})

    for r in regs:
        b = bounds[r]
        inact = inactive.get(r, f"{prefix}{r}.I")
        if b.mode == LADDER:
            a = [None] + [f"{prefix}{r}.A{m}" for m in range(1, b.n + 1)]
            wait = f"{prefix}W.{r}"
            leaders.add(wait)
            rx.append(hand_off({a[1]: 1, wait: 1}))
            for m in range(1, b.n):
                rx.append(Reaction({a[m]: 1}, {a[m + 1]: 2}))
            rx.append(Reaction({a[b.n]: 1}, {inact: 2}))
            weights[r] = {a[m]: 2 ** (b.n - m + 1) for m in range(1, b.n + 1)}
            ind = f"{prefix}{r}.C1"
            pending = ({wait: 1, ind: 1}, {ind: 1})
        else:
            frag = production_fragment(b.n, inact, f"{prefix}{r}.init")
            rx.extend(frag.crn)
            leaders |= frag.leader_set
            rx.append(hand_off({frag.s_species: 1}))
            pending = ({frag.h_species: 1}, {})
    rx.append(hand_off({start: 1}))
    return Gadget(Crn(rx), frozenset(leaders), {"weights": weights})


def compile_rm(prog: RegisterMachineProgram, bounds: BoundSpec | Mapping[str, BoundSpec],
               prefix: str = "", aux: str = "cp") -> CompiledNetwork:
    """Compile ``prog`` into a CRN haltingly computing its output from ``{1 L}``.

    ``bounds`` is one BoundSpec for all registers or a per-register map. Copies
    are lowered first through register ``aux``, which gets the largest
    bound of the registers it copies from when none is given.
    """
    if any(isinstance(i, Copy) for i in prog.instructions):
        while aux in prog.registers:
            aux = "_" + aux
        copy_srcs = {i.src for i in prog.instructions if isinstance(i, Copy)}
        prog = lower_copies(prog, aux)
        if isinstance(bounds, Mapping) and aux not in bounds:
            srcs = [bounds[s] for s in copy_srcs if s in bounds]
            if srcs:
                bounds = {**bounds, aux: max(srcs, key=lambda b: b.value)}
    used = []
    for ins in prog.instructions:
        if isinstance(ins, (Inc, Dec)):
            used.append(ins.reg)
    regs = list(dict.fromkeys(r for r in prog.registers if r in set(used)))
    if isinstance(bounds, BoundSpec):
        bmap = {r: bounds for r in regs}
    else:
        bmap = {}
        for r in regs:
            if r not in bounds:
                raise UnboundedRegister(f"register {r} has no bound")
            bmap[r] = bounds[r]
    modes = {b.mode for b in bmap.values()}
    out_reg = prog.output_register
    species = {r: _register_species(r, out_reg, prefix) for r in regs}
    if out_reg not in species:
        species[out_reg] = _register_species(out_reg, out_reg, prefix)
    halt = f"{prefix}{HALT}" if prefix else HALT
    leader = f"{prefix}{LEADER}" if prefix else LEADER

    def state(j: int) -> str:
        return halt if isinstance(prog.instructions[j], Halt) else f"{prefix}S{j}"

    states = {j: state(j) for j in range(len(prog))}
    rx: list[Reaction] = []
    leaders = set(states.values()) | {leader}
    zero_sites: dict[str, list] = {r: [] for r in regs}
    for j, ins in enumerate(prog.instructions):
        if isinstance(ins, Inc):
            act, ina = species[ins.reg]
            rx.append(Reaction({states[j]: 1, ina: 1}, {act: 1, states[ins.next]: 1}))
        elif isinstance(ins, Dec):
            act, ina = species[ins.reg]
            rx.append(Reaction({states[j]: 1, act: 1}, {ina: 1, states[ins.next_nonzero]: 1}))
            zero_sites[ins.reg].append((states[j], states[ins.next_zero]))
    conservation: dict = {}
    for r in regs:
        b = bmap[r]
        act, ina = species[r]
        if b.mode == LADDER:
            g = build_ladder_zero_check(r, b.n, zero_sites[r], ina, prefix)
            conservation[r] = {act: 1, **g.species["weights"]}
            rx.extend(g.crn)
        elif zero_sites[r]:
            g = build_dexp_zero_check(r, b.n, zero_sites[r], ina, prefix)
            rx.extend(g.crn)
            leaders |= g.leaders
    init = build_initializer(regs, bmap, states[prog.initial_state],
                             {r: species[r][1] for r in regs}, leader, prefix)
    for r, w in init.species["weights"].items():
        conservation[r].update(w)
    crn = Crn([*init.crn, *rx])
    leaders |= init.leaders
    present = set(crn.species)
    leaders = frozenset(s for s in leaders if s in present)
    manifest = CompileManifest(
        registers={r: species[r] for r in species},
        states=states,
        leader_set=leaders,
        leader=leader,
        output=species[out_reg][0],
        halt=halt,
        bounds=bmap,
        counter_mode="+".join(sorted(modes)) if modes else LADDER,
        conservation=conservation,
    )
    return CompiledNetwork(crn, manifest)
