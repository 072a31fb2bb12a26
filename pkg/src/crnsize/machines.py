"""Register machines, Turing machines and the Lehmer permutation codec.

The interpreters here are the ground truth that compiled networks are
checked against.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from math import factorial
from typing import Iterable, Mapping, Sequence, Union

from .crn import CrnError


class MachineError(CrnError):
    pass


class BoundExceeded(MachineError):
    def __init__(self, register: str, value: int, bound: int, step: int):
        super().__init__(f"register {register} reached {value} > bound {bound} at step {step}")
        self.register, self.value, self.bound, self.step = register, value, bound, step


class StepCap(MachineError):
    pass


class SpaceCap(MachineError):
    pass


class NotAPermutation(MachineError, ValueError):
    pass


class RankOutOfRange(MachineError, ValueError):
    pass


class ZeroCount(MachineError, ValueError):
    pass


# -- register machines -----------------------------------------------------------


@dataclass(frozen=True)
class Inc:
    reg: str
    next: int


@dataclass(frozen=True)
class Dec:
    reg: str
    next_nonzero: int
    next_zero: int


@dataclass(frozen=True)
class Copy:
    src: str
    dst: str
    next: int

    def __post_init__(self):
        if self.src == self.dst:
            raise MachineError(f"copy from {self.src} to itself")


@dataclass(frozen=True)
class Halt:
    pass


Instruction = Union[Inc, Dec, Copy, Halt]


def _targets(ins: Instruction) -> tuple[int, ...]:
    if isinstance(ins, Dec):
        return (ins.next_nonzero, ins.next_zero)
    if isinstance(ins, (Inc, Copy)):
        return (ins.next,)
    return ()


def _regs(ins: Instruction) -> tuple[str, ...]:
    if isinstance(ins, Copy):
        return (ins.src, ins.dst)
    if isinstance(ins, (Inc, Dec)):
        return (ins.reg,)
    return ()


@dataclass(frozen=True)
class RegisterMachineProgram:
    instructions: tuple
    output_register: str
    initial_state: int = 0
    registers: tuple = ()

    def __post_init__(self):
        ins = tuple(self.instructions)
        object.__setattr__(self, "instructions", ins)
        regs = dict.fromkeys(self.registers)
        for i in ins:
            regs.update(dict.fromkeys(_regs(i)))
        regs.setdefault(self.output_register, None)
        object.__setattr__(self, "registers", tuple(regs))
        n = len(ins)
        if not 0 <= self.initial_state < n:
            raise MachineError(f"initial state {self.initial_state} out of range")
        for idx, i in enumerate(ins):
            if not isinstance(i, (Inc, Dec, Copy, Halt)):
                raise MachineError(f"state {idx}: unknown instruction {i!r}")
            for t in _targets(i):
                if not 0 <= t < n:
                    raise MachineError(f"state {idx}: jump to missing state {t}")
        if not any(isinstance(i, Halt) for i in ins):
            raise MachineError("program has no halt instruction")

    def __len__(self) -> int:
        return len(self.instructions)

    def to_text(self) -> str:
        lines = []
        for idx, i in enumerate(self.instructions):
            if isinstance(i, Inc):
                body = f"inc {i.reg} -> {i.next}"
            elif isinstance(i, Dec):
                body = f"dec {i.reg} -> {i.next_nonzero} / {i.next_zero}"
            elif isinstance(i, Copy):
                body = f"copy {i.src} {i.dst} -> {i.next}"
            else:
                body = "halt"
            lines.append(f"{idx}: {body}")
        head = f"# output {self.output_register}"
        if self.initial_state:
            head += f" start {self.initial_state}"
        return "\n".join([head, *lines]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RegisterMachineProgram":
        return parse_rm(text)

    def rename(self, mapping: Mapping[str, str]) -> "RegisterMachineProgram":
        def m(r):
            return mapping.get(r, r)

        out = []
        for i in self.instructions:
            if isinstance(i, Inc):
                out.append(Inc(m(i.reg), i.next))
            elif isinstance(i, Dec):
                out.append(Dec(m(i.reg), i.next_nonzero, i.next_zero))
            elif isinstance(i, Copy):
                out.append(Copy(m(i.src), m(i.dst), i.next))
            else:
                out.append(i)
        return RegisterMachineProgram(
            tuple(out), m(self.output_register), self.initial_state,
            tuple(m(r) for r in self.registers),
        )


_RM_LINE = re.compile(r"^\s*(\d+)\s*:\s*(.*?)\s*$")


def parse_rm(text: str) -> RegisterMachineProgram:
    """Parse numbered instruction lines such as ``2: dec r1 -> 3 / 5``.

    A ``# output REG [start N]`` header names the output register; without
    it the output register is ``Y``.
    """
    output, start = "Y", 0
    found: dict[int, Instruction] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"^#\s*output\s+(\S+)(?:\s+start\s+(\d+))?", line)
        if m:
            output = m.group(1)
            start = int(m.group(2) or 0)
            continue
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        m = _RM_LINE.match(line)
        if not m:
            raise MachineError(f"line {lineno}: cannot parse {raw!r}")
        idx, body = int(m.group(1)), m.group(2).split()
        try:
            op = body[0]
            if op == "inc" and body[2] == "->":
                ins = Inc(body[1], int(body[3]))
            elif op == "dec" and body[2] == "->" and body[4] == "/":
                ins = Dec(body[1], int(body[3]), int(body[5]))
            elif op == "copy" and body[3] == "->":
                ins = Copy(body[1], body[2], int(body[4]))
            elif op == "halt" and len(body) == 1:
                ins = Halt()
            else:
                raise IndexError
        except (IndexError, ValueError):
            raise MachineError(f"line {lineno}: cannot parse {raw!r}") from None
        if idx in found:
            raise MachineError(f"line {lineno}: state {idx} defined twice")
        found[idx] = ins
    if sorted(found) != list(range(len(found))):
        raise MachineError("states must be numbered 0..n-1 without gaps")
    return RegisterMachineProgram(tuple(found[i] for i in range(len(found))), output, start)


@dataclass
class RmRun:
    regs: dict
    state: int
    steps: int
    max_regs: dict = field(default_factory=dict)
    halted: bool = True
    output: int = 0


def run_rm(
    prog: RegisterMachineProgram,
    init_regs: Mapping[str, int] | None = None,
    bound: int | Mapping[str, int] | None = None,
    max_steps: int = 10_000_000,
    stop_state: int | None = None,
) -> RmRun:
    """Interpret ``prog``; ``Copy`` counts as a single step.

    ``bound`` caps register values (one int for all registers or a per-register
    map); exceeding it raises :class:`BoundExceeded`. ``stop_state`` pauses the
    run the first time control reaches that state.
    """
    regs = {r: 0 for r in prog.registers}
    for r, v in (init_regs or {}).items():
        if v < 0:
            raise MachineError(f"negative initial value for {r}")
        regs[r] = int(v)
    if isinstance(bound, Mapping):
        bounds = dict(bound)
    elif bound is not None:
        bounds = {r: bound for r in regs}
    else:
        bounds = {}
    for r, v in regs.items():
        if r in bounds and v > bounds[r]:
            raise BoundExceeded(r, v, bounds[r], 0)
    peak = dict(regs)
    state, steps, ins = prog.initial_state, 0, prog.instructions
    while True:
        i = ins[state]
        if isinstance(i, Halt) or (stop_state is not None and state == stop_state):
            break
        if steps >= max_steps:
            raise StepCap(f"no halt within {max_steps} steps (state {state})")
        steps += 1
        if isinstance(i, Inc):
            changed, state = i.reg, i.next
            regs[changed] += 1
        elif isinstance(i, Dec):
            if regs[i.reg]:
                regs[i.reg] -= 1
                state = i.next_nonzero
            else:
                state = i.next_zero
            continue
        else:
            changed, state = i.dst, i.next
            regs[changed] += regs[i.src]
        v = regs[changed]
        if v > peak[changed]:
            peak[changed] = v
            if changed in bounds and v > bounds[changed]:
                raise BoundExceeded(changed, v, bounds[changed], steps)
    return RmRun(regs, state, steps, peak, isinstance(ins[state], Halt),
                 regs[prog.output_register])


class Assembler:
    """Builds register machine programs with symbolic labels.

    Each emitter returns the index of the new instruction; jump targets may be
    label names, resolved by :meth:`build`. ``None`` as a target means "the
    next instruction emitted".
    """

    def __init__(self):
        self._ins: list[list] = []
        self._labels: dict[str, int] = {}

    def here(self) -> int:
        return len(self._ins)

    def label(self, name: str) -> str:
        if name in self._labels:
            raise MachineError(f"label {name} defined twice")
        self._labels[name] = len(self._ins)
        return name

    def _emit(self, op, *args) -> int:
        idx = len(self._ins)
        self._ins.append([op, *[idx + 1 if a is None else a for a in args]])
        return idx

    def inc(self, reg, next=None):
        return self._emit("inc", reg, next)

    def dec(self, reg, nonzero=None, zero=None):
        return self._emit("dec", reg, nonzero, zero)

    def copy(self, src, dst, next=None):
        return self._emit("copy", src, dst, next)

    def halt(self):
        return self._emit("halt")

    def jump(self, target):
        """Unconditional jump; removed by :meth:`build`."""
        return self._emit("jmp", target)

    def embed(self, prog: RegisterMachineProgram, rename: Mapping[str, str] | None = None,
              halt_to=None) -> int:
        """Append ``prog`` with registers renamed; its halts jump to ``halt_to``.

        Returns the index of the embedded program's entry instruction.
        """
        base = self.here()
        m = dict(rename or {})

        def r(name):
            return m.get(name, name)

        for ins in prog.instructions:
            if isinstance(ins, Inc):
                self._emit("inc", r(ins.reg), base + ins.next)
            elif isinstance(ins, Dec):
                self._emit("dec", r(ins.reg), base + ins.next_nonzero, base + ins.next_zero)
            elif isinstance(ins, Copy):
                self._emit("copy", r(ins.src), r(ins.dst), base + ins.next)
            elif halt_to is None:
                self.halt()
            else:
                self.jump(halt_to)
        return base + prog.initial_state

    def address(self, target) -> int:
        """Final instruction index of a label or raw index (after :meth:`build`)."""
        return self._resolve(target)

    def _after(self, done, length: int):
        """Target ``done``, with None meaning the instruction after a block of ``length``."""
        return self.here() + length if done is None else done

    def drain(self, src: str, dsts: Sequence[str], done) -> None:
        """Move ``src`` into each of ``dsts`` (src ends at 0)."""
        loop = self.here()
        self.dec(src, None, self._after(done, 1 + len(dsts)))
        for d in dsts[:-1]:
            self.inc(d)
        self.inc(dsts[-1], loop)

    def clear(self, reg: str, done) -> None:
        loop = self.here()
        self.dec(reg, loop, self._after(done, 1))

    def _resolve(self, t):
        if isinstance(t, str):
            if t not in self._labels:
                raise MachineError(f"undefined label {t}")
            t = self._labels[t]
        seen = set()
        while t < len(self._ins) and self._ins[t][0] == "jmp":
            if t in seen:
                raise MachineError("cycle of unconditional jumps")
            seen.add(t)
            t = self._ins[t][1]
            if isinstance(t, str):
                t = self._resolve_label(t)
        return self._final[t]

    def _resolve_label(self, name):
        if name not in self._labels:
            raise MachineError(f"undefined label {name}")
        return self._labels[name]

    def build(self, output: str, registers: Iterable[str] = (), start=0) -> RegisterMachineProgram:
        self._final, n = {}, 0
        for idx, (op, *_) in enumerate(self._ins):
            self._final[idx] = n
            n += op != "jmp"
        self._final[len(self._ins)] = n
        out = []
        for op, *a in self._ins:
            if op == "inc":
                out.append(Inc(a[0], self._resolve(a[1])))
            elif op == "dec":
                out.append(Dec(a[0], self._resolve(a[1]), self._resolve(a[2])))
            elif op == "copy":
                out.append(Copy(a[0], a[1], self._resolve(a[2])))
            elif op == "halt":
                out.append(Halt())
        return RegisterMachineProgram(tuple(out), output, self._resolve(start), tuple(registers))


def lower_copies(prog: RegisterMachineProgram, aux: str = "cp") -> RegisterMachineProgram:
    """Replace every ``Copy`` by an Inc/Dec loop through register ``aux``.

    Instruction ``j`` keeps its index; the extra states for each copy are
    appended at the end.
    """
    if aux in prog.registers and any(aux in _regs(i) for i in prog.instructions):
        raise MachineError(f"auxiliary register {aux} already used by the program")
    ins = list(prog.instructions)
    if not any(isinstance(i, Copy) for i in ins):
        return prog
    extra: list[Instruction] = []
    n = len(ins)
    for j, i in enumerate(ins):
        if not isinstance(i, Copy):
            continue
        base = n + len(extra)
        c1, c2, c3, c4 = base, base + 1, base + 2, base + 3
        # j: move src into dst and aux; c3/c4: move aux back into src
        ins[j] = Dec(i.src, c1, c3)
        extra += [Inc(i.dst, c2), Inc(aux, j), Dec(aux, c4, i.next), Inc(i.src, c3)]
    regs = tuple(dict.fromkeys([*prog.registers, aux]))
    return RegisterMachineProgram(tuple(ins + extra), prog.output_register,
                                  prog.initial_state, regs)


# -- Turing machines ---------------------------------------------------------------


@dataclass(frozen=True)
class TuringMachine:
    """Single-tape machine; ``transitions[(state, symbol)] = (state', symbol', move)``.

    Input words are written so that their last symbol sits under the head.
    At halt the output is the binary numeral whose least significant bit is
    under the head, read leftwards until the first non-binary symbol.
    """

    states: tuple
    alphabet: tuple
    blank: str
    transitions: Mapping
    start: str
    halt: str

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        object.__setattr__(self, "transitions", dict(self.transitions))
        if self.blank not in self.alphabet:
            raise MachineError("blank must be in the tape alphabet")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise MachineError("duplicate tape symbols")
        for s in (self.start, self.halt):
            if s not in self.states:
                raise MachineError(f"unknown state {s}")
        for (q, a), (q2, b, mv) in self.transitions.items():
            if q == self.halt:
                raise MachineError("halt state has outgoing transitions")
            if q not in self.states or q2 not in self.states:
                raise MachineError(f"unknown state in transition ({q}, {a})")
            if a not in self.alphabet or b not in self.alphabet:
                raise MachineError(f"unknown symbol in transition ({q}, {a})")
            if mv not in ("L", "R"):
                raise MachineError(f"move must be L or R, got {mv!r}")
        for q in self.states:
            if q == self.halt:
                continue
            for a in self.alphabet:
                if (q, a) not in self.transitions:
                    raise MachineError(f"no transition for ({q}, {a})")

    @property
    def symbols(self) -> tuple:
        """Alphabet ordered with the blank first (digit value 0)."""
        return (self.blank, *[a for a in self.alphabet if a != self.blank])

    def to_document(self) -> dict:
        return {
            "states": list(self.states),
            "alphabet": list(self.alphabet),
            "blank": self.blank,
            "start": self.start,
            "halt": self.halt,
            "transitions": [
                [q, a, q2, b, mv] for (q, a), (q2, b, mv) in self.transitions.items()
            ],
        }

    @classmethod
    def from_document(cls, doc: Mapping) -> "TuringMachine":
        trans = {(q, a): (q2, b, mv) for q, a, q2, b, mv in doc["transitions"]}
        return cls(doc["states"], doc["alphabet"], doc["blank"], trans, doc["start"], doc["halt"])

    def to_json(self) -> str:
        return json.dumps(self.to_document(), indent=2)


@dataclass
class TmRun:
    output: int
    space_used: int
    steps: int
    tape: dict
    head: int


def binary_word(n: int) -> str:
    return format(n, "b")


def run_tm(tm: TuringMachine, input_word: str = "", space_cap: int | None = None,
           step_cap: int = 1_000_000) -> TmRun:
    """Run ``tm``; ``space_used`` counts the cells holding input or visited."""
    for a in input_word:
        if a not in tm.alphabet:
            raise MachineError(f"input symbol {a!r} not in alphabet")
    n = len(input_word)
    tape = {i - n + 1: a for i, a in enumerate(input_word) if a != tm.blank}
    used = set(range(1 - n, 1)) | {0}
    head, state, steps = 0, tm.start, 0
    trans = tm.transitions
    while state != tm.halt:
        if steps >= step_cap:
            raise StepCap(f"no halt within {step_cap} steps")
        state, b, mv = trans[(state, tape.get(head, tm.blank))]
        if b == tm.blank:
            tape.pop(head, None)
        else:
            tape[head] = b
        head += 1 if mv == "R" else -1
        steps += 1
        if head not in used:
            used.add(head)
            if space_cap is not None and len(used) > space_cap:
                raise SpaceCap(f"more than {space_cap} cells used")
    return TmRun(read_output(tape, head), len(used), steps, tape, head)


def read_output(tape: Mapping[int, str], head: int) -> int:
    value, weight, pos = 0, 1, head
    while tape.get(pos) in ("0", "1"):
        value += weight * (tape[pos] == "1")
        weight *= 2
        pos -= 1
    return value


@dataclass(frozen=True)
class TmTranslation:
    """Register machine simulating a Turing machine, with its input/output registers."""

    program: RegisterMachineProgram
    input_register: str
    base: int

    def bound_for(self, space: int) -> int:
        return self.base**space


def tm_to_rm(tm: TuringMachine, prefix: str = "") -> TmTranslation:
    """Register machine simulating ``tm`` on the binary numeral of its input.

    The tape is kept as two base-B numbers (B = alphabet size, blank = 0):
    ``R`` holds the head cell and everything to its right with the head cell
    as least significant digit, ``L`` the cells left of the head with the
    nearest one least significant. The prologue writes the input numeral
    onto the tape and the epilogue reads the binary output back into ``out``.
    """
    sym = tm.symbols
    B = len(sym)
    code = {a: d for d, a in enumerate(sym)}
    for c in ("0", "1"):
        if c not in code:
            raise MachineError("tape alphabet must contain 0 and 1")
    n_, L, R, Q, T, P, out = (prefix + r for r in ("n", "L", "R", "Q", "T", "P", "out"))
    asm = Assembler()
    tag = f"_tm{prefix}_"
    serial = iter(range(1 << 30))

    def lab(*parts) -> str:
        return tag + "_".join(str(p) for p in parts)

    def mul_add(reg: str, digit: int, then) -> None:
        """reg := reg * B + digit (T must be 0)."""
        u = next(serial)
        asm.drain(reg, [T], lab("ma", u))
        asm.label(lab("ma", u))
        asm.dec(T, None, lab("ma_add", u))
        for _ in range(B - 1):
            asm.inc(reg)
        asm.inc(reg, lab("ma", u))
        asm.label(lab("ma_add", u))
        for _ in range(digit):
            asm.inc(reg)
        asm.jump(then)

    def divmod_into(reg: str, target) -> None:
        """Q := reg div B, reg := 0, continue at ``target(reg mod B)`` (Q must be 0)."""
        first = asm.here()
        for d in range(B):
            asm.dec(reg, None, target(d))
        asm.inc(Q, first)

    def halve(reg: str, on0, on1) -> None:
        """Q := reg div 2, reg := 0, continue at on0/on1 by parity (Q must be 0)."""
        first = asm.here()
        asm.dec(reg, None, on0)
        asm.dec(reg, None, on1)
        asm.inc(Q, first)

    # prologue: binary numeral of n, least significant bit under the head
    halve(n_, lab("p0", 0), lab("p0", 1))
    for b in (0, 1):
        asm.label(lab("p0", b))
        for _ in range(code[str(b)]):
            asm.inc(R)
        asm.jump(lab("p_rest"))
    asm.label(lab("p_rest"))
    asm.drain(Q, [n_], None)
    asm.inc(P)
    asm.label(lab("p_loop"))
    asm.dec(n_, None, lab("run", tm.start))
    asm.inc(n_)
    halve(n_, lab("p_bit", 0), lab("p_bit", 1))
    for b in (0, 1):
        asm.label(lab("p_bit", b))
        for _ in range(code[str(b)]):
            asm.copy(P, L)
        asm.jump(lab("p_next"))
    asm.label(lab("p_next"))
    asm.drain(Q, [n_], None)
    mul_add(P, 0, lab("p_loop"))

    # main loop
    for q in tm.states:
        asm.label(lab("run", q))
        if q == tm.halt:
            asm.clear(P, lab("out"))
            continue
        divmod_into(R, lambda d, q=q: lab("t", q, d))
        for d, a in enumerate(sym):
            asm.label(lab("t", q, d))
            q2, b, mv = tm.transitions[(q, a)]
            if mv == "R":
                # L := L*B + b, R := R div B
                mul_add(L, code[b], None)
                asm.drain(Q, [R], lab("run", q2))
            else:
                # R := (R div B)*B + b, then pull the nearest left cell into R
                asm.drain(Q, [R], None)
                mul_add(R, code[b], None)
                divmod_into(L, lambda e, q2=q2: lab("pull", q2, e))
    for q in tm.states:
        for e in range(B):
            asm.label(lab("pull", q, e))
            asm.drain(Q, [L], None)
            mul_add(R, e, lab("run", q))

    # epilogue: out := value of the binary digits from the head leftwards
    asm.label(lab("out"))
    asm.inc(P)
    asm.label(lab("o_digit"))
    divmod_into(R, lambda d: lab("o", d))
    for d, a in enumerate(sym):
        asm.label(lab("o", d))
        if a not in ("0", "1"):
            asm.halt()
            continue
        if a == "1":
            asm.copy(P, out)
        asm.copy(P, T)
        asm.drain(T, [P], None)
        asm.clear(Q, None)
        divmod_into(L, lambda e: lab("o_pull", e))
    for e in range(B):
        asm.label(lab("o_pull", e))
        asm.drain(Q, [L], None)
        for _ in range(e):
            asm.inc(R)
        asm.jump(lab("o_digit"))
    prog = asm.build(out, registers=[n_, L, R, Q, T, P, out])
    return TmTranslation(prog, n_, B)


def rm_to_tm(prog: RegisterMachineProgram, input_register: str | None = None) -> TuringMachine:
    """Turing machine simulating ``prog`` with tally marks.

    Layout: the binary input numeral ends at cell 0, a ``$`` sits at cell 1
    and register units are marks ``m<i>`` to its right (``x`` is a freed
    cell). The input is first counted down into marks of ``input_register``;
    at halt the output register's marks are counted into a binary numeral
    ending at cell 0, which is where the head stops.
    """
    if any(isinstance(i, Copy) for i in prog.instructions):
        prog = lower_copies(prog, aux="_tmcp")
    regs = list(prog.registers)
    mark = {r: f"m{i}" for i, r in enumerate(regs)}
    alphabet = ["_", "0", "1", "$", "x", *mark.values()]
    trans: dict = {}
    states: list[str] = []

    def state(name: str) -> str:
        if name not in states:
            states.append(name)
        return name

    def add(q, a, q2, b, mv):
        state(q)
        state(q2)
        trans[(q, a)] = (q2, b, mv)

    def seek_right(q, stop, on_stop, b_stop, mv_stop):
        """Move right over every symbol except ``stop``."""
        for a in alphabet:
            if a == stop:
                add(q, a, on_stop, b_stop, mv_stop)
            else:
                add(q, a, q, a, "R")

    def back(ret: str, mv: str) -> str:
        """Walk left to ``$`` then step ``mv`` into ``ret``."""
        q = f"back@{ret}@{mv}"
        if q not in states:
            for a in alphabet:
                if a == "$":
                    add(q, a, ret, a, mv)
                else:
                    add(q, a, q, a, "L")
        return q

    def prog_state(j: int) -> str:
        return f"q{j}"

    halt = "halt"
    state("start")
    for a in alphabet:
        add("start", a, "setup", a, "R")
    for a in alphabet:
        add("setup", a, "cz", "$", "L")
    # cz: scan the numeral leftwards; all zeros means the count is done
    inp = mark.get(input_register) if input_register is not None else None
    for a in alphabet:
        if a == "0":
            add("cz", a, "cz", a, "L")
        elif a == "1" and inp is not None:
            add("cz", a, "gr_dec", a, "R")
        else:
            add("cz", a, "gr_run", a, "R")
    seek_right("gr_dec", "$", "dec", "$", "L")
    for a in alphabet:
        if a == "0":
            add("dec", a, "dec", "1", "L")
        elif a == "1":
            add("dec", a, "gr_inc", "0", "R")
        else:
            add("dec", a, "dec", a, "L")
    seek_right("gr_inc", "$", "inc_in", "$", "R")
    cnt_back = back("cz", "L")
    for a in alphabet:
        if a in ("x", "_") and inp is not None:
            add("inc_in", a, cnt_back, inp, "L")
        else:
            add("inc_in", a, "inc_in", a, "R")
    seek_right("gr_run", "$", prog_state(prog.initial_state), "$", "R")

    for j, ins in enumerate(prog.instructions):
        q = state(prog_state(j))
        if isinstance(ins, Inc):
            ret = back(prog_state(ins.next), "R")
            for a in alphabet:
                if a in ("x", "_"):
                    add(q, a, ret, mark[ins.reg], "L")
                else:
                    add(q, a, q, a, "R")
        elif isinstance(ins, Dec):
            nz = back(prog_state(ins.next_nonzero), "R")
            z = back(prog_state(ins.next_zero), "R")
            for a in alphabet:
                if a == mark[ins.reg]:
                    add(q, a, nz, "x", "L")
                elif a == "_":
                    add(q, a, z, a, "L")
                else:
                    add(q, a, q, a, "R")
        else:
            for a in alphabet:
                add(q, a, "ep", a, "L")
    # epilogue: move one output mark at a time into the binary counter
    out_mark = mark[prog.output_register]
    for a in alphabet:
        add("ep", a, "od", a, "R")
    done_back = back(halt, "L")
    for a in alphabet:
        if a == out_mark:
            add("od", a, "obk", "x", "L")
        elif a == "_":
            add("od", a, done_back, a, "L")
        else:
            add("od", a, "od", a, "R")
    for a in alphabet:
        if a == "$":
            add("obk", a, "oinc", a, "L")
        else:
            add("obk", a, "obk", a, "L")
    for a in alphabet:
        if a == "1":
            add("oinc", a, "oinc", "0", "L")
        else:
            add("oinc", a, "ogo", "1", "R")
    seek_right("ogo", "$", "od", "$", "R")
    state(halt)
    # unreachable pairs still need a transition
    for q in states:
        if q == halt:
            continue
        for a in alphabet:
            trans.setdefault((q, a), (q, a, "R"))
    return TuringMachine(states, alphabet, "_", trans, "start", halt)

# -- permutations -----------------------------------------------------------------------


def _check_perm(perm: Sequence[int]) -> list[int]:
    p = [int(v) for v in perm]
    if sorted(p) != list(range(1, len(p) + 1)):
        raise NotAPermutation(f"{tuple(perm)} is not a permutation of 1..{len(p)}")
    return p


def lehmer_code(perm: Sequence[int]) -> list[int]:
    p = _check_perm(perm)
    return [sum(1 for w in p[i + 1:] if w < v) for i, v in enumerate(p)]


def lehmer_rank(perm: Sequence[int]) -> int:
    """Lexicographic rank of ``perm`` among permutations of 1..k."""
    code = lehmer_code(perm)
    k = len(code)
    return sum(d * factorial(k - 1 - i) for i, d in enumerate(code))


def lehmer_unrank(r: int, k: int) -> tuple[int, ...]:
    if k < 1 or not 0 <= r < factorial(k):
        raise RankOutOfRange(f"rank {r} not in [0, {k}!)")
    pool = list(range(1, k + 1))
    out = []
    for i in range(k - 1, -1, -1):
        d, r = divmod(r, factorial(i))
        out.append(pool.pop(d))
    return tuple(out)


def min_k_for(x: int) -> int:
    """Smallest k >= 1 with k! > x."""
    if x < 0:
        raise ValueError("x must be >= 0")
    k = 1
    while factorial(k) <= x:
        k += 1
    return k


def encode_counts_to_m(counts: Sequence[int]) -> int:
    """Unary runs of ones separated by single zeros, first count most significant."""
    if any(c < 1 for c in counts):
        raise ZeroCount(f"all counts must be >= 1: {tuple(counts)}")
    if not counts:
        raise ZeroCount("empty count sequence")
    return int("0".join("1" * c for c in counts), 2)


def decode_m_to_counts(m: int) -> tuple[int, ...]:
    bits = format(m, "b")
    runs = bits.split("0")
    if m < 1 or any(not r for r in runs):
        raise ValueError(f"{m} is not a valid count encoding")
    return tuple(len(r) for r in runs)


# -- generated programs -------------------------------------------------------------------


def build_permutation_setter(perm: Sequence[int], regs: Sequence[str] | None = None,
                             asm: Assembler | None = None, done=None):
    """Straight-line Inc/Copy code leaving register i at perm[i].

    The register that ends at k serves as the running counter: it is
    incremented k times and copied into the register holding value v right
    after reaching v.
    """
    p = _check_perm(perm)
    k = len(p)
    regs = list(regs) if regs is not None else [f"r{i + 1}" for i in range(k)]
    own = asm is None
    asm = asm or Assembler()
    where = {v: regs[i] for i, v in enumerate(p)}
    counter = where[k]
    for v in range(1, k + 1):
        last = v == k
        asm.inc(counter, done if (last and done is not None) else None)
        if not last:
            asm.copy(counter, where[v], None)
    if own:
        asm.halt()
        return asm.build(counter, registers=regs)
    return None


def build_count_encoder(regs: Sequence[str], I: str = "I", T: str = "T",
                        asm: Assembler | None = None, done=None):
    """Drain registers in order into ``I``, appending 1 per unit and 0 between registers.

    Doubling is ``Copy(I, T)`` followed by draining ``T`` back into ``I``.
    """
    own = asm is None
    asm = asm or Assembler()
    tag = asm.here()
    for idx, r in enumerate(regs):
        last = idx == len(regs) - 1
        top = asm.here()
        after = f"_enc{tag}_b{idx}"
        asm.dec(r, None, after)
        asm.copy(I, T)
        asm.drain(T, [I], None)
        asm.inc(I, top)
        asm.label(after)
        if last:
            if own:
                asm.halt()
            else:
                asm.jump(done)
        else:
            asm.copy(I, T)
            asm.drain(T, [I], None)
    if own:
        return asm.build(I, registers=[*regs, I, T])
    return None


DECODER_REGISTERS = ("I", "J", "V", "U", "X", "Z", "P", "D", "F", "N", "G", "E", "out")


def build_rank_decoder(k: int | None = None, asm: Assembler | None = None,
                       prefix: str = "", output: str = "out", halt_to=None):
    """Program computing the Lehmer rank of the permutation encoded in ``I``.

    Counts are read from the least significant end of ``I`` by repeated
    halving, i.e. last permutation entry first. For each value v the digit
    (number of later entries below v) is the population count of the
    lowest v-1 bits of the seen-values mask ``U``; it is weighted by the
    running factorial ``F``. The program does not depend on k.
    """
    if k is not None and k < 1:
        raise ValueError("k must be >= 1")
    own = asm is None
    asm = asm or Assembler()
    I, J, V, U, X, Z, P, D, F, N, G, E = (prefix + r for r in DECODER_REGISTERS[:-1])
    out = output
    t = f"_dec{asm.here()}_"
    lab = lambda s: t + s  # noqa: E731

    asm.inc(F)
    # halve I into J; bit 0 -> b0, bit 1 -> b1
    asm.label(lab("h0"))
    asm.dec(I, None, lab("b0"))
    asm.dec(I, None, lab("b1"))
    asm.inc(J, lab("h0"))
    asm.label(lab("b1"))
    asm.drain(J, [I], None)
    asm.inc(V, lab("h0"))
    asm.label(lab("b0"))
    asm.dec(J, None, lab("last"))
    asm.inc(I)
    asm.drain(J, [I], lab("process"))
    asm.label(lab("last"))
    asm.inc(E, lab("process"))

    # process value V
    asm.label(lab("process"))
    asm.dec(V)                      # V >= 1 for valid input
    asm.copy(U, X)
    asm.inc(P, lab("bits"))
    asm.label(lab("bits"))
    asm.dec(V, None, lab("after"))
    # halve X into Z, count a low 1 bit into D
    asm.label(lab("x0"))
    asm.dec(X, None, lab("xb0"))
    asm.dec(X, None, lab("xb1"))
    asm.inc(Z, lab("x0"))
    asm.label(lab("xb1"))
    asm.inc(D, lab("xb0"))
    asm.label(lab("xb0"))
    asm.drain(Z, [X], None)
    asm.copy(P, Z)
    asm.drain(Z, [P], lab("bits"))
    asm.label(lab("after"))
    asm.drain(P, [U], None)
    asm.clear(X, None)
    # out += D * F
    asm.label(lab("acc"))
    asm.dec(D, None, lab("acc_done"))
    asm.copy(F, out, lab("acc"))
    asm.label(lab("acc_done"))
    # N += 1; F := F * N
    asm.inc(N)
    asm.label(lab("mul"))
    asm.dec(F, None, lab("mul_done"))
    asm.copy(N, G, lab("mul"))
    asm.label(lab("mul_done"))
    asm.drain(G, [F], None)
    asm.dec(E, lab("end"), lab("h0"))
    asm.label(lab("end"))
    if own:
        asm.halt()
        return asm.build(out, registers=[I, J, V, U, X, Z, P, D, F, N, G, E, out])
    if halt_to is None:
        asm.halt()
    else:
        asm.jump(halt_to)
    return None
