"""Constructions of small CRNs computing a given integer.

``compile_binary`` is the one-reaction-per-bit baseline (stable, not
halting). ``compile_permutation`` encodes x as the Lehmer rank of a
permutation of 1..k set by straight-line code, which is then packed into a
single count and decoded, all as one register machine compiled to a CRN.
``compile_program`` prefixes a machine with that pipeline for its input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import factorial

from .crn import Crn, Reaction
from .machines import (
    DECODER_REGISTERS,
    Assembler,
    BoundExceeded,
    Copy,
    RegisterMachineProgram,
    TuringMachine,
    binary_word,
    build_count_encoder,
    build_permutation_setter,
    build_rank_decoder,
    encode_counts_to_m,
    lehmer_unrank,
    lower_copies,
    min_k_for,
    rm_to_tm,
    run_rm,
    run_tm,
    tm_to_rm,
)
from .rm_compiler import (
    DEXP,
    LADDER,
    BoundSpec,
    BoundTooSmall,
    CompiledNetwork,
    CompileManifest,
    compile_rm,
)

DIRECT = "direct"
TM_PIPELINE = "tm"

# registers whose values stay small enough to run the oracle for certification
RUN_LIMIT = 1 << 21


@dataclass
class EncodeOptions:
    k_override: int | None = None
    counter_mode: str = LADDER          # ladder | dexp | ladder:N | dexp:K
    step3_backend: str = DIRECT         # direct | tm
    max_steps: int = 200_000_000
    certify: str = "auto"               # run | analytic | auto

    def __post_init__(self):
        if self.step3_backend not in (DIRECT, TM_PIPELINE):
            raise ValueError(f"unknown step-3 back end {self.step3_backend!r}")
        if self.certify not in ("run", "analytic", "auto"):
            raise ValueError(f"unknown certification mode {self.certify!r}")
        self.mode  # validates counter_mode

    @property
    def mode(self) -> str:
        mode = self.counter_mode.partition(":")[0]
        if mode not in (LADDER, DEXP):
            raise ValueError(f"unknown counter mode {self.counter_mode!r}")
        return mode

    @property
    def uniform_bound(self) -> BoundSpec | None:
        return BoundSpec.parse(self.counter_mode) if ":" in self.counter_mode else None


# -- binary baseline -----------------------------------------------------------------------


def compile_binary(x: int) -> CompiledNetwork:
    """One reaction per bit: ``X_i -> 2 X_(i+1) (+ Y if bit i is 1)``, last ``X_(n-1) -> Y``.

    Stably computes x from ``{1 X0}``; there is no halting species.
    """
    if x < 1:
        raise ValueError("the binary construction needs x >= 1")
    bits = binary_word(x)[::-1]          # bits[i] is the coefficient of 2^i
    n = len(bits)
    reactions = []
    for i in range(n - 1):
        prod = {f"X{i + 1}": 2}
        if bits[i] == "1":
            prod["Y"] = 1
        reactions.append(Reaction({f"X{i}": 1}, prod))
    reactions.append(Reaction({f"X{n - 1}": 1}, {"Y": 1}))
    crn = Crn(reactions)
    manifest = CompileManifest(
        registers={}, states={}, leader_set=frozenset({"X0"}), leader="X0", output="Y",
        halt=None, counter_mode="none",
        notes=["stable computation only: no halting species"],
        extra={"method": "binary", "x": x, "n_bits": n},
    )
    return CompiledNetwork(crn, manifest)


# -- permutation pipeline ------------------------------------------------------------------


@dataclass
class PipelineProgram:
    program: RegisterMachineProgram
    k: int
    permutation: tuple
    m: int
    labels: dict = field(default_factory=dict)      # stage -> instruction index
    static_bounds: dict = field(default_factory=dict)
    space: int | None = None


def permutation_register_maxima(k: int, m: int, regs=None) -> dict:
    """Upper bounds on every register of the direct pipeline, without running it."""
    regs = regs or [f"r{i + 1}" for i in range(k)]
    out = {r: k for r in regs}
    fk = factorial(k)
    out.update({
        "I": m, "T": m, "J": m // 2 + 1, "V": k, "U": 2**k, "X": 2**k, "Z": 2**k, "P": 2**k,
        "D": k, "F": fk, "N": k, "G": fk, "E": 1, "out": fk,
    })
    return out


def _stage12(asm: Assembler, x: int, k: int, regs: list[str]) -> tuple[tuple, int]:
    perm = lehmer_unrank(x, k)
    build_permutation_setter(perm, regs, asm, done="step2")
    asm.label("step2")
    build_count_encoder(regs, "I", "T", asm, done="step3")
    asm.label("step3")
    return perm, encode_counts_to_m(perm)


def permutation_program(x: int, k: int | None = None, backend: str = DIRECT,
                        output: str = "out", halt_to=None, asm: Assembler | None = None):
    """Register machine for the three stages; returns a :class:`PipelineProgram`.

    With ``asm`` given the stages are appended to it (halting jumps to
    ``halt_to``) and the caller builds the program; ``program`` is then None.
    """
    if x < 0:
        raise ValueError("x must be >= 0")
    k = k if k is not None else min_k_for(x)
    if factorial(k) <= x:
        raise ValueError(f"k={k} is too small: {k}! <= {x}")
    own = asm is None
    asm = asm or Assembler()
    regs = [f"r{i + 1}" for i in range(k)]
    perm, m = _stage12(asm, x, k, regs)
    static = permutation_register_maxima(k, m, regs)
    space = None
    if backend == DIRECT:
        build_rank_decoder(k, asm, output=output, halt_to=halt_to)
        if output != "out":
            static[output] = static.pop("out")
    else:
        decoder = build_rank_decoder(k)
        tm = rm_to_tm(decoder, "I")
        run = run_tm(tm, binary_word(m), step_cap=50_000_000)
        space = run.space_used
        tr = tm_to_rm(tm, prefix="t.")
        asm.drain("I", ["t.n"], None)
        asm.embed(tr.program, {"t.out": output}, halt_to=halt_to)
        big = tr.bound_for(space)
        for r in ("L", "R", "Q", "T", "P"):
            static[f"t.{r}"] = big
        for r in DECODER_REGISTERS:
            static.pop(r, None)
        static["t.n"] = m
        static[output] = 2**space
        static["I"] = m
    prog = asm.build(output, registers=[*regs, "I", "T"]) if own else None
    labels = {}
    if own:
        labels = {"step2": asm.address("step2"), "step3": asm.address("step3")}
    return PipelineProgram(prog, k, perm, m, labels, static, space)


def _bounds(prog: RegisterMachineProgram, opts: EncodeOptions, static: dict,
            init_regs: dict | None = None) -> tuple[dict, dict, str, int | None]:
    """Per-register bounds certified by running the oracle or from static maxima."""
    how = opts.certify
    steps = None
    if how == "auto":
        how = "run" if max(static.values(), default=0) <= RUN_LIMIT else "analytic"
    if how == "run":
        run = run_rm(prog, init_regs or {}, max_steps=opts.max_steps)
        if not run.halted:
            raise BoundTooSmall("oracle run did not halt")
        maxima, steps = dict(run.max_regs), run.steps
    else:
        maxima = {r: static.get(r) for r in prog.registers}
        if "cp" in maxima and maxima["cp"] is None:
            maxima["cp"] = max(v for v in static.values())
        missing = [r for r, v in maxima.items() if v is None]
        if missing:
            raise BoundTooSmall(f"no static bound for registers {missing}")
    uniform = opts.uniform_bound
    bounds = {}
    for r in prog.registers:
        need = max(maxima.get(r, 0), 1)
        if uniform is not None:
            if uniform.value < need:
                raise BoundTooSmall(f"register {r} needs {need} > {uniform.value}")
            bounds[r] = BoundSpec(uniform.mode, uniform.n, need)
        else:
            bounds[r] = BoundSpec.at_least(need, opts.mode)
    if how == "run":
        try:
            run_rm(prog, init_regs or {}, bound={r: b.value for r, b in bounds.items()},
                   max_steps=opts.max_steps)
        except BoundExceeded as e:
            raise BoundTooSmall(str(e)) from None
    return bounds, maxima, how, steps


def _finish(prog: RegisterMachineProgram, opts: EncodeOptions, static: dict, extra: dict,
            labels: dict) -> CompiledNetwork:
    lowered = lower_copies(prog, "cp") if any(isinstance(i, Copy) for i in prog.instructions) else prog
    static = dict(static)
    if "cp" in lowered.registers and "cp" not in static:
        static["cp"] = max(static.values(), default=1)
    bounds, maxima, how, steps = _bounds(lowered, opts, static)
    net = compile_rm(lowered, bounds)
    man = net.manifest
    man.labels = {name: man.states[j] for name, j in labels.items()}
    man.extra.update(extra)
    man.extra["certified_by"] = how
    if steps is not None:
        man.extra["oracle_steps"] = steps
    man.extra["register_maxima"] = {r: v for r, v in maxima.items()}
    man.extra["program_size"] = len(lowered)
    if any(b.requested and b.value != b.requested for b in bounds.values()):
        man.notes.append("register bounds rounded up to the counter's representable values")
    return net


def compile_permutation(x: int, opts: EncodeOptions | None = None) -> CompiledNetwork:
    """CRN haltingly computing x from ``{1 L}`` via a permutation of 1..k."""
    opts = opts or EncodeOptions()
    pp = permutation_program(x, opts.k_override, opts.step3_backend)
    extra = {"method": "permutation", "x": x, "k": pp.k, "permutation": list(pp.permutation),
             "m": pp.m, "n_bits": max(x.bit_length(), 1), "step3_backend": opts.step3_backend}
    if pp.space is not None:
        extra["tm_space"] = pp.space
    return _finish(pp.program, opts, pp.static_bounds, extra, pp.labels)


def compile_program(machine: RegisterMachineProgram | TuringMachine, input_p: int,
                    opts: EncodeOptions | None = None, input_register: str | None = None) -> CompiledNetwork:
    """CRN haltingly computing ``machine(input_p)`` from ``{1 L}``.

    Stage 1 computes input_p into a transfer register; a drain loop moves it
    into the machine's input register; then the machine runs. Machine
    registers are renamed with an ``m.`` prefix. Turing machines go through
    :func:`tm_to_rm` first.
    """
    opts = opts or EncodeOptions()
    if isinstance(machine, TuringMachine):
        expected = run_tm(machine, binary_word(input_p)).output
        tr = tm_to_rm(machine, prefix="m.")
        mprog, entry_reg, rename = tr.program, tr.input_register, {}
        kind = "turing"
    else:
        mprog = machine
        if input_register is None:
            cands = [r for r in machine.registers if r != machine.output_register]
            if not cands:
                raise ValueError("machine has no input register")
            input_register = cands[0]
        rename = {r: f"m.{r}" for r in machine.registers}
        entry_reg = rename[input_register]
        expected = run_rm(machine, {input_register: input_p}, max_steps=opts.max_steps).output
        kind = "register"
    asm = Assembler()
    pp = permutation_program(input_p, opts.k_override, opts.step3_backend, output="p",
                             halt_to="transfer", asm=asm)
    asm.label("transfer")
    asm.drain("p", [entry_reg], "machine")
    asm.label("machine")
    asm.embed(mprog, rename)
    out = rename.get(mprog.output_register, mprog.output_register)
    prog = asm.build(out, registers=[f"r{i + 1}" for i in range(pp.k)])
    labels = {"step2": asm.address("step2"), "step3": asm.address("step3"),
              "transfer": asm.address("transfer"), "machine": asm.address("machine")}
    extra = {"method": "program", "machine": kind, "input": input_p, "expected": expected,
             "k": pp.k, "permutation": list(pp.permutation), "m": pp.m}
    opts_run = EncodeOptions(opts.k_override, opts.counter_mode, opts.step3_backend,
                             opts.max_steps, "run" if opts.certify == "auto" else opts.certify)
    net = _finish(prog, opts_run, pp.static_bounds, extra, labels)
    if net.manifest.extra["register_maxima"].get(out, 0) < expected and expected:
        raise BoundTooSmall("oracle output not reproduced")
    return net


# -- reporting -------------------------------------------------------------------------------


def ks_upper_bound(x: int, methods=("binary", "permutation"), opts: EncodeOptions | None = None) -> dict:
    """Reaction and species counts of each construction for x.

    Every row is an upper bound on the smallest CRN computing x, not a
    value of the space-aware program-size measure itself.
    """
    rows = []
    for method in methods:
        if method == "binary":
            if x < 1:
                continue
            net = compile_binary(x)
        elif method in ("permutation", "perm"):
            net = compile_permutation(x, opts)
        else:
            raise ValueError(f"unknown method {method!r}")
        rows.append({"method": net.manifest.extra["method"], "reactions": len(net.crn),
                     "species": len(net.crn.species),
                     "halting": net.manifest.halt is not None})
    n = max(x.bit_length(), 1)
    return {"x": x, "n_bits": n, "kind": "upper bound on reaction count", "rows": rows,
            "n_over_log_n": n / math.log2(n) if n > 1 else None}


def format_report(report: dict) -> str:
    lines = [f"x = {report['x']}  ({report['n_bits']} bits); rows are upper bounds on reaction count",
             f"{'method':<12} {'reactions':>9} {'species':>8} {'halting':>8}"]
    for row in report["rows"]:
        lines.append(f"{row['method']:<12} {row['reactions']:>9} {row['species']:>8} "
                     f"{'yes' if row['halting'] else 'no':>8}")
    return "\n".join(lines) + "\n"
