import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crnsize.machines import (
    Assembler,
    BoundExceeded,
    Copy,
    Dec,
    Halt,
    Inc,
    MachineError,
    NotAPermutation,
    RankOutOfRange,
    RegisterMachineProgram,
    StepCap,
    TuringMachine,
    ZeroCount,
    binary_word,
    build_count_encoder,
    build_permutation_setter,
    build_rank_decoder,
    decode_m_to_counts,
    encode_counts_to_m,
    lehmer_code,
    lehmer_rank,
    lehmer_unrank,
    lower_copies,
    min_k_for,
    parse_rm,
    rm_to_tm,
    run_rm,
    run_tm,
    tm_to_rm,
)

DOUBLE = parse_rm("# output y\n0: dec x -> 1 / 3\n1: inc y -> 2\n2: inc y -> 0\n3: halt\n")

SUCCESSOR = TuringMachine(
    ("q0", "q1", "halt"), ("_", "0", "1"), "_",
    {("q0", "1"): ("q0", "0", "L"), ("q0", "0"): ("q1", "1", "R"), ("q0", "_"): ("q1", "1", "R"),
     ("q1", "0"): ("q1", "0", "R"), ("q1", "1"): ("q1", "1", "R"), ("q1", "_"): ("halt", "_", "L")},
    "q0", "halt",
)


def test_run_rm_doubles():
    run = run_rm(DOUBLE, {"x": 3})
    assert run.output == 6 and run.halted and run.max_regs["y"] == 6


def test_text_round_trip():
    assert parse_rm(DOUBLE.to_text()) == DOUBLE


@pytest.mark.parametrize("text", ["0: inc y -> 5\n1: halt\n", "0: inc y -> 0\n", "0: jump\n1: halt\n",
                                  "1: halt\n"])
def test_parse_rm_rejects(text):
    with pytest.raises(MachineError):
        parse_rm(text)


def test_bounds_and_step_caps():
    with pytest.raises(BoundExceeded):
        run_rm(DOUBLE, {"x": 3}, bound={"y": 5})
    loop = RegisterMachineProgram((Inc("a", 0), Halt()), "a")
    with pytest.raises(StepCap):
        run_rm(loop, max_steps=100)


def test_copy_counts_as_one_step_and_lowering_preserves_results():
    prog = RegisterMachineProgram((Inc("a", 1), Inc("a", 2), Copy("a", "b", 3), Halt()), "b")
    run = run_rm(prog)
    assert run.regs == {"a": 2, "b": 2} and run.steps == 3
    low = lower_copies(prog)
    assert not any(isinstance(i, Copy) for i in low.instructions)
    assert run_rm(low).regs == {"a": 2, "b": 2, "cp": 0}


def test_assembler_labels_and_jumps():
    asm = Assembler()
    asm.inc("a")
    asm.jump("end")
    asm.inc("a")
    asm.label("end")
    asm.drain("a", ["b", "c"], None)
    asm.halt()
    prog = asm.build("b")
    assert run_rm(prog).regs == {"a": 0, "b": 1, "c": 1}
    assert asm.address("end") == 2


def test_assembler_embed_redirects_halts():
    asm = Assembler()
    asm.inc("x")
    asm.inc("x")
    asm.embed(DOUBLE, {"y": "z"}, halt_to="after")
    asm.label("after")
    asm.inc("z")
    asm.halt()
    assert run_rm(asm.build("z")).output == 5


def test_assembler_rejects_jump_cycles():
    asm = Assembler()
    asm.label("a")
    asm.jump("a")
    asm.halt()
    with pytest.raises(MachineError):
        asm.build("y")


def test_turing_machine_successor():
    for n in range(20):
        assert run_tm(SUCCESSOR, binary_word(n)).output == n + 1


def test_turing_machine_validation():
    with pytest.raises(MachineError):
        TuringMachine(("q", "h"), ("_", "1"), "_", {("q", "_"): ("h", "1", "R")}, "q", "h")
    doc = SUCCESSOR.to_document()
    assert TuringMachine.from_document(doc) == SUCCESSOR


def test_tm_to_rm_matches_tm():
    tr = tm_to_rm(SUCCESSOR)
    for n in range(12):
        space = run_tm(SUCCESSOR, binary_word(n)).space_used
        run = run_rm(tr.program, {tr.input_register: n}, max_steps=10**8)
        assert run.output == n + 1
        assert max(run.max_regs.values()) <= tr.bound_for(space + 1)


def test_rm_to_tm_runs_the_doubler():
    tm = rm_to_tm(DOUBLE, "x")
    for x in range(6):
        assert run_tm(tm, binary_word(x), step_cap=10**6).output == 2 * x


def test_lehmer_example_round_trips():
    assert lehmer_code((2, 4, 3, 1)) == [1, 2, 1, 0]
    r = lehmer_rank((2, 4, 3, 1))
    assert lehmer_unrank(r, 4) == (2, 4, 3, 1)


def test_lehmer_is_lexicographic():
    perms = list(itertools.permutations(range(1, 5)))
    assert [lehmer_rank(p) for p in perms] == list(range(24))


def test_lehmer_errors():
    with pytest.raises(NotAPermutation):
        lehmer_rank((1, 1, 2))
    with pytest.raises(RankOutOfRange):
        lehmer_unrank(6, 3)


def test_min_k():
    assert [min_k_for(x) for x in (0, 1, 2, 5, 6, 23, 24)] == [1, 2, 3, 3, 4, 4, 5]


def test_count_encoding_example():
    assert encode_counts_to_m((3, 1, 2)) == 0b11101011
    assert decode_m_to_counts(0b11101011) == (3, 1, 2)
    with pytest.raises(ZeroCount):
        encode_counts_to_m((1, 0))


@given(st.lists(st.integers(1, 6), min_size=1, max_size=6))
def test_count_encoding_round_trip(counts):
    assert decode_m_to_counts(encode_counts_to_m(counts)) == tuple(counts)


def test_setter_program_example():
    prog = build_permutation_setter((2, 4, 3, 1))
    regs = run_rm(prog).regs
    assert [regs[f"r{i}"] for i in range(1, 5)] == [2, 4, 3, 1]


def test_count_encoder_program():
    prog = build_count_encoder(["r1", "r2", "r3"])
    assert run_rm(prog, {"r1": 3, "r2": 1, "r3": 2}).regs["I"] == 0b11101011


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5).flatmap(lambda k: st.permutations(range(1, k + 1))))
def test_rank_decoder_inverts_the_encoding(perm):
    dec = build_rank_decoder(len(perm))
    m = encode_counts_to_m(perm)
    assert run_rm(dec, {"I": m}, max_steps=10**8).output == lehmer_rank(perm)


def test_rank_decoder_through_turing_machine():
    tm = rm_to_tm(build_rank_decoder(3), "I")
    for perm in itertools.permutations((1, 2, 3)):
        m = encode_counts_to_m(perm)
        assert run_tm(tm, binary_word(m), step_cap=10**8).output == lehmer_rank(perm)


def test_instruction_targets_checked():
    with pytest.raises(MachineError):
        RegisterMachineProgram((Dec("a", 0, 3), Halt()), "a")
    assert math.factorial(min_k_for(100)) > 100
