import pytest

from crnsize.analysis import (
    ExploreCaps,
    NotLumpable,
    coverability,
    haltingly_computes,
    leader_arity_violations,
    lumped_haltingly_computes,
    reachable,
    token_pools,
    well_led_invariance,
)
from crnsize.crn import Reaction, parse_text
from crnsize.machines import Assembler, lower_copies, parse_rm, run_rm
from crnsize.rm_compiler import (
    BoundSpec,
    UnboundedRegister,
    build_initializer,
    build_ladder_zero_check,
    compile_rm,
)
from rm_corpus import EXPECTED, corpus, program


def _bounds_for(prog):
    run = run_rm(prog)
    return {r: BoundSpec.at_least(max(v, 1)) for r, v in run.max_regs.items()}, run.output


def _compiled(name):
    prog = lower_copies(program(name))
    bounds, out = _bounds_for(prog)
    return compile_rm(prog, bounds), out


# -- bounds ----------------------------------------------------------------------------------


def test_bound_values():
    assert BoundSpec.ladder(3).value == 8
    assert BoundSpec.dexp(0).value == 2
    assert BoundSpec.dexp(2).value == 16


@pytest.mark.parametrize("value,n", [(0, 1), (1, 1), (2, 1), (3, 2), (4, 2), (5, 3), (256, 8), (257, 9)])
def test_at_least_rounds_up_to_a_ladder(value, n):
    b = BoundSpec.at_least(value)
    assert b.n == n and b.value >= value


def test_at_least_in_dexp_mode():
    assert BoundSpec.at_least(5, "dexp").n == 2
    assert BoundSpec.at_least(17, "dexp").value == 256


def test_parse_bound():
    assert BoundSpec.parse("ladder:4") == BoundSpec.ladder(4)
    assert BoundSpec.parse("dexp:1").value == 4
    for bad in ("ladder", "tree:3", "ladder:x"):
        with pytest.raises(ValueError):
            BoundSpec.parse(bad)
    with pytest.raises(ValueError):
        BoundSpec.ladder(0)


# -- gadgets ---------------------------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 3])
def test_ladder_indicator_appears_exactly_when_all_tokens_are_inactive(n):
    g = build_ladder_zero_check("r", n)
    ind = g.species["indicator"]
    b = 2**n
    assert g.species["weights"][ind] == b
    for tokens in range(b + 2):
        v = coverability(g.crn, {"r.I": tokens}, {ind: 1})
        assert v.holds == (tokens >= b)


def test_ladder_jump_is_catalytic():
    g = build_ladder_zero_check("r", 2, [("S0", "S1")])
    jump = Reaction({"S0": 1, "r.C1": 1}, {"S1": 1, "r.C1": 1})
    assert jump in g.crn


def test_initializer_provisions_every_register():
    bounds = {"a": BoundSpec.ladder(2), "b": BoundSpec.ladder(3)}
    g = build_initializer(["a", "b"], bounds, "S0")
    # the leader waits on each register's indicator, which the ladders supply
    ladders = build_ladder_zero_check("a", 2).crn.merge(build_ladder_zero_check("b", 3).crn)
    crn = g.crn.merge(ladders)
    ends = [c for c in reachable(crn, {"L": 1}).configurations() if c["S0"]]
    assert ends
    for c in ends:
        weights = {"a": build_ladder_zero_check("a", 2).species["weights"],
                   "b": build_ladder_zero_check("b", 3).species["weights"]}
        for r, b in bounds.items():
            assert sum(w * c[s] for s, w in weights[r].items()) == b.value
    assert g.species["weights"]["a"] == {"a.A1": 4, "a.A2": 2}


def test_dexp_initializer_produces_the_counter_value():
    g = build_initializer(["r"], {"r": BoundSpec.dexp(1)}, "S0")
    ends = [c for c in reachable(g.crn, {"L": 1}).configurations() if c["S0"]]
    assert ends and all(c["r.I"] == 4 for c in ends)


# -- compiled programs -----------------------------------------------------------------------


def test_corpus_outputs_match_the_interpreter():
    for name, prog in corpus().items():
        assert run_rm(prog).output == EXPECTED[name]


@pytest.mark.parametrize("name", ["one", "move_two", "two_a_plus_b", "subtract"])
def test_small_programs_haltingly_compute(name):
    net, out = _compiled(name)
    man = net.manifest
    v = haltingly_computes(net.crn, net.initial, man.output, man.halt, out)
    assert v.holds
    assert haltingly_computes(net.crn, net.initial, man.output, man.halt, out + 1).fails
    g = reachable(net.crn, net.initial)
    assert all(man.conservation_ok(c) for c in g.configurations())


@pytest.mark.parametrize("name", ["one", "move_two", "two_a_plus_b", "subtract"])
def test_lumped_verifier_agrees_with_the_plain_one(name):
    net, out = _compiled(name)
    man = net.manifest
    for x in (out, out + 1):
        plain = haltingly_computes(net.crn, net.initial, man.output, man.halt, x)
        lumped = lumped_haltingly_computes(net.crn, net.initial, man.output, man.halt, x,
                                           man.leader_set)
        assert plain.status == lumped.status
        assert lumped.stats["configs"] <= plain.stats["configs"]


def test_compiled_networks_are_well_led():
    net, _ = _compiled("two_a_plus_b")
    man = net.manifest
    assert not leader_arity_violations(net.crn, man.leader_set, allow_neutral=True)
    v = well_led_invariance(net.crn, net.initial, man.leader_set, trials=5, steps=2000,
                            caps=ExploreCaps(), allow_neutral=True)
    assert v.holds


def test_manifest_designates_species():
    net, _ = _compiled("move_two")
    man = net.manifest
    assert man.designated == {"leader": "L", "output": "Y", "halt": "H"}
    assert man.registers["y"] == ("Y", "y.I")
    assert man.states[0] == "S0"
    assert "register a" in man.species_map()
    doc = man.to_document()
    assert doc["bounds"]["a"]["value"] == 2


def test_conservation_detects_a_lost_token():
    net, _ = _compiled("move_two")
    man = net.manifest
    assert man.conservation_ok({"L": 1})
    assert man.conservation_ok({"S2": 1, "a.A": 2, "y.I": 1, "Y": 1})
    assert not man.conservation_ok({"S2": 1, "a.A": 1, "y.I": 2})


def test_too_small_bound_never_halts():
    prog = parse_rm("# output y\n0: inc y -> 1\n1: inc y -> 2\n2: inc y -> 3\n3: halt\n")
    net = compile_rm(prog, BoundSpec.ladder(1))
    v = haltingly_computes(net.crn, net.initial, "Y", "H", 3)
    assert v.fails and "never produced" in v.reason


def test_missing_bound_is_rejected():
    prog = parse_rm("# output y\n0: inc a -> 1\n1: inc y -> 2\n2: halt\n")
    with pytest.raises(UnboundedRegister):
        compile_rm(prog, {"y": BoundSpec.ladder(1)})


def test_dexp_mode_program():
    asm = Assembler()
    for _ in range(3):
        asm.inc("r")
    asm.label("loop")
    asm.dec("r", None, "done")
    asm.inc("y", "loop")
    asm.label("done")
    asm.halt()
    prog = asm.build("y", ["r", "y"])
    net = compile_rm(prog, {"r": BoundSpec.dexp(1), "y": BoundSpec.ladder(2)})
    man = net.manifest
    assert man.counter_mode == "dexp+ladder"
    v = haltingly_computes(net.crn, net.initial, "Y", "H", 3, ExploreCaps(max_configs=500_000))
    assert v.holds


def test_guessing_zero_test_is_wrong():
    # the zero branch fires without checking the register: a known-bad design
    crn = parse_text("L -> S0 + r.A\nS0 + r.A -> S1\nS0 -> S2\nS1 -> H\nS2 -> H + Y\n")
    v = haltingly_computes(crn, {"L": 1}, "Y", "H", 0)
    assert v.fails


# -- token pools -----------------------------------------------------------------------------


def test_token_pools_of_a_compiled_network():
    net, _ = _compiled("move_two")
    pools = token_pools(net.crn, net.manifest.leader_set, ["Y", "H"])
    by_name = {p.name: p for p in pools}
    assert "[a.I]" in by_name
    a = by_name["[a.I]"]
    assert a.ladder == ("a.I", "a.C1")
    assert a.feeders == ("a.A1",)
    assert a.weights == {"a.I": 1, "a.C1": 2, "a.A1": 2}


def test_non_conversion_reaction_is_not_lumpable():
    crn = parse_text("L -> L2\nA + B -> C\n")
    with pytest.raises(NotLumpable):
        token_pools(crn, ["L", "L2"])


def test_leader_consuming_a_feeder_is_not_lumpable():
    crn = parse_text("A -> 2 I\n2 I <-> C\nL + A -> M\n")
    with pytest.raises(NotLumpable):
        token_pools(crn, ["L", "M"])


def test_observed_species_in_a_pool_is_not_lumpable():
    crn = parse_text("2 Y <-> C\nL -> M + Y\n")
    with pytest.raises(NotLumpable):
        token_pools(crn, ["L", "M"], observed=["Y"])
