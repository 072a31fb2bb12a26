"""Acceptance suite: one PASS/FAIL line per criterion (see the summary section of the run)."""

import itertools
import math
import random
from math import factorial

import pytest

from crnsize.analysis import (
    ExploreCaps,
    Net,
    coverability,
    leader_arity_violations,
    lumped_haltingly_computes,
    reachable,
    replay,
    simulate,
    stably_computes,
    stochastic_halting_check,
    haltingly_computes,
    well_led_invariance,
)
from crnsize.crn import Configuration, Crn, Reaction
from crnsize.dexp import consumption_fragment, counter_value, production_fragment
from crnsize.encoders import EncodeOptions, compile_binary, compile_permutation, compile_program
from crnsize.machines import (
    Assembler,
    TuringMachine,
    encode_counts_to_m,
    lehmer_rank,
    lehmer_unrank,
    lower_copies,
    parse_rm,
    run_rm,
    run_tm,
    binary_word,
)
from crnsize.rm_compiler import BoundSpec, compile_rm
from rm_corpus import EXPECTED, corpus

pytestmark = pytest.mark.acceptance

# oracle run length above which the permutation networks are checked by seeded runs
LUMPED_STEP_LIMIT = 150_000


# -- 1 -------------------------------------------------------------------------------------------


def test_counter_exactness(criterion):
    details, ok = [], True
    for k in (0, 1):
        f = production_fragment(k)
        g = reachable(f.crn, {f.s_species: 1})
        done = [c for c in g.configurations() if c[f.h_species]]
        good = bool(done) and all(c.to_dict() == {f.h_species: 1, f.x_species: counter_value(k)}
                                  for c in done)
        ok &= good
        details.append(f"k={k} exhaustive {len(g)} configs {'exact' if good else 'WRONG'}")
    for k in (2, 3):
        f = production_fragment(k)
        want = {f.h_species: 1, f.x_species: counter_value(k)}
        bad = 0
        for seed in range(1000):
            res = simulate(f.crn, {f.s_species: 1}, seed=seed, max_steps=10**7, stop_on=f.h_species,
                           scheduler="leader", leaders=f.leader_set)
            bad += res.reason != "stop" or res.final.to_dict() != want
        ok &= bad == 0
        details.append(f"k={k} {1000 - bad}/1000 runs give {counter_value(k)}")
    assert criterion(1, "counter exactness", ok, "; ".join(details))


# -- 2 -------------------------------------------------------------------------------------------


def test_start_and_end_configurations_are_unique(criterion):
    checked, errors = 0, []
    for k in (0, 1):
        c = counter_value(k)
        for n in (0, 1, 3):
            for f, s, h in (
                (production_fragment(k), n, n + c),
                (consumption_fragment(k), n + c, n),
            ):
                start = Configuration({f.s_species: 1, f.x_species: s})
                end = Configuration({f.h_species: 1, f.x_species: h})
                for conf in reachable(f.crn, start).configurations():
                    checked += 1
                    if conf[f.s_species] and conf != start:
                        errors.append((f.s_species, n, conf))
                    if conf[f.h_species] and conf != end:
                        errors.append((f.h_species, n, conf))
    assert criterion(2, "start/end structure", not errors,
                     f"{checked} reachable configurations, {len(errors)} counterexamples")


# -- 3 -------------------------------------------------------------------------------------------


def test_dexp_fragments_are_well_led(criterion):
    reactions, static_bad, sampled, violations = 0, 0, 0, 0
    for k in range(4):
        for f, extra in ((production_fragment(k), 0), (consumption_fragment(k), counter_value(k))):
            reactions += len(f.crn)
            static_bad += len(leader_arity_violations(f.crn, f.leader_set))
            init = {f.s_species: 1, f.x_species: extra}
            v = well_led_invariance(f.crn, init, f.leader_set, trials=10, steps=10_000, seed=k)
            sampled_here = v.stats.get("sampled_steps", 0)
            sampled += sampled_here
            violations += (not v.holds) + (sampled_here < 10**5)
    ok = static_bad == 0 and violations == 0
    assert criterion(3, "well-led dexp fragments", ok,
                     f"{reactions - static_bad}/{reactions} reactions pass the arity check; "
                     f"{sampled} sampled steps over 8 fragments, {violations} violations")


# -- 4 -------------------------------------------------------------------------------------------


def test_binary_baseline(criterion):
    wrong_size, wrong_value = [], []
    for x in range(1, 2049):
        net = compile_binary(x)
        if len(net.crn) != x.bit_length():
            wrong_size.append(x)
        if x <= 64:
            if not stably_computes(net.crn, net.initial, "Y", x).holds:
                wrong_value.append(x)
            continue
        for seed in range(50):
            res = simulate(net.crn, net.initial, seed=seed, scheduler="batch", max_steps=10**6)
            if res.reason != "deadlock" or res.final.get("Y", 0) != x:
                wrong_value.append(x)
                break
    ok = not wrong_size and not wrong_value
    assert criterion(4, "binary baseline", ok,
                     f"x=1..2048: {len(wrong_size)} size mismatches, {len(wrong_value)} value "
                     f"failures (exhaustive x<=64, 50 batched seeded runs above)")


# -- 5 -------------------------------------------------------------------------------------------


def test_lehmer_codec(criterion):
    cases, failures = 0, 0
    for k in range(1, 8):
        for r, perm in enumerate(itertools.permutations(range(1, k + 1))):
            cases += 1
            failures += lehmer_rank(perm) != r or lehmer_unrank(r, k) != perm
    example = lehmer_unrank(lehmer_rank((2, 4, 3, 1)), 4) == (2, 4, 3, 1)
    ok = cases == 5913 and failures == 0 and example
    assert criterion(5, "Lehmer codec", ok,
                     f"{cases} permutations, {failures} failures, (2,4,3,1) round-trips: {example}")


# -- 6 -------------------------------------------------------------------------------------------


def test_count_encoding_stage(criterion):
    oracle = encode_counts_to_m((3, 1, 2))
    x = lehmer_rank((3, 1, 2))
    net = compile_permutation(x)
    man = net.manifest
    active = man.registers["I"][0]
    seen = set()
    for seed in range(5):
        res = simulate(net.crn, net.initial, seed=seed, max_steps=10**7, stop_on=man.labels["step3"],
                       scheduler="leader", leaders=man.leader_set)
        seen.add(res.final.get(active, 0) if res.reason == "stop" else None)
    ok = oracle == 0b11101011 and seen == {0b11101011}
    assert criterion(6, "count encoding stage", ok,
                     f"oracle {bin(oracle)}; CRN I at stage boundary {sorted(map(str, seen))}")


# -- 7 -------------------------------------------------------------------------------------------


def _compile_corpus_program(prog):
    low = lower_copies(prog)
    run = run_rm(low)
    bounds = {r: BoundSpec.at_least(max(v, 1)) for r, v in run.max_regs.items()}
    return compile_rm(low, bounds), run.output


def _conserved_along(net, path) -> bool:
    man = net.manifest
    n = Net(net.crn, net.initial.keys())
    x = n.vector(net.initial)
    for j in path:
        for s, d in n.delta[j]:
            x[s] += d
        if not man.conservation_ok(n.config(x)):
            return False
    return True


def test_register_machine_equivalence(criterion):
    programs = corpus()
    compiled = {name: _compile_corpus_program(p) for name, p in programs.items()}
    assert all(compiled[n][1] == EXPECTED[n] for n in programs)
    order = sorted(programs, key=lambda n: len(compiled[n][0].crn))
    max_bound = max(b.value for net, _ in compiled.values() for b in net.manifest.bounds.values())
    mismatches, conservation_bad, lines = [], 0, []
    for name in order[:4]:
        net, want = compiled[name]
        g = reachable(net.crn, net.initial)
        v = haltingly_computes(net.crn, net.initial, "Y", "H", want)
        conservation_bad += sum(not net.manifest.conservation_ok(c) for c in g.configurations())
        if not v.holds:
            mismatches.append(name)
        lines.append(f"{name}:{v.status}")
    for name in order[4:]:
        net, want = compiled[name]
        man = net.manifest
        bad = 0
        for seed in range(200):
            res = simulate(net.crn, net.initial, seed=seed, max_steps=10**6, stop_on="H",
                           scheduler="leader", leaders=man.leader_set, record=True)
            if res.reason != "stop" or res.final.get("Y", 0) != want:
                bad += 1
            elif not _conserved_along(net, res.path):
                conservation_bad += 1
        if bad:
            mismatches.append(name)
        lines.append(f"{name}:{200 - bad}/200")
    ok = not mismatches and conservation_bad == 0 and max_bound <= 2**8
    assert criterion(7, "register machine equivalence", ok,
                     f"{', '.join(lines)}; conservation violations {conservation_bad}; "
                     f"largest bound {max_bound}")


# -- 8 -------------------------------------------------------------------------------------------


def _zero_test_program(v: int):
    asm = Assembler()
    for _ in range(v):
        asm.inc("r")
    asm.label("test")
    asm.dec("r", "nonzero", "zero")
    asm.label("nonzero")
    asm.halt()
    asm.label("zero")
    asm.inc("o")
    asm.halt()
    return asm.build("o", registers=["r", "o"]), asm.address("zero")


def test_zero_check_soundness(criterion):
    errors, cases = [], 0
    for spec in (BoundSpec.ladder(2), BoundSpec.ladder(3), BoundSpec.dexp(0), BoundSpec.dexp(1)):
        b = spec.value
        for v in range(b + 1):
            prog, zero = _zero_test_program(v)
            net = compile_rm(prog, {"r": spec, "o": BoundSpec.ladder(1)})
            target = {net.manifest.states[zero]: 1}
            verdict = coverability(net.crn, net.initial, target)
            cases += 1
            if verdict.truncated or verdict.holds != (v == 0):
                errors.append((spec.mode, b, v, verdict.status))
    assert criterion(8, "zero-check soundness", not errors,
                     f"{cases} (bound, value) cases for ladder 4/8 and dexp 2/4, {len(errors)} errors")


# -- 9 -------------------------------------------------------------------------------------------


def test_permutation_pipeline_end_to_end(criterion):
    exhaustive, sampled, failures = 0, 0, []
    for x in range(41):
        net = compile_permutation(x)
        man = net.manifest
        if man.extra["oracle_steps"] <= LUMPED_STEP_LIMIT:
            v = lumped_haltingly_computes(net.crn, net.initial, "Y", "H", x, man.leader_set,
                                          ExploreCaps(max_configs=4 * LUMPED_STEP_LIMIT))
            if v.holds:
                exhaustive += 1
                continue
            if v.fails:
                failures.append((x, v.reason))
                continue
        summary = stochastic_halting_check(net.crn, net.initial, "Y", "H", x, runs=200, seed=x,
                                           max_steps=10**7, leaders=man.leader_set, full_batch=0.9)
        sampled += 1
        if not summary.all_ok:
            failures.append((x, summary.failures[:2]))
    assert criterion(9, "permutation pipeline x=0..40", not failures,
                     f"{exhaustive} verified on the token-pool quotient, {sampled} by 200/200 "
                     f"seeded runs, failures {failures}")


# -- 10 ------------------------------------------------------------------------------------------

DOUBLE = parse_rm("# output y\n0: dec x -> 1 / 3\n1: inc y -> 2\n2: inc y -> 0\n3: halt\n")

SUCCESSOR = TuringMachine(
    ("q0", "q1", "halt"), ("_", "0", "1"), "_",
    {("q0", "1"): ("q0", "0", "L"), ("q0", "0"): ("q1", "1", "R"), ("q0", "_"): ("q1", "1", "R"),
     ("q1", "0"): ("q1", "0", "R"), ("q1", "1"): ("q1", "1", "R"), ("q1", "_"): ("halt", "_", "L")},
    "q0", "halt",
)


def test_program_composition(criterion):
    lines, ok = [], True
    for label, machine, p, oracle in (
        ("doubling RM", DOUBLE, 3, run_rm(DOUBLE, {"x": 3}).output),
        ("successor TM", SUCCESSOR, 5, run_tm(SUCCESSOR, binary_word(5)).output),
    ):
        net = compile_program(machine, p)
        man = net.manifest
        v = lumped_haltingly_computes(net.crn, net.initial, "Y", "H", oracle, man.leader_set,
                                      ExploreCaps(max_configs=10**6))
        runs = stochastic_halting_check(net.crn, net.initial, "Y", "H", oracle, runs=200,
                                        leaders=man.leader_set, max_steps=10**7)
        largest = max(b.value for b in man.bounds.values())
        good = oracle == 6 and v.holds and runs.all_ok
        ok &= good
        lines.append(f"{label} p={p}: oracle {oracle}, verifier {v.status} "
                     f"({v.stats.get('configs')} lumped configs, bounds <= {largest}), "
                     f"{runs.ok}/200 runs end in 1 H + {oracle} Y")
    assert criterion(10, "program composition", ok, "; ".join(lines))


# -- 11 ------------------------------------------------------------------------------------------


def _random_crn(rng: random.Random, species):
    reactions = []
    while len(reactions) < rng.randint(1, 5):
        k_in = rng.randint(1, 3)
        k_out = rng.randint(0, k_in)
        lhs, rhs = {}, {}
        for _ in range(k_in):
            s = rng.choice(species)
            lhs[s] = lhs.get(s, 0) + 1
        for _ in range(k_out):
            s = rng.choice(species)
            rhs[s] = rhs.get(s, 0) + 1
        if lhs == rhs:
            continue
        reactions.append(Reaction(lhs, rhs))
    return Crn(reactions, species)


def _closure(crn, init):
    """Naive fixpoint of the successor relation over plain dicts."""
    seen = {tuple(sorted(init.items()))}
    changed = True
    while changed:
        changed = False
        for key in list(seen):
            c = dict(key)
            for r in crn:
                if all(c.get(s, 0) >= n for s, n in r.reactants):
                    d = dict(c)
                    for s, n in r.delta().items():
                        d[s] = d.get(s, 0) + n
                    k = tuple(sorted((s, n) for s, n in d.items() if n))
                    if k not in seen:
                        seen.add(k)
                        changed = True
    return [dict(k) for k in seen]


def test_coverability_against_closure(criterion):
    rng = random.Random(11)
    agree, holds = 0, 0
    for _ in range(100):
        species = [f"A{i}" for i in range(rng.randint(1, 4))]
        crn = _random_crn(rng, species)
        init = {s: rng.randint(0, 6) for s in species}
        target = {s: rng.randint(0, 3) for s in rng.sample(species, rng.randint(1, len(species)))}
        expected = any(all(c.get(s, 0) >= n for s, n in target.items()) for c in _closure(crn, init))
        v = coverability(crn, init, target)
        same = not v.truncated and v.holds == expected
        if v.holds:
            holds += 1
            same &= replay(crn, init, [j for j, _ in v.witness]).covers(target)
        agree += same
    assert criterion(11, "coverability vs closure oracle", agree == 100,
                     f"{agree}/100 random networks agree ({holds} coverable)")


# -- 12 ------------------------------------------------------------------------------------------


def test_size_scaling(criterion):
    rng = random.Random(12)
    rows = []
    for n in (8, 16, 32, 64):
        for x in ((1 << n) - 1, (1 << (n - 1)) | rng.getrandbits(n - 1)):
            net = compile_permutation(x, EncodeOptions(counter_mode="dexp"))
            rows.append((n, x, len(net.crn), len(net.crn) / (n / math.log2(n))))
    c = max(r[3] for r in rows)
    by_n = {n: max(r[3] for r in rows if r[0] == n) for n in (8, 16, 32, 64)}
    ok = all(r[2] <= c * r[0] / math.log2(r[0]) for r in rows) and by_n[64] <= by_n[8]
    sizes = ", ".join(f"n={n}:{max(r[2] for r in rows if r[0] == n)}" for n in (8, 16, 32, 64))
    assert criterion(12, "size scaling", ok,
                     f"reactions {sizes}; c = {c:.1f}; ratio by n "
                     + ", ".join(f"{n}:{v:.1f}" for n, v in by_n.items()))
