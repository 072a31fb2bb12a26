"""Command-line front end: ``crnsize compile|sim|verify|cover|dexp|report``."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .analysis import (
    ExploreCaps,
    RunSummary,
    coverability,
    haltingly_computes,
    simulate,
    stably_computes,
    stochastic_halting_check,
)
from .crn import Configuration, CrnError, read_crn, write_crn
from .dexp import MetaReactionSpec, expand
from .encoders import (
    DIRECT,
    TM_PIPELINE,
    EncodeOptions,
    compile_binary,
    compile_permutation,
    compile_program,
    format_report,
    ks_upper_bound,
)
from .machines import MachineError, StepCap, TuringMachine, parse_rm
from .rm_compiler import BoundTooSmall

EXIT_OK, EXIT_FAILS, EXIT_TRUNCATED, EXIT_USAGE = 0, 1, 2, 64
_STATUS_EXIT = {"Holds": EXIT_OK, "Fails": EXIT_FAILS, "Truncated": EXIT_TRUNCATED}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _header(out, seed=None) -> None:
    print(f"crnsize {__version__}  seed {'none' if seed is None else seed}", file=out)


def _write_network(path: str, crn, designated: dict, manifest: dict | None = None) -> None:
    p = Path(path)
    extra = {}
    if manifest is not None:
        extra["manifest"] = manifest
    if p.suffix == ".json":
        write_crn(p, crn, designated, **extra)
    else:
        write_crn(p, crn)
        side = p.with_name(p.name + ".manifest.json")
        side.write_text(json.dumps({"designated": designated, **extra}, indent=2) + "\n")


def _read_network(path: str):
    p = Path(path)
    if not p.exists():
        raise UsageError(f"no such file: {path}")
    crn, designated = read_crn(p)
    manifest = {}
    if p.suffix == ".json":
        manifest = json.loads(p.read_text()).get("manifest") or {}
    else:
        side = p.with_name(p.name + ".manifest.json")
        if side.exists():
            doc = json.loads(side.read_text())
            designated = doc.get("designated") or {}
            manifest = doc.get("manifest") or {}
    return crn, designated, manifest


def _load_machine(path: str):
    p = Path(path)
    if not p.exists():
        raise UsageError(f"no such file: {path}")
    if p.suffix == ".json":
        return TuringMachine.from_document(json.loads(p.read_text()))
    return parse_rm(p.read_text())


def _options(args) -> EncodeOptions:
    return EncodeOptions(k_override=args.k, counter_mode=args.counter,
                         step3_backend=args.backend)


# -- subcommands ---------------------------------------------------------------------------


def cmd_compile(args, out) -> int:
    _header(out)
    if args.method == "binary":
        net = compile_binary(args.x)
    elif args.method == "perm":
        net = compile_permutation(args.x, _options(args))
    else:
        if not args.machine:
            raise UsageError("compile --method program needs --machine FILE")
        net = compile_program(_load_machine(args.machine), args.x, _options(args))
    man = net.manifest
    _write_network(args.o, net.crn, man.designated, man.to_document())
    print(f"wrote {args.o}: {len(net.crn)} reactions, {len(net.crn.species)} species", file=out)
    out.write(man.species_map())
    for note in man.notes:
        print(f"note: {note}", file=out)
    return EXIT_OK


def cmd_sim(args, out) -> int:
    _header(out, args.seed)
    crn, designated, manifest = _read_network(args.file)
    init = Configuration.parse(args.init)
    leaders = manifest.get("leader_set") if args.scheduler == "leader" else None
    if args.scheduler == "leader" and not leaders:
        raise UsageError("the leader scheduler needs a network with a leader_set manifest")
    res = simulate(crn, init, seed=args.seed, max_steps=args.max_steps, stop_on=args.stop_on,
                   scheduler=args.scheduler, leaders=leaders, full_batch=args.full_batch)
    print(f"reason {res.reason}  steps {res.steps}  firings {res.firings}", file=out)
    print(f"final {res.final}", file=out)
    return EXIT_OK


def _stochastic_chunk(job):
    crn, init, output, halt, x, runs, seed, max_steps, leaders, full_batch = job
    return stochastic_halting_check(crn, init, output, halt, x, runs=runs, seed=seed,
                                    max_steps=max_steps, leaders=leaders, full_batch=full_batch)


def _stable_runs(crn, init, output, x, runs, seed, max_steps) -> RunSummary:
    """Uniform runs to a dead configuration; the output must equal x there."""
    summary = RunSummary(runs, 0)
    for i in range(runs):
        res = simulate(crn, init, seed=seed + i, max_steps=max_steps)
        y = res.final.get(output, 0)
        if res.reason == "deadlock" and y == x:
            summary.ok += 1
        else:
            summary.failures.append({"seed": seed + i, "reason": res.reason, "output": y})
    return summary


def cmd_verify(args, out) -> int:
    _header(out, args.seed)
    crn, designated, manifest = _read_network(args.file)
    output = args.output or designated.get("output") or "Y"
    halt = args.halt or designated.get("halt")
    leader = designated.get("leader")
    init = Configuration.parse(args.init) if args.init else ({leader: 1} if leader else None)
    if not init:
        raise UsageError("no initial configuration: pass --init or use a network with a leader")
    if args.mode == "exhaustive":
        caps = ExploreCaps(max_configs=args.max_configs)
        if halt:
            v = haltingly_computes(crn, init, output, halt, args.x, caps)
        else:
            v = stably_computes(crn, init, output, args.x, caps)
        print(f"{v.status}  {json.dumps(v.stats, sort_keys=True)}", file=out)
        if v.reason:
            print(v.reason, file=out)
        return _STATUS_EXIT[v.status]
    if not halt:
        summary = _stable_runs(crn, init, output, args.x, args.trials, args.seed, args.max_steps)
    else:
        leaders = manifest.get("leader_set") or None
        jobs = max(1, min(args.jobs, args.trials))
        sizes = [args.trials // jobs + (i < args.trials % jobs) for i in range(jobs)]
        starts = [args.seed + sum(sizes[:i]) for i in range(jobs)]
        work = [(crn, init, output, halt, args.x, n, s, args.max_steps, leaders, args.full_batch)
                for n, s in zip(sizes, starts) if n]
        if jobs == 1:
            parts = [_stochastic_chunk(w) for w in work]
        else:
            with ProcessPoolExecutor(jobs) as pool:
                parts = list(pool.map(_stochastic_chunk, work))
        summary = RunSummary(args.trials, sum(p.ok for p in parts))
        for p in parts:
            summary.failures.extend(p.failures)
        summary.failures.sort(key=lambda f: f["seed"])
        done = [p for p in parts if p.runs]
        summary.firings_min = min(p.firings_min for p in done)
        summary.firings_max = max(p.firings_max for p in done)
    print(f"{summary.ok}/{summary.runs} runs ok", file=out)
    for f in summary.failures[:5]:
        print(f"  seed {f['seed']}: {f['reason']}, {output}={f['output']}", file=out)
    if summary.all_ok:
        return EXIT_OK
    return EXIT_TRUNCATED if all(f["reason"] == "step_cap" for f in summary.failures) else EXIT_FAILS


def cmd_cover(args, out) -> int:
    _header(out)
    crn, _, _ = _read_network(args.file)
    v = coverability(crn, Configuration.parse(args.init), Configuration.parse(args.target),
                     ExploreCaps(max_configs=args.max_configs))
    print(f"{v.status}  {json.dumps(v.stats, sort_keys=True)}", file=out)
    if v.holds:
        for j, c in v.witness:
            print(f"  {crn.reactions[j]}  =>  {c}", file=out)
    elif v.reason:
        print(v.reason, file=out)
    return _STATUS_EXIT[v.status]


def cmd_dexp(args, out) -> int:
    _header(out)
    frag = expand(MetaReactionSpec(args.layer, args.index))
    designated = {"leader": frag.s_species, "output": frag.x_species, "halt": frag.h_species}
    text = "".join(f"{r}\n" for r in frag.crn)
    if args.o:
        _write_network(args.o, frag.crn, designated, frag.manifest())
        print(f"wrote {args.o}: {len(frag.crn)} reactions", file=out)
    else:
        out.write(text)
    print(f"start {frag.s_species}  done {frag.h_species}  counts {frag.x_species} "
          f"x{frag.expected_count}", file=out)
    return EXIT_OK


def cmd_report(args, out) -> int:
    _header(out)
    methods = [m.strip() for part in args.methods for m in part.split(",") if m.strip()]
    report = ks_upper_bound(args.x, methods, _options(args))
    if args.json:
        print(json.dumps(report, indent=2), file=out)
    else:
        out.write(format_report(report))
    return EXIT_OK


# -- parser ------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="crnsize", description="Small chemical reaction networks that compute integers.")
    p.add_argument("--version", action="version", version=f"crnsize {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def encode_flags(sp):
        sp.add_argument("--k", type=int, default=None, help="permutation length override")
        sp.add_argument("--counter", default="ladder",
                        help="ladder, dexp, or a uniform bound ladder:N / dexp:K")
        sp.add_argument("--backend", choices=(DIRECT, TM_PIPELINE), default=DIRECT,
                        help="rank decoder back end")

    c = sub.add_parser("compile", help="build a network computing an integer")
    c.add_argument("--method", choices=("binary", "perm", "program"), required=True)
    c.add_argument("--x", type=int, required=True, help="target value (program input for --method program)")
    c.add_argument("--machine", help="register machine text file or Turing machine .json")
    c.add_argument("-o", required=True, metavar="OUT")
    encode_flags(c)
    c.set_defaults(func=cmd_compile)

    s = sub.add_parser("sim", help="seeded simulation")
    s.add_argument("file")
    s.add_argument("--init", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-steps", type=int, default=1_000_000)
    s.add_argument("--stop-on")
    s.add_argument("--scheduler", choices=("uniform", "batch", "leader"), default="uniform")
    s.add_argument("--full-batch", type=float, default=0.5,
                   help="leader scheduler: chance of firing a repeatable step the maximal number of times")
    s.set_defaults(func=cmd_sim)

    v = sub.add_parser("verify", help="check that a network computes x")
    v.add_argument("file")
    v.add_argument("--x", type=int, required=True)
    v.add_argument("--output")
    v.add_argument("--halt")
    v.add_argument("--init")
    v.add_argument("--mode", choices=("exhaustive", "stochastic"), default="exhaustive")
    v.add_argument("--trials", type=int, default=200)
    v.add_argument("--max-configs", type=int, default=200_000)
    v.add_argument("--max-steps", type=int, default=10**7)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--jobs", type=int, default=1)
    v.add_argument("--full-batch", type=float, default=0.5,
                   help="leader scheduler: chance of firing a repeatable step the maximal number of times")
    v.set_defaults(func=cmd_verify)

    cv = sub.add_parser("cover", help="coverability of a target configuration")
    cv.add_argument("file")
    cv.add_argument("--init", required=True)
    cv.add_argument("--target", required=True)
    cv.add_argument("--max-configs", type=int, default=200_000)
    cv.set_defaults(func=cmd_cover)

    d = sub.add_parser("dexp", help="emit a doubly exponential counter fragment")
    d.add_argument("--layer", type=int, required=True)
    d.add_argument("--index", type=int, choices=(1, 2, 3, 4), default=1)
    d.add_argument("-o", metavar="OUT")
    d.set_defaults(func=cmd_dexp)

    r = sub.add_parser("report", help="reaction counts of each construction")
    r.add_argument("--x", type=int, required=True)
    r.add_argument("--methods", nargs="+", default=["binary,permutation"])
    r.add_argument("--json", action="store_true")
    encode_flags(r)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            raise UsageError(parser.format_usage().strip())
        return args.func(args, out)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except (BoundTooSmall, StepCap) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_TRUNCATED
    except (ValueError, CrnError, MachineError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
