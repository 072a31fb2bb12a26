"""Simulation and verification of discrete CRNs.

Exhaustive checks work on the explicit reachability graph and report
``Truncated`` whenever a cap is hit. Stochastic runs use a seeded
scheduler and are fully reproducible.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .crn import Configuration, Crn, CrnError, Reaction

HOLDS = "Holds"
FAILS = "Fails"
TRUNCATED = "Truncated"


class NotWellLed(CrnError, ValueError):
    pass


@dataclass(frozen=True)
class ExploreCaps:
    max_configs: int = 200_000
    max_total_count: int = 10**9
    max_depth: int = 10**9

    def __post_init__(self):
        for name in ("max_configs", "max_total_count", "max_depth"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class Verdict:
    status: str
    witness: object = None
    stats: dict = field(default_factory=dict)
    reason: str = ""

    @property
    def holds(self) -> bool:
        return self.status == HOLDS

    @property
    def fails(self) -> bool:
        return self.status == FAILS

    @property
    def truncated(self) -> bool:
        return self.status == TRUNCATED

    def __bool__(self) -> bool:
        return self.holds

    def to_document(self) -> dict:
        w = self.witness
        if isinstance(w, Configuration):
            w = w.to_dict()
        elif isinstance(w, list):
            w = [[i, c.to_dict()] if isinstance(c, Configuration) else [i, c] for i, c in w]
        elif isinstance(w, Reaction):
            w = str(w)
        return {"status": self.status, "reason": self.reason, "witness": w, "stats": dict(self.stats)}


def _combine(*verdicts: Verdict) -> Verdict:
    """Conjunction: first Fails wins, else any Truncated, else Holds."""
    stats: dict = {}
    for v in verdicts:
        stats.update(v.stats)
    for v in verdicts:
        if v.fails:
            return Verdict(FAILS, v.witness, stats, v.reason)
    for v in verdicts:
        if v.truncated:
            return Verdict(TRUNCATED, v.witness, stats, v.reason)
    return Verdict(HOLDS, None, stats)


# -- indexed network ---------------------------------------------------------------------


class Net:
    """Integer-indexed view of a Crn used by the search and simulation loops."""

    def __init__(self, crn: Crn, extra_species: Iterable[str] = ()):
        self.crn = crn
        names = list(dict.fromkeys([*crn.species, *extra_species]))
        self.names = names
        self.index = {s: i for i, s in enumerate(names)}
        self.req: list[tuple[tuple[int, int], ...]] = []
        self.delta: list[tuple[tuple[int, int], ...]] = []
        for r in crn.reactions:
            self.req.append(tuple((self.index[s], c) for s, c in r.reactants))
            self.delta.append(tuple((self.index[s], d) for s, d in r.delta().items()))
        self.consumers: list[list[int]] = [[] for _ in names]
        for j, req in enumerate(self.req):
            for s, _ in req:
                self.consumers[s].append(j)
        self.touch: list[list[int]] = [[] for _ in crn.reactions]
        for j, dl in enumerate(self.delta):
            seen: dict[int, None] = {}
            for s, _ in dl:
                for r in self.consumers[s]:
                    seen[r] = None
            self.touch[j] = list(seen)
        pos = {r: j for j, r in enumerate(crn.reactions)}
        self.reverse_of = [pos.get(_try_reverse(r), -1) for r in crn.reactions]
        # a reaction declared after its own reverse counts as a backward step
        self.backward = [0 <= self.reverse_of[j] < j for j in range(len(crn.reactions))]

    def vector(self, c: Mapping[str, int]) -> list[int]:
        x = [0] * len(self.names)
        for s, v in c.items():
            if s not in self.index:
                if v:
                    raise CrnError(f"species {s} not in network")
                continue
            x[self.index[s]] = int(v)
        return x

    def config(self, x: Sequence[int]) -> Configuration:
        return Configuration({self.names[i]: v for i, v in enumerate(x) if v})

    def key(self, x: Sequence[int]) -> tuple:
        return tuple((i, v) for i, v in enumerate(x) if v)

    def from_key(self, k: tuple) -> list[int]:
        x = [0] * len(self.names)
        for i, v in k:
            x[i] = v
        return x

    def key_config(self, k: tuple) -> Configuration:
        return Configuration({self.names[i]: v for i, v in k})

    def enabled_in(self, x: Sequence[int], j: int) -> bool:
        return all(x[s] >= c for s, c in self.req[j])

    def successors(self, k: tuple):
        """(reaction index, successor key) for each enabled reaction, declaration order."""
        present = dict(k)
        cand: set[int] = set()
        for s in present:
            cand.update(self.consumers[s])
        for j in sorted(cand):
            if all(present.get(s, 0) >= c for s, c in self.req[j]):
                nxt = dict(present)
                for s, d in self.delta[j]:
                    v = nxt.get(s, 0) + d
                    if v:
                        nxt[s] = v
                    else:
                        nxt.pop(s, None)
                yield j, tuple(sorted(nxt.items()))


def _try_reverse(r: Reaction):
    try:
        return r.reverse()
    except CrnError:
        return None


class _View(Mapping):
    """Read-only name->count view over a count vector."""

    def __init__(self, net: Net, x: list[int]):
        self._net, self._x = net, x

    def __getitem__(self, name):
        i = self._net.index.get(name)
        return 0 if i is None else self._x[i]

    def __iter__(self):
        return (s for s, v in zip(self._net.names, self._x) if v)

    def __len__(self):
        return sum(1 for v in self._x if v)


# -- simulation ----------------------------------------------------------------------------


@dataclass
class SimResult:
    final: Configuration
    steps: int
    reason: str
    firings: int = 0
    path: list | None = None

    def to_document(self) -> dict:
        return {"final": self.final.to_dict(), "steps": self.steps, "reason": self.reason,
                "firings": self.firings}


def simulate(
    crn: Crn,
    init: Mapping[str, int],
    seed: int = 0,
    max_steps: int = 1_000_000,
    stop: Callable[[Mapping[str, int]], bool] | None = None,
    *,
    stop_on: str | None = None,
    scheduler: str = "uniform",
    leaders: Iterable[str] | None = None,
    record: bool = False,
    full_batch: float = 0.5,
) -> SimResult:
    """Seeded run of ``crn`` from ``init``.

    ``scheduler="uniform"`` picks a uniformly random enabled reaction per step;
    ``scheduler="batch"`` does the same but fires it a uniformly random number
    of times in a row, up to as many as stay applicable.
    ``scheduler="leader"`` needs the leader species and follows the single
    leader (see :class:`LeaderScheduler`); its steps are macro steps, each a
    valid sequence of single firings, and ``firings`` counts the latter.
    ``stop_on`` stops as soon as that species is present. ``record`` keeps the
    fired reaction indices (one entry per single firing).
    """
    net = Net(crn, init.keys())
    x = net.vector(init)
    rng = random.Random(seed)
    stop_idx = net.index.get(stop_on) if stop_on is not None else None
    view = _View(net, x)

    def stopped() -> bool:
        if stop_idx is not None and x[stop_idx] > 0:
            return True
        return stop is not None and bool(stop(view))

    if scheduler in ("uniform", "batch"):
        return _run_uniform(net, x, rng, max_steps, stopped, record, scheduler == "batch")
    if scheduler == "leader":
        if leaders is None:
            raise ValueError("the leader scheduler needs the leader species")
        sched = LeaderScheduler(net, leaders, rng, full_batch, record)
        return sched.run(x, max_steps, stopped)
    raise ValueError(f"unknown scheduler {scheduler!r}")


class _EnabledSet:
    """Enabled reactions, updated incrementally; supports uniform choice."""

    def __init__(self, net: Net, x: list[int]):
        self.net, self.x = net, x
        self.items: list[int] = []
        self.pos: dict[int, int] = {}
        for j in range(len(net.req)):
            if net.enabled_in(x, j):
                self._add(j)

    def _add(self, j):
        self.pos[j] = len(self.items)
        self.items.append(j)

    def _remove(self, j):
        i = self.pos.pop(j)
        last = self.items.pop()
        if last != j:
            self.items[i] = last
            self.pos[last] = i

    def refresh(self, fired: int) -> None:
        net, x = self.net, self.x
        for j in net.touch[fired]:
            on = all(x[s] >= c for s, c in net.req[j])
            if on and j not in self.pos:
                self._add(j)
            elif not on and j in self.pos:
                self._remove(j)

    def choice(self, rng: random.Random) -> int:
        return self.items[rng.randrange(len(self.items))]


def _repeat_limit(net: Net, x: Sequence[int], j: int) -> int:
    """How many times in a row reaction j can fire from x (1 when it never runs out)."""
    delta = dict(net.delta[j])
    t = None
    for s, c in net.req[j]:
        d = delta.get(s, 0)
        if d < 0:
            v = (x[s] - c) // (-d) + 1
            t = v if t is None else min(t, v)
    return t or 1


def _run_uniform(net: Net, x: list[int], rng, max_steps, stopped, record,
                 batch: bool = False) -> SimResult:
    en = _EnabledSet(net, x)
    path: list[int] | None = [] if record else None
    steps = firings = 0
    reason = "step_cap"
    while True:
        if stopped():
            reason = "stop"
            break
        if not en.items:
            reason = "deadlock"
            break
        if steps >= max_steps:
            break
        j = en.choice(rng)
        m = rng.randint(1, _repeat_limit(net, x, j)) if batch else 1
        for s, d in net.delta[j]:
            x[s] += d * m
        en.refresh(j)
        steps += 1
        firings += m
        if path is not None:
            path.extend([j] * m)
    return SimResult(net.config(x), steps, reason, firings, path)


@dataclass
class _Block:
    """A macro step: net change and the lowest slack it needs relative to its start."""

    delta: dict
    low: dict
    firings: int
    body: object  # ("r", j, m) or ("rep", [blocks], t)


def _expand(body, out: list[int]) -> None:
    if body[0] == "r":
        out.extend([body[1]] * body[2])
    else:
        for _ in range(body[2]):
            for b in body[1]:
                _expand(b.body, out)


class LeaderScheduler:
    """Leader-directed scheduler for well-led networks.

    The run is a randomized depth-first exploration along the single leader:
    at each configuration an untried forward reaction of the current leader
    is fired; when none is left the last leader step is undone by firing the
    reverse reactions, which is itself a legal continuation of the run.
    A leader reaction that keeps the leader (a catalytic loop) is fired a
    random number of times at once. When the leader returns to a species it
    visited on the current path, the path since then is a cycle; if its net
    effect bounds its own repetition it is repeated a random number of times,
    after a linear validity check. When no leader reaction is enabled,
    non-leader reactions leading to the missing reactants are fired, nearest
    first. Every macro step expands to single firings that are valid in order.
    """

    def __init__(self, net: Net, leaders: Iterable[str], rng: random.Random,
                 full_batch: float = 0.5, record: bool = False):
        self.net, self.rng = net, rng
        self.full_batch, self.record = full_batch, record
        self.leaders = {net.index[s] for s in leaders if s in net.index}
        n = len(net.req)
        self.leader_out = [-1] * n
        self.by_leader: dict[int, list[int]] = {s: [] for s in self.leaders}
        self.free: list[int] = []
        for j, r in enumerate(net.crn.reactions):
            lin = [net.index[s] for s, _ in r.reactants if net.index[s] in self.leaders]
            lout = [net.index[s] for s, _ in r.products if net.index[s] in self.leaders]
            if lin:
                self.leader_out[j] = lout[0] if lout else -1
                self.by_leader[lin[0]].append(j)
            else:
                self.free.append(j)
        self.forward = {s: [j for j in js if not net.backward[j]] for s, js in self.by_leader.items()}
        self.producers: dict[int, list[int]] = {}
        for j in self.free:
            for s, d in net.delta[j]:
                if d > 0:
                    self.producers.setdefault(s, []).append(j)
        self._cones: dict[frozenset, dict[int, int]] = {}
        self._levels: dict[frozenset, list[list[int]]] = {}

    # -- blocks

    def _max_repeat(self, x, delta: dict, low: dict) -> int | None:
        """Largest t such that repeating a block t times from ``x`` stays valid (None: unbounded)."""
        for s, g in low.items():
            if x[s] + g < 0:
                return 0
        t = None
        for s, d in delta.items():
            if d < 0:
                v = (x[s] + low.get(s, 0)) // (-d) + 1
                t = v if t is None else min(t, v)
        return t

    def _pick_count(self, tmax: int, low: int = 1) -> int:
        if tmax <= low or self.rng.random() < self.full_batch:
            return tmax
        return self.rng.randint(low, tmax)

    def _single(self, j: int, m: int) -> _Block:
        net = self.net
        dj = dict(net.delta[j])
        delta = {s: d * m for s, d in dj.items()}
        low = {s: -c + (m - 1) * min(dj.get(s, 0), 0) for s, c in net.req[j]}
        return _Block(delta, low, m, ("r", j, m))

    @staticmethod
    def _compose(blocks: Sequence[_Block]) -> tuple[dict, dict]:
        acc: dict = {}
        low: dict = {}
        for b in blocks:
            for s, g in b.low.items():
                v = acc.get(s, 0) + g
                if s not in low or v < low[s]:
                    low[s] = v
            for s, d in b.delta.items():
                acc[s] = acc.get(s, 0) + d
        return {s: d for s, d in acc.items() if d}, low

    def _repeat(self, seg: list[_Block], t: int) -> _Block:
        delta, low = self._compose(seg)
        return _Block({s: d * t for s, d in delta.items()},
                      {s: g + min(0, (t - 1) * delta.get(s, 0)) for s, g in low.items()},
                      sum(b.firings for b in seg) * t, ("rep", list(seg), t))

    def _reverse(self, block: _Block) -> _Block | None:
        body = block.body
        if body[0] == "r":
            rj = self.net.reverse_of[body[1]]
            return None if rj < 0 else self._single(rj, body[2])
        inner = []
        for b in reversed(body[1]):
            rb = self._reverse(b)
            if rb is None:
                return None
            inner.append(rb)
        return self._repeat(inner, body[2])

    @staticmethod
    def _apply(x, block: _Block) -> None:
        for s, d in block.delta.items():
            x[s] += d

    def _cone(self, goal: frozenset) -> dict[int, int]:
        cone = self._cones.get(goal)
        if cone is not None:
            return cone
        net = self.net
        dist = {s: 0 for s in goal}
        queue = deque(goal)
        cone = {}
        while queue:
            s = queue.popleft()
            d = dist[s]
            for j in self.producers.get(s, ()):
                if j in cone:
                    continue
                # skip producers that eat something needed at least as urgently
                if any(dd < 0 and dist.get(t, math.inf) <= d for t, dd in net.delta[j]):
                    continue
                cone[j] = d
                for t, _ in net.req[j]:
                    if t not in dist:
                        dist[t] = d + 1
                        queue.append(t)
        self._cones[goal] = cone
        return cone

    def _cone_levels(self, goal: frozenset) -> list[list[int]]:
        """Cone reactions grouped by distance, nearest first."""
        levels = self._levels.get(goal)
        if levels is None:
            by: dict[int, list[int]] = {}
            for j, d in self._cone(goal).items():
                by.setdefault(d, []).append(j)
            levels = self._levels[goal] = [sorted(by[d]) for d in sorted(by)]
        return levels

    def _current_leader(self, x) -> int:
        present = [s for s in self.leaders if x[s] > 0]
        if len(present) != 1 or x[present[0]] != 1:
            raise NotWellLed("leader scheduler needs exactly one leader molecule")
        return present[0]

    # -- main loop

    def run(self, x: list[int], max_steps: int, stopped) -> SimResult:
        net, rng = self.net, self.rng
        req = net.req
        leader = self._current_leader(x)
        # frames: (block, what to restore at the node behind it, leader there)
        stack: list[tuple[_Block, object, int]] = []
        seen: dict[int, int] = {leader: 0}              # leader species -> stack depth on arrival
        visited: set = {tuple(x)}
        tried: set | None = set()                       # None: node exhausted
        log: list | None = [] if self.record else None
        steps = firings = 0
        reason = "step_cap"

        def push(block, restore, before):
            nonlocal firings
            self._apply(x, block)
            firings += block.firings
            stack.append((block, restore, before))
            if log is not None:
                log.append(block.body)

        def arrive() -> set | None:
            key = tuple(x)
            if key in visited:
                return None
            visited.add(key)
            return set()

        def repeat_from(start: int, t: int) -> set | None:
            """Repeat the cycle stack[start:] t times; retries with fewer on undo."""
            push(self._repeat([b for b, _, _ in stack[start:]], t), ("retry", start, t - 1), leader)
            seen[leader] = len(stack)
            return arrive()

        while True:
            if stopped():
                reason = "stop"
                break
            if steps >= max_steps:
                break
            steps += 1
            cands = []
            if tried is not None:
                cands = [j for j in self.forward.get(leader, ())
                         if j not in tried and all(x[s] >= c for s, c in req[j])]
            if cands:
                j = cands[0] if len(cands) == 1 else rng.choice(cands)
                tried.add(j)
                m = 1
                nxt = self.leader_out[j]
                if nxt < 0:
                    raise NotWellLed(f"reaction {net.crn.reactions[j]} removes the leader")
                if nxt == leader:
                    probe = self._single(j, 1)
                    tmax = self._max_repeat(x, probe.delta, probe.low)
                    m = self._pick_count(tmax) if tmax else 1
                push(self._single(j, m), tried, leader)
                tried = arrive()
                if nxt != leader:
                    leader = nxt
                    start = seen.get(leader)
                    seen[leader] = len(stack)
                    if tried is not None and start is not None and start < len(stack):
                        t = self._cycle_count(x, stack[start:])
                        if t:
                            tried = repeat_from(start, t)
                continue
            # no untried leader move: pull missing reactants through non-leader reactions
            blocked = self.forward.get(leader, ())
            goal = frozenset(s for j in blocked for s, c in net.req[j]
                             if s != leader and x[s] < c)
            levels = self._cone_levels(goal) if goal and tried is not None else ()
            pool = []
            for level in levels:
                pool = [j for j in level if all(x[s] >= c for s, c in req[j])]
                if pool:
                    break
            if pool:
                j = pool[0] if len(pool) == 1 else rng.choice(pool)
                probe = self._single(j, 1)
                tmax = self._max_repeat(x, probe.delta, probe.low)
                block = self._single(j, self._pick_count(tmax) if tmax else 1)
                self._apply(x, block)
                firings += block.firings
                if log is not None:
                    log.append(block.body)
                continue
            # backtrack
            undo = self._reverse(stack[-1][0]) if stack else None
            if undo is None or self._max_repeat(x, undo.delta, undo.low) == 0:
                if not self.by_leader.get(leader):
                    reason = "leader_halted"
                elif any(net.enabled_in(x, j) for j in range(len(net.req))):
                    reason = "stuck"
                else:
                    reason = "deadlock"
                steps -= 1
                break
            _, restore, before = stack.pop()
            self._apply(x, undo)
            firings += undo.firings
            if log is not None:
                log.append(undo.body)
            leader = before
            depth = len(stack)
            for s in [s for s, d in seen.items() if d > depth]:
                del seen[s]
            seen.setdefault(leader, depth)
            if isinstance(restore, tuple):
                _, start, t = restore
                tried = repeat_from(start, t) if t >= 1 else set()
            else:
                tried = restore
        path = None
        if log is not None:
            path = []
            for body in log:
                _expand(body, path)
        return SimResult(net.config(x), steps, reason, firings, path)

    def _cycle_count(self, x, seg: list) -> int:
        """Random repetition count for a cycle, 0 when it should not be repeated."""
        delta, low = self._compose([b for b, _, _ in seg])
        if not delta or all(d >= 0 for d in delta.values()):
            return 0
        tmax = self._max_repeat(x, delta, low)
        if not tmax:
            return 0
        return tmax if self.rng.random() < self.full_batch else self.rng.randint(0, tmax)


def replay(crn: Crn, init: Mapping[str, int], path: Iterable[int]) -> Configuration:
    """Apply reaction indices one by one, checking each is applicable."""
    net = Net(crn, init.keys())
    x = net.vector(init)
    for n, j in enumerate(path):
        if not net.enabled_in(x, j):
            raise CrnError(f"step {n}: reaction {crn.reactions[j]} not applicable")
        for s, d in net.delta[j]:
            x[s] += d
    return net.config(x)


# -- exhaustive search ----------------------------------------------------------------------


@dataclass
class ReachGraph:
    net: Net
    keys: list
    index: dict
    edges: list
    parent: list
    truncated: bool = False
    cap_hit: str = ""

    def __len__(self) -> int:
        return len(self.keys)

    def configurations(self) -> list[Configuration]:
        return [self.net.key_config(k) for k in self.keys]

    def __contains__(self, c) -> bool:
        return self.net.key(self.net.vector(c)) in self.index

    def path_to(self, i: int) -> list:
        """Witness path from the root to node ``i`` as (reaction index, configuration) pairs."""
        out = []
        while self.parent[i] is not None:
            p, j = self.parent[i]
            out.append((j, self.net.key_config(self.keys[i])))
            i = p
        return out[::-1]

    def stats(self) -> dict:
        return {"configs": len(self.keys), "truncated": self.truncated, "cap": self.cap_hit}


def reachable(crn: Crn, init: Mapping[str, int], caps: ExploreCaps | None = None,
              target: Callable[[tuple], bool] | None = None, net: Net | None = None) -> ReachGraph:
    """Breadth-first closure of ``init``; stops early when ``target(key)`` holds."""
    caps = caps or ExploreCaps()
    net = net or Net(crn, init.keys())
    root = net.key(net.vector(init))
    keys, index, edges, parent = [root], {root: 0}, [[]], [None]
    depth = [0]
    g = ReachGraph(net, keys, index, edges, parent)
    if target is not None and target(root):
        g.cap_hit = "target"
        return g
    frontier = deque([0])
    peak = 1
    while frontier:
        i = frontier.popleft()
        if depth[i] >= caps.max_depth:
            g.truncated, g.cap_hit = True, "max_depth"
            continue
        for j, k in net.successors(keys[i]):
            n = index.get(k)
            if n is None:
                if sum(v for _, v in k) > caps.max_total_count:
                    g.truncated, g.cap_hit = True, "max_total_count"
                    continue
                if len(keys) >= caps.max_configs:
                    g.truncated, g.cap_hit = True, "max_configs"
                    edges[i].append((j, -1))
                    continue
                n = len(keys)
                keys.append(k)
                index[k] = n
                edges.append([])
                parent.append((i, j))
                depth.append(depth[i] + 1)
                frontier.append(n)
                peak = max(peak, len(frontier))
                if target is not None and target(k):
                    edges[i].append((j, n))
                    g.cap_hit = "target"
                    g.peak = peak
                    return g
            edges[i].append((j, n))
    g.peak = peak
    return g


def _unstable(g: ReachGraph, out: int) -> list[bool]:
    """Nodes from which a different output count is reachable."""
    n = len(g.keys)
    val = [dict(k).get(out, 0) for k in g.keys]
    rev: list[list[int]] = [[] for _ in range(n)]
    bad = [False] * n
    queue = deque()
    for i, es in enumerate(g.edges):
        for _, t in es:
            if t < 0:
                continue
            rev[t].append(i)
            if val[t] != val[i] and not bad[i]:
                bad[i] = True
                queue.append(i)
    while queue:
        t = queue.popleft()
        for i in rev[t]:
            if not bad[i]:
                bad[i] = True
                queue.append(i)
    return bad


def _stats(g: ReachGraph) -> dict:
    return {"configs": len(g.keys), "frontier_peak": getattr(g, "peak", 1)}


def _out_index(g: ReachGraph, output: str) -> int:
    return g.net.index.get(output, -1)


def is_output_stable(crn: Crn, c: Mapping[str, int], output: str,
                     caps: ExploreCaps | None = None) -> Verdict:
    net = Net(crn, [*c.keys(), output])
    o = net.index[output]
    base = net.vector(c)[o]
    g = reachable(crn, c, caps, target=lambda k: dict(k).get(o, 0) != base, net=net)
    if g.cap_hit == "target":
        return Verdict(FAILS, net.key_config(g.keys[-1]), _stats(g),
                       f"{output} changes from {base}")
    if g.truncated:
        return Verdict(TRUNCATED, g.cap_hit, _stats(g), f"cap {g.cap_hit} reached")
    return Verdict(HOLDS, None, _stats(g))


def _graph_for(crn, init, caps, extra) -> ReachGraph:
    net = Net(crn, [*init.keys(), *[e for e in extra if e]])
    return reachable(crn, init, caps, net=net)


def _check_stable(g: ReachGraph, output: str, x: int) -> Verdict:
    o = _out_index(g, output)
    n = len(g.keys)
    bad = _unstable(g, o)
    good = [not bad[i] and dict(g.keys[i]).get(o, 0) == x for i in range(n)]
    # backward closure of the good set
    rev: list[list[int]] = [[] for _ in range(n)]
    for i, es in enumerate(g.edges):
        for _, t in es:
            if t >= 0:
                rev[t].append(i)
    ok = list(good)
    queue = deque(i for i in range(n) if good[i])
    while queue:
        t = queue.popleft()
        for i in rev[t]:
            if not ok[i]:
                ok[i] = True
                queue.append(i)
    for i in range(n):
        if not ok[i]:
            c = g.net.key_config(g.keys[i])
            return Verdict(FAILS, c, _stats(g),
                           f"no output-stable configuration with {output}={x} reachable from {c}")
    return Verdict(HOLDS, None, _stats(g))


def stably_computes(crn: Crn, init: Mapping[str, int], output: str, x: int,
                    caps: ExploreCaps | None = None) -> Verdict:
    g = _graph_for(crn, init, caps, [output])
    if g.truncated:
        return Verdict(TRUNCATED, g.cap_hit, _stats(g), f"cap {g.cap_hit} reached")
    return _check_stable(g, output, x)


def _check_halting(g: ReachGraph, halt: str, output: str) -> Verdict:
    h = g.net.index.get(halt, -1)
    o = _out_index(g, output)
    bad = _unstable(g, o)
    for i, k in enumerate(g.keys):
        if h < 0 or dict(k).get(h, 0) < 1:
            continue
        c = g.net.key_config(k)
        if bad[i]:
            return Verdict(FAILS, c, _stats(g), f"{halt} present but {output} not stable in {c}")
        for _, t in g.edges[i]:
            if t >= 0 and dict(g.keys[t]).get(h, 0) < 1:
                return Verdict(FAILS, c, _stats(g), f"{halt} disappears after {c}")
    return Verdict(HOLDS, None, _stats(g))


def halting_valid(crn: Crn, init: Mapping[str, int], halt: str, output: str,
                  caps: ExploreCaps | None = None) -> Verdict:
    g = _graph_for(crn, init, caps, [output, halt])
    if g.truncated:
        return Verdict(TRUNCATED, g.cap_hit, _stats(g), f"cap {g.cap_hit} reached")
    return _check_halting(g, halt, output)


def haltingly_computes(crn: Crn, init: Mapping[str, int], output: str, halt: str | None,
                       x: int, caps: ExploreCaps | None = None) -> Verdict:
    if not halt:
        return Verdict(FAILS, None, {}, "no halting species declared")
    g = _graph_for(crn, init, caps, [output, halt])
    if g.truncated:
        return Verdict(TRUNCATED, g.cap_hit, _stats(g), f"cap {g.cap_hit} reached")
    h = g.net.index[halt]
    if not any(dict(k).get(h, 0) >= 1 for k in g.keys):
        return Verdict(FAILS, None, _stats(g), f"{halt} is never produced")
    return _combine(_check_stable(g, output, x), _check_halting(g, halt, output))


def coverability(crn: Crn, init: Mapping[str, int], target: Mapping[str, int],
                 caps: ExploreCaps | None = None) -> Verdict:
    """Breadth-first search for a configuration covering ``target``.

    A Holds verdict carries the witness path as (reaction index,
    configuration) pairs; :func:`replay` re-applies it.
    """
    net = Net(crn, [*init.keys(), *target.keys()])
    need = [(net.index[s], v) for s, v in target.items() if v > 0]

    def covers(k):
        d = dict(k)
        return all(d.get(s, 0) >= v for s, v in need)

    g = reachable(crn, init, caps, target=covers, net=net)
    if g.cap_hit == "target":
        return Verdict(HOLDS, g.path_to(len(g.keys) - 1), _stats(g))
    if g.truncated:
        return Verdict(TRUNCATED, g.cap_hit, _stats(g), f"cap {g.cap_hit} reached")
    return Verdict(FAILS, net.key_config(g.keys[-1]), _stats(g),
                   f"target not coverable; {len(g.keys)} configurations explored")


# -- lumped exploration ------------------------------------------------------------------------


class NotLumpable(CrnError, ValueError):
    """The network's leaderless reactions do not form weighted token pools."""


@dataclass
class TokenPool:
    """Species exchanged only by leaderless, weight-preserving reactions.

    ``ladder`` species (weights 1, 2, 4, ...) convert reversibly into each
    other; ``feeders`` only split irreversibly towards the ladder.
    """

    weights: dict
    ladder: tuple
    feeders: tuple

    @property
    def name(self) -> str:
        return f"[{self.ladder[0]}]"


def _single_species(side) -> tuple[str, int] | None:
    return side[0] if len(side) == 1 else None


def token_pools(crn: Crn, leaders: Iterable[str], observed: Iterable[str] = ()) -> list[TokenPool]:
    """Group the leaderless reactions into pools and check the shape that makes lumping exact.

    Every leaderless reaction must turn c copies of one species into d
    copies of another, preserving a weight. Within a pool the reversible
    species must carry weights 1, 2, ..., 2^n with ``2 s_j <-> s_(j+1)``
    present for each j, so every arrangement of a given total weight is
    reachable from every other. The remaining species may only split in
    two towards smaller weights and must never be consumed by a leader
    reaction. Raises :class:`NotLumpable` otherwise.
    """
    from fractions import Fraction

    lead = set(leaders)
    token = [r for r in crn if not any(sp in lead for sp in r.species)]
    other = [r for r in crn if any(sp in lead for sp in r.species)]
    adj: dict[str, set] = {}
    ratio: dict[str, list] = {}
    for r in token:
        a, b = _single_species(r.reactants), _single_species(r.products)
        if a is None or b is None or a[0] == b[0]:
            raise NotLumpable(f"leaderless reaction {r} is not a single-species conversion")
        (sa, ca), (sb, cb) = a, b
        adj.setdefault(sa, set()).add(sb)
        adj.setdefault(sb, set()).add(sa)
        ratio.setdefault(sa, []).append((sb, Fraction(ca, cb)))
        ratio.setdefault(sb, []).append((sa, Fraction(cb, ca)))
    token_set = set(token)
    pools = []
    seen: set = set()
    for start in adj:
        if start in seen:
            continue
        w = {start: Fraction(1)}
        queue = deque([start])
        while queue:
            sp = queue.popleft()
            for t, f in ratio[sp]:
                v = w[sp] * f
                if t not in w:
                    w[t] = v
                    queue.append(t)
                elif w[t] != v:
                    raise NotLumpable(f"no consistent token weight around {t}")
        seen |= set(w)
        low = min(w.values())
        weights = {sp: v / low for sp, v in w.items()}
        if any(v.denominator != 1 for v in weights.values()):
            raise NotLumpable("token weights are not integral")
        weights = {sp: int(v) for sp, v in weights.items()}
        rev = {sp for r in token if r.reverse() in token_set for sp in r.species if sp in weights}
        ladder = sorted(rev, key=weights.get)
        if not ladder or [weights[sp] for sp in ladder] != [2**j for j in range(len(ladder))]:
            raise NotLumpable(f"reversible species around {start} do not form a halving ladder")
        for lo, hi in zip(ladder, ladder[1:]):
            if Reaction({lo: 2}, {hi: 1}) not in token_set or Reaction({hi: 1}, {lo: 2}) not in token_set:
                raise NotLumpable(f"missing reversible step 2 {lo} <-> {hi}")
        feeders = tuple(sorted(set(weights) - rev))
        for sp in feeders:
            outs = [r for r in token if r.reactants == ((sp, 1),)]
            ins_ok = all(r.reactants == ((sp, 1),) or dict(r.products).get(sp) == 2
                         for r in token if sp in r.species)
            if not outs or not ins_ok:
                raise NotLumpable(f"{sp} does not split irreversibly towards the ladder")
            for r in outs:
                (t, c), = r.products
                if c != 2 or weights[t] * 2 != weights[sp] or r.reverse() in token_set:
                    raise NotLumpable(f"{r} is not an irreversible halving split")
        for r in other:
            if any(sp in feeders for sp, _ in r.reactants):
                raise NotLumpable(f"leader reaction {r} consumes feeder tokens")
        if set(weights) & (set(observed) | lead):
            raise NotLumpable("observed or leader species inside a token pool")
        pools.append(TokenPool(weights, tuple(ladder), feeders))
    return pools


class LumpedNet(Net):
    """Net over (non-pool species, pool weights); pool reactions are hidden.

    Configurations with the same non-pool counts and the same total weight
    in every pool reach the same lumped states, so exploring the weights
    decides the same reachability questions as the full network.
    """

    def __init__(self, crn: Crn, leaders: Iterable[str], extra_species: Iterable[str] = (),
                 observed: Iterable[str] = ()):
        leaders = list(leaders)
        self.pools = token_pools(crn, leaders, observed)
        self.pool_of = {sp: i for i, p in enumerate(self.pools) for sp in p.weights}
        lead = set(leaders)
        visible = [r for r in crn if any(sp in lead for sp in r.species)]
        self.crn = crn
        plain = [sp for sp in dict.fromkeys([*crn.species, *extra_species]) if sp not in self.pool_of]
        names = plain + [p.name for p in self.pools]
        self.names = names
        self.index = {sp: i for i, sp in enumerate(names)}
        self.reactions = visible
        self._crn_index = [crn.index(r) for r in visible]
        self.req, self.delta = [], []
        for r in visible:
            need: dict[int, int] = {}
            for sp, c in r.reactants:
                i = self._slot(sp)
                need[i] = need.get(i, 0) + c * self._weight(sp)
            change: dict[int, int] = {}
            for sp, c in r.delta().items():
                i = self._slot(sp)
                change[i] = change.get(i, 0) + c * self._weight(sp)
            self.req.append(tuple(need.items()))
            self.delta.append(tuple((i, d) for i, d in change.items() if d))
        self.consumers = [[] for _ in names]
        for j, req in enumerate(self.req):
            for i, _ in req:
                self.consumers[i].append(j)

    def _slot(self, sp: str) -> int:
        p = self.pool_of.get(sp)
        return self.index[sp] if p is None else self.index[self.pools[p].name]

    def _weight(self, sp: str) -> int:
        p = self.pool_of.get(sp)
        return 1 if p is None else self.pools[p].weights[sp]

    def vector(self, c: Mapping[str, int]) -> list[int]:
        x = [0] * len(self.names)
        for sp, v in c.items():
            if sp in self.pool_of or sp in self.index:
                x[self._slot(sp)] += int(v) * self._weight(sp)
            elif v:
                raise CrnError(f"species {sp} not in network")
        return x

    def successors(self, k: tuple):
        for j, nxt in super().successors(k):
            yield self._crn_index[j], nxt


def lumped_haltingly_computes(crn: Crn, init: Mapping[str, int], output: str, halt: str,
                              x: int, leaders: Iterable[str],
                              caps: ExploreCaps | None = None) -> Verdict:
    """:func:`haltingly_computes` on the token-pool quotient of a well-led network.

    Pools are found and checked by :func:`token_pools`; a network outside
    that shape raises :class:`NotLumpable`. Witness configurations list pool
    totals under the pool's unit species in brackets.
    """
    net = LumpedNet(crn, leaders, [*init.keys(), output, halt], observed=[output, halt])
    g = reachable(crn, init, caps, net=net)
    if g.truncated:
        return Verdict(TRUNCATED, g.cap_hit, _stats(g), f"cap {g.cap_hit} reached")
    h = net.index[halt]
    if not any(dict(k).get(h, 0) >= 1 for k in g.keys):
        return Verdict(FAILS, None, _stats(g), f"{halt} is never produced")
    return _combine(_check_stable(g, output, x), _check_halting(g, halt, output))


# -- leaders ---------------------------------------------------------------------------------


def leader_arity_violations(crn: Crn, leader_set: Iterable[str], allow_neutral: bool = False) -> list:
    """Reactions without exactly one leader reactant and one leader product.

    With ``allow_neutral`` a reaction touching no leader at all is accepted
    (register tokens, ladders and doubling chains).
    """
    lead = set(leader_set)
    bad = []
    for r in crn.reactions:
        a = sum(c for s, c in r.reactants if s in lead)
        b = sum(c for s, c in r.products if s in lead)
        if (a, b) == (1, 1) or (allow_neutral and (a, b) == (0, 0)):
            continue
        bad.append(r)
    return bad


def well_led_invariance(crn: Crn, init: Mapping[str, int], leader_set: Iterable[str],
                        trials: int = 10, steps: int = 10_000, seed: int = 0,
                        caps: ExploreCaps | None = None, allow_neutral: bool = False) -> Verdict:
    """Static leader-arity check, sampled walks and (with ``caps``) the full reachable set."""
    lead = [s for s in dict.fromkeys(leader_set)]
    total = sum(init.get(s, 0) for s in lead)
    if total != 1:
        raise NotWellLed(f"initial configuration has {total} leaders")
    bad = leader_arity_violations(crn, lead, allow_neutral)
    stats = {"reactions": len(crn), "static_violations": len(bad)}
    if bad:
        return Verdict(FAILS, bad[0], stats, f"reaction {bad[0]} breaks the single-leader rule")
    net = Net(crn, [*init.keys(), *lead])
    lidx = [net.index[s] for s in lead]
    lset = set(lidx)
    ldelta = [sum(d for s, d in dl if s in lset) for dl in net.delta]
    sampled = 0
    for t in range(trials):
        x = net.vector(init)
        en = _EnabledSet(net, x)
        rng = random.Random(seed * 1_000_003 + t)
        path = []
        for _ in range(steps):
            if not en.items:
                break
            j = en.choice(rng)
            for s, d in net.delta[j]:
                x[s] += d
            en.refresh(j)
            path.append(j)
            sampled += 1
            if ldelta[j] != 0:
                return Verdict(FAILS, net.config(x), {**stats, "sampled_steps": sampled},
                               f"leader count changed by {crn.reactions[j]}")
    stats["sampled_steps"] = sampled
    if caps is not None:
        g = reachable(crn, init, caps, net=net)
        stats.update(_stats(g))
        for k in g.keys:
            d = dict(k)
            if sum(d.get(s, 0) for s in lidx) != 1:
                return Verdict(FAILS, net.key_config(k), stats, "leader count is not 1")
        if g.truncated:
            return Verdict(TRUNCATED, g.cap_hit, stats, f"cap {g.cap_hit} reached")
    return Verdict(HOLDS, None, stats)


# -- stochastic verification ---------------------------------------------------------------


@dataclass
class RunSummary:
    runs: int
    ok: int
    failures: list = field(default_factory=list)
    firings_min: int = 0
    firings_max: int = 0

    @property
    def all_ok(self) -> bool:
        return self.ok == self.runs

    def to_document(self) -> dict:
        return {"runs": self.runs, "ok": self.ok, "failures": self.failures[:10],
                "firings_min": self.firings_min, "firings_max": self.firings_max}


def stochastic_halting_check(crn: Crn, init: Mapping[str, int], output: str, halt: str, x: int,
                             runs: int = 200, seed: int = 0, max_steps: int = 10**6,
                             leaders: Iterable[str] | None = None, post_steps: int = 200,
                             full_batch: float = 0.5) -> RunSummary:
    """Seeded runs to the halting species; each must show ``x`` outputs, then stay put.

    After the halting species appears the run continues for ``post_steps``
    uniform steps and the output and halting counts must not change.
    """
    scheduler = "leader" if leaders is not None else "uniform"
    lead = list(leaders) if leaders is not None else None
    summary = RunSummary(runs, 0)
    fir = []
    for i in range(runs):
        res = simulate(crn, init, seed=seed + i, max_steps=max_steps, stop_on=halt,
                       scheduler=scheduler, leaders=lead, full_batch=full_batch)
        fir.append(res.firings)
        y = res.final.get(output, 0)
        if res.reason != "stop" or y != x:
            summary.failures.append({"seed": seed + i, "reason": res.reason, "output": y})
            continue
        after = simulate(crn, res.final, seed=seed + i, max_steps=post_steps)
        if after.final.get(output, 0) != x or after.final.get(halt, 0) < 1:
            summary.failures.append({"seed": seed + i, "reason": "changed after halt",
                                     "output": after.final.get(output, 0)})
            continue
        summary.ok += 1
    if fir:
        summary.firings_min, summary.firings_max = min(fir), max(fir)
    return summary


# -- size accounting ---------------------------------------------------------------------------


def size_report(crn: Crn, context: Mapping | None = None) -> dict:
    context = dict(context or {})
    n = context.get("n_bits")
    reactions = len(crn)
    report = {
        "reactions": reactions,
        "species": len(crn.species),
        "max_arity": max((max(sum(c for _, c in r.reactants), sum(c for _, c in r.products))
                          for r in crn.reactions), default=0),
        **{k: v for k, v in context.items()},
    }
    if n and n > 1:
        scale = n / math.log2(n)
        report["n_over_log_n"] = scale
        report["ratio"] = reactions / scale
    else:
        report["ratio"] = None
    return report
