"""Discrete chemical reaction networks: species, reactions, configurations.

Species are identified by their names. A reaction is a pair of multisets of
species with at most three molecules on each side; a network is an ordered
list of distinct reactions. Configurations are sparse count maps with
arbitrary-precision integer counts.

Text format, one reaction per line::

    # comment
    2 X3 + S3 <-> H3
    L -> 2 Y
    A + B -> 0
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping

MAX_ARITY = 3

_NAME = r"[A-Za-z_][A-Za-z0-9_.^{}'\[\]]*"
_NAME_RE = re.compile(rf"^{_NAME}$")
_TERM_RE = re.compile(rf"^\s*(?:(\d+)\s*)?({_NAME})\s*$")


class CrnError(Exception):
    """Base class for errors raised by this package."""


class InvalidReaction(CrnError, ValueError):
    pass


class InvalidReverse(InvalidReaction):
    pass


class NotApplicable(CrnError):
    pass


class ParseError(CrnError, ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


def _check_name(name: str) -> str:
    if not isinstance(name, str) or not _NAME_RE.match(name):
        raise InvalidReaction(f"invalid species name {name!r}")
    return name


def _as_multiset(side) -> tuple[tuple[str, int], ...]:
    """Normalize a side given as a mapping, a name, or an iterable of names."""
    counts: dict[str, int] = {}
    if isinstance(side, Mapping):
        items = side.items()
    elif isinstance(side, str):
        items = [(side, 1)]
    else:
        items = []
        for item in side:
            items.append((item, 1) if isinstance(item, str) else tuple(item))
    for name, coef in items:
        coef = int(coef)
        if coef < 0:
            raise InvalidReaction(f"negative coefficient for {name}")
        if coef:
            counts[_check_name(name)] = counts.get(name, 0) + coef
    return tuple(sorted(counts.items()))


@dataclass(frozen=True)
class Reaction:
    """An irreversible reaction ``reactants -> products``.

    Both sides are stored as sorted ``(name, coefficient)`` tuples, so two
    reactions are equal exactly when their multisets are equal.
    """

    reactants: tuple[tuple[str, int], ...]
    products: tuple[tuple[str, int], ...]

    def __init__(self, reactants, products=()):
        object.__setattr__(self, "reactants", _as_multiset(reactants))
        object.__setattr__(self, "products", _as_multiset(products))
        n_in, n_out = self.order, sum(c for _, c in self.products)
        if n_in < 1:
            raise InvalidReaction("a reaction needs at least one reactant")
        if n_in > MAX_ARITY or n_out > MAX_ARITY:
            raise InvalidReaction(
                f"at most {MAX_ARITY} reactants and products allowed: {self}"
            )
        if self.reactants == self.products:
            raise InvalidReaction(f"null reaction {self}")

    @classmethod
    def parse(cls, text: str) -> "Reaction":
        rxns = parse_reaction_line(text, 1)
        if len(rxns) != 1:
            raise ParseError(1, "expected a single irreversible reaction")
        return rxns[0]

    @property
    def order(self) -> int:
        return sum(c for _, c in self.reactants)

    @property
    def species(self) -> tuple[str, ...]:
        seen = dict.fromkeys(n for n, _ in self.reactants)
        seen.update(dict.fromkeys(n for n, _ in self.products))
        return tuple(seen)

    def reactant_counts(self) -> dict[str, int]:
        return dict(self.reactants)

    def product_counts(self) -> dict[str, int]:
        return dict(self.products)

    def delta(self) -> dict[str, int]:
        """Net change in counts when the reaction fires once."""
        d = {n: -c for n, c in self.reactants}
        for n, c in self.products:
            d[n] = d.get(n, 0) + c
        return {n: v for n, v in d.items() if v}

    def reverse(self) -> "Reaction":
        try:
            return Reaction(dict(self.products), dict(self.reactants))
        except InvalidReaction as exc:
            raise InvalidReverse(f"reverse of {self} is invalid: {exc}") from None

    def rename(self, mapping: Mapping[str, str]) -> "Reaction":
        def side(ms):
            out: dict[str, int] = {}
            for n, c in ms:
                m = mapping.get(n, n)
                out[m] = out.get(m, 0) + c
            return out

        return Reaction(side(self.reactants), side(self.products))

    def __str__(self) -> str:
        return f"{_side_text(self.reactants)} -> {_side_text(self.products)}"

    def __repr__(self) -> str:
        return f"Reaction({str(self)!r})"


def _side_text(side) -> str:
    if not side:
        return "0"
    return " + ".join(n if c == 1 else f"{c} {n}" for n, c in side)


class Configuration(Mapping[str, int]):
    """Immutable sparse map from species name to nonnegative count."""

    __slots__ = ("_counts", "_hash")

    def __init__(self, counts: Mapping[str, int] | Iterable[tuple[str, int]] = ()):
        items = counts.items() if isinstance(counts, Mapping) else counts
        clean: dict[str, int] = {}
        for name, n in items:
            n = int(n)
            if n < 0:
                raise ValueError(f"negative count for {name}: {n}")
            if n:
                clean[name] = clean.get(name, 0) + n
        self._counts = dict(sorted(clean.items()))
        self._hash = None

    @classmethod
    def parse(cls, text: str) -> "Configuration":
        """Parse ``"3 R1, 1 S0"`` (also accepts ``"3R1 + S0"``)."""
        text = text.strip().strip("{}")
        counts: dict[str, int] = {}
        if not text or text == "0":
            return cls()
        for part in re.split(r"[,+]", text):
            m = _TERM_RE.match(part)
            if not m:
                raise ParseError(1, f"bad configuration term {part.strip()!r}")
            counts[m.group(2)] = counts.get(m.group(2), 0) + int(m.group(1) or 1)
        return cls(counts)

    def __getitem__(self, name: str) -> int:
        return self._counts.get(name, 0)

    def __contains__(self, name) -> bool:
        return name in self._counts

    def __iter__(self) -> Iterator[str]:
        return iter(self._counts)

    def __len__(self) -> int:
        return len(self._counts)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(tuple(self._counts.items()))
        return self._hash

    def __eq__(self, other) -> bool:
        if isinstance(other, Configuration):
            return self._counts == other._counts
        if isinstance(other, Mapping):
            return self._counts == {k: v for k, v in other.items() if v}
        return NotImplemented

    def total(self) -> int:
        return sum(self._counts.values())

    def covers(self, other: Mapping[str, int]) -> bool:
        return all(self[n] >= c for n, c in other.items())

    def __str__(self) -> str:
        return ", ".join(f"{c} {n}" for n, c in self._counts.items())

    def __repr__(self) -> str:
        return f"Configuration({str(self)!r})"

    def to_dict(self) -> dict[str, int]:
        return dict(self._counts)


def applicable(c: Mapping[str, int], r: Reaction) -> bool:
    return all(c.get(n, 0) >= k for n, k in r.reactants)


def apply(c: Mapping[str, int], r: Reaction) -> Configuration:
    if not applicable(c, r):
        raise NotApplicable(f"{r} is not applicable in {{{Configuration(c)}}}")
    counts = dict(c)
    for n, k in r.delta().items():
        counts[n] = counts.get(n, 0) + k
    return Configuration(counts)


class Crn:
    """A chemical reaction network with set semantics on reactions.

    Reactions keep their insertion order; adding a reaction that is already
    present is a no-op, so ``len(crn)`` is the number of distinct reactions.
    """

    __slots__ = ("_reactions", "_index", "_species")

    def __init__(self, reactions: Iterable[Reaction] = (), species: Iterable[str] = ()):
        self._reactions: list[Reaction] = []
        self._index: dict[Reaction, int] = {}
        self._species: dict[str, None] = {}
        for s in species:
            self._species[_check_name(s)] = None
        for r in reactions:
            self._add(r)

    def _add(self, r: Reaction) -> None:
        if not isinstance(r, Reaction):
            raise TypeError(f"expected Reaction, got {type(r).__name__}")
        if r in self._index:
            return
        self._index[r] = len(self._reactions)
        self._reactions.append(r)
        for s in r.species:
            self._species.setdefault(s, None)

    @property
    def reactions(self) -> tuple[Reaction, ...]:
        return tuple(self._reactions)

    @property
    def species(self) -> tuple[str, ...]:
        return tuple(self._species)

    def __len__(self) -> int:
        return len(self._reactions)

    def __iter__(self) -> Iterator[Reaction]:
        return iter(self._reactions)

    def __contains__(self, r) -> bool:
        return r in self._index

    def __getitem__(self, i: int) -> Reaction:
        return self._reactions[i]

    def index(self, r: Reaction) -> int:
        return self._index[r]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Crn):
            return NotImplemented
        return (
            self._reactions == other._reactions
            and set(self._species) == set(other._species)
        )

    def __repr__(self) -> str:
        return f"Crn({len(self)} reactions, {len(self._species)} species)"

    def same_reactions(self, other: "Crn") -> bool:
        return set(self._index) == set(other._index)

    def with_reactions(self, reactions: Iterable[Reaction]) -> "Crn":
        return Crn([*self._reactions, *reactions], self._species)

    def add(self, r: Reaction) -> "Crn":
        return self.with_reactions([r])

    def add_reversible(self, r: Reaction) -> "Crn":
        return self.with_reactions([r, r.reverse()])

    def merge(self, other: "Crn") -> "Crn":
        return Crn([*self._reactions, *other._reactions], [*self._species, *other._species])

    def rename(self, mapping: Mapping[str, str]) -> "Crn":
        return Crn(
            (r.rename(mapping) for r in self._reactions),
            (mapping.get(s, s) for s in self._species),
        )

    def enabled(self, c: Mapping[str, int]) -> list[Reaction]:
        return [r for r in self._reactions if applicable(c, r)]

    def to_text(self) -> str:
        return serialize_text(self)

    @classmethod
    def from_text(cls, text: str) -> "Crn":
        return parse_text(text)


def reversible(reactants, products) -> list[Reaction]:
    """Both directions of ``reactants <-> products``."""
    r = Reaction(reactants, products)
    return [r, r.reverse()]


def merge(*crns: Crn) -> Crn:
    out = Crn()
    for c in crns:
        out = out.merge(c)
    return out


def _parse_side(text: str, lineno: int) -> dict[str, int]:
    text = text.strip()
    if text in ("0", "∅", ""):
        if text == "":
            raise ParseError(lineno, "empty reaction side (use 0)")
        return {}
    counts: dict[str, int] = {}
    for term in text.split("+"):
        m = _TERM_RE.match(term)
        if not m:
            raise ParseError(lineno, f"bad term {term.strip()!r}")
        coef = int(m.group(1)) if m.group(1) is not None else 1
        if coef == 0:
            raise ParseError(lineno, f"zero coefficient in {term.strip()!r}")
        counts[m.group(2)] = counts.get(m.group(2), 0) + coef
    return counts


def parse_reaction_line(line: str, lineno: int = 1) -> list[Reaction]:
    if "<->" in line:
        lhs, _, rhs = line.partition("<->")
        rev = True
    elif "->" in line:
        lhs, _, rhs = line.partition("->")
        rev = False
    else:
        raise ParseError(lineno, "missing '->' or '<->'")
    if "->" in rhs:
        raise ParseError(lineno, "more than one arrow")
    left, right = _parse_side(lhs, lineno), _parse_side(rhs, lineno)
    try:
        r = Reaction(left, right)
        return [r, r.reverse()] if rev else [r]
    except InvalidReaction as exc:
        raise ParseError(lineno, str(exc)) from None


def parse_text(text: str) -> Crn:
    reactions: list[Reaction] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            reactions.extend(parse_reaction_line(line, lineno))
    return Crn(reactions)


def serialize_text(crn: Crn) -> str:
    return "".join(f"{r}\n" for r in crn)


# -- structured (JSON) documents ------------------------------------------------


def crn_to_document(crn: Crn, designated: Mapping[str, str | None] | None = None,
                    **extra) -> dict:
    doc = {
        "species": list(crn.species),
        "reactions": [
            {"reactants": dict(r.reactants), "products": dict(r.products)} for r in crn
        ],
        "designated": {
            k: (designated or {}).get(k) for k in ("leader", "output", "halt")
        },
    }
    doc.update(extra)
    return doc


def crn_from_document(doc: Mapping) -> tuple[Crn, dict]:
    try:
        reactions = [Reaction(r["reactants"], r["products"]) for r in doc["reactions"]]
    except (KeyError, TypeError) as exc:
        raise ParseError(0, f"malformed document: {exc}") from None
    except InvalidReaction as exc:
        raise ParseError(0, str(exc)) from None
    crn = Crn(reactions, doc.get("species", ()))
    return crn, dict(doc.get("designated") or {})


def write_crn(path, crn: Crn, designated=None, **extra) -> None:
    path = Path(path)
    if path.suffix == ".json":
        doc = crn_to_document(crn, designated, **extra)
        path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")
    else:
        path.write_text(serialize_text(crn))


def read_crn(path) -> tuple[Crn, dict]:
    """Read a network from a ``.json`` document or a text file."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.lineno, exc.msg) from None
        return crn_from_document(doc)
    return parse_text(text), {}
