"""Per-vertex state-merging surjections and the pushforward of distributions under them."""

from __future__ import annotations

import itertools
from collections.abc import Mapping, Sequence
from fractions import Fraction
from typing import Iterable, Optional

from .errors import DimensionMismatch, IncompatibleLumping, UnknownSymbol, UnknownVertex
from .model import BayesNet, JointTable, conditional, joint


class Lumping:
    """One surjection ``f_v: A^v -> B^v`` per vertex.

    Parameters
    ----------
    maps:
        vertex -> {source symbol: target symbol}. The key order of each inner
        mapping is taken as the source alphabet order.
    targets:
        Optional vertex -> target alphabet (ordered). Defaults to the order in
        which target symbols first appear.
    """

    def __init__(self, maps: Mapping, targets: Optional[Mapping] = None):
        self._maps = {}
        self._targets = {}
        for v, m in maps.items():
            m = {str(a): str(b) for a, b in m.items()}
            if not m:
                raise IncompatibleLumping(f"empty map at vertex {v!r}")
            image = list(dict.fromkeys(m.values()))
            if targets is not None and v in targets:
                tgt = tuple(targets[v])
                if len(set(tgt)) != len(tgt):
                    raise IncompatibleLumping(f"repeated target symbols at {v!r}")
                if set(image) != set(tgt):
                    extra = sorted(set(image) - set(tgt))
                    if extra:
                        raise UnknownSymbol(f"map at {v!r} hits undeclared target symbols {extra}")
                    raise IncompatibleLumping(
                        f"map at {v!r} is not surjective: misses {sorted(set(tgt) - set(image))}"
                    )
            else:
                tgt = tuple(image)
            self._maps[v] = m
            self._targets[v] = tgt
        self._pre = {
            v: {b: tuple(a for a, x in m.items() if x == b) for b in self._targets[v]}
            for v, m in self._maps.items()
        }

    # constructors

    @classmethod
    def shared(cls, mapping: Mapping, vertices: Iterable[str], target: Optional[Sequence[str]] = None):
        """The same map ``f: A -> B`` at every vertex."""
        vertices = list(vertices)
        targets = None if target is None else {v: target for v in vertices}
        return cls({v: dict(mapping) for v in vertices}, targets)

    @classmethod
    def from_blocks(cls, alphabet: Sequence[str], blocks, vertices: Iterable[str], names=None):
        """Shared lumping from a partition of ``alphabet`` into ``blocks``.

        Unlisted symbols stay singletons. Target names default to ``b1, b2, ...``
        in order of each block's first symbol in ``alphabet``.
        """
        alphabet = list(alphabet)
        block_of = {}
        for blk in blocks:
            blk = tuple(blk)
            for a in blk:
                if a not in alphabet:
                    raise UnknownSymbol(f"{a!r} not in alphabet {alphabet}")
                if a in block_of:
                    raise IncompatibleLumping(f"{a!r} appears in two blocks")
                block_of[a] = blk
        ordered = []
        for a in alphabet:
            blk = block_of.get(a, (a,))
            if blk not in ordered:
                ordered.append(blk)
        if names is None:
            names = [f"b{i + 1}" for i in range(len(ordered))]
        if len(names) != len(ordered):
            raise DimensionMismatch(f"{len(ordered)} classes but {len(names)} names")
        name_of = {a: n for blk, n in zip(ordered, names) for a in blk}
        return cls.shared({a: name_of[a] for a in alphabet}, vertices, target=list(names))

    @classmethod
    def identity(cls, alphabets: Mapping):
        return cls({v: {a: a for a in alph} for v, alph in alphabets.items()})

    @classmethod
    def from_partition(cls, alphabets: Mapping, labels: Mapping, prefix: str = "b"):
        """Build from restricted-growth labels: vertex -> tuple of block indices per symbol."""
        maps, targets = {}, {}
        for v, alph in alphabets.items():
            lab = labels[v]
            maps[v] = {a: f"{prefix}{i + 1}" for a, i in zip(alph, lab)}
            targets[v] = [f"{prefix}{i + 1}" for i in range(max(lab) + 1)]
        return cls(maps, targets)

    # accessors

    @property
    def vertices(self) -> tuple[str, ...]:
        return tuple(self._maps)

    def _get(self, v):
        try:
            return self._maps[v]
        except KeyError:
            raise UnknownVertex(v) from None

    def source_alphabet(self, v: str) -> tuple[str, ...]:
        return tuple(self._get(v))

    def target_alphabet(self, v: str) -> tuple[str, ...]:
        self._get(v)
        return self._targets[v]

    def target_alphabets(self) -> dict:
        return dict(self._targets)

    def map(self, v: str) -> dict:
        return dict(self._get(v))

    def apply(self, v: str, a: str) -> str:
        m = self._get(v)
        try:
            return m[a]
        except KeyError:
            raise UnknownSymbol(f"{a!r} not in source alphabet of {v!r}") from None

    def apply_tuple(self, vs: Sequence[str], states: Sequence[str]) -> tuple[str, ...]:
        return tuple(self.apply(v, a) for v, a in zip(vs, states))

    def preimage(self, v: str, b: str) -> tuple[str, ...]:
        self._get(v)
        try:
            return self._pre[v][b]
        except KeyError:
            raise UnknownSymbol(f"{b!r} not in target alphabet of {v!r}") from None

    def preimage_tuple(self, vs: Sequence[str], bs: Sequence[str]):
        """All source tuples mapping to ``bs`` (product of per-vertex preimages)."""
        return itertools.product(*(self.preimage(v, b) for v, b in zip(vs, bs)))

    def classes(self, v: str) -> list[tuple[str, ...]]:
        self._get(v)
        return [self._pre[v][b] for b in self._targets[v]]

    def is_injective_at(self, v: str) -> bool:
        return len(self._targets[v]) == len(self._get(v))

    def is_trivial(self) -> bool:
        """True iff bijective at every vertex."""
        return all(self.is_injective_at(v) for v in self._maps)

    def compose(self, after: "Lumping") -> "Lumping":
        """``after ∘ self``: apply this lumping first, then ``after``."""
        maps, targets = {}, {}
        for v in self._maps:
            g = after._get(v)
            if set(g) != set(self._targets[v]):
                raise IncompatibleLumping(f"cannot compose at {v!r}: alphabets differ")
            maps[v] = {a: g[b] for a, b in self._maps[v].items()}
            targets[v] = after._targets[v]
        return Lumping(maps, targets)

    def restrict(self, vertices: Iterable[str]) -> "Lumping":
        vertices = list(vertices)
        return Lumping({v: self._get(v) for v in vertices}, {v: self._targets[v] for v in vertices})

    def check_compatible(self, alphabets: Mapping) -> None:
        """Raise IncompatibleLumping unless every vertex of ``alphabets`` is covered exactly."""
        for v, alph in alphabets.items():
            if v not in self._maps:
                raise IncompatibleLumping(f"lumping has no map for vertex {v!r}")
            if set(self._maps[v]) != set(alph):
                raise IncompatibleLumping(
                    f"lumping at {v!r} is defined on {sorted(self._maps[v])}, alphabet is {list(alph)}"
                )

    def __eq__(self, other):
        if not isinstance(other, Lumping):
            return NotImplemented
        return self._maps == other._maps and self._targets == other._targets

    def __hash__(self):
        return hash(tuple((v, tuple(m.items()), self._targets[v]) for v, m in self._maps.items()))

    def describe(self) -> dict:
        """vertex -> list of classes (each class a tuple of source symbols)."""
        return {v: self.classes(v) for v in self._maps}

    def __repr__(self):
        parts = []
        for v in self._maps:
            cls = "|".join(",".join(c) for c in self.classes(v))
            parts.append(f"{v}:{cls}")
        return f"Lumping({'; '.join(parts)})"


def preimage(lump: Lumping, vertex: str, b: str) -> set:
    return set(lump.preimage(vertex, b))


def pushforward(table: JointTable, lump: Lumping) -> JointTable:
    """Image measure of ``table`` under ``lump`` (sum of mass over preimages)."""
    try:
        lump.check_compatible({v: table.alphabets[v] for v in table.scope})
    except IncompatibleLumping as exc:
        raise DimensionMismatch(str(exc)) from None
    maps = [lump.map(v) for v in table.scope]
    out = {}
    for key, p in table.items():
        k = tuple(m[a] for m, a in zip(maps, key))
        out[k] = out.get(k, Fraction(0)) + p
    targets = {v: lump.target_alphabet(v) for v in table.scope}
    return JointTable(table.scope, targets, out, check=False)


def class_mass(net: BayesNet, lump: Lumping, v: str, parent_states: Sequence[str], b: str) -> Fraction:
    """P(f(X_v) = b | X_pa(v) = parent_states), read off the CPT."""
    row = net.cpts[v].row(parent_states)
    alph = net.alphabets[v]
    members = set(lump.preimage(v, b))
    return sum((p for a, p in zip(alph, row) if a in members), Fraction(0))


def lumped_cpd(net: BayesNet, lump: Lumping, v: str, b_v: str, b_pa: Sequence[str],
               lumped: Optional[JointTable] = None) -> Optional[Fraction]:
    """P(U_v = b_v | U_pa(v) = b_pa) on the pushforward joint; None when undefined."""
    lump.check_compatible(net.alphabets)
    if lumped is None:
        lumped = pushforward(joint(net), lump)
    pa = net.dag.parents(v)
    if len(pa) != len(b_pa):
        raise DimensionMismatch(f"{v!r} has {len(pa)} parents, got {len(b_pa)} states")
    return conditional(lumped, {v: b_v}, dict(zip(pa, b_pa)))
