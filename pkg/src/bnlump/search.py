"""Candidate lumpings by set-partition enumeration, and random counterexample search."""

from __future__ import annotations

import itertools
import math
import random
from fractions import Fraction
from typing import Iterator, Optional, Sequence

from .checkers import check_d1, check_d2_exact, check_d3, check_kemeny_snell
from .errors import DimensionMismatch, IncompatibleLumping, ModelTooLarge, StructuralPreconditionViolated
from .graph import Dag, structural_profile
from .lumping import Lumping
from .model import BayesNet
from .report import CheckReport

DEFAULT_MAX_CANDIDATES = 100_000

CHECKERS = {
    "D1": check_d1,
    "D2": check_d2_exact,
    "D3": check_d3,
    "KS": check_kemeny_snell,
}


def bell(n: int) -> int:
    """Bell number via the Bell triangle."""
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for x in row:
            nxt.append(nxt[-1] + x)
        row = nxt
    return row[0]


class PartitionIterator:
    """Set partitions of ``alphabet`` as restricted-growth strings, in lexicographic order.

    A string ``a`` has ``a[0] = 0`` and ``a[i] <= 1 + max(a[:i])``; symbol i
    goes to block ``a[i]``. The all-singletons partition is the last string
    and is skipped unless ``include_trivial`` is set.
    """

    def __init__(self, alphabet: Sequence[str], include_trivial: bool = True,
                 max_classes: Optional[int] = None):
        self.alphabet = tuple(alphabet)
        self.include_trivial = include_trivial
        self.max_classes = max_classes
        self.current: Optional[tuple[int, ...]] = None

    def _strings(self) -> Iterator[tuple[int, ...]]:
        n = len(self.alphabet)
        if n == 0:
            return
        a = [0] * n
        peak = [0] * n  # peak[i] = max(a[:i+1])
        while True:
            yield tuple(a)
            i = n - 1
            while i > 0 and a[i] > peak[i - 1]:
                i -= 1
            if i == 0:
                return
            a[i] += 1
            peak[i] = max(peak[i - 1], a[i])
            for j in range(i + 1, n):
                a[j] = 0
                peak[j] = peak[i]

    def __iter__(self):
        n = len(self.alphabet)
        for s in self._strings():
            k = max(s) + 1
            if not self.include_trivial and k == n:
                continue
            if self.max_classes is not None and k > self.max_classes:
                continue
            self.current = s
            yield s

    def blocks(self, rgs: Sequence[int]) -> list[tuple[str, ...]]:
        out = [[] for _ in range(max(rgs) + 1)]
        for a, i in zip(self.alphabet, rgs):
            out[i].append(a)
        return [tuple(b) for b in out]


def enumerate_lumpings(net: BayesNet, shared: bool = True, max_classes: Optional[int] = None,
                       include_trivial: bool = False,
                       max_candidates: int = DEFAULT_MAX_CANDIDATES) -> Iterator[Lumping]:
    """Yield candidate lumpings in canonical order.

    ``shared``: one partition of the common alphabet used at every vertex.
    Otherwise every combination of per-vertex partitions (vertex order, then
    partition order). Raises ModelTooLarge before yielding anything when the
    Bell-number count exceeds ``max_candidates``.
    """
    if shared:
        alphabet = net.shared_alphabet
        if alphabet is None:
            raise DimensionMismatch("shared lumpings need one common alphabet")
        count = bell(len(alphabet))
        if count > max_candidates:
            raise ModelTooLarge(f"Bell({len(alphabet)}) = {count} candidates (budget {max_candidates})")
        it = PartitionIterator(alphabet, include_trivial, max_classes)
        for rgs in it:
            labels = {v: rgs for v in net.vertices}
            yield Lumping.from_partition(net.alphabets, labels)
        return
    count = math.prod(bell(len(net.alphabets[v])) for v in net.vertices)
    if count > max_candidates:
        raise ModelTooLarge(f"{count} per-vertex partition combinations (budget {max_candidates})")
    per_vertex = [list(PartitionIterator(net.alphabets[v], True, max_classes)) for v in net.vertices]
    for combo in itertools.product(*per_vertex):
        labels = dict(zip(net.vertices, combo))
        lump = Lumping.from_partition(net.alphabets, labels)
        if not include_trivial and lump.is_trivial():
            continue
        yield lump


def search_valid_lumpings(net: BayesNet, prop: str = "D1", shared: bool = True,
                          max_classes: Optional[int] = None, include_trivial: bool = False,
                          max_candidates: int = DEFAULT_MAX_CANDIDATES) -> list[tuple[Lumping, CheckReport]]:
    """Every candidate lumping for which the ``prop`` checker holds, in canonical order."""
    try:
        checker = CHECKERS[prop.upper()]
    except KeyError:
        raise ValueError(f"unknown property {prop!r}; choose from {sorted(CHECKERS)}") from None
    out = []
    for lump in enumerate_lumpings(net, shared, max_classes, include_trivial, max_candidates):
        rep = checker(net, lump)
        if rep.holds:
            out.append((lump, rep))
    return out


# ---------------------------------------------------------------------------
# random models


def random_distribution(k: int, rng: random.Random, max_denominator: int = 12) -> list[Fraction]:
    """Strictly positive rational vector of length k with denominator <= max_denominator."""
    if max_denominator < k:
        raise ValueError(f"denominator bound {max_denominator} too small for {k} positive entries")
    q = rng.randint(k, max_denominator)
    cuts = sorted(rng.sample(range(1, q), k - 1))
    parts = [b - a for a, b in zip([0] + cuts, cuts + [q])]
    return [Fraction(p, q) for p in parts]


def random_net(dag: Dag, alphabets, rng: random.Random, max_denominator: int = 12) -> BayesNet:
    """Net on ``dag`` with strictly positive rational CPT entries."""
    if isinstance(alphabets, dict):
        alph = {v: tuple(alphabets[v]) for v in dag.vertices}
    else:
        alph = {v: tuple(alphabets) for v in dag.vertices}
    cpts = {}
    for v in dag.vertices:
        keys = itertools.product(*(alph[p] for p in dag.parents(v)))
        cpts[v] = {k: random_distribution(len(alph[v]), rng, max_denominator) for k in keys}
    return BayesNet(dag, alph, cpts)


def random_dag(n: int, rng: random.Random, edge_prob: float = 0.5) -> Dag:
    """Random DAG on v1..vn; edges only go from lower to higher index."""
    vs = [f"v{i + 1}" for i in range(n)]
    edges = [(vs[i], vs[j]) for i in range(n) for j in range(i + 1, n) if rng.random() < edge_prob]
    return Dag(vs, edges)


def find_d1_counterexample(dag: Dag, lump: Lumping, attempts: int = 1000, seed: int = 0,
                           max_denominator: int = 12) -> Optional[tuple[BayesNet, CheckReport]]:
    """Sample positive rational nets until one violates D1 under ``lump``.

    Preconditions follow the non-factorisation result: a connected DAG on at
    least three vertices with an induced three-vertex chain or fork, and one
    shared map f with 1 < |B| < |A|. Returns None once ``attempts`` nets all
    satisfy D1; that is not a proof that none exists.
    """
    prof = structural_profile(dag)
    if not prof.many_non_d1s_applicable:
        raise StructuralPreconditionViolated(
            "needs a connected DAG with >= 3 vertices and an induced three-vertex chain or fork"
        )
    if set(lump.vertices) != set(dag.vertices):
        raise IncompatibleLumping("lumping must cover every vertex of the DAG")
    first = dag.vertices[0]
    fmap = lump.map(first)
    if any(lump.map(v) != fmap for v in dag.vertices):
        raise StructuralPreconditionViolated("the result concerns one map f shared by all vertices")
    n_a, n_b = len(fmap), len(lump.target_alphabet(first))
    if not 1 < n_b < n_a:
        raise StructuralPreconditionViolated(f"needs 1 < |B| < |A|, got |A|={n_a}, |B|={n_b}")
    alphabet = lump.source_alphabet(first)
    rng = random.Random(seed)
    for i in range(attempts):
        net = random_net(dag, alphabet, rng, max_denominator)
        rep = check_d1(net, lump)
        if rep.fails:
            rep.details["attempt"] = i + 1
            rep.details["seed"] = seed
            return net, rep
    return None
