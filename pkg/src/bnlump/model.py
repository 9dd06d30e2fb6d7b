"""Discrete Bayesian networks with exact rational CPTs, and joint tables over them."""

from __future__ import annotations

import itertools
import math
import random
import time
from collections.abc import Mapping, Sequence
from fractions import Fraction
from typing import Iterable, Optional, Union

from .errors import (
    DimensionMismatch,
    InvalidDistribution,
    ModelTooLarge,
    OverlappingSets,
    UnknownSymbol,
    UnknownVertex,
)
from .graph import Dag, d_separates
from .report import CheckReport, Verdict

DEFAULT_MAX_ENTRIES = 2_000_000

Number = Union[Fraction, int, str]


def as_fraction(x) -> Fraction:
    """Parse an exact rational. Floats are refused: they are rarely what was meant."""
    if isinstance(x, bool):
        raise InvalidDistribution(f"not a probability: {x!r}")
    if isinstance(x, (Fraction, int)):
        return Fraction(x)
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError):
            raise InvalidDistribution(f"cannot parse {x!r} as a rational") from None
    raise InvalidDistribution(f"expected an exact rational, got {type(x).__name__} {x!r}")


def probability_vector(values: Iterable, size: Optional[int] = None) -> tuple[Fraction, ...]:
    vec = tuple(as_fraction(x) for x in values)
    if size is not None and len(vec) != size:
        raise DimensionMismatch(f"expected {size} entries, got {len(vec)}")
    if any(p < 0 for p in vec):
        raise InvalidDistribution(f"negative entry in {list(map(str, vec))}")
    if sum(vec) != 1:
        raise InvalidDistribution(f"entries sum to {sum(vec)}, not 1")
    return vec


def point_mass(alphabet: Sequence[str], symbol: str) -> tuple[Fraction, ...]:
    if symbol not in alphabet:
        raise UnknownSymbol(f"{symbol!r} not in alphabet {list(alphabet)}")
    return tuple(Fraction(int(a == symbol)) for a in alphabet)


def uniform(alphabet: Sequence[str]) -> tuple[Fraction, ...]:
    return tuple(Fraction(1, len(alphabet)) for _ in alphabet)


def make_alphabet(symbols: Iterable[str]) -> tuple[str, ...]:
    symbols = tuple(symbols)
    if not symbols:
        raise InvalidDistribution("alphabet must be nonempty")
    if len(set(symbols)) != len(symbols):
        raise InvalidDistribution(f"alphabet has repeated symbols: {list(symbols)}")
    for s in symbols:
        if not isinstance(s, str):
            raise InvalidDistribution(f"state labels must be strings, got {s!r}")
    return symbols


class Cpt:
    """Conditional probability table of one vertex.

    ``table`` maps each parent-state tuple (ordered like ``parents``) to a
    probability vector over the vertex alphabet. A source vertex has the single
    row keyed by ``()``, its initial distribution.
    """

    __slots__ = ("vertex", "parents", "table")

    def __init__(self, vertex: str, parents: Sequence[str], table: Mapping):
        self.vertex = vertex
        self.parents = tuple(parents)
        self.table = {tuple(k): tuple(v) for k, v in table.items()}

    def row(self, parent_states: Sequence[str]) -> tuple[Fraction, ...]:
        return self.table[tuple(parent_states)]

    def __eq__(self, other):
        if not isinstance(other, Cpt):
            return NotImplemented
        return (self.vertex, self.parents, self.table) == (other.vertex, other.parents, other.table)

    def __repr__(self):
        return f"Cpt({self.vertex!r}, parents={self.parents!r}, rows={len(self.table)})"


class BayesNet:
    """A DAG, one finite alphabet per vertex and one CPT per vertex.

    ``alphabets`` is either one sequence shared by every vertex or a mapping
    vertex -> sequence. Each entry of ``cpts`` may be a :class:`Cpt`, a mapping
    from parent-state tuples to rows, or (shorthand) a plain row for a source
    vertex / a list of rows in parent product order for other vertices.
    """

    def __init__(self, dag: Dag, alphabets, cpts: Mapping):
        self.dag = dag
        if isinstance(alphabets, Mapping):
            missing = set(dag.vertices) - set(alphabets)
            if missing:
                raise DimensionMismatch(f"no alphabet for vertices {sorted(missing)}")
            self.alphabets = {v: make_alphabet(alphabets[v]) for v in dag.vertices}
        else:
            shared = make_alphabet(alphabets)
            self.alphabets = {v: shared for v in dag.vertices}
        for v in cpts:
            if v not in self.alphabets:
                raise UnknownVertex(v)
        self.cpts = {}
        for v in dag.vertices:
            if v not in cpts:
                raise DimensionMismatch(f"no CPT for vertex {v!r}")
            self.cpts[v] = self._normalise_cpt(v, cpts[v])

    def _normalise_cpt(self, v, spec) -> Cpt:
        parents = self.dag.parents(v)
        size = len(self.alphabets[v])
        keys = list(self.parent_states(v))
        if isinstance(spec, Cpt):
            if spec.parents != parents:
                raise DimensionMismatch(
                    f"CPT of {v!r} lists parents {list(spec.parents)}, DAG has {list(parents)}"
                )
            raw = spec.table
        elif isinstance(spec, Mapping):
            raw = {}
            for k, row in spec.items():
                k = (k,) if isinstance(k, str) and len(parents) == 1 else tuple(k)
                raw[k] = row
        elif not parents:
            raw = {(): spec}
        else:
            spec = list(spec)
            if len(spec) != len(keys):
                raise DimensionMismatch(f"CPT of {v!r} needs {len(keys)} rows, got {len(spec)}")
            raw = dict(zip(keys, spec))
        if set(raw) != set(keys):
            extra = [k for k in raw if k not in set(keys)]
            missing = [k for k in keys if k not in raw]
            raise DimensionMismatch(
                f"CPT of {v!r}: missing rows {missing[:3]}, unexpected rows {extra[:3]}"
            )
        table = {}
        for k in keys:
            try:
                table[k] = probability_vector(raw[k], size)
            except (InvalidDistribution, DimensionMismatch) as exc:
                raise type(exc)(f"CPT of {v!r}, row {list(k)}: {exc}") from None
        return Cpt(v, parents, table)

    def parent_states(self, v: str):
        return itertools.product(*(self.alphabets[p] for p in self.dag.parents(v)))

    @property
    def vertices(self) -> tuple[str, ...]:
        return self.dag.vertices

    @property
    def sources(self) -> tuple[str, ...]:
        return self.dag.sources

    @property
    def shared_alphabet(self) -> Optional[tuple[str, ...]]:
        alphas = set(self.alphabets.values())
        return next(iter(alphas)) if len(alphas) == 1 else None

    def initial(self) -> dict:
        return {s: self.cpts[s].row(()) for s in self.sources}

    def size(self) -> int:
        return math.prod(len(self.alphabets[v]) for v in self.vertices)

    def __eq__(self, other):
        if not isinstance(other, BayesNet):
            return NotImplemented
        return (self.dag, self.alphabets, self.cpts) == (other.dag, other.alphabets, other.cpts)

    def __repr__(self):
        return f"BayesNet({self.dag!r}, sizes={[len(self.alphabets[v]) for v in self.vertices]})"


class JointTable:
    """Exact probability mass function over full assignments of ``scope``.

    Dense: every assignment of the product space has an entry (possibly 0).
    Keys are symbol tuples ordered like ``scope``.
    """

    def __init__(self, scope: Sequence[str], alphabets: Mapping, mass: Mapping, check: bool = True):
        self.scope = tuple(scope)
        self.alphabets = {v: tuple(alphabets[v]) for v in self.scope}
        self._pos = {v: i for i, v in enumerate(self.scope)}
        self.mass = {}
        for key in itertools.product(*(self.alphabets[v] for v in self.scope)):
            self.mass[key] = Fraction(mass.get(key, 0))
        if check:
            unknown = set(mass) - set(self.mass)
            if unknown:
                raise UnknownSymbol(f"assignments outside the product space: {sorted(unknown)[:3]}")
            if any(p < 0 for p in self.mass.values()):
                raise InvalidDistribution("negative mass")
            if sum(self.mass.values()) != 1:
                raise InvalidDistribution(f"total mass {sum(self.mass.values())} is not 1")
        self._marginals = {}

    def __getitem__(self, key):
        return self.mass[tuple(key)]

    def __len__(self):
        return len(self.mass)

    def __eq__(self, other):
        if not isinstance(other, JointTable):
            return NotImplemented
        return self.scope == other.scope and self.alphabets == other.alphabets and self.mass == other.mass

    def __repr__(self):
        return f"JointTable(scope={self.scope}, entries={len(self.mass)})"

    def total(self) -> Fraction:
        return sum(self.mass.values(), Fraction(0))

    def items(self):
        return self.mass.items()

    def _marginal_mass(self, sub: tuple) -> dict:
        if sub not in self._marginals:
            idx = [self._pos[v] for v in sub]
            out = dict.fromkeys(itertools.product(*(self.alphabets[v] for v in sub)), Fraction(0))
            for key, p in self.mass.items():
                if p:
                    k = tuple(key[i] for i in idx)
                    out[k] += p
            self._marginals[sub] = out
        return self._marginals[sub]

    def prob(self, event: Mapping) -> Fraction:
        """Probability of the cylinder event ``{X_v in event[v]}``.

        Each value of ``event`` is a single symbol or a collection of allowed
        symbols.
        """
        allowed = {}
        for v, val in event.items():
            if v not in self._pos:
                raise UnknownVertex(v)
            vals = {val} if isinstance(val, str) else set(val)
            bad = vals - set(self.alphabets[v])
            if bad:
                raise UnknownSymbol(f"symbols {sorted(bad)} not in alphabet of {v!r}")
            allowed[v] = vals
        sub = tuple(v for v in self.scope if v in allowed)
        table = self._marginal_mass(sub)
        choices = [[a for a in self.alphabets[v] if a in allowed[v]] for v in sub]
        return sum((table[k] for k in itertools.product(*choices)), Fraction(0))


def joint(net: BayesNet, max_entries: int = DEFAULT_MAX_ENTRIES) -> JointTable:
    """Product of the CPT entries selected by each full assignment."""
    size = net.size()
    if size > max_entries:
        raise ModelTooLarge(f"joint table would have {size} entries (budget {max_entries})")
    vs = net.vertices
    pos = {v: i for i, v in enumerate(vs)}
    plan = [(pos[v], [pos[p] for p in net.dag.parents(v)], net.cpts[v].table, net.alphabets[v]) for v in vs]
    sym_index = {v: {a: i for i, a in enumerate(net.alphabets[v])} for v in vs}
    mass = {}
    for key in itertools.product(*(net.alphabets[v] for v in vs)):
        p = Fraction(1)
        for (i, pidx, table, _), v in zip(plan, vs):
            p *= table[tuple(key[j] for j in pidx)][sym_index[v][key[i]]]
            if not p:
                break
        mass[key] = p
    return JointTable(vs, net.alphabets, mass, check=False)


def marginal(table: JointTable, subset: Iterable[str]) -> JointTable:
    subset = set(subset)
    for v in subset:
        if v not in table._pos:
            raise UnknownVertex(v)
    sub = tuple(v for v in table.scope if v in subset)
    return JointTable(sub, table.alphabets, table._marginal_mass(sub), check=False)


def conditional(table: JointTable, target: Mapping, given: Mapping) -> Optional[Fraction]:
    """P(target | given), or ``None`` (undefined) when the conditioning event has mass 0."""
    if set(target) & set(given):
        raise OverlappingSets("target and given must concern disjoint vertices")
    den = table.prob(given)
    if den == 0:
        return None
    return table.prob({**given, **target}) / den


def has_full_support(net: BayesNet, max_entries: int = DEFAULT_MAX_ENTRIES) -> bool:
    return all(p > 0 for p in joint(net, max_entries).mass.values())


def with_initial(net: BayesNet, alpha: Mapping) -> BayesNet:
    """Copy of ``net`` whose source rows are replaced by ``alpha``.

    ``alpha`` maps source vertices to a probability vector (sequence in
    alphabet order, or mapping symbol -> probability). Sources not mentioned
    keep their current distribution.
    """
    cpts = dict(net.cpts)
    for s, vec in alpha.items():
        if s not in net.alphabets:
            raise UnknownVertex(s)
        if net.dag.parents(s):
            raise DimensionMismatch(f"{s!r} is not a source vertex")
        alphabet = net.alphabets[s]
        if isinstance(vec, Mapping):
            unknown = set(vec) - set(alphabet)
            if unknown:
                raise UnknownSymbol(f"symbols {sorted(unknown)} not in alphabet of {s!r}")
            vec = [vec.get(a, 0) for a in alphabet]
        try:
            row = probability_vector(vec, len(alphabet))
        except DimensionMismatch as exc:
            raise DimensionMismatch(f"initial distribution of {s!r}: {exc}") from None
        cpts[s] = Cpt(s, (), {(): row})
    return BayesNet(net.dag, net.alphabets, cpts)


def from_joint(table: JointTable, dag: Dag) -> BayesNet:
    """Fit CPTs to ``table`` as conditionals given parents.

    Rows whose parent configuration has zero mass are filled with the uniform
    distribution (any choice gives the same joint).
    """
    cpts = {}
    for v in dag.vertices:
        parents = dag.parents(v)
        rows = {}
        for key in itertools.product(*(table.alphabets[p] for p in parents)):
            given = dict(zip(parents, key))
            den = table.prob(given)
            if den == 0:
                rows[key] = uniform(table.alphabets[v])
            else:
                rows[key] = tuple(table.prob({**given, v: a}) / den for a in table.alphabets[v])
        cpts[v] = rows
    return BayesNet(dag, {v: table.alphabets[v] for v in dag.vertices}, cpts)


def _assign(vs, key):
    return dict(zip(vs, key))


def factorizes_over(table: JointTable, dag: Dag) -> CheckReport:
    """Decide whether ``table`` factorises over ``dag`` (local Markov form).

    For every vertex v and every assignment b of nd*(v) whose nd(v) part has
    positive mass, checks P(nd*=b) P(pa=b) == P(pa*=b) P(nd=b).
    """
    t0 = time.perf_counter()
    if set(table.scope) != set(dag.vertices):
        raise DimensionMismatch("joint scope and DAG vertices differ")
    checked = 0
    for v in dag.vertices:
        nd = dag.sort(dag.non_descendants(v))
        nd_star = dag.sort(set(nd) | {v})
        pa = dag.parents(v)
        for key in itertools.product(*(table.alphabets[u] for u in nd_star)):
            b = _assign(nd_star, key)
            b_nd = {u: b[u] for u in nd}
            p_nd = table.prob(b_nd)
            if p_nd == 0:
                continue
            checked += 1
            b_pa = {u: b[u] for u in pa}
            lhs = table.prob(b) * table.prob(b_pa)
            rhs = table.prob({**b_pa, v: b[v]}) * p_nd
            if lhs != rhs:
                return CheckReport(
                    "Factorisation",
                    Verdict.FAILS,
                    witness={
                        "vertex": v,
                        "assignment": b,
                        "lhs": lhs,
                        "rhs": rhs,
                        "P(nd*)": table.prob(b),
                        "P(pa)": table.prob(b_pa),
                        "P(pa*)": table.prob({**b_pa, v: b[v]}),
                        "P(nd)": p_nd,
                    },
                    certificate="P(X_v | X_nd(v)) differs from P(X_v | X_pa(v))",
                    details={"instances_checked": checked},
                    elapsed=time.perf_counter() - t0,
                )
    return CheckReport(
        "Factorisation",
        Verdict.HOLDS,
        certificate="local Markov property verified at every vertex",
        details={"instances_checked": checked},
        elapsed=time.perf_counter() - t0,
    )


def _triples(vertices, exhaustive: bool, samples: int, rng: random.Random):
    n = len(vertices)
    if exhaustive:
        labels = itertools.product(range(4), repeat=n)
    else:
        labels = (tuple(rng.randrange(4) for _ in range(n)) for _ in range(samples))
    for lab in labels:
        a = tuple(v for v, x in zip(vertices, lab) if x == 1)
        b = tuple(v for v, x in zip(vertices, lab) if x == 2)
        s = tuple(v for v, x in zip(vertices, lab) if x == 3)
        # symmetric in a/b: keep the ordering whose first vertex comes first
        if a and b and vertices.index(a[0]) < vertices.index(b[0]):
            yield a, b, s


def conditionally_independent(table: JointTable, a, b, s) -> Optional[dict]:
    """Return None when X_a and X_b are independent given X_s, else a witness."""
    alph = table.alphabets
    for ks in itertools.product(*(alph[v] for v in s)):
        es = _assign(s, ks)
        p_s = table.prob(es)
        if p_s == 0:
            continue
        for ka in itertools.product(*(alph[v] for v in a)):
            ea = _assign(a, ka)
            p_as = table.prob({**ea, **es})
            for kb in itertools.product(*(alph[v] for v in b)):
                eb = _assign(b, kb)
                lhs = table.prob({**ea, **eb, **es}) * p_s
                rhs = p_as * table.prob({**eb, **es})
                if lhs != rhs:
                    return {"A": ea, "B": eb, "S": es, "lhs": lhs, "rhs": rhs}
    return None


def verify_global_markov(
    net: BayesNet,
    exhaustive_max_vertices: int = 6,
    samples: int = 500,
    seed: int = 0,
    max_entries: int = DEFAULT_MAX_ENTRIES,
) -> CheckReport:
    """Check X_A _||_ X_B | X_S on the exact joint for d-separated triples.

    All disjoint triples are enumerated when the DAG has at most
    ``exhaustive_max_vertices`` vertices; otherwise ``samples`` random triples
    are drawn (seeded).
    """
    t0 = time.perf_counter()
    table = joint(net, max_entries)
    vs = net.vertices
    exhaustive = len(vs) <= exhaustive_max_vertices
    separated = tested = 0
    for a, b, s in _triples(vs, exhaustive, samples, random.Random(seed)):
        tested += 1
        if not d_separates(net.dag, a, b, s):
            continue
        separated += 1
        bad = conditionally_independent(table, a, b, s)
        if bad is not None:
            return CheckReport(
                "GlobalMarkov",
                Verdict.FAILS,
                witness=bad,
                certificate="d-separated triple without conditional independence",
                details={"triples": tested, "separated": separated, "exhaustive": exhaustive},
                elapsed=time.perf_counter() - t0,
            )
    return CheckReport(
        "GlobalMarkov",
        Verdict.HOLDS,
        certificate="every d-separated triple is conditionally independent",
        details={"triples": tested, "separated": separated, "exhaustive": exhaustive},
        elapsed=time.perf_counter() - t0,
    )
