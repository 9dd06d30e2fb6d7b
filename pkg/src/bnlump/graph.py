"""Directed acyclic graphs and the vertex relatives the lumping results quantify over.

Vertices are opaque strings. Every deterministic output (orders, sets rendered as
tuples, witnesses) follows the declaration order of the vertices so reports are
reproducible.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional

from .errors import CycleDetected, InvalidGraph, OverlappingSets, UnknownVertex


class Dag:
    """An immutable finite DAG.

    Parameters
    ----------
    vertices:
        Vertex identifiers in declaration order.
    edges:
        Pairs ``(tail, head)``.

    Examples
    --------
    >>> g = Dag(["v1", "v2", "v3"], [("v1", "v2"), ("v2", "v3")])
    >>> g.parents("v3")
    ('v2',)
    >>> g.depth("v3")
    2
    """

    def __init__(self, vertices: Iterable[str], edges: Iterable[tuple[str, str]] = ()):
        vertices = tuple(vertices)
        if len(set(vertices)) != len(vertices):
            raise InvalidGraph("duplicate vertex identifiers")
        edge_list = [tuple(e) for e in edges]
        known = set(vertices)
        seen = set()
        for e in edge_list:
            if len(e) != 2:
                raise InvalidGraph(f"edge {e!r} is not a pair")
            tail, head = e
            for x in e:
                if x not in known:
                    raise UnknownVertex(x)
            if tail == head:
                raise InvalidGraph(f"self-loop at {tail!r}")
            if e in seen:
                raise InvalidGraph(f"duplicate edge {tail!r} -> {head!r}")
            seen.add(e)
        self._vertices = vertices
        self._edges = frozenset(edge_list)
        self._index = {v: i for i, v in enumerate(vertices)}
        parents = {v: [] for v in vertices}
        children = {v: [] for v in vertices}
        for tail, head in edge_list:
            parents[head].append(tail)
            children[tail].append(head)
        self._parents = {v: self._ordered(ps) for v, ps in parents.items()}
        self._children = {v: self._ordered(cs) for v, cs in children.items()}
        self._topo = self._kahn()

    def _ordered(self, vs: Iterable[str]) -> tuple[str, ...]:
        return tuple(sorted(set(vs), key=self._index.__getitem__))

    def _kahn(self) -> tuple[str, ...]:
        indeg = {v: len(self._parents[v]) for v in self._vertices}
        order = []
        # stable tie-break: always emit the earliest-declared ready vertex
        ready = [v for v in self._vertices if indeg[v] == 0]
        while ready:
            ready.sort(key=self._index.__getitem__)
            v = ready.pop(0)
            order.append(v)
            for c in self._children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        if len(order) != len(self._vertices):
            raise CycleDetected(self._find_cycle(set(self._vertices) - set(order)))
        return tuple(order)

    def _find_cycle(self, remaining: set) -> list[str]:
        start = min(remaining, key=self._index.__getitem__)
        path, pos = [], {}
        v = start
        while v not in pos:
            pos[v] = len(path)
            path.append(v)
            v = next(p for p in self._parents[v] if p in remaining)
        cycle = path[pos[v]:][::-1]
        return cycle + [cycle[0]]

    # basic accessors

    @property
    def vertices(self) -> tuple[str, ...]:
        return self._vertices

    @property
    def edges(self) -> frozenset:
        return self._edges

    def index(self, v: str) -> int:
        try:
            return self._index[v]
        except KeyError:
            raise UnknownVertex(v) from None

    def _check(self, v: str) -> None:
        if v not in self._index:
            raise UnknownVertex(v)

    def sort(self, vs: Iterable[str]) -> tuple[str, ...]:
        """Return ``vs`` as a tuple in declaration order."""
        vs = set(vs)
        for v in vs:
            self._check(v)
        return self._ordered(vs)

    def parents(self, v: str) -> tuple[str, ...]:
        self._check(v)
        return self._parents[v]

    def children(self, v: str) -> tuple[str, ...]:
        self._check(v)
        return self._children[v]

    def parents_of_set(self, vs: Iterable[str]) -> tuple[str, ...]:
        return self._ordered(p for v in vs for p in self.parents(v))

    def children_of_set(self, vs: Iterable[str]) -> tuple[str, ...]:
        return self._ordered(c for v in vs for c in self.children(v))

    def descendants(self, v: str) -> frozenset:
        return self._closure(v, self._children)

    def ancestors(self, v: str) -> frozenset:
        return self._closure(v, self._parents)

    def _closure(self, v, step):
        self._check(v)
        out, todo = set(), list(step[v])
        while todo:
            w = todo.pop()
            if w not in out:
                out.add(w)
                todo.extend(step[w])
        return frozenset(out)

    def non_descendants(self, v: str) -> frozenset:
        return frozenset(self._vertices) - self.descendants(v) - {v}

    @cached_property
    def sources(self) -> tuple[str, ...]:
        return tuple(v for v in self._vertices if not self._parents[v])

    @cached_property
    def sinks(self) -> tuple[str, ...]:
        return tuple(v for v in self._vertices if not self._children[v])

    @cached_property
    def _depths(self) -> dict:
        depth = {}
        for v in self._topo:
            ps = self._parents[v]
            depth[v] = 1 + max(depth[p] for p in ps) if ps else 0
        return depth

    def depth(self, v: str) -> int:
        self._check(v)
        return self._depths[v]

    def depth_of_set(self, vs: Iterable[str]) -> int:
        return max(self.depth(v) for v in vs)

    def induced_subgraph(self, vs: Iterable[str]) -> "Dag":
        keep = set(self.sort(vs))
        return Dag(
            [v for v in self._vertices if v in keep],
            [(a, b) for a, b in self._sorted_edges() if a in keep and b in keep],
        )

    def _sorted_edges(self):
        return sorted(self._edges, key=lambda e: (self._index[e[0]], self._index[e[1]]))

    def is_connected(self) -> bool:
        if not self._vertices:
            return True
        adj = {v: set(self._parents[v]) | set(self._children[v]) for v in self._vertices}
        seen, todo = set(), [self._vertices[0]]
        while todo:
            v = todo.pop()
            if v not in seen:
                seen.add(v)
                todo.extend(adj[v])
        return len(seen) == len(self._vertices)

    def to_dot(self, name: str = "G") -> str:
        lines = [f"digraph {name} {{"]
        for v in self._vertices:
            lines.append(f'  "{v}" [label="{v}"];')
        for a, b in self._sorted_edges():
            lines.append(f'  "{a}" -> "{b}";')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def __eq__(self, other):
        if not isinstance(other, Dag):
            return NotImplemented
        return self._vertices == other._vertices and self._edges == other._edges

    def __hash__(self):
        return hash((self._vertices, self._edges))

    def __repr__(self):
        es = ", ".join(f"{a}->{b}" for a, b in self._sorted_edges())
        return f"Dag([{', '.join(self._vertices)}], [{es}])"


@dataclass(frozen=True)
class VertexSets:
    vertex: str
    parents: frozenset
    parents2: frozenset
    descendants: frozenset
    direct_descendants: frozenset
    non_descendants: frozenset
    predecessors: frozenset
    depth: int

    @property
    def parents_star(self) -> frozenset:
        return self.parents | {self.vertex}

    @property
    def non_descendants_star(self) -> frozenset:
        return self.non_descendants | {self.vertex}

    @property
    def predecessors_star(self) -> frozenset:
        return self.predecessors | {self.vertex}

    @property
    def descendants_star(self) -> frozenset:
        return self.descendants | {self.vertex}


def topological_order(dag: Dag) -> list[str]:
    """Kahn order with ties broken by declaration order."""
    return list(dag._topo)


def relatives(dag: Dag, v: str) -> VertexSets:
    pa = frozenset(dag.parents(v))
    return VertexSets(
        vertex=v,
        parents=pa,
        parents2=frozenset(dag.parents_of_set(pa)),
        descendants=dag.descendants(v),
        direct_descendants=frozenset(dag.children(v)),
        non_descendants=dag.non_descendants(v),
        predecessors=dag.ancestors(v),
        depth=dag.depth(v),
    )


def d_separates(dag: Dag, a: Iterable[str], b: Iterable[str], s: Iterable[str]) -> bool:
    """Return True iff ``s`` d-separates ``a`` from ``b``.

    Uses the reachability ("Bayes ball") formulation: walk trails from ``a``
    tracking the direction of arrival; a trail passes a non-collider only when
    it is unobserved and a collider only when the collider or one of its
    descendants is observed.
    """
    a, b, s = set(a), set(b), set(s)
    for v in a | b | s:
        dag._check(v)
    if a & b or a & s or b & s:
        raise OverlappingSets("a, b and s must be pairwise disjoint")
    if not a or not b:
        return True
    # vertices that are in s or have a descendant in s
    opens_collider = set()
    todo = list(s)
    while todo:
        w = todo.pop()
        if w not in opens_collider:
            opens_collider.add(w)
            todo.extend(dag.parents(w))
    UP, DOWN = 0, 1  # UP: arrived from a child, DOWN: arrived from a parent
    visited = set()
    queue = deque((x, UP) for x in a)
    while queue:
        v, direction = queue.popleft()
        if (v, direction) in visited:
            continue
        visited.add((v, direction))
        if v not in s and v in b:
            return False
        if direction == UP and v not in s:
            queue.extend((p, UP) for p in dag.parents(v))
            queue.extend((c, DOWN) for c in dag.children(v))
        elif direction == DOWN:
            if v not in s:
                queue.extend((c, DOWN) for c in dag.children(v))
            if v in opens_collider:
                queue.extend((p, UP) for p in dag.parents(v))
    return True


@dataclass(frozen=True)
class StructuralProfile:
    path_union: bool
    # per vertex: dde(pa(v)) == {v}; None for sources
    exclusive_parents: dict
    # per vertex: dde(pa^2(v)) subset of pa(v); None when depth < 2
    grandparents_feed_parents: dict
    many_non_d1s_applicable: bool
    many_non_d1s_triple: Optional[tuple]

    @property
    def structured_d1_applicable(self) -> bool:
        return all(x is not False for x in self.exclusive_parents.values()) and all(
            x is not False for x in self.grandparents_feed_parents.values()
        )


def _chain_or_fork_triples(dag: Dag):
    for trio in itertools.combinations(dag.vertices, 3):
        sub = dag.induced_subgraph(trio)
        if len(sub.edges) != 2:
            continue
        # two edges on three vertices are always connected; exclude the collider
        if any(len(sub.parents(x)) == 2 for x in trio):
            continue
        yield trio


def structural_profile(dag: Dag) -> StructuralProfile:
    path_union = all(len(dag.parents(v)) <= 1 and len(dag.children(v)) <= 1 for v in dag.vertices)
    exclusive, feed = {}, {}
    for v in dag.vertices:
        pa = dag.parents(v)
        exclusive[v] = None if not pa else set(dag.children_of_set(pa)) == {v}
        if dag.depth(v) >= 2:
            pa2 = dag.parents_of_set(pa)
            feed[v] = set(dag.children_of_set(pa2)) <= set(pa)
        else:
            feed[v] = None
    triple = None
    if len(dag.vertices) >= 3 and dag.is_connected():
        triple = next(_chain_or_fork_triples(dag), None)
    return StructuralProfile(
        path_union=path_union,
        exclusive_parents=exclusive,
        grandparents_feed_parents=feed,
        many_non_d1s_applicable=triple is not None,
        many_non_d1s_triple=triple,
    )


def skeleton_and_immoralities(dag: Dag) -> tuple[frozenset, frozenset]:
    """Undirected skeleton and the set of v-structures ``(a, c, b)`` with a, b non-adjacent.

    Tails of each v-structure are sorted by name so the output does not depend
    on declaration order.
    """
    skeleton = frozenset(frozenset(e) for e in dag.edges)
    vs = set()
    for c in dag.vertices:
        for x, y in itertools.combinations(dag.parents(c), 2):
            if frozenset((x, y)) not in skeleton:
                x, y = sorted((x, y))
                vs.add((x, c, y))
    return skeleton, frozenset(vs)


def markov_equivalent(g1: Dag, g2: Dag) -> bool:
    if set(g1.vertices) != set(g2.vertices):
        return False
    return skeleton_and_immoralities(g1) == skeleton_and_immoralities(g2)
