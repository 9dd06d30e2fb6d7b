"""Independent oracles and fixtures for the test suite.

Everything here is computed with plain dicts and loops, without the
package's joint/pushforward/checker code, so tests can compare the two.
"""

from __future__ import annotations

import itertools
import random
from fractions import Fraction as F

from bnlump import BayesNet, Dag, Lumping
from bnlump.markov import StochasticMatrix

A3 = ("a1", "a2", "a3")

P_NOT_D1 = [[F(1, 2), F(1, 4), F(1, 4)], [F(1, 3), F(1, 3), F(1, 3)], [F(0), F(1, 2), F(1, 2)]]
P_KS = [[F(1, 2), F(1, 4), F(1, 4)], [F(1, 4), F(1, 2), F(1, 4)], [F(0), F(1, 2), F(1, 2)]]
P_CYCLE = [[0, F(1, 2), F(1, 2), 0], [0, 0, 0, 1], [0, 0, 0, 1], [1, 0, 0, 0]]
P_ABSORB = [[F(1, 2), F(1, 4), F(1, 4)], [F(1, 3), F(1, 3), F(1, 3)], [0, 0, 1]]


def chain(n):
    vs = [f"v{i + 1}" for i in range(n)]
    return Dag(vs, list(zip(vs, vs[1:])))


def fork():
    return Dag(["v1", "v2", "v3"], [("v2", "v1"), ("v2", "v3")])


def collider():
    return Dag(["v1", "v2", "v3"], [("v2", "v1"), ("v3", "v1")])


def merge12(dag, alphabet=A3):
    return Lumping.from_blocks(alphabet, [("a1", "a2")], dag.vertices)


def chain_net(rows, initial, n=3, alphabet=A3):
    dag = chain(n)
    cpts = {dag.vertices[0]: list(initial)}
    for v in dag.vertices[1:]:
        cpts[v] = {(a,): r for a, r in zip(alphabet, rows)}
    return BayesNet(dag, alphabet, cpts)


def two_step(y=None):
    """Two-vertex chain; ``y`` selects initial (y, 1-y, 0), default uniform."""
    dag = chain(2)
    init = [F(1, 3)] * 3 if y is None else [F(y), 1 - F(y), F(0)]
    rows = {("a1",): [F(1, 2), F(1, 2), 0], ("a2",): [0, F(1, 2), F(1, 2)], ("a3",): [F(1, 2), F(1, 2), 0]}
    return BayesNet(dag, A3, {"v1": init, "v2": rows})


def matrix(rows, states=None):
    states = states or [f"a{i + 1}" for i in range(len(rows))]
    return StochasticMatrix(states, rows)


# ---------------------------------------------------------------------------
# oracles


def brute_joint(net) -> dict:
    """Full assignment tuple (dag order) -> probability, by direct products."""
    vs = net.dag.vertices
    out = {}
    for key in itertools.product(*(net.alphabets[v] for v in vs)):
        val = dict(zip(vs, key))
        p = F(1)
        for v in vs:
            pa = tuple(val[u] for u in net.dag.parents(v))
            row = net.cpts[v].table[pa]
            p *= row[net.alphabets[v].index(val[v])]
        out[key] = p
    return out


def brute_lumped(net, lump) -> dict:
    vs = net.dag.vertices
    out = {}
    for key, p in brute_joint(net).items():
        k = tuple(lump.map(v)[a] for v, a in zip(vs, key))
        out[k] = out.get(k, F(0)) + p
    return out


def prob(table: dict, vs, event: dict) -> F:
    idx = [vs.index(u) for u in event]
    vals = list(event.values())
    return sum((p for k, p in table.items() if all(k[i] == b for i, b in zip(idx, vals))), F(0))


def fund_equ_violation(table: dict, dag, alph: dict):
    """First (v, w1, w2) violating the pairwise cross-product identity, or None.

    ``alph`` maps vertex -> target alphabet; ``table`` is keyed in dag order.
    Enumerates all pairs, not a pivot.
    """
    vs = list(dag.vertices)
    for v in vs:
        nd = [u for u in vs if u not in dag.descendants(v)]
        nd_star = nd  # includes v itself
        pa = dag.parents(v)
        assigns = [dict(zip(nd_star, k)) for k in itertools.product(*(alph[u] for u in nd_star))]
        for w1, w2 in itertools.product(assigns, repeat=2):
            if w1[v] != w2[v] or any(w1[u] != w2[u] for u in pa):
                continue
            u1 = {u: b for u, b in w1.items() if u != v}
            u2 = {u: b for u, b in w2.items() if u != v}
            lhs = prob(table, vs, w1) * prob(table, vs, u2)
            rhs = prob(table, vs, w2) * prob(table, vs, u1)
            if lhs != rhs:
                return v, w1, w2, lhs, rhs
    return None


def factorises(table: dict, dag, alph: dict) -> bool:
    """Local Markov check: P(x) == prod_v P(x_v | x_pa) wherever defined."""
    vs = list(dag.vertices)
    for key, p in table.items():
        val = dict(zip(vs, key))
        q = F(1)
        for v in vs:
            pa = {u: val[u] for u in dag.parents(v)}
            den = prob(table, vs, pa) if pa else F(1)
            if den == 0:
                q = F(0)
                break
            q *= prob(table, vs, {**pa, v: val[v]}) / den
        if q != p:
            return False
    return True


def with_sources(net, alpha: dict) -> BayesNet:
    cpts = {v: dict(net.cpts[v].table) for v in net.vertices}
    for s, vec in alpha.items():
        cpts[s] = {(): list(vec)}
    return BayesNet(net.dag, net.alphabets, cpts)


def brute_d3(net, lump) -> bool:
    """Cross-product identity over all pairs of deterministic initial states (non-source v)."""
    dag = net.dag
    vs = list(dag.vertices)
    alph = {v: lump.target_alphabet(v) for v in vs}
    tables = []
    for state in itertools.product(*(net.alphabets[s] for s in net.sources)):
        alpha = {s: [F(int(a == x)) for a in net.alphabets[s]] for s, x in zip(net.sources, state)}
        tables.append(brute_lumped(with_sources(net, alpha), lump))
    for v in vs:
        if not dag.parents(v):
            continue
        nd = [u for u in vs if u not in dag.descendants(v)]
        pa = dag.parents(v)
        assigns = [dict(zip(nd, k)) for k in itertools.product(*(alph[u] for u in nd))]
        for w1, w2 in itertools.product(assigns, repeat=2):
            if w1[v] != w2[v] or any(w1[u] != w2[u] for u in pa):
                continue
            u1 = {u: b for u, b in w1.items() if u != v}
            u2 = {u: b for u, b in w2.items() if u != v}
            for t1, t2 in itertools.product(tables, repeat=2):
                if prob(t1, vs, w1) * prob(t2, vs, u2) != prob(t2, vs, w2) * prob(t1, vs, u1):
                    return False
    return True


def brute_d2(net, lump) -> bool:
    """D2 by coefficient comparison.

    Every probability is a multilinear form in the source distributions, so
    each side of the identity is a multi-homogeneous polynomial of degree two
    per source. Such a polynomial vanishes on the product of simplices iff all
    its coefficients (monomials keyed by the per-source multiset of symbols)
    vanish.
    """
    dag = net.dag
    vs = list(dag.vertices)
    alph = {v: lump.target_alphabet(v) for v in vs}
    states = list(itertools.product(*(net.alphabets[s] for s in net.sources)))
    tables = []
    for state in states:
        alpha = {s: [F(int(a == x)) for a in net.alphabets[s]] for s, x in zip(net.sources, state)}
        tables.append(brute_lumped(with_sources(net, alpha), lump))
    for v in vs:
        nd = [u for u in vs if u not in dag.descendants(v)]
        pa = dag.parents(v)
        assigns = [dict(zip(nd, k)) for k in itertools.product(*(alph[u] for u in nd))]
        for w1, w2 in itertools.product(assigns, repeat=2):
            if w1[v] != w2[v] or any(w1[u] != w2[u] for u in pa):
                continue
            u1 = {u: b for u, b in w1.items() if u != v}
            u2 = {u: b for u, b in w2.items() if u != v}
            coeff = {}
            for (i, t1), (j, t2) in itertools.product(enumerate(tables), repeat=2):
                mono = tuple(tuple(sorted(pair)) for pair in zip(states[i], states[j]))
                c = prob(t1, vs, w1) * prob(t2, vs, u2) - prob(t1, vs, w2) * prob(t2, vs, u1)
                coeff[mono] = coeff.get(mono, F(0)) + c
            if any(coeff.values()):
                return False
    return True


def ks_holds(net, lump) -> bool:
    for v in net.vertices:
        pa = net.dag.parents(v)
        if not pa:
            continue
        seen = {}
        for key, row in net.cpts[v].table.items():
            img = tuple(lump.map(u)[a] for u, a in zip(pa, key))
            sums = tuple(sum((p for a, p in zip(net.alphabets[v], row) if lump.map(v)[a] == b), F(0))
                         for b in lump.target_alphabet(v))
            if seen.setdefault(img, sums) != sums:
                return False
    return True


# ---------------------------------------------------------------------------
# random instances


def random_lumping(net, rng: random.Random, shared: bool = True) -> Lumping:
    def part(alph):
        labels, k = [], 0
        for _ in alph:
            x = rng.randint(0, k)
            labels.append(x)
            k = max(k, x + 1)
        return tuple(labels)

    if shared and net.shared_alphabet is not None:
        lab = part(net.shared_alphabet)
        return Lumping.from_partition(net.alphabets, {v: lab for v in net.vertices})
    return Lumping.from_partition(net.alphabets, {v: part(net.alphabets[v]) for v in net.vertices})


def random_interior(k: int, rng: random.Random, den: int = 97) -> list:
    cuts = sorted(rng.sample(range(1, den), k - 1))
    return [F(b - a, den) for a, b in zip([0] + cuts, cuts + [den])]
