"""Decision procedures for the lumping regimes D1, D2, D3 and the related conditions.

D1  the lumped vector factorises over the same DAG (for the net's own initial
    distribution).
D2  D1 for every initial distribution of the source vertices.
D3  D2 with lumped non-source CPDs that do not depend on the initial distribution.

All identities are checked in cross-multiplied form, so events of probability
zero never cause a division. Within a fixed vertex v and a fixed value c of
(U_v, U_pa(v)), the identity

    P(U_nd*(v) = w1) P(U_nd(v) = u2) == P(U_nd*(v) = w2) P(U_nd(v) = u1)

for all pairs w1, w2 extending c says the points (P(U_nd* = w), P(U_nd = u))
are collinear with the origin. That is checked against a pivot: the first w
(in enumeration order) with P(U_nd = u) > 0. The pivot and the first point off
its line form the lexicographically smallest violating pair, which is what the
witnesses report.
"""

from __future__ import annotations

import itertools
import math
import time
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    IncompatibleLumping,
    InternalInconsistency,
    ModelTooLarge,
    StructuralPreconditionViolated,
)
from .graph import structural_profile
from .lumping import Lumping, class_mass, pushforward
from .model import (
    DEFAULT_MAX_ENTRIES,
    BayesNet,
    JointTable,
    has_full_support,
    joint,
    point_mass,
    with_initial,
)
from .report import CheckReport, Verdict

DEFAULT_GRID_BUDGET = 100_000

D2_GRID_NOTE = (
    "each side of the identity is a product of two probabilities that are linear in every "
    "source distribution, so after eliminating the last coordinate of each source simplex the "
    "difference is a polynomial of degree <= 2 in each free coordinate; vanishing on a "
    "3-point grid per coordinate implies vanishing identically"
)


def _compatible(net: BayesNet, lump: Lumping) -> None:
    lump.check_compatible(net.alphabets)


def _positive_cpts(net: BayesNet) -> bool:
    return all(p > 0 for v in net.vertices if net.dag.parents(v) for row in net.cpts[v].table.values() for p in row)


# ---------------------------------------------------------------------------
# lumped tables as numpy object arrays


def lumped_array(net: BayesNet, lump: Lumping, max_entries: int = DEFAULT_MAX_ENTRIES) -> np.ndarray:
    """Pushforward joint as an object array indexed like the target alphabets."""
    table = pushforward(joint(net, max_entries), lump)
    return _table_to_array(table, lump)


def _table_to_array(table: JointTable, lump: Lumping) -> np.ndarray:
    vs = table.scope
    idx = [{b: i for i, b in enumerate(lump.target_alphabet(v))} for v in vs]
    arr = np.empty([len(lump.target_alphabet(v)) for v in vs], dtype=object)
    for key, p in table.items():
        arr[tuple(m[b] for m, b in zip(idx, key))] = p
    return arr


def initial_states(net: BayesNet) -> list[tuple[str, ...]]:
    """Deterministic initial states: assignments of the source vertices, product order."""
    return list(itertools.product(*(net.alphabets[s] for s in net.sources)))


def per_initial_state_arrays(net: BayesNet, lump: Lumping,
                             max_entries: int = DEFAULT_MAX_ENTRIES) -> np.ndarray:
    """Lumped joints for every deterministic initial state, stacked on axis 0.

    One pass over the full state space: each assignment contributes the product
    of its non-source CPT entries to the table of its source restriction.
    """
    vs = net.vertices
    sources = net.sources
    n_init = math.prod(len(net.alphabets[s]) for s in sources)
    tdims = [len(lump.target_alphabet(v)) for v in vs]
    if net.size() > max_entries or n_init * math.prod(tdims) > max_entries:
        raise ModelTooLarge(
            f"per-initial-state tables need {net.size()} + {n_init * math.prod(tdims)} entries "
            f"(budget {max_entries})"
        )
    pos = {v: i for i, v in enumerate(vs)}
    src_pos = [pos[s] for s in sources]
    src_index = {k: i for i, k in enumerate(initial_states(net))}
    plan = []
    for v in vs:
        if net.dag.parents(v):
            sym = {a: i for i, a in enumerate(net.alphabets[v])}
            plan.append((pos[v], [pos[p] for p in net.dag.parents(v)], net.cpts[v].table, sym))
    tmaps = [{a: i for i, a in enumerate(lump.target_alphabet(v))} for v in vs]
    fmaps = [lump.map(v) for v in vs]
    out = np.empty([n_init] + tdims, dtype=object)
    out.fill(Fraction(0))
    for key in itertools.product(*(net.alphabets[v] for v in vs)):
        p = Fraction(1)
        for i, pidx, table, sym in plan:
            p *= table[tuple(key[j] for j in pidx)][sym[key[i]]]
            if not p:
                break
        if p:
            s = src_index[tuple(key[j] for j in src_pos)]
            out[(s,) + tuple(t[f[a]] for t, f, a in zip(tmaps, fmaps, key))] += p
    return out


class _Layout:
    """Axis bookkeeping for one vertex v: groups (b_v, b_pa) and the rest of nd(v)."""

    def __init__(self, net: BayesNet, lump: Lumping, v: str):
        dag = net.dag
        self.v = v
        self.pa = dag.parents(v)
        nd = dag.non_descendants(v)
        self.rest = tuple(u for u in dag.vertices if u in nd and u not in self.pa)
        self.nd_star = dag.sort(set(nd) | {v})
        self.desc_axes = tuple(i for i, u in enumerate(dag.vertices) if u in dag.descendants(v))
        kept = [u for u in dag.vertices if u not in dag.descendants(v)]
        self.order = [kept.index(u) for u in (v,) + self.pa + self.rest]
        self.alph = {u: lump.target_alphabet(u) for u in dag.vertices}
        self.groups = list(itertools.product(self.alph[v], *(self.alph[u] for u in self.pa)))
        self.rest_states = list(itertools.product(*(self.alph[u] for u in self.rest)))
        self.n_v = len(self.alph[v])

    def split(self, arr: np.ndarray):
        """(N, *target dims) -> X, Y of shape (N, groups, rest states)."""
        n = arr.shape[0]
        m = arr.sum(axis=tuple(a + 1 for a in self.desc_axes)) if self.desc_axes else arr
        m = np.transpose(m, [0] + [o + 1 for o in self.order])
        n_rest = len(self.rest_states)
        x = m.reshape(n, len(self.groups), n_rest)
        y = m.sum(axis=1).reshape(n, 1, -1, n_rest)
        y = np.broadcast_to(y, (n, self.n_v, y.shape[2], n_rest)).reshape(n, len(self.groups), n_rest)
        return x, y

    def assignment(self, g: int, r: int) -> dict:
        vals = self.groups[g] + self.rest_states[r]
        named = dict(zip((self.v,) + self.pa + self.rest, vals))
        return {u: named[u] for u in self.nd_star}

    def singleton_groups(self, lump: Lumping) -> np.ndarray:
        mask = np.zeros(len(self.groups), dtype=bool)
        for g, (bv, *bpa) in enumerate(self.groups):
            mask[g] = all(len(lump.preimage(u, b)) == 1 for u, b in zip(self.pa, bpa))
        return mask


def _first_violation(x: np.ndarray, y: np.ndarray, skip: Optional[np.ndarray] = None):
    """Return (n, g, pivot, w) for the first non-collinear point, or None.

    x, y have shape (N, G, W); ``skip`` masks groups (shape (G,)).
    """
    positive = (y > 0).astype(bool)
    has = positive.any(axis=-1)
    piv = positive.argmax(axis=-1)
    xp = np.take_along_axis(x, piv[..., None], axis=-1)
    yp = np.take_along_axis(y, piv[..., None], axis=-1)
    bad = (x * yp != xp * y).astype(bool)
    bad &= has[..., None]
    if skip is not None:
        bad &= ~skip[None, :, None]
    if not bad.any():
        return None
    n, g, w = (int(i) for i in np.argwhere(bad)[0])
    return n, g, int(piv[n, g]), w


# ---------------------------------------------------------------------------
# independent re-evaluation of the fundamental identity


def _lumped_table(net, lump, alpha):
    src = net if alpha is None else with_initial(net, alpha)
    return pushforward(joint(src), lump)


def fund_equ_sides(net: BayesNet, lump: Lumping, v: str, w1: dict, w2: dict,
                   initial1=None, initial2=None) -> tuple[Fraction, Fraction]:
    """Both sides of P1(U_nd*=w1) P2(U_nd=u2) == P2(U_nd*=w2) P1(U_nd=u1).

    ``initial1``/``initial2`` replace the source distributions (None keeps the
    net's own). Computed from scratch through the joint and pushforward.
    """
    t1 = _lumped_table(net, lump, initial1)
    t2 = t1 if initial2 is initial1 else _lumped_table(net, lump, initial2)
    u1 = {u: b for u, b in w1.items() if u != v}
    u2 = {u: b for u, b in w2.items() if u != v}
    return t1.prob(w1) * t2.prob(u2), t2.prob(w2) * t1.prob(u1)


def _fund_witness(layout, x, y, n_idx, g, p, w, extra=None):
    w1 = layout.assignment(g, p)
    w2 = layout.assignment(g, w)
    xn, yn = x[n_idx], y[n_idx]
    wit = {
        "vertex": layout.v,
        "w1": w1,
        "w2": w2,
        "P(U_nd*=w1)": xn[g, p],
        "P(U_nd=u2)": yn[g, w],
        "P(U_nd*=w2)": xn[g, w],
        "P(U_nd=u1)": yn[g, p],
        "lhs": xn[g, p] * yn[g, w],
        "rhs": xn[g, w] * yn[g, p],
    }
    if extra:
        wit.update(extra)
    return wit


# ---------------------------------------------------------------------------
# D1


def check_d1(net: BayesNet, lump: Lumping, skip_singletons: bool = True,
             max_entries: int = DEFAULT_MAX_ENTRIES) -> CheckReport:
    """Decide D1 by the pairwise cross-product identity on the pushforward joint.

    Groups whose parent tuple has a singleton preimage are skipped when
    ``skip_singletons`` is set: there the identity holds automatically.
    """
    t0 = time.perf_counter()
    _compatible(net, lump)
    arr = lumped_array(net, lump, max_entries)[None, ...]
    checked = skipped = 0
    for v in net.vertices:
        lay = _Layout(net, lump, v)
        x, y = lay.split(arr)
        skip = lay.singleton_groups(lump) if skip_singletons else None
        if skip is not None:
            skipped += int(skip.sum())
        checked += len(lay.groups) - (int(skip.sum()) if skip is not None else 0)
        hit = _first_violation(x, y, skip)
        if hit is not None:
            n, g, p, w = hit
            return CheckReport(
                "D1",
                Verdict.FAILS,
                witness=_fund_witness(lay, x, y, n, g, p, w),
                certificate="pairwise identity violated on the lumped joint: lumped vector does not "
                "factorise over the DAG",
                details={"groups_checked": checked, "groups_skipped_singleton": skipped},
                elapsed=time.perf_counter() - t0,
            )
    return CheckReport(
        "D1",
        Verdict.HOLDS,
        certificate="pairwise identity verified for every vertex (exhaustive)",
        details={"groups_checked": checked, "groups_skipped_singleton": skipped},
        elapsed=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# D3


def _initial_as_alpha(net: BayesNet, state: Sequence[str]) -> dict:
    return {s: point_mass(net.alphabets[s], a) for s, a in zip(net.sources, state)}


def check_d3(net: BayesNet, lump: Lumping, max_entries: int = DEFAULT_MAX_ENTRIES) -> CheckReport:
    """Decide D3 through the identity over pairs of deterministic initial states.

    For every non-source vertex v, the points (P_a(U_nd*=w), P_a(U_nd=u)) over
    all initial states a and all w sharing the same (b_v, b_pa) must be
    collinear with the origin. Source vertices are excluded: their CPDs are the
    initial distributions, which D3 allows to vary.
    """
    t0 = time.perf_counter()
    _compatible(net, lump)
    per_state = per_initial_state_arrays(net, lump, max_entries)
    states = initial_states(net)
    n_init = len(states)
    details = {
        "initial_states": n_init,
        "initial_state_pairs": n_init * n_init,
        "full_support": has_full_support(net, max_entries),
        "positive_cpts": _positive_cpts(net),
    }
    checked = 0
    for v in net.vertices:
        if not net.dag.parents(v):
            continue
        lay = _Layout(net, lump, v)
        x, y = lay.split(per_state)
        n_rest = x.shape[2]
        # merge (initial state, rest) into one axis, initial state major
        xm = np.transpose(x, (1, 0, 2)).reshape(1, x.shape[1], n_init * n_rest)
        ym = np.transpose(y, (1, 0, 2)).reshape(1, y.shape[1], n_init * n_rest)
        checked += len(lay.groups)
        hit = _first_violation(xm, ym)
        if hit is not None:
            _, g, p, w = hit
            (s1, r1), (s2, r2) = divmod(p, n_rest), divmod(w, n_rest)
            w1, w2 = lay.assignment(g, r1), lay.assignment(g, r2)
            wit = {
                "vertex": v,
                "w1": w1,
                "w2": w2,
                "initial_state1": dict(zip(net.sources, states[s1])),
                "initial_state2": dict(zip(net.sources, states[s2])),
                "P1(U_nd*=w1)": x[s1, g, r1],
                "P2(U_nd=u2)": y[s2, g, r2],
                "P2(U_nd*=w2)": x[s2, g, r2],
                "P1(U_nd=u1)": y[s1, g, r1],
                "lhs": x[s1, g, r1] * y[s2, g, r2],
                "rhs": x[s2, g, r2] * y[s1, g, r1],
            }
            return CheckReport(
                "D3",
                Verdict.FAILS,
                witness=wit,
                certificate="identity over two deterministic initial states violated",
                details={**details, "groups_checked": checked},
                elapsed=time.perf_counter() - t0,
            )
    cert = "identity verified for all pairs of deterministic initial states (exhaustive)"
    if not details["full_support"]:
        cert += "; note: net lacks full support"
    return CheckReport("D3", Verdict.HOLDS, certificate=cert,
                       details={**details, "groups_checked": checked},
                       elapsed=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# D2


def grid_values(k: int) -> tuple[Fraction, Fraction, Fraction]:
    """Three interior values per free coordinate of a k-symbol simplex."""
    return Fraction(1, 4 * k), Fraction(1, 3 * k), Fraction(1, 2 * k)


def source_grid(k: int) -> list[tuple[Fraction, ...]]:
    """Grid of distributions on a k-simplex: last coordinate eliminated."""
    out = []
    for free in itertools.product(grid_values(k), repeat=k - 1):
        out.append(tuple(free) + (1 - sum(free),))
    return out


def d2_grid(net: BayesNet) -> list[dict]:
    """Every grid initial distribution, in the order check_d2_exact visits them."""
    grids = [source_grid(len(net.alphabets[s])) for s in net.sources]
    return [dict(zip(net.sources, combo)) for combo in itertools.product(*grids)]


def _grid_weights(k: int) -> np.ndarray:
    # integer numerators over the common denominator 12k
    rows = [[int(p * 12 * k) for p in dist] for dist in source_grid(k)]
    return np.array(rows, dtype=object)


def check_d2_exact(net: BayesNet, lump: Lumping, grid_budget: int = DEFAULT_GRID_BUDGET,
                   max_entries: int = DEFAULT_MAX_ENTRIES) -> CheckReport:
    """Decide D2 by polynomial identity testing on a rational grid.

    Every lumped probability is multilinear in the source distributions; see
    ``D2_GRID_NOTE`` for why a 3-point grid per free coordinate is decisive.
    Evaluation runs on integers: the per-initial-state tables are scaled by a
    common denominator and the grid weights by 12k per source, which multiplies
    both sides of each identity by the same positive factor.
    """
    t0 = time.perf_counter()
    _compatible(net, lump)
    sizes = [len(net.alphabets[s]) for s in net.sources]
    free = sum(k - 1 for k in sizes)
    n_grid = 3 ** free
    if n_grid > grid_budget:
        raise ModelTooLarge(f"D2 grid has 3^{free} = {n_grid} points (budget {grid_budget})")
    per_state = per_initial_state_arrays(net, lump, max_entries)
    denom = 1
    for p in per_state.flat:
        denom = math.lcm(denom, p.denominator)
    scaled = np.frompyfunc(lambda p: p.numerator * (denom // p.denominator), 1, 1)(per_state)
    tdims = per_state.shape[1:]
    tensor = scaled.reshape(tuple(sizes) + tdims)
    weights = [_grid_weights(k) for k in sizes]
    # contract every source axis with its grid; the result is indexed by grid points
    for i, wgt in enumerate(weights):
        tensor = np.moveaxis(np.tensordot(wgt, tensor, axes=([1], [i])), 0, i)
    grid_arr = tensor.reshape((n_grid,) + tdims)
    layouts = [_Layout(net, lump, v) for v in net.vertices]
    details = {"free_variables": free, "grid_points": n_grid, "method": D2_GRID_NOTE}
    for lay in layouts:
        x, y = lay.split(grid_arr)
        hit = _first_violation(x, y)
        if hit is None:
            continue
        n, g, p, w = hit
        alpha = d2_grid(net)[n] if sizes else {}
        w1, w2 = lay.assignment(g, p), lay.assignment(g, w)
        lhs, rhs = fund_equ_sides(net, lump, lay.v, w1, w2, alpha, alpha)
        if lhs == rhs:
            raise InternalInconsistency("integer grid evaluation disagrees with exact re-evaluation")
        t = _lumped_table(net, lump, alpha)
        wit = {
            "vertex": lay.v,
            "w1": w1,
            "w2": w2,
            "initial": {s: list(vec) for s, vec in alpha.items()},
            "P(U_nd*=w1)": t.prob(w1),
            "P(U_nd=u2)": t.prob({u: b for u, b in w2.items() if u != lay.v}),
            "P(U_nd*=w2)": t.prob(w2),
            "P(U_nd=u1)": t.prob({u: b for u, b in w1.items() if u != lay.v}),
            "lhs": lhs,
            "rhs": rhs,
        }
        return CheckReport("D2", Verdict.FAILS, witness=wit,
                           certificate="lumped vector does not factorise under the witness initial "
                           "distribution",
                           details=details, elapsed=time.perf_counter() - t0)
    return CheckReport("D2", Verdict.HOLDS,
                       certificate="identity vanishes on the full grid, hence for every initial "
                       "distribution",
                       details=details, elapsed=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# CPT-level conditions


def _ks(net: BayesNet, lump: Lumping, vertices: Iterable[str], prop: str, cert_hold: str, cert_fail: str):
    t0 = time.perf_counter()
    _compatible(net, lump)
    compared = 0
    for v in vertices:
        pa = net.dag.parents(v)
        if not pa:
            continue
        first_of_class = {}
        for w in net.parent_states(v):
            image = lump.apply_tuple(pa, w)
            sums = tuple(class_mass(net, lump, v, w, b) for b in lump.target_alphabet(v))
            if image not in first_of_class:
                first_of_class[image] = (w, sums)
                continue
            compared += 1
            w0, sums0 = first_of_class[image]
            for b, s0, s in zip(lump.target_alphabet(v), sums0, sums):
                if s0 != s:
                    return CheckReport(
                        prop, Verdict.FAILS,
                        witness={"vertex": v, "w": dict(zip(pa, w0)), "w_tilde": dict(zip(pa, w)),
                                 "b": b, "lhs": s0, "rhs": s},
                        certificate=cert_fail,
                        details={"row_pairs_compared": compared},
                        elapsed=time.perf_counter() - t0)
    return CheckReport(prop, Verdict.HOLDS, certificate=cert_hold,
                       details={"row_pairs_compared": compared}, elapsed=time.perf_counter() - t0)


def check_kemeny_snell(net: BayesNet, lump: Lumping) -> CheckReport:
    """Lumped row sums agree for parent tuples with the same image, at every vertex."""
    rep = _ks(net, lump, net.vertices, "KS",
              "row-sum condition holds: D3 holds and each lumped CPD equals the class row sum "
              "of any preimage parent tuple, for every initial distribution",
              "row-sum condition violated (sufficient condition for D3 not met)")
    if rep.holds:
        rep.details["lumped_cpds"] = lumped_cpds_from_rows(net, lump)
    return rep


def lumped_cpds_from_rows(net: BayesNet, lump: Lumping) -> dict:
    """vertex -> {lumped parent tuple: {b: class row sum}} using the first preimage row."""
    out = {}
    for v in net.vertices:
        pa = net.dag.parents(v)
        if not pa:
            continue
        rows = {}
        for bpa in itertools.product(*(lump.target_alphabet(u) for u in pa)):
            w = next(lump.preimage_tuple(pa, bpa))
            rows[",".join(bpa)] = {b: class_mass(net, lump, v, w, b) for b in lump.target_alphabet(v)}
        out[v] = rows
    return out


def check_depth_one_ks_necessity(net: BayesNet, lump: Lumping) -> CheckReport:
    depth_one = [v for v in net.vertices if net.dag.depth(v) == 1]
    rep = _ks(net, lump, depth_one, "DepthOneKS",
              "row-sum condition holds at every depth-one vertex (necessary for D3)",
              "row-sum condition fails at a depth-one vertex, hence D3 fails")
    rep.details["depth_one_vertices"] = depth_one
    return rep


def check_zero_pattern_d2(net: BayesNet, lump: Lumping) -> CheckReport:
    """Zero-pattern sufficient condition for D2 on DAGs of in/out-degree <= 1.

    For every non-source v and every multi-symbol class b_v, exactly one
    multi-symbol class b~ of the parent must be such that the mass moving into
    b_v vanishes from every parent state outside b~.
    """
    t0 = time.perf_counter()
    _compatible(net, lump)
    if not structural_profile(net.dag).path_union:
        raise StructuralPreconditionViolated("zero-pattern test needs in- and out-degree <= 1 everywhere")
    pattern = {}
    for v in net.vertices:
        pa = net.dag.parents(v)
        if not pa:
            continue
        (p,) = pa
        multi_v = [b for b in lump.target_alphabet(v) if len(lump.preimage(v, b)) > 1]
        multi_p = [b for b in lump.target_alphabet(p) if len(lump.preimage(p, b)) > 1]
        for bv in multi_v:
            hits = []
            for bt in multi_p:
                inside = set(lump.preimage(p, bt))
                if all(class_mass(net, lump, v, (a,), bv) == 0 for a in net.alphabets[p] if a not in inside):
                    hits.append(bt)
            pattern[f"{v}:{bv}"] = hits
            if len(hits) != 1:
                return CheckReport(
                    "ZeroPatternD2", Verdict.INCONCLUSIVE,
                    witness={"vertex": v, "b_v": bv, "matching_parent_classes": hits},
                    certificate="zero pattern absent; D2 neither confirmed nor refuted by this test",
                    details={"pattern": pattern}, elapsed=time.perf_counter() - t0)
    return CheckReport("ZeroPatternD2", Verdict.HOLDS,
                       certificate="zero pattern present: sufficient for D2",
                       details={"pattern": pattern, "positive_cpts": _positive_cpts(net)},
                       elapsed=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# conditions evaluated on the original joint


def _event(alph, *parts) -> dict:
    """Intersect per-vertex allowed-symbol sets; each part maps vertex -> collection."""
    ev = {}
    for part in parts:
        for u, vals in part.items():
            vals = set(vals)
            ev[u] = ev[u] & vals if u in ev else vals
    return ev


def _u(lump, vs, bs) -> dict:
    return {u: lump.preimage(u, b) for u, b in zip(vs, bs)}


def _x(vs, as_) -> dict:
    return {u: (a,) for u, a in zip(vs, as_)}


def check_structured_suff_d1(net: BayesNet, lump: Lumping,
                             max_entries: int = DEFAULT_MAX_ENTRIES) -> CheckReport:
    """Sufficient condition for D1 on DAGs where parents feed only their child.

    Checks, for every non-source v, every (b_v, b_pa) and every concrete
    grandparent state a, the cross-multiplied identity
    P(U_pa=b_pa, X_pa2=a) P(U_v=b_v, U_pa=b_pa)
        == P(U_pa=b_pa) sum_{a_pa in f^-1(b_pa)} P(X_pa=a_pa, X_pa2=a) P(U_v=b_v | X_pa=a_pa).
    Evaluated at the net's own initial distribution.
    """
    t0 = time.perf_counter()
    _compatible(net, lump)
    prof = structural_profile(net.dag)
    if not prof.structured_d1_applicable:
        raise StructuralPreconditionViolated(
            "needs dde(pa(v)) = {v} for depth >= 1 and dde(pa^2(v)) within pa(v) for depth >= 2"
        )
    table = joint(net, max_entries)
    checked = 0
    for v in net.vertices:
        pa = net.dag.parents(v)
        if not pa:
            continue
        pa2 = net.dag.parents_of_set(pa)
        for bv in lump.target_alphabet(v):
            for bpa in itertools.product(*(lump.target_alphabet(u) for u in pa)):
                u_pa = _u(lump, pa, bpa)
                p_upa = table.prob(u_pa)
                p_joint = table.prob(_event(None, u_pa, {v: lump.preimage(v, bv)}))
                for a2 in itertools.product(*(net.alphabets[u] for u in pa2)):
                    x2 = _x(pa2, a2)
                    lhs = table.prob(_event(None, u_pa, x2)) * p_joint
                    acc = Fraction(0)
                    for apa in lump.preimage_tuple(pa, bpa):
                        acc += table.prob(_event(None, _x(pa, apa), x2)) * class_mass(net, lump, v, apa, bv)
                    rhs = p_upa * acc
                    checked += 1
                    if lhs != rhs:
                        return CheckReport(
                            "StructuredSuffD1", Verdict.FAILS,
                            witness={"vertex": v, "b_v": bv, "b_pa": dict(zip(pa, bpa)),
                                     "a_pa2": dict(zip(pa2, a2)), "lhs": lhs, "rhs": rhs},
                            certificate="sufficient condition for D1 violated; D1 itself is not "
                            "decided by this test",
                            details={"instances_checked": checked},
                            elapsed=time.perf_counter() - t0)
    return CheckReport("StructuredSuffD1", Verdict.HOLDS,
                       certificate="sufficient condition holds at the given initial distribution, "
                       "hence D1 holds",
                       details={"instances_checked": checked}, elapsed=time.perf_counter() - t0)


def check_nec_d1(net: BayesNet, lump: Lumping, max_entries: int = DEFAULT_MAX_ENTRIES) -> CheckReport:
    """Necessary condition for D1 at vertices of depth >= 2.

    With U_pa and U_pa2 the lumped parent and grandparent vectors, D1 forces
    P(U_v=b_v, U_pa=b_pa) P(U_pa=b_pa, U_pa2=b_pa2)
        == P(U_pa=b_pa) sum_{a_pa in f^-1(b_pa)} P(U_v=b_v | X_pa=a_pa) P(X_pa=a_pa, U_pa2=b_pa2)
    whenever P(U_pa=b_pa) P(U_pa2=b_pa2) > 0.
    """
    t0 = time.perf_counter()
    _compatible(net, lump)
    table = joint(net, max_entries)
    checked = 0
    deep = [v for v in net.vertices if net.dag.depth(v) >= 2]
    for v in deep:
        pa = net.dag.parents(v)
        pa2 = net.dag.parents_of_set(pa)
        for bpa in itertools.product(*(lump.target_alphabet(u) for u in pa)):
            u_pa = _u(lump, pa, bpa)
            p_upa = table.prob(u_pa)
            if p_upa == 0:
                continue
            for bpa2 in itertools.product(*(lump.target_alphabet(u) for u in pa2)):
                u_pa2 = _u(lump, pa2, bpa2)
                if table.prob(u_pa2) == 0:
                    continue
                p_both = table.prob(_event(None, u_pa, u_pa2))
                for bv in lump.target_alphabet(v):
                    lhs = table.prob(_event(None, u_pa, {v: lump.preimage(v, bv)})) * p_both
                    acc = Fraction(0)
                    for apa in lump.preimage_tuple(pa, bpa):
                        acc += class_mass(net, lump, v, apa, bv) * table.prob(_event(None, _x(pa, apa), u_pa2))
                    rhs = p_upa * acc
                    checked += 1
                    if lhs != rhs:
                        return CheckReport(
                            "NecD1", Verdict.FAILS,
                            witness={"vertex": v, "b_v": bv, "b_pa": dict(zip(pa, bpa)),
                                     "b_pa2": dict(zip(pa2, bpa2)), "lhs": lhs, "rhs": rhs},
                            certificate="necessary condition violated, hence D1 fails",
                            details={"instances_checked": checked, "vertices": deep},
                            elapsed=time.perf_counter() - t0)
    return CheckReport("NecD1", Verdict.HOLDS,
                       certificate="necessary condition holds (D1 not yet decided)",
                       details={"instances_checked": checked, "vertices": deep},
                       elapsed=time.perf_counter() - t0)


def find_bad_vertices(net: BayesNet, lump: Lumping, extra_initials: Optional[Sequence[dict]] = None,
                      max_entries: int = DEFAULT_MAX_ENTRIES) -> CheckReport:
    """Search for a depth > 1 vertex whose lumped CPD changes with the initial distribution.

    Candidates are all deterministic initial states plus ``extra_initials``
    (each a mapping source -> probability vector). A hit refutes D2 when the
    non-source CPTs are strictly positive; without that the refutation does
    not apply and the certificate says so.
    """
    t0 = time.perf_counter()
    _compatible(net, lump)
    deep = [v for v in net.vertices if net.dag.depth(v) > 1]
    positive = _positive_cpts(net)
    details = {"depth_gt1_vertices": deep, "positive_cpts": positive}
    if not deep:
        return CheckReport("BadVertex", Verdict.INCONCLUSIVE,
                           certificate="no vertex of depth > 1", details=details,
                           elapsed=time.perf_counter() - t0)
    per_state = per_initial_state_arrays(net, lump, max_entries)
    labels = [{"initial_state": dict(zip(net.sources, s))} for s in initial_states(net)]
    arrays = list(per_state)
    for alpha in extra_initials or ():
        arrays.append(lumped_array(with_initial(net, alpha), lump, max_entries))
        labels.append({"initial": {s: list(vec) for s, vec in alpha.items()}})
    details["initials_compared"] = len(arrays)
    for v in deep:
        pa = net.dag.parents(v)
        keep = [i for i, u in enumerate(net.vertices) if u == v or u in pa]
        drop = tuple(i for i in range(len(net.vertices)) if i not in keep)
        order = [[u for u in net.vertices if u == v or u in pa].index(u) for u in (v,) + pa]
        for bpa in itertools.product(*(lump.target_alphabet(u) for u in pa)):
            for bv in lump.target_alphabet(v):
                first = None
                for lab, arr in zip(labels, arrays):
                    m = np.transpose(arr.sum(axis=drop) if drop else arr, order)
                    sub = m[(slice(None),) + tuple(lump.target_alphabet(u).index(b) for u, b in zip(pa, bpa))]
                    den = sum(sub)
                    if den == 0:
                        continue
                    val = sub[lump.target_alphabet(v).index(bv)] / den
                    if first is None:
                        first = (lab, val)
                    elif val != first[1]:
                        cert = ("bad vertex found: D2 fails" if positive else
                                "bad vertex found, but non-source CPTs are not strictly positive so "
                                "this does not refute D2")
                        return CheckReport(
                            "BadVertex", Verdict.FAILS,
                            witness={"vertex": v, "b_v": bv, "b_pa": dict(zip(pa, bpa)),
                                     "mu": first[0], "nu": lab, "lhs": first[1], "rhs": val},
                            certificate=cert, details=details, elapsed=time.perf_counter() - t0)
    return CheckReport("BadVertex", Verdict.INCONCLUSIVE,
                       certificate="no bad vertex among the compared initial distributions",
                       details=details, elapsed=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# combined flow


ALL_ORDER = ("KS", "DepthOneKS", "ZeroPatternD2", "NecD1", "D1", "D3", "D2")


def check_all(net: BayesNet, lump: Lumping, grid_budget: int = DEFAULT_GRID_BUDGET,
              max_entries: int = DEFAULT_MAX_ENTRIES) -> dict:
    """Run the checkers cheapest-first and cross-check the proven implications.

    D2 is not re-derived when D3 already holds (D3 implies D2) or when D1
    fails (the D1 witness at the net's own initial distribution refutes D2).
    Raises InternalInconsistency if any implication is violated.
    """
    reports = {}
    reports["KS"] = check_kemeny_snell(net, lump)
    reports["DepthOneKS"] = check_depth_one_ks_necessity(net, lump)
    if structural_profile(net.dag).path_union:
        reports["ZeroPatternD2"] = check_zero_pattern_d2(net, lump)
    reports["NecD1"] = check_nec_d1(net, lump, max_entries)
    reports["D1"] = check_d1(net, lump, max_entries=max_entries)
    reports["D3"] = check_d3(net, lump, max_entries)
    if reports["D3"].holds:
        reports["D2"] = CheckReport("D2", Verdict.HOLDS, certificate="implied by D3")
    elif reports["D1"].fails:
        wit = dict(reports["D1"].witness)
        wit["initial"] = {s: list(vec) for s, vec in net.initial().items()}
        reports["D2"] = CheckReport("D2", Verdict.FAILS, witness=wit,
                                    certificate="D1 fails at the net's own initial distribution")
    else:
        reports["D2"] = check_d2_exact(net, lump, grid_budget, max_entries)
    verify_implications(reports)
    return reports


def verify_implications(reports: dict) -> None:
    def h(k):
        return k in reports and reports[k].holds

    def f(k):
        return k in reports and reports[k].fails

    problems = []
    if h("D3") and f("D2"):
        problems.append("D3 holds but D2 fails")
    if h("D2") and f("D1"):
        problems.append("D2 holds but D1 fails")
    if h("KS") and f("D3"):
        problems.append("row-sum condition holds but D3 fails")
    if h("D3") and f("DepthOneKS"):
        problems.append("D3 holds but the depth-one row-sum condition fails")
    if h("ZeroPatternD2") and f("D2") and reports["ZeroPatternD2"].details.get("positive_cpts", True):
        problems.append("zero pattern holds but D2 fails")
    if f("NecD1") and h("D1"):
        problems.append("necessary condition for D1 fails but D1 holds")
    if problems:
        raise InternalInconsistency("; ".join(problems))
