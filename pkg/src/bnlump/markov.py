"""Markov chains as chain-shaped Bayesian networks, and their lumpability."""

from __future__ import annotations

import itertools
import time
from collections.abc import Mapping, Sequence
from fractions import Fraction
from typing import Optional

from .checkers import check_d1, check_d2_exact, d2_grid, find_bad_vertices
from .errors import DimensionMismatch, IncompatibleLumping, InternalInconsistency, InvalidDistribution
from .graph import Dag
from .lumping import Lumping, pushforward
from .model import DEFAULT_MAX_ENTRIES, BayesNet, as_fraction, conditional, joint, make_alphabet, probability_vector
from .report import CheckReport, Verdict


class StochasticMatrix:
    """Row-stochastic matrix over a finite ordered state set, exact entries.

    ``rows`` is a list of rows in state order or a mapping state -> row.
    """

    def __init__(self, states: Sequence[str], rows):
        self.states = make_alphabet(states)
        n = len(self.states)
        if isinstance(rows, Mapping):
            unknown = set(rows) - set(self.states)
            if unknown:
                raise DimensionMismatch(f"rows for unknown states {sorted(unknown)}")
            try:
                rows = [rows[a] for a in self.states]
            except KeyError as exc:
                raise DimensionMismatch(f"no row for state {exc.args[0]!r}") from None
        rows = list(rows)
        if len(rows) != n:
            raise DimensionMismatch(f"{n} states but {len(rows)} rows")
        out = []
        for a, row in zip(self.states, rows):
            try:
                out.append(probability_vector(row, n))
            except (InvalidDistribution, DimensionMismatch) as exc:
                raise type(exc)(f"row {a!r}: {exc}") from None
        self.rows = tuple(out)

    @classmethod
    def identity(cls, states):
        states = list(states)
        return cls(states, [[int(i == j) for j in range(len(states))] for i in range(len(states))])

    def row(self, a: str) -> tuple[Fraction, ...]:
        return self.rows[self.states.index(a)]

    def entry(self, a: str, b: str) -> Fraction:
        return self.row(a)[self.states.index(b)]

    def __len__(self):
        return len(self.states)

    def __matmul__(self, other: "StochasticMatrix") -> "StochasticMatrix":
        if self.states != other.states:
            raise DimensionMismatch("state sets differ")
        n = len(self.states)
        rows = [[sum((self.rows[i][k] * other.rows[k][j] for k in range(n)), Fraction(0)) for j in range(n)]
                for i in range(n)]
        return StochasticMatrix(self.states, rows)

    def __eq__(self, other):
        if not isinstance(other, StochasticMatrix):
            return NotImplemented
        return self.states == other.states and self.rows == other.rows

    def __repr__(self):
        body = "; ".join(" ".join(str(p) for p in r) for r in self.rows)
        return f"StochasticMatrix({list(self.states)}, [{body}])"

    def to_text(self) -> str:
        return "\n".join(" ".join(str(p) for p in r) for r in self.rows)

    def to_json(self) -> dict:
        return {"states": list(self.states), "rows": [[str(p) for p in r] for r in self.rows]}


def parse_matrix_text(text: str, states: Optional[Sequence[str]] = None) -> StochasticMatrix:
    """Whitespace matrix, one row per line; ``#`` starts a comment.

    An optional first line ``states: a1 a2 ...`` names the states; otherwise
    ``states`` or ``a1..an`` are used.
    """
    rows, named = [], None
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.lower().startswith("states:"):
            named = line.split(":", 1)[1].split()
            continue
        rows.append([as_fraction(tok) for tok in line.replace(",", " ").split()])
    if not rows:
        raise DimensionMismatch("empty matrix")
    states = list(states or named or [f"a{i + 1}" for i in range(len(rows))])
    return StochasticMatrix(states, rows)


def matrix_from_json(obj, states: Optional[Sequence[str]] = None) -> StochasticMatrix:
    """Accept ``{"states": [...], "rows": [...]}`` or a bare list of rows."""
    if isinstance(obj, Mapping):
        return StochasticMatrix(obj.get("states") or states or [f"a{i + 1}" for i in range(len(obj["rows"]))],
                                obj["rows"])
    return StochasticMatrix(states or [f"a{i + 1}" for i in range(len(obj))], obj)


def chain_vertices(horizon: int) -> list[str]:
    return [f"v{i + 1}" for i in range(horizon)]


def _initial_row(initial, states):
    if isinstance(initial, Mapping):
        unknown = set(initial) - set(states)
        if unknown:
            raise DimensionMismatch(f"initial mass on unknown states {sorted(unknown)}")
        initial = [initial.get(a, 0) for a in states]
    return probability_vector(initial, len(states))


def unroll_nhdtmc(ps: Sequence[StochasticMatrix], initial) -> BayesNet:
    """Chain BN v1 -> v2 -> ... with CPT of v_{t+1} given by ``ps[t-1]``."""
    if not ps:
        raise DimensionMismatch("need at least one transition matrix")
    states = ps[0].states
    for p in ps:
        if p.states != states:
            raise DimensionMismatch("transition matrices use different state sets")
    vs = chain_vertices(len(ps) + 1)
    dag = Dag(vs, list(zip(vs, vs[1:])))
    cpts = {vs[0]: _initial_row(initial, states)}
    for v, p in zip(vs[1:], ps):
        cpts[v] = {(a,): p.row(a) for a in states}
    return BayesNet(dag, states, cpts)


def unroll_dtmc(p: StochasticMatrix, initial, horizon: int) -> BayesNet:
    if horizon < 2:
        raise DimensionMismatch("horizon must be at least 2")
    return unroll_nhdtmc([p] * (horizon - 1), initial)


def unroll_higher_order(p2: Mapping, initial_pair, horizon: int, states: Sequence[str]) -> BayesNet:
    """Order-two chain: v_t has parents v_{t-2} and v_{t-1}.

    ``p2`` maps (older, newer) state pairs to rows; ``initial_pair`` maps
    (x1, x2) pairs to probabilities. Rows of v2 given v1 with zero mass in
    ``initial_pair`` are set uniform (they never matter).
    """
    if horizon < 3:
        raise DimensionMismatch("horizon must be at least 3")
    states = make_alphabet(states)
    n = len(states)
    pairs = list(itertools.product(states, repeat=2))
    if set(map(tuple, p2)) != set(pairs):
        raise DimensionMismatch(f"order-two table needs rows for all {n * n} state pairs")
    init = {tuple(k): as_fraction(v) for k, v in initial_pair.items()}
    if set(init) - set(pairs):
        raise DimensionMismatch("initial pair distribution mentions unknown states")
    if sum(init.values()) != 1 or any(p < 0 for p in init.values()):
        raise InvalidDistribution("initial pair distribution must be nonnegative and sum to 1")
    first = [sum((init.get((a, b), Fraction(0)) for b in states), Fraction(0)) for a in states]
    second = {}
    for a, m in zip(states, first):
        second[(a,)] = [init.get((a, b), Fraction(0)) / m for b in states] if m else [Fraction(1, n)] * n
    vs = chain_vertices(horizon)
    edges = list(zip(vs, vs[1:])) + list(zip(vs, vs[2:]))
    cpts = {vs[0]: first, vs[1]: second}
    for v in vs[2:]:
        cpts[v] = {tuple(k): row for k, row in p2.items()}
    return BayesNet(Dag(vs, edges), states, cpts)


# ---------------------------------------------------------------------------
# lumpings of a single state set


def state_map(lump) -> tuple[dict, tuple]:
    """(state -> class, class order) from a Lumping (first vertex) or a plain mapping."""
    if isinstance(lump, Lumping):
        v = lump.vertices[0]
        if any(lump.map(u) != lump.map(v) for u in lump.vertices):
            raise IncompatibleLumping("chain lumpings must use the same map at every time step")
        return lump.map(v), lump.target_alphabet(v)
    m = {str(a): str(b) for a, b in lump.items()}
    return m, tuple(dict.fromkeys(m.values()))


def parse_lumping_spec(spec: str, states: Sequence[str]) -> dict:
    """``"a1,a2|a3"`` -> {a1: b1, a2: b1, a3: b2}; unlisted states become singletons."""
    blocks = [tuple(s.strip() for s in blk.split(",") if s.strip()) for blk in spec.split("|")]
    return Lumping.from_blocks(list(states), [b for b in blocks if b], ["_"]).map("_")


def chain_lumping(lump, net: BayesNet) -> Lumping:
    m, targets = state_map(lump)
    return Lumping.shared(m, net.vertices, targets)


def strong_lumpability(p: StochasticMatrix, lump) -> CheckReport:
    """Row-sum condition on the matrix; certificate carries the quotient matrix."""
    t0 = time.perf_counter()
    m, targets = state_map(lump)
    if set(m) != set(p.states):
        raise IncompatibleLumping(f"lumping covers {sorted(m)}, matrix states are {list(p.states)}")

    def sums(a):
        row = p.row(a)
        return [sum((q for s, q in zip(p.states, row) if m[s] == b), Fraction(0)) for b in targets]

    quotient = {}
    rep_state = {}
    for a in p.states:
        b = m[a]
        s = sums(a)
        if b not in quotient:
            quotient[b], rep_state[b] = s, a
            continue
        for c, x, y in zip(targets, quotient[b], s):
            if x != y:
                return CheckReport(
                    "KS", Verdict.FAILS,
                    witness={"class": b, "state1": rep_state[b], "state2": a, "into": c, "lhs": x, "rhs": y},
                    certificate="lumped row sums differ inside a class: not strongly lumpable",
                    elapsed=time.perf_counter() - t0)
    q = StochasticMatrix(targets, [quotient[b] for b in targets])
    return CheckReport("KS", Verdict.HOLDS,
                       certificate="row-sum condition holds: the lumped chain is a DTMC for every "
                       "initial distribution, with the quotient matrix below",
                       details={"quotient": {"states": list(targets), "rows": [list(r) for r in q.rows]}},
                       elapsed=time.perf_counter() - t0)


def quotient_matrix(report: CheckReport) -> StochasticMatrix:
    q = report.details["quotient"]
    return StochasticMatrix(q["states"], q["rows"])


def lumped_transition_tables(net: BayesNet, lump: Lumping) -> list[dict]:
    """Per step t: {from: {to: P(U_{t+1}=to | U_t=from) or None}} on the pushforward joint."""
    lumped = pushforward(joint(net), lump)
    vs = net.vertices
    tables = []
    for u, v in zip(vs, vs[1:]):
        tb = {}
        for b in lump.target_alphabet(u):
            tb[b] = {c: conditional(lumped, {v: c}, {u: b}) for c in lump.target_alphabet(v)}
        tables.append(tb)
    return tables


def _time_constant(tables: list[dict]) -> bool:
    seen = {}
    for tb in tables:
        for b, row in tb.items():
            for c, p in row.items():
                if p is None:
                    continue
                if seen.setdefault((b, c), p) != p:
                    return False
    return True


def weak_lumpability_horizon(p: StochasticMatrix, initial, lump, horizon: int,
                             max_entries: int = DEFAULT_MAX_ENTRIES) -> CheckReport:
    """D1 on the chain unrolled to ``horizon``: is the lumped process Markov up to there?

    Holding only certifies the given horizon. Extracted tables mark undefined
    entries (unreachable lumped states) as None.
    """
    if horizon < 3:
        raise DimensionMismatch("horizon must be at least 3")
    net = unroll_dtmc(p, initial, horizon)
    flump = chain_lumping(lump, net)
    rep = check_d1(net, flump, max_entries=max_entries)
    tables = lumped_transition_tables(net, flump)
    const = _time_constant(tables)
    rep.details.update({
        "horizon": horizon,
        "lumped_tables": tables,
        "time_constant": const,
        "nhdtmc": rep.holds,
        "dtmc": rep.holds and const,
    })
    if rep.holds:
        rep.certificate = (f"lumped process is a non-homogeneous Markov chain up to horizon {horizon}; "
                           + ("its tables are time-constant (a DTMC at this horizon)" if const
                              else "its tables vary with time (not a DTMC)"))
    else:
        rep.certificate = f"lumped process is not Markov at horizon {horizon}"
    rep.property = "D1"
    return rep


def nhdtmc_d2_cpd_consistency(ps: Sequence[StochasticMatrix], lump, horizon: int,
                              max_entries: int = DEFAULT_MAX_ENTRIES) -> CheckReport:
    """For an unrolled chain with D2, lumped CPDs past the second step must not depend on the start.

    Compares every point-mass start and every grid start used by the D2
    decision. D2 failing gives an inconclusive report. Disagreement while D2
    holds and all CPT entries are positive contradicts the bad-vertex result
    and raises InternalInconsistency; with zero entries the result does not
    apply and the report fails with a note.
    """
    t0 = time.perf_counter()
    if horizon < 3:
        raise DimensionMismatch("horizon must be at least 3")
    if len(ps) < horizon - 1:
        raise DimensionMismatch(f"horizon {horizon} needs {horizon - 1} matrices, got {len(ps)}")
    states = ps[0].states
    net = unroll_nhdtmc(list(ps[: horizon - 1]), [Fraction(1, len(states))] * len(states))
    flump = chain_lumping(lump, net)
    d2 = check_d2_exact(net, flump, max_entries=max_entries)
    if not d2.holds:
        return CheckReport("BadVertex", Verdict.INCONCLUSIVE, witness=None,
                           certificate="D2 does not hold, so no consistency is implied",
                           details={"d2": d2.to_dict()}, elapsed=time.perf_counter() - t0)
    bad = find_bad_vertices(net, flump, extra_initials=d2_grid(net), max_entries=max_entries)
    if bad.fails:
        if bad.details["positive_cpts"]:
            raise InternalInconsistency(f"D2 holds but lumped CPDs depend on the start: {bad.witness}")
        bad.certificate = ("lumped CPDs depend on the start although D2 holds; the bad-vertex "
                           "result does not apply because some transition probabilities are zero")
        bad.elapsed = time.perf_counter() - t0
        return bad
    tables = lumped_transition_tables(net, flump)
    return CheckReport("BadVertex", Verdict.HOLDS,
                       certificate="D2 holds and lumped CPDs from step 2 on agree for every compared start",
                       details={"initials_compared": bad.details.get("initials_compared", 0),
                                "lumped_tables_uniform_start": tables},
                       elapsed=time.perf_counter() - t0)


__all__ = [
    "StochasticMatrix", "parse_matrix_text", "matrix_from_json", "unroll_dtmc", "unroll_nhdtmc",
    "unroll_higher_order", "strong_lumpability", "weak_lumpability_horizon",
    "nhdtmc_d2_cpd_consistency", "lumped_transition_tables", "quotient_matrix", "chain_lumping",
    "parse_lumping_spec", "state_map",
]
