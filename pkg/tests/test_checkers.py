import itertools
import random
from fractions import Fraction as F

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from bnlump import BayesNet, Dag, Lumping, factorizes_over, joint, pushforward
from bnlump.checkers import (
    check_all,
    check_d1,
    check_d2_exact,
    check_d3,
    check_depth_one_ks_necessity,
    check_kemeny_snell,
    check_nec_d1,
    check_structured_suff_d1,
    check_zero_pattern_d2,
    d2_grid,
    find_bad_vertices,
    fund_equ_sides,
    grid_values,
    source_grid,
)
from bnlump.errors import IncompatibleLumping, ModelTooLarge, StructuralPreconditionViolated
from bnlump.lumping import lumped_cpd
from bnlump.model import point_mass, uniform, with_initial
from bnlump.report import Verdict
from bnlump.search import random_dag, random_net
from helpers import (
    A3,
    P_ABSORB,
    P_CYCLE,
    P_KS,
    P_NOT_D1,
    brute_d2,
    brute_d3,
    brute_lumped,
    chain,
    chain_net,
    collider,
    fork,
    fund_equ_violation,
    ks_holds,
    merge12,
    prob,
    random_lumping,
    two_step,
)

A4 = ("a1", "a2", "a3", "a4")


def not_d1_chain():
    return chain_net(P_NOT_D1, [F(1, 3)] * 3)


def ks_chain(n=3, initial=None):
    return chain_net(P_KS, initial or [F(1, 3)] * 3, n=n)


def random_ks_net(dag, rng, lump, alphabet=A3):
    """Random net whose CPT rows have equal class sums within each parent image."""
    cpts = {}
    for v in dag.vertices:
        pa = dag.parents(v)
        if not pa:
            cpts[v] = [F(x, 10) for x in (2, 3, 5)] if len(alphabet) == 3 else uniform(alphabet)
            continue
        sums = {}
        rows = {}
        for key in itertools.product(alphabet, repeat=len(pa)):
            img = lump.apply_tuple(pa, key)
            if img not in sums:
                cuts = sorted(rng.sample(range(1, 12), len(lump.target_alphabet(v)) - 1))
                sums[img] = [F(b - a, 12) for a, b in zip([0] + cuts, cuts + [12])]
            row = {}
            for b, mass in zip(lump.target_alphabet(v), sums[img]):
                members = lump.preimage(v, b)
                w = [rng.randint(1, 4) for _ in members]
                for a, x in zip(members, w):
                    row[a] = mass * F(x, sum(w))
            rows[key] = [row[a] for a in alphabet]
        cpts[v] = rows
    return BayesNet(dag, alphabet, cpts)


# ---------------------------------------------------------------------------
# reference examples


def test_two_step_regimes():
    net = two_step()
    lump = merge12(net.dag)
    assert check_d1(net, lump).holds
    assert check_d2_exact(net, lump).holds
    d3 = check_d3(net, lump)
    assert d3.fails
    w = d3.witness
    assert (w["initial_state1"], w["initial_state2"]) == ({"v1": "a1"}, {"v1": "a2"})
    # lumped CPD P(U2=b1|U1=b1) is 1 from a1 and 1/2 from a2
    assert (w["lhs"], w["rhs"]) == (F(1), F(1, 2))


def test_not_d1_chain_fails_at_v3():
    net = not_d1_chain()
    lump = merge12(net.dag)
    rep = check_d1(net, lump)
    assert rep.fails and rep.witness["vertex"] == "v3"
    assert rep.witness["lhs"] != rep.witness["rhs"]


def test_not_d1_chain_displayed_fraction_identity():
    # P(U3=b1 | U2=b1, U1=b1) against P(U3=b1 | U2=b1), both from the oracle
    net = not_d1_chain()
    t = brute_lumped(net, merge12(net.dag))
    vs = ["v1", "v2", "v3"]
    lhs = prob(t, vs, {"v1": "b1", "v2": "b1", "v3": "b1"}) / prob(t, vs, {"v1": "b1", "v2": "b1"})
    rhs = prob(t, vs, {"v2": "b1", "v3": "b1"}) / prob(t, vs, {"v2": "b1"})
    # P(X2=a1)=5/18, P(X2=a2)=13/36 so P(U2=b1)=23/36
    assert prob(t, vs, {"v2": "b1"}) == F(23, 36)
    assert lhs != rhs


def test_identity_lumping_always_holds():
    net = not_d1_chain()
    ident = Lumping.identity(net.alphabets)
    for rep in (check_d1(net, ident), check_d2_exact(net, ident), check_d3(net, ident),
                check_kemeny_snell(net, ident)):
        assert rep.holds, rep.property


def test_ks_chain_satisfies_every_regime():
    net = ks_chain()
    lump = merge12(net.dag)
    assert check_kemeny_snell(net, lump).holds
    assert check_d3(net, lump).holds
    assert brute_d3(net, lump)
    assert check_depth_one_ks_necessity(net, lump).holds


def test_ks_row_sums_on_two_rows():
    net = chain_net(P_KS, [F(1, 3)] * 3, n=2)
    rep = check_kemeny_snell(net, merge12(net.dag))
    rows = rep.details["lumped_cpds"]["v2"]
    assert rows["b1"] == {"b1": F(3, 4), "b2": F(1, 4)}


def test_two_step_fails_ks_and_depth_one_ks():
    net = two_step()
    lump = merge12(net.dag)
    ks = check_kemeny_snell(net, lump)
    assert ks.fails and (ks.witness["lhs"], ks.witness["rhs"]) == (F(1), F(1, 2))
    d1ks = check_depth_one_ks_necessity(net, lump)
    assert d1ks.fails and d1ks.witness["vertex"] == "v2"


def test_depth_one_ks_vacuous_without_edges():
    net = BayesNet(Dag(["x", "y"]), A3, {"x": uniform(A3), "y": uniform(A3)})
    rep = check_depth_one_ks_necessity(net, merge12(net.dag))
    assert rep.holds and rep.details["depth_one_vertices"] == []


def test_d1_but_not_d2_chain():
    # starting in the singleton class a3 keeps U1 constant, so D1 holds
    net = chain_net(P_NOT_D1, [0, 0, 1])
    lump = merge12(net.dag)
    assert check_d1(net, lump).holds
    rep = check_d2_exact(net, lump)
    assert rep.fails
    alpha = {s: vec for s, vec in rep.witness["initial"].items()}
    lhs, rhs = fund_equ_sides(net, lump, rep.witness["vertex"], rep.witness["w1"], rep.witness["w2"],
                              alpha, alpha)
    assert (lhs, rhs) == (rep.witness["lhs"], rep.witness["rhs"]) and lhs != rhs
    assert all(p > 0 for p in alpha["v1"])


def test_grid_points_are_interior_distributions():
    for k in (2, 3, 4):
        pts = source_grid(k)
        assert len(pts) == 3 ** (k - 1)
        assert len(set(grid_values(k))) == 3
        for p in pts:
            assert sum(p) == 1 and all(x > 0 for x in p)


def test_d2_budget():
    net = BayesNet(Dag(["x", "y", "z"]), A3, {v: uniform(A3) for v in "xyz"})
    with pytest.raises(ModelTooLarge):
        check_d2_exact(net, merge12(net.dag), grid_budget=100)
    with pytest.raises(ModelTooLarge):
        check_d3(net, merge12(net.dag), max_entries=5)


def test_incompatible_lumping_is_rejected():
    net = not_d1_chain()
    with pytest.raises(IncompatibleLumping):
        check_d1(net, merge12(chain(2)))
    with pytest.raises(IncompatibleLumping):
        check_kemeny_snell(net, Lumping.from_blocks(A4, [("a1", "a2")], net.vertices))


# ---------------------------------------------------------------------------
# zero pattern, structured sufficient and necessary conditions


def test_zero_pattern_with_absorbing_singleton():
    net = chain_net(P_ABSORB, [F(1, 3)] * 3, n=4)
    lump = merge12(net.dag)
    rep = check_zero_pattern_d2(net, lump)
    assert rep.holds
    assert rep.details["pattern"]["v2:b1"] == ["b1"]
    assert check_d2_exact(net, lump).holds
    assert brute_d2(net, lump)


def test_zero_pattern_absent_on_the_cycle():
    net = chain_net(P_CYCLE, point_mass(A4, "a1"), n=4, alphabet=A4)
    lump = Lumping.from_blocks(A4, [("a1", "a4")], net.vertices)
    rep = check_zero_pattern_d2(net, lump)
    assert rep.verdict is Verdict.INCONCLUSIVE
    assert rep.witness["matching_parent_classes"] == []


def test_zero_pattern_inconclusive_for_positive_cpts_and_vacuous_for_bijections():
    net = random_net(chain(3), A3, random.Random(2))
    assert check_zero_pattern_d2(net, merge12(net.dag)).verdict is Verdict.INCONCLUSIVE
    assert check_zero_pattern_d2(net, Lumping.identity(net.alphabets)).holds


def test_zero_pattern_needs_a_path_union():
    net = random_net(collider(), A3, random.Random(0))
    with pytest.raises(StructuralPreconditionViolated):
        check_zero_pattern_d2(net, merge12(net.dag))


def test_structured_sufficient_condition():
    assert check_structured_suff_d1(two_step(), merge12(chain(2))).holds
    rep = check_structured_suff_d1(not_d1_chain(), merge12(chain(3)))
    assert rep.fails and rep.witness["vertex"] == "v3" and rep.witness["lhs"] != rep.witness["rhs"]
    assert check_structured_suff_d1(ks_chain(), merge12(chain(3))).holds
    with pytest.raises(StructuralPreconditionViolated):
        check_structured_suff_d1(random_net(fork(), A3, random.Random(0)), merge12(fork()))


def test_necessary_condition():
    rep = check_nec_d1(not_d1_chain(), merge12(chain(3)))
    assert rep.fails and rep.witness["vertex"] == "v3"
    assert check_nec_d1(ks_chain(), merge12(chain(3))).holds
    shallow = check_nec_d1(two_step(), merge12(chain(2)))
    assert shallow.holds and shallow.details["instances_checked"] == 0


# ---------------------------------------------------------------------------
# bad vertices


def test_bad_vertex_in_a_positive_chain():
    net = random_net(chain(3), A3, random.Random(11))
    lump = merge12(net.dag)
    assert check_d2_exact(net, lump).fails
    rep = find_bad_vertices(net, lump)
    assert rep.fails and "D2 fails" in rep.certificate
    w = rep.witness
    vals = []
    for lab in (w["mu"], w["nu"]):
        alpha = {s: point_mass(A3, a) for s, a in lab["initial_state"].items()}
        vals.append(lumped_cpd(with_initial(net, alpha), lump, w["vertex"], w["b_v"], list(w["b_pa"].values())))
    assert vals == [w["lhs"], w["rhs"]] and vals[0] != vals[1]


def test_bad_vertex_uses_extra_initials():
    net = random_net(chain(3), A3, random.Random(11))
    extra = [{"v1": [F(1, 5), F(3, 5), F(1, 5)]}]
    rep = find_bad_vertices(net, merge12(net.dag), extra_initials=extra)
    assert rep.details["initials_compared"] == 4


def test_no_bad_vertex_for_ks_or_shallow_nets():
    assert find_bad_vertices(ks_chain(), merge12(chain(3))).verdict is Verdict.INCONCLUSIVE
    rep = find_bad_vertices(two_step(), merge12(chain(2)))
    assert rep.verdict is Verdict.INCONCLUSIVE and rep.details["depth_gt1_vertices"] == []


def test_bad_vertex_without_positivity_does_not_refute_d2():
    net = chain_net(P_ABSORB, [F(1, 3)] * 3, n=3)
    lump = merge12(net.dag)
    rep = find_bad_vertices(net, lump)
    assert rep.fails and "does not refute" in rep.certificate
    assert check_d2_exact(net, lump).holds


# ---------------------------------------------------------------------------
# combined flow and structural invariants


def test_check_all_order_and_shortcuts():
    reps = check_all(ks_chain(), merge12(chain(3)))
    assert list(reps) == ["KS", "DepthOneKS", "ZeroPatternD2", "NecD1", "D1", "D3", "D2"]
    assert reps["D2"].certificate == "implied by D3"
    reps = check_all(not_d1_chain(), merge12(chain(3)))
    w = reps["D2"].witness
    alpha = w["initial"]
    assert fund_equ_sides(not_d1_chain(), merge12(chain(3)), w["vertex"], w["w1"], w["w2"], alpha, alpha) == \
        (w["lhs"], w["rhs"])


def test_collider_always_satisfies_d1():
    rng = random.Random(4)
    for _ in range(20):
        net = random_net(collider(), A3, rng)
        for lump in (random_lumping(net, rng, shared=False), merge12(net.dag)):
            assert check_d1(net, lump).holds


def test_singleton_preimage_groups_hold_individually():
    rng = random.Random(8)
    for _ in range(15):
        net = random_net(random_dag(4, rng), A3, rng)
        lump = random_lumping(net, rng, shared=False)
        skipped = check_d1(net, lump)
        full = check_d1(net, lump, skip_singletons=False)
        assert skipped.verdict == full.verdict
        # conditional on the non-descendants equals conditional on the parents
        t = brute_lumped(net, lump)
        vs = list(net.vertices)
        for v in vs:
            pa = net.dag.parents(v)
            nd = [u for u in vs if u not in net.dag.descendants(v) and u != v]
            for key in itertools.product(*(lump.target_alphabet(u) for u in nd)):
                b = dict(zip(nd, key))
                if any(len(lump.preimage(u, b[u])) != 1 for u in pa):
                    continue
                p_nd = prob(t, vs, b)
                if p_nd == 0:
                    continue
                b_pa = {u: b[u] for u in pa}
                for bv in lump.target_alphabet(v):
                    lhs = prob(t, vs, {**b, v: bv}) / p_nd
                    rhs = prob(t, vs, {**b_pa, v: bv}) / prob(t, vs, b_pa)
                    assert lhs == rhs


def test_regular_chains_d3_iff_ks():
    rng = random.Random(21)
    seen = set()
    for i in range(40):
        n = rng.randint(2, 4)
        base = random_net(chain(2), A3, rng)
        rows = [base.cpts["v2"].table[(a,)] for a in A3]
        if i % 3 == 0:
            rows = P_KS
        net = chain_net(rows, base.initial()["v1"], n=n)
        lump = merge12(net.dag)
        d3, ks = check_d3(net, lump).verdict, check_kemeny_snell(net, lump).verdict
        assert d3 == ks
        seen.add(d3)
    assert seen == {Verdict.HOLDS, Verdict.FAILS}


def test_ks_lumped_cpds_match_row_sums_on_the_grid():
    rng = random.Random(6)
    dag = Dag(["v1", "v2", "v3", "v4"], [("v1", "v2"), ("v1", "v3"), ("v2", "v4"), ("v3", "v4")])
    lump = merge12(dag)
    net = random_ks_net(dag, rng, lump)
    ks = check_kemeny_snell(net, lump)
    assert ks.holds and check_d3(net, lump).holds
    for alpha in d2_grid(net):
        lumped = pushforward(joint(with_initial(net, alpha)), lump)
        for v, rows in ks.details["lumped_cpds"].items():
            pa = net.dag.parents(v)
            for key, row in rows.items():
                for b, val in row.items():
                    got = lumped_cpd(net, lump, v, b, key.split(","), lumped=lumped)
                    assert got is None or got == val


# ---------------------------------------------------------------------------
# oracle agreement on random nets


@st.composite
def instances(draw, max_n=3, max_k=3):
    seed = draw(st.integers(0, 10**6))
    n = draw(st.integers(1, max_n))
    k = draw(st.integers(2, max_k))
    shared = draw(st.booleans())
    rng = random.Random(seed)
    alphabet = [f"a{i}" for i in range(k)]
    dag = random_dag(n, rng)
    if draw(st.booleans()):
        net = random_net(dag, alphabet, rng)
    else:
        # sparse CPTs: zero out entries at random, renormalising
        net = random_net(dag, alphabet, rng)
        cpts = {}
        for v in net.vertices:
            rows = {}
            for key, row in net.cpts[v].table.items():
                keep = [p if rng.random() < 0.6 else F(0) for p in row]
                if sum(keep) == 0:
                    keep = list(row)
                rows[key] = [p / sum(keep) for p in keep]
            cpts[v] = rows
        net = BayesNet(dag, alphabet, cpts)
    return net, random_lumping(net, rng, shared)


SETTINGS = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@SETTINGS
@given(instances())
def test_d1_matches_both_factorisation_oracles(inst):
    net, lump = inst
    rep = check_d1(net, lump)
    lumped = pushforward(joint(net), lump)
    assert rep.holds == factorizes_over(lumped, net.dag).holds
    alph = {v: lump.target_alphabet(v) for v in net.vertices}
    assert rep.holds == (fund_equ_violation(brute_lumped(net, lump), net.dag, alph) is None)


@SETTINGS
@given(instances())
def test_d3_matches_pairwise_enumeration(inst):
    net, lump = inst
    assert check_d3(net, lump).holds == brute_d3(net, lump)


@SETTINGS
@given(instances())
def test_d2_matches_coefficient_oracle(inst):
    net, lump = inst
    assert check_d2_exact(net, lump).holds == brute_d2(net, lump)


@SETTINGS
@given(instances())
def test_ks_matches_row_sum_oracle(inst):
    net, lump = inst
    assert check_kemeny_snell(net, lump).holds == ks_holds(net, lump)


@SETTINGS
@given(instances(max_n=4))
def test_failure_witnesses_reproduce(inst):
    net, lump = inst
    d1 = check_d1(net, lump)
    if d1.fails:
        w = d1.witness
        assert fund_equ_sides(net, lump, w["vertex"], w["w1"], w["w2"]) == (w["lhs"], w["rhs"])
        assert w["lhs"] != w["rhs"]
    d3 = check_d3(net, lump)
    if d3.fails:
        w = d3.witness
        a1 = {s: point_mass(net.alphabets[s], x) for s, x in w["initial_state1"].items()}
        a2 = {s: point_mass(net.alphabets[s], x) for s, x in w["initial_state2"].items()}
        assert fund_equ_sides(net, lump, w["vertex"], w["w1"], w["w2"], a1, a2) == (w["lhs"], w["rhs"])
        assert w["lhs"] != w["rhs"]
    for rep in (check_kemeny_snell(net, lump), check_nec_d1(net, lump)):
        if rep.fails:
            assert rep.witness["lhs"] != rep.witness["rhs"]


@SETTINGS
@given(instances(max_n=4))
def test_implications_hold_in_check_all(inst):
    net, lump = inst
    reps = check_all(net, lump)
    if reps["D3"].holds:
        assert check_d2_exact(net, lump).holds
    if reps["D2"].holds:
        assert reps["D1"].holds
    if reps["D1"].holds:
        assert reps["NecD1"].holds
    if reps["KS"].holds:
        assert reps["D3"].holds
    if reps["D3"].holds:
        assert reps["DepthOneKS"].holds
