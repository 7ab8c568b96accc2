import numpy as np
import pytest

from adot.costs import CostFunction
from adot.coupling import (Coupling, check_coupling, disintegrate_coupling, expected_cost, load_coupling,
                           product)
from adot.errors import HorizonMismatch, MalformedInput, MissingCostEntry
from adot.instances import random_glued_coupling, random_plain_coupling, random_tree
from conftest import tree
from oracles import check_identities

MODES2 = ["plain", "causal", "anticausal", "bicausal", "multicausal"]


def dirac(prefix="d", v=0.0):
    return tree([(f"{prefix}1", 1, 0, 1.0, None), (f"{prefix}2", 2, v, 1.0, f"{prefix}1")], 2)


def binomial(prefix):
    return tree([(f"{prefix}r", 1, 0, 1.0, None), (f"{prefix}u", 2, 1, 0.5, f"{prefix}r"),
                 (f"{prefix}d", 2, -1, 0.5, f"{prefix}r")], 2)


def test_product_of_diracs():
    pi = product(dirac("a"), dirac("b"))
    assert pi.mass == {("a2", "b2"): 1.0}


def test_product_of_binomials():
    pi = product(binomial("a"), binomial("b"))
    assert len(pi.mass) == 4
    assert set(pi.mass.values()) == {0.25}


def test_product_three_by_two():
    P = tree([("r", 1, 0, 1.0, None), ("a", 2, 1, 0.5, "r"), ("b", 2, 2, 0.3, "r"), ("c", 2, 3, 0.2, "r")], 2)
    Q = binomial("q")
    pi = product(P, Q)
    assert len(pi.mass) == 6
    assert pi.mass[("b", "qd")] == pytest.approx(0.15)


@pytest.mark.parametrize("mode", MODES2)
def test_product_passes_every_mode(mode, rng):
    X, Y = random_tree(rng, 3, 3, prefix="x"), random_tree(rng, 3, 3, prefix="y")
    assert check_coupling(product(X, Y), mode).ok


def test_sign_matching_is_causal_not_anticausal(gap_instance):
    X, Y = gap_instance
    pi = Coupling([X, Y], {("x11", "yu"): 0.5, ("x22", "yd"): 0.5})
    assert check_coupling(pi, "causal").ok
    rep = check_coupling(pi, "anticausal")
    assert not rep.ok and rep.witness
    assert not check_coupling(pi, "bicausal").ok
    assert check_identities([X, Y], pi.dense, "causal") <= 1e-12
    assert check_identities([X, Y], pi.dense, "anticausal") > 1e-3


def test_single_period_is_multicausal(rng):
    for _ in range(5):
        X, Y = random_tree(rng, 1, 4, prefix="x"), random_tree(rng, 1, 4, prefix="y")
        pi = random_plain_coupling(rng, [X, Y])
        assert check_coupling(pi, "multicausal").ok


def test_random_couplings_agree_with_full_identities(rng):
    for _ in range(60):
        n = int(rng.integers(2, 4))
        T = int(rng.integers(1, 4))
        procs = [random_tree(rng, T, 2, prefix=f"p{i}_") for i in range(n)]
        pi = random_glued_coupling(rng, procs) if rng.random() < 0.5 else random_plain_coupling(rng, procs)
        modes = ["multicausal"] + (["causal", "anticausal", "bicausal"] if n == 2 else [])
        for m in modes:
            rep = check_coupling(pi, m)
            oracle = check_identities(procs, pi.dense, m)
            assert rep.ok == (oracle <= 1e-8)
            assert rep.worst_violation == pytest.approx(oracle, abs=1e-12)
        if n == 2:
            c, a, b = (check_coupling(pi, m).ok for m in ("causal", "anticausal", "bicausal"))
            assert b == (c and a)
            assert check_coupling(pi, "bicausal").ok == check_coupling(pi, "multicausal").ok


def test_marginal_mismatch_reported():
    X, Y = binomial("a"), binomial("b")
    pi = Coupling([X, Y], {("au", "bu"): 1.0})
    rep = check_coupling(pi, "plain")
    assert not rep.ok and "marginal" in rep.witness


def test_expected_cost_examples():
    X, Y = binomial("a"), binomial("b")
    table = {(x, y): abs(vx - vy) for x, vx in (("au", 1), ("ad", -1)) for y, vy in (("bu", 1), ("bd", -1))}
    assert expected_cost(product(X, Y), CostFunction.table(table)) == pytest.approx(1.0)
    assert expected_cost(product(X, Y), CostFunction.table({k: 0.0 for k in table})) == 0.0
    assert expected_cost(product(dirac("a"), dirac("b", 2.0)), CostFunction.lp_sum(2)) == 4.0


def test_expected_cost_missing_entry():
    X, Y = binomial("a"), binomial("b")
    with pytest.raises(MissingCostEntry):
        expected_cost(product(X, Y), CostFunction.table({("au", "bu"): 1.0}))


def test_disintegration_of_product(rng):
    X, Y = random_tree(rng, 2, 3, prefix="x"), random_tree(rng, 2, 3, prefix="y")
    kx, ky = X.cond_probs(2), Y.cond_probs(2)
    ix = {k: i for i, k in enumerate(X.node_ids(2))}
    iy = {k: i for i, k in enumerate(Y.node_ids(2))}
    for cond in disintegrate_coupling(product(X, Y), 2).values():
        for (a, b), p in cond.items():
            assert p == pytest.approx(kx[ix[a]] * ky[iy[b]], abs=1e-12)


def test_disintegration_sign_matching(gap_instance):
    X, Y = gap_instance
    pi = Coupling([X, Y], {("x11", "yu"): 0.5, ("x22", "yd"): 0.5})
    d2 = disintegrate_coupling(pi, 2)
    assert d2 == {("x1", "y0"): {("x11", "yu"): 1.0}, ("x2", "y0"): {("x22", "yd"): 1.0}}
    assert disintegrate_coupling(pi, 1) == {(): {("x1", "y0"): 0.5, ("x2", "y0"): 0.5}}


def test_disintegration_reassembles(rng):
    for _ in range(20):
        procs = [random_tree(rng, 3, 2, prefix=p) for p in "xy"]
        pi = random_glued_coupling(rng, procs)
        prob = dict(disintegrate_coupling(pi, 1)[()])
        for t in (2, 3):
            nxt = {}
            for pre, cond in disintegrate_coupling(pi, t).items():
                for key, p in cond.items():
                    nxt[key] = prob[pre] * p
            prob = nxt
        for key, p in pi.mass.items():
            assert prob[key] == pytest.approx(p, rel=1e-12)


def test_document_roundtrip(gap_instance):
    X, Y = gap_instance
    pi = product(X, Y)
    back = load_coupling(pi.to_document(["x.json", "y.json"]), [X, Y])
    np.testing.assert_array_equal(back.dense, pi.dense)


def test_bad_coupling_inputs(gap_instance):
    X, Y = gap_instance
    with pytest.raises(MalformedInput):
        Coupling([X, Y], {("x11", "nope"): 1.0})
    with pytest.raises(MalformedInput):
        Coupling([X, Y], {("x11", "yu"): -0.5})
    with pytest.raises(MalformedInput):
        load_coupling('{"mass": 3}', [X, Y])


def test_horizon_mismatch():
    X = binomial("a")
    Y = tree([("y", 1, 0, 1.0, None)], 1)
    with pytest.raises(HorizonMismatch):
        check_coupling(product(X, Y), "plain")
