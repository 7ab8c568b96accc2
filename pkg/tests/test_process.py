import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adot.errors import InvalidTree, MalformedInput, OutOfRange, ZeroProbBranch
from adot.instances import random_tree
from adot.process import (canonicalize, disintegrate, from_paths, is_martingale, load_process, read_process,
                          tree_key)
from conftest import tree
from oracles import PathLaw


def binomial():
    return tree([("r", 1, 0, 1.0, None), ("u", 2, 1, 0.5, "r"), ("d", 2, -1, 0.5, "r")], 2)


def test_dirac_tree():
    P = tree([("a", 1, 0, 1.0, None), ("b", 2, 0, 1.0, "a")], 2)
    assert P.n_leaves == 1 and P.horizon == 2
    assert P.leaf_probs.tolist() == [1.0]
    assert disintegrate(P, 2).kernel == {"a": {"b": 1.0}}


def test_binomial_paths():
    P = binomial()
    assert P.n_leaves == 2
    np.testing.assert_allclose(P.leaf_probs, [0.5, 0.5])
    assert P.leaf_paths == [("r", "u"), ("r", "d")]
    assert disintegrate(P, 2).kernel == {"r": {"u": 0.5, "d": 0.5}}


def test_three_path_kernel_reconstructs():
    P = tree([("r", 1, 0, 1.0, None), ("a", 2, 1, 0.5, "r"), ("b", 2, 2, 0.3, "r"), ("c", 2, 3, 0.2, "r")], 2)
    K = disintegrate(P, 2).kernel["r"]
    init = P.initial_distribution()
    for (p0, p1), prob in zip(P.leaf_paths, P.leaf_probs):
        assert init[p0] * K[p1] == prob
    np.testing.assert_allclose(sorted(K.values()), [0.2, 0.3, 0.5])


def test_probabilities_off_by_a_tenth():
    with pytest.raises(InvalidTree):
        tree([("r", 1, 0, 1.0, None), ("u", 2, 1, 0.5, "r"), ("d", 2, -1, 0.4, "r")], 2)


@pytest.mark.parametrize("nodes, err", [
    ([("r", 1, 0, 1.0, None), ("u", 2, 1, 1.0, "zz")], InvalidTree),
    ([("r", 1, 0, 1.0, None), ("u", 2, 1, 1.0, "r"), ("d", 2, -1, 0.0, "r")], ZeroProbBranch),
    ([("r", 1, 0, 1.0, None)], InvalidTree),
    ([("r", 1, 0, 1.0, None), ("r", 2, 0, 1.0, "r")], InvalidTree),
    ([("r", 1, 0, 1.0, None), ("u", 1, 1, 1.0, "r")], InvalidTree),
])
def test_invalid_trees(nodes, err):
    with pytest.raises(err):
        tree(nodes, 2)


@pytest.mark.parametrize("doc", [
    "{not json", "[]", '{"dimension": 1, "horizon": 1}',
    '{"dimension": 0, "horizon": 1, "nodes": []}',
    '{"dimension": 1, "horizon": 1, "nodes": [{"id": 3, "t": 1, "value": [0], "prob": 1}]}',
    '{"dimension": 1, "horizon": 1, "nodes": [{"id": "a", "t": 1, "value": ["x"], "prob": 1}]}',
])
def test_malformed_documents(doc):
    with pytest.raises(MalformedInput):
        load_process(doc)


def test_roundtrip_and_file(tmp_path):
    P = binomial()
    f = tmp_path / "p.json"
    f.write_text(json.dumps(P.to_document()))
    Q = read_process(f)
    assert Q.leaf_paths == P.leaf_paths
    assert tree_key(Q) == tree_key(P)


def test_node_order_irrelevant():
    nodes = [("r", 1, 0, 1.0, None), ("u", 2, 1, 0.5, "r"), ("d", 2, -1, 0.5, "r")]
    P, Q = tree(nodes, 2), tree(nodes[::-1], 2)
    assert tree_key(P) == tree_key(Q)


def test_disintegrate_out_of_range():
    with pytest.raises(OutOfRange):
        disintegrate(binomial(), 1)
    with pytest.raises(OutOfRange):
        disintegrate(binomial(), 3)


def test_leaf_law_matches_independent_rebuild():
    rng = np.random.default_rng(5)
    for _ in range(20):
        P = random_tree(rng, int(rng.integers(1, 4)), 3, 2)
        L = PathLaw(P)
        np.testing.assert_allclose(P.leaf_probs, L.probs, rtol=0, atol=1e-15)
        np.testing.assert_array_equal(P.leaf_values, np.stack(L.values))
        assert P.leaf_paths == L.ids


def test_martingale_checks():
    assert is_martingale(binomial()).ok
    assert is_martingale(binomial()).worst_violation == 0.0
    bad = tree([("r", 1, 0, 1.0, None), ("u", 2, 1, 0.9, "r"), ("d", 2, -1, 0.1, "r")], 2)
    rep = is_martingale(bad)
    assert not rep.ok
    assert rep.worst_violation == pytest.approx(0.8, abs=1e-12)


def test_trinomial_martingale():
    # recombining trinomial with symmetric increments
    nodes = [("r", 1, 0, 1.0, None)]
    for k, (v, p) in enumerate([(1, 0.25), (0, 0.5), (-1, 0.25)]):
        nodes.append((f"a{k}", 2, v, p, "r"))
        for j, (w, q) in enumerate([(1, 0.25), (0, 0.5), (-1, 0.25)]):
            nodes.append((f"a{k}{j}", 3, v + w, q, f"a{k}"))
    assert is_martingale(tree(nodes, 3)).ok


def test_merge_duplicate_branch():
    P = tree([("r1", 1, 0, 0.5, None), ("r2", 1, 0, 0.5, None),
              ("c1", 2, 1, 1.0, "r1"), ("c2", 2, 1, 1.0, "r2")], 2)
    Q = canonicalize(P)
    assert Q.n_leaves == 1
    assert Q.probs(1).tolist() == [1.0]


def test_equal_values_different_futures_not_merged():
    P = tree([("r1", 1, 0, 0.5, None), ("r2", 1, 0, 0.5, None),
              ("c1", 2, 1, 1.0, "r1"), ("c2", 2, 1, 0.5, "r2"), ("c3", 2, -1, 0.5, "r2")], 2)
    Q = canonicalize(P)
    assert Q.n_nodes(1) == 2 and Q.n_leaves == 3


def test_canonical_binomial_unchanged():
    P = binomial()
    assert tree_key(canonicalize(P)) == tree_key(P)


def test_from_paths_shares_prefixes():
    P = from_paths([[0, 1], [0, -1], [1, 1]], [0.25, 0.25, 0.5])
    assert P.n_nodes(1) == 2 and P.n_leaves == 3
    np.testing.assert_allclose(sorted(P.leaf_probs), [0.25, 0.25, 0.5])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6), T=st.integers(1, 3), d=st.integers(1, 2))
def test_canonicalize_properties(seed, T, d):
    P = random_tree(np.random.default_rng(seed), T, 3, d, low=-1, high=1)
    Q = canonicalize(P)
    assert tree_key(canonicalize(Q)) == tree_key(Q)
    # path law is unchanged
    law = {}
    for vals, p in zip(P.leaf_values, P.leaf_probs):
        key = tuple(np.round(vals.ravel(), 9))
        law[key] = law.get(key, 0.0) + p
    law_q = {}
    for vals, p in zip(Q.leaf_values, Q.leaf_probs):
        key = tuple(np.round(vals.ravel(), 9))
        law_q[key] = law_q.get(key, 0.0) + p
    assert law.keys() == law_q.keys()
    for k in law:
        assert law[k] == pytest.approx(law_q[k], abs=1e-12)
    assert is_martingale(P).ok == is_martingale(Q).ok
