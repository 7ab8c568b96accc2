"""Finitely supported adapted processes stored as scenario trees.

A :class:`FilteredProcess` keeps its nodes level by level.  Within a level the
nodes are ordered so that the children of every node occupy a contiguous
block of the next level; leaves therefore come out in depth-first order and
every prefix aggregation is a segment sum.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidTree, MalformedInput, OutOfRange, ZeroProbBranch

PROB_TOL = 1e-9
VALUE_TOL = 1e-9


@dataclass(frozen=True)
class Node:
    id: str
    t: int
    value: tuple[float, ...]
    prob: float
    parent: str | None = None


@dataclass(frozen=True)
class TransitionKernel:
    t: int
    kernel: dict[str, dict[str, float]]


@dataclass(frozen=True)
class MartingaleReport:
    ok: bool
    worst_violation: float
    x0: tuple[float, ...]
    witness: str | None = None


class FilteredProcess:
    """Scenario tree of an adapted process with its generated filtration.

    Nodes are information states: two nodes may carry the same value and
    still differ through the law of their future.
    """

    def __init__(self, nodes: Iterable[Node], horizon: int | None = None,
                 dimension: int | None = None):
        nodes = list(nodes)
        if not nodes:
            raise InvalidTree("process has no nodes")
        by_id: dict[str, Node] = {}
        for nd in nodes:
            if nd.id in by_id:
                raise InvalidTree(f"duplicate node id {nd.id!r}")
            by_id[nd.id] = nd
        if horizon is None:
            horizon = max(nd.t for nd in nodes)
        if dimension is None:
            dimension = len(nodes[0].value)
        if horizon < 1 or dimension < 1:
            raise InvalidTree("horizon and dimension must be positive")
        self.horizon = int(horizon)
        self.dimension = int(dimension)

        children: dict[str | None, list[Node]] = {None: []}
        for nd in nodes:
            if not 1 <= nd.t <= horizon:
                raise InvalidTree(f"node {nd.id!r} has time {nd.t} outside 1..{horizon}")
            if len(nd.value) != dimension:
                raise InvalidTree(f"node {nd.id!r} has value of length {len(nd.value)}, expected {dimension}")
            if not all(math.isfinite(v) for v in nd.value):
                raise InvalidTree(f"node {nd.id!r} has a non-finite value")
            if not math.isfinite(nd.prob) or nd.prob < 0 or nd.prob > 1 + PROB_TOL:
                raise InvalidTree(f"node {nd.id!r} has probability {nd.prob} outside [0, 1]")
            if nd.prob == 0:
                raise ZeroProbBranch(f"node {nd.id!r} has zero probability")
            if nd.t == 1:
                if nd.parent is not None:
                    raise InvalidTree(f"time-1 node {nd.id!r} must not have a parent")
            else:
                if nd.parent is None:
                    raise InvalidTree(f"orphan node {nd.id!r} at time {nd.t}")
                par = by_id.get(nd.parent)
                if par is None:
                    raise InvalidTree(f"node {nd.id!r} refers to unknown parent {nd.parent!r}")
                if par.t != nd.t - 1:
                    raise InvalidTree(f"node {nd.id!r} at time {nd.t} has parent at time {par.t}")
            children.setdefault(nd.parent, []).append(nd)

        for key, kids in children.items():
            total = sum(k.prob for k in kids)
            if abs(total - 1.0) > PROB_TOL:
                where = "time-1 nodes" if key is None else f"children of {key!r}"
                raise InvalidTree(f"probabilities of {where} sum to {total!r}")
        for nd in nodes:
            if nd.t < horizon and nd.id not in children:
                raise InvalidTree(f"node {nd.id!r} at time {nd.t} < {horizon} has no children")

        # level-ordered layout with contiguous sibling blocks
        levels: list[list[Node]] = [list(children[None])]
        for _ in range(1, horizon):
            nxt: list[Node] = []
            for nd in levels[-1]:
                nxt.extend(children[nd.id])
            levels.append(nxt)

        self._levels = levels
        self._ids = [[nd.id for nd in lvl] for lvl in levels]
        self._index = [{nid: k for k, nid in enumerate(ids)} for ids in self._ids]
        self._values = [np.array([nd.value for nd in lvl], dtype=float).reshape(len(lvl), dimension)
                        for lvl in levels]
        self._cond = [np.array([nd.prob for nd in lvl], dtype=float) for lvl in levels]
        self._parent = [np.full(len(levels[0]), -1, dtype=np.intp)]
        self._child_ptr = []
        for t in range(1, horizon):
            idx = self._index[t - 1]
            self._parent.append(np.array([idx[nd.parent] for nd in levels[t]], dtype=np.intp))
        for t in range(horizon - 1):
            counts = np.bincount(self._parent[t + 1], minlength=len(levels[t]))
            self._child_ptr.append(np.concatenate([[0], np.cumsum(counts)]).astype(np.intp))
        probs = [self._cond[0].copy()]
        for t in range(1, horizon):
            probs.append(probs[-1][self._parent[t]] * self._cond[t])
        self._probs = probs
        self._anc_cache: dict[tuple[int, int], np.ndarray] = {}

    # ------------------------------------------------------------------ access
    def _check_t(self, t: int) -> int:
        if not 1 <= t <= self.horizon:
            raise OutOfRange(f"time {t} outside 1..{self.horizon}")
        return t - 1

    def n_nodes(self, t: int) -> int:
        return len(self._ids[self._check_t(t)])

    def node_ids(self, t: int) -> list[str]:
        return list(self._ids[self._check_t(t)])

    def node_index(self, t: int, node_id: str) -> int:
        return self._index[self._check_t(t)][node_id]

    def values(self, t: int) -> np.ndarray:
        return self._values[self._check_t(t)]

    def cond_probs(self, t: int) -> np.ndarray:
        return self._cond[self._check_t(t)]

    def probs(self, t: int) -> np.ndarray:
        return self._probs[self._check_t(t)]

    def parents(self, t: int) -> np.ndarray:
        """Index of the parent (at level ``t-1``) of each node at level ``t >= 2``."""
        k = self._check_t(t)
        if k == 0:
            raise OutOfRange("time-1 nodes have no parent")
        return self._parent[k]

    def children(self, t: int, k: int) -> range:
        """Indices (at level ``t+1``) of the children of node ``k`` at level ``t``."""
        lvl = self._check_t(t)
        if lvl == self.horizon - 1:
            return range(0)
        ptr = self._child_ptr[lvl]
        return range(ptr[k], ptr[k + 1])

    def child_ptr(self, t: int) -> np.ndarray:
        return self._child_ptr[self._check_t(t)]

    def ancestors(self, t: int, s: int) -> np.ndarray:
        """Map level-``t`` nodes to their ancestor at level ``s <= t``."""
        key = (t, s)
        if key not in self._anc_cache:
            self._check_t(t)
            self._check_t(s)
            if s > t:
                raise OutOfRange(f"ancestor level {s} is below level {t}")
            anc = np.arange(self.n_nodes(t), dtype=np.intp)
            for u in range(t, s, -1):
                anc = self._parent[u - 1][anc]
            self._anc_cache[key] = anc
        return self._anc_cache[key]

    @property
    def n_leaves(self) -> int:
        return len(self._ids[-1])

    @property
    def leaf_ids(self) -> list[str]:
        return list(self._ids[-1])

    @property
    def leaf_probs(self) -> np.ndarray:
        return self._probs[-1]

    @cached_property
    def leaf_values(self) -> np.ndarray:
        """Array of shape ``(n_leaves, T, d)`` holding every leaf path."""
        T = self.horizon
        out = np.empty((self.n_leaves, T, self.dimension))
        for t in range(1, T + 1):
            out[:, t - 1, :] = self._values[t - 1][self.ancestors(T, t)]
        return out

    @cached_property
    def leaf_paths(self) -> list[tuple[str, ...]]:
        T = self.horizon
        anc = [self.ancestors(T, t) for t in range(1, T + 1)]
        return [tuple(self._ids[t][anc[t][k]] for t in range(T)) for k in range(self.n_leaves)]

    def conditional(self, t: int, s: int) -> np.ndarray:
        """Probability of each level-``t`` node given its level-``s`` ancestor."""
        anc = self.ancestors(t, s)
        return self.probs(t) / self.probs(s)[anc]

    def initial_distribution(self) -> dict[str, float]:
        return dict(zip(self._ids[0], self._cond[0].tolist()))

    def nodes(self) -> list[Node]:
        return [nd for lvl in self._levels for nd in lvl]

    def to_document(self) -> dict:
        return {
            "dimension": self.dimension,
            "horizon": self.horizon,
            "nodes": [
                {"id": nd.id, "t": nd.t, "value": list(nd.value), "prob": nd.prob, "parent": nd.parent}
                for nd in self.nodes()
            ],
        }

    def __repr__(self) -> str:
        return (f"FilteredProcess(T={self.horizon}, d={self.dimension}, "
                f"nodes={sum(map(len, self._ids))}, leaves={self.n_leaves})")


# ---------------------------------------------------------------------- I/O
def load_process(document) -> FilteredProcess:
    """Build a validated process from a process-file document (JSON text or mapping)."""
    if isinstance(document, (str, bytes, bytearray)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise MalformedInput(f"process file is not valid JSON: {exc}") from exc
    if not isinstance(document, Mapping):
        raise MalformedInput("process document must be a JSON object")
    for key in ("dimension", "horizon", "nodes"):
        if key not in document:
            raise MalformedInput(f"process document lacks {key!r}")
    d, T, raw = document["dimension"], document["horizon"], document["nodes"]
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        raise MalformedInput("'dimension' must be a positive integer")
    if not isinstance(T, int) or isinstance(T, bool) or T < 1:
        raise MalformedInput("'horizon' must be a positive integer")
    if not isinstance(raw, list):
        raise MalformedInput("'nodes' must be a list")
    nodes = []
    for k, item in enumerate(raw):
        if not isinstance(item, Mapping):
            raise MalformedInput(f"node #{k} is not an object")
        try:
            nid, t, value, prob, parent = (item["id"], item["t"], item["value"], item["prob"],
                                           item.get("parent"))
        except KeyError as exc:
            raise MalformedInput(f"node #{k} lacks field {exc.args[0]!r}") from None
        if not isinstance(nid, str):
            raise MalformedInput(f"node #{k}: 'id' must be a string")
        if not isinstance(t, int) or isinstance(t, bool):
            raise MalformedInput(f"node {nid!r}: 't' must be an integer")
        if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise MalformedInput(f"node {nid!r}: 'value' must be a list of numbers")
        if not isinstance(prob, (int, float)) or isinstance(prob, bool):
            raise MalformedInput(f"node {nid!r}: 'prob' must be a number")
        if parent is not None and not isinstance(parent, str):
            raise MalformedInput(f"node {nid!r}: 'parent' must be a string or null")
        nodes.append(Node(nid, t, tuple(float(v) for v in value), float(prob), parent))
    return FilteredProcess(nodes, horizon=T, dimension=d)


def read_process(path) -> FilteredProcess:
    with open(path, encoding="utf-8") as fh:
        return load_process(fh.read())


def from_paths(paths, probs, ids=None) -> FilteredProcess:
    """Tree of a path law with the generated (value) filtration.

    Paths sharing a value prefix share the corresponding node.
    """
    paths = [np.asarray(p, dtype=float) for p in paths]
    if not paths:
        raise InvalidTree("no paths given")
    paths = [p.reshape(len(p), -1) for p in paths]
    T, d = paths[0].shape
    probs = np.asarray(probs, dtype=float)
    nodes: dict[tuple, list] = {}
    order: list[tuple] = []
    for p, w in zip(paths, probs):
        for t in range(1, T + 1):
            key = tuple(_qkey(v) for v in p[:t].ravel())
            if key not in nodes:
                nodes[key] = [p[t - 1], 0.0, t]
                order.append(key)
            nodes[key][1] += w
    names = {key: f"n{k}" for k, key in enumerate(order)}
    if ids is not None:
        for p, leaf_id in zip(paths, ids):
            names[tuple(_qkey(v) for v in p.ravel())] = leaf_id
    out = []
    for key in order:
        value, mass, t = nodes[key]
        parent = None if t == 1 else key[: (t - 1) * d]
        pmass = 1.0 if parent is None else nodes[parent][1]
        out.append(Node(names[key], t, tuple(float(v) for v in value), mass / pmass,
                        None if parent is None else names[parent]))
    return FilteredProcess(out, horizon=T, dimension=d)


# ------------------------------------------------------------- operations
def disintegrate(P: FilteredProcess, t: int) -> TransitionKernel:
    if not 2 <= t <= P.horizon:
        raise OutOfRange(f"kernels exist for t in 2..{P.horizon}, got {t}")
    ids_prev, ids = P.node_ids(t - 1), P.node_ids(t)
    cond = P.cond_probs(t)
    kernel = {}
    for k, pid in enumerate(ids_prev):
        kernel[pid] = {ids[j]: float(cond[j]) for j in P.children(t - 1, k)}
    return TransitionKernel(t, kernel)


def _qkey(v: float) -> int:
    return int(round(v / VALUE_TOL))


def _subtree_key(P: FilteredProcess, t: int, k: int, memo: dict) -> tuple:
    """Structural key of the canonical subtree rooted at node ``k`` of level ``t``."""
    if (t, k) in memo:
        return memo[(t, k)][0]
    groups = _merged_children(P, t, k, memo)
    vkey = tuple(_qkey(v) for v in P.values(t)[k])
    key = (vkey, tuple((ckey, _qkey(mass)) for ckey, mass, _ in groups))
    memo[(t, k)] = (key, groups)
    return key


def _merged_children(P: FilteredProcess, t: int | None, k: int, memo: dict):
    """Children of a node grouped by structural key, sorted canonically.

    ``t=None`` stands for the virtual root whose children are the time-1 nodes.
    Returns a list of ``(key, total conditional mass, [member indices])``.
    """
    if t is None:
        level, members = 1, range(P.n_nodes(1))
    elif t == P.horizon:
        return []
    else:
        level, members = t + 1, P.children(t, k)
    cond = P.cond_probs(level)
    ids = P.node_ids(level)
    bucket: dict[tuple, list] = {}
    for j in members:
        ckey = _subtree_key(P, level, j, memo)
        entry = bucket.setdefault(ckey, [0.0, []])
        entry[0] += float(cond[j])
        entry[1].append(j)
    groups = [(ckey, mass, sorted(js, key=lambda j: ids[j])) for ckey, (mass, js) in bucket.items()]
    groups.sort(key=lambda g: (g[0][0], hash(g[0]), g[0]))
    return groups


def canonicalize(P: FilteredProcess) -> FilteredProcess:
    """Merge sibling nodes whose value and (canonical) future law coincide.

    Works backward from the leaves; the kept node of a merged group is the
    one with the smallest id, so the result is a fixed point.
    """
    memo: dict = {}
    out: list[Node] = []

    def emit(level: int, groups, parent_id):
        for _, mass, members in groups:
            j = members[0]
            nid = P.node_ids(level)[j]
            out.append(Node(nid, level, tuple(float(v) for v in P.values(level)[j]), mass, parent_id))
            if level < P.horizon:
                # members share a structural key, so their merged children agree
                _subtree_key(P, level, j, memo)
                emit(level + 1, memo[(level, j)][1], nid)

    emit(1, _merged_children(P, None, 0, memo), None)
    return FilteredProcess(out, horizon=P.horizon, dimension=P.dimension)


def tree_key(P: FilteredProcess) -> tuple:
    """Node-id-insensitive structural key of the canonical form of ``P``."""
    memo: dict = {}
    return tuple((ckey, _qkey(mass)) for ckey, mass, _ in _merged_children(P, None, 0, memo))


def is_martingale(P: FilteredProcess, tol: float = PROB_TOL) -> MartingaleReport:
    x0 = P.probs(1) @ P.values(1)
    worst, witness = 0.0, None
    for t in range(1, P.horizon):
        vals, cvals, cond = P.values(t), P.values(t + 1), P.cond_probs(t + 1)
        ptr = P.child_ptr(t)
        means = np.add.reduceat(cond[:, None] * cvals, ptr[:-1], axis=0)
        dev = np.abs(means - vals).max(axis=1)
        k = int(np.argmax(dev))
        if dev[k] > worst:
            worst, witness = float(dev[k]), P.node_ids(t)[k]
    return MartingaleReport(worst <= tol, worst, tuple(float(v) for v in x0), witness)
