"""Cost functions on tuples of leaf paths.

Anything exposing ``leaf_ids`` and ``leaf_values`` (shape ``(L, T, d)``) can
serve as a marginal: scenario trees and candidate supports alike.
"""

from __future__ import annotations

import json
from collections.abc import Callable, Mapping, Sequence
from itertools import combinations

import numpy as np

from .errors import MalformedInput, MissingCostEntry

KINDS = ("lp_sum", "table", "terminal_indicator", "callable", "dense")


class CostFunction:
    """Cost ``c(x^1, ..., x^N)`` evaluated on leaf tuples.

    ``lp_sum`` is ``sum_t |x_t - y_t|_p^p`` for two marginals and the sum of
    that quantity over all pairs for more; ``cap`` truncates the result.
    """

    def __init__(self, kind: str, *, p: int = 1, cap: float | None = None,
                 entries: Mapping[tuple, float] | None = None,
                 fn: Callable | None = None, array: np.ndarray | None = None):
        if kind not in KINDS:
            raise ValueError(f"unknown cost kind {kind!r}")
        if kind == "lp_sum" and p not in (1, 2):
            raise ValueError("lp_sum supports p in {1, 2}")
        self.kind = kind
        self.p = p
        self.cap = cap
        self.entries = None if entries is None else {tuple(k): float(v) for k, v in entries.items()}
        self.fn = fn
        self.array = None if array is None else np.asarray(array, dtype=float)

    @classmethod
    def lp_sum(cls, p: int = 1, cap: float | None = None) -> "CostFunction":
        return cls("lp_sum", p=p, cap=cap)

    @classmethod
    def table(cls, entries: Mapping[tuple, float]) -> "CostFunction":
        return cls("table", entries=entries)

    @classmethod
    def terminal_indicator(cls) -> "CostFunction":
        return cls("terminal_indicator")

    @classmethod
    def from_callable(cls, fn: Callable) -> "CostFunction":
        return cls("callable", fn=fn)

    @classmethod
    def dense(cls, array) -> "CostFunction":
        """Cost given as a full array indexed by leaf positions."""
        return cls("dense", array=array)

    def __repr__(self) -> str:
        extra = f", p={self.p}, cap={self.cap}" if self.kind == "lp_sum" else ""
        return f"CostFunction({self.kind!r}{extra})"

    # ------------------------------------------------------------ evaluation
    def tensor(self, objs: Sequence) -> np.ndarray:
        """Dense array of shape ``(L_1, ..., L_N)``."""
        shape = tuple(len(o.leaf_ids) for o in objs)
        if self.kind == "dense":
            if self.array.shape != shape:
                raise MissingCostEntry(f"dense cost has shape {self.array.shape}, expected {shape}")
            return self.array
        if self.kind == "lp_sum":
            vals = [o.leaf_values for o in objs]
            out = np.zeros(shape)
            n = len(objs)
            for i, j in combinations(range(n), 2):
                diff = _expand(vals[i], i, n) - _expand(vals[j], j, n)
                term = np.abs(diff) if self.p == 1 else diff ** 2
                out = out + term.sum(axis=(-1, -2))
            return out if self.cap is None else np.minimum(out, self.cap)
        if self.kind == "terminal_indicator":
            n = len(objs)
            last = [_expand(o.leaf_values[:, -1, :], i, n) for i, o in enumerate(objs)]
            eq = np.ones(shape, dtype=bool)
            for k in range(1, n):
                eq &= (np.abs(last[k] - last[0]) <= 1e-9).all(axis=-1)
            return eq.astype(float)
        return self.evaluate(objs, np.indices(shape).reshape(len(shape), -1).T).reshape(shape)

    def evaluate(self, objs: Sequence, index_tuples) -> np.ndarray:
        """Cost on selected tuples given as rows of leaf indices."""
        idx = np.asarray(index_tuples, dtype=np.intp).reshape(-1, len(objs))
        if self.kind == "table":
            ids = [o.leaf_ids for o in objs]
            out = np.empty(len(idx))
            for r, row in enumerate(idx):
                key = tuple(ids[i][k] for i, k in enumerate(row))
                try:
                    out[r] = self.entries[key]
                except KeyError:
                    raise MissingCostEntry(f"no cost entry for leaf tuple {key}") from None
            return out
        if self.kind == "callable":
            vals = [o.leaf_values for o in objs]
            return np.array([float(self.fn(*(vals[i][k] for i, k in enumerate(row)))) for row in idx])
        full = self.tensor(objs)
        return full[tuple(idx.T)]


def _expand(arr, axis, n):
    """Reshape ``arr`` (leading axis = leaves) to broadcast along position ``axis`` of ``n``."""
    shape = [1] * n + list(arr.shape[1:])
    shape[axis] = arr.shape[0]
    return arr.reshape(shape)


def cost_tensor(c, objs) -> np.ndarray:
    if isinstance(c, CostFunction):
        return c.tensor(objs)
    arr = np.asarray(c, dtype=float)
    shape = tuple(len(o.leaf_ids) for o in objs)
    if arr.shape != shape:
        raise MissingCostEntry(f"cost array has shape {arr.shape}, expected {shape}")
    return arr


def load_cost(document) -> CostFunction:
    """Parse a cost file: ``{"type": "lp_sum", "p": 1}`` or a table of entries."""
    if isinstance(document, (str, bytes, bytearray)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise MalformedInput(f"cost file is not valid JSON: {exc}") from exc
    if not isinstance(document, Mapping) or "type" not in document:
        raise MalformedInput("cost document must be an object with a 'type'")
    kind = document["type"]
    if kind == "lp_sum":
        p = document.get("p", 1)
        if p not in (1, 2):
            raise MalformedInput("lp_sum requires p in {1, 2}")
        cap = document.get("cap")
        return CostFunction.lp_sum(p, None if cap is None else float(cap))
    if kind == "terminal_indicator":
        return CostFunction.terminal_indicator()
    if kind == "table":
        return CostFunction.table(table_entries(document, "c"))
    raise MalformedInput(f"unknown cost type {kind!r}")


def table_entries(document, value_key: str) -> dict:
    entries = document.get("entries")
    if not isinstance(entries, list):
        raise MalformedInput("table requires a list of 'entries'")
    out = {}
    for k, e in enumerate(entries):
        if not isinstance(e, Mapping) or "paths" not in e or value_key not in e:
            raise MalformedInput(f"entry #{k} needs 'paths' and {value_key!r}")
        paths, val = e["paths"], e[value_key]
        if not isinstance(paths, list) or not all(isinstance(p, str) for p in paths):
            raise MalformedInput(f"entry #{k}: 'paths' must be a list of leaf ids")
        if not isinstance(val, (int, float)) or isinstance(val, bool) or not np.isfinite(val):
            raise MalformedInput(f"entry #{k}: {value_key!r} must be a finite number")
        out[tuple(paths)] = float(val)
    return out
