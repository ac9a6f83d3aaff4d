"""Baseline classifiers on flattened chart pixels: kNN over a K-D tree and a
Gini random forest.

Both serialize to a ``CFM1`` container whose node tables carry their own
field layout::

    'CFM1' | kind_len | kind | <kind-specific header> | record tables

A record table is ``schema_len | schema | count | packed records``, where
``schema`` is a comma-separated list of ``name:type`` (types ``i8``, ``u8``,
``f8``, little-endian). Integers outside tables are 64-bit LE unsigned.
"""

from __future__ import annotations

import heapq
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ContractError

log = logging.getLogger(__name__)

DOWN, UP = 0, 1
MODEL_MAGIC = b"CFM1"
_U64 = struct.Struct("<Q")


# --- K-D tree ----------------------------------------------------------------

_KD_NODE = np.dtype([("axis", "<i8"), ("threshold", "<f8"), ("left_max", "<f8"), ("left", "<i8"), ("right", "<i8"), ("start", "<i8"), ("end", "<i8")])


class KdTree:
    """Exact nearest-neighbour index.

    Splits on the axis of largest spread at the median; ``left_max`` and
    ``threshold`` bound the two children on that axis for pruning. Leaves hold
    at most ``leaf_size`` points unless every remaining point is identical.
    """

    def __init__(self, points: np.ndarray, leaf_size: int = 16):
        points = np.asarray(points, dtype=np.float32)
        if points.ndim != 2 or len(points) == 0:
            raise ContractError(f"K-D tree needs a non-empty (n, d) point set, got shape {points.shape}")
        if leaf_size < 1:
            raise ContractError("leaf_size must be >= 1")
        self.points = points
        self.leaf_size = leaf_size
        self._p64 = points.astype(np.float64)
        self.perm = np.arange(len(points))
        nodes: list[tuple] = []
        self._build(0, len(points), nodes)
        self.nodes = np.array(nodes, dtype=_KD_NODE)

    @classmethod
    def _restore(cls, points, leaf_size, nodes, perm) -> "KdTree":
        t = cls.__new__(cls)
        t.points, t.leaf_size, t.nodes, t.perm = points, leaf_size, nodes, perm
        t._p64 = points.astype(np.float64)
        return t

    def _build(self, start: int, end: int, nodes: list) -> int:
        me = len(nodes)
        nodes.append((-1, 0.0, 0.0, -1, -1, start, end))
        if end - start <= self.leaf_size:
            return me
        idx = self.perm[start:end]
        pts = self._p64[idx]
        spread = pts.max(axis=0) - pts.min(axis=0)
        axis = int(np.argmax(spread))
        if spread[axis] == 0:
            return me
        order = np.lexsort((idx, pts[:, axis]))
        self.perm[start:end] = idx[order]
        vals = pts[order, axis]
        mid = (end - start) // 2
        left = self._build(start, start + mid, nodes)
        right = self._build(start + mid, end, nodes)
        nodes[me] = (axis, vals[mid], vals[mid - 1], left, right, start, end)
        return me

    @property
    def is_leaf_root(self) -> bool:
        return self.nodes[0]["axis"] < 0

    def query(self, q: np.ndarray, k: int = 1) -> list[tuple[float, int]]:
        """The k nearest points as (distance, index), nearest first.

        Equal distances are ordered by lower point index.
        """
        n = len(self.points)
        if not 1 <= k <= n:
            raise ContractError(f"k must be in [1, {n}], got {k}")
        q = np.asarray(q, dtype=np.float32).astype(np.float64)
        if q.shape != (self.points.shape[1],):
            raise ContractError(f"query has shape {q.shape}, tree holds {self.points.shape[1]}-d points")
        heap: list[tuple[float, int]] = []  # (-d2, -index): root is the current worst

        def visit(node: int) -> None:
            rec = self.nodes[node]
            if rec["axis"] < 0:
                idx = self.perm[rec["start"] : rec["end"]]
                d2 = ((self._p64[idx] - q) ** 2).sum(axis=1)
                for dist, i in zip(d2.tolist(), idx.tolist()):
                    if len(heap) < k:
                        heapq.heappush(heap, (-dist, -i))
                    elif (dist, i) < (-heap[0][0], -heap[0][1]):
                        heapq.heapreplace(heap, (-dist, -i))
                return
            axis = rec["axis"]
            x = q[axis]
            if x < rec["threshold"]:
                near, far, gap = rec["left"], rec["right"], rec["threshold"] - x
            else:
                near, far, gap = rec["right"], rec["left"], max(0.0, x - rec["left_max"])
            visit(near)
            if len(heap) < k or gap * gap <= -heap[0][0]:
                visit(far)

        visit(0)
        return sorted((math.sqrt(-d), -i) for d, i in heap)


def knn_classify(tree: KdTree, labels, query, k: int = 5) -> tuple[int, list[tuple[float, int]]]:
    """Majority label of the k nearest neighbours; a tied vote is Down."""
    nb = tree.query(query, k)
    up = sum(1 for _, i in nb if labels[i] == UP)
    return (UP if up > k - up else DOWN), nb


class KnnClassifier:
    kind = "knn"

    def __init__(self, k: int = 5, leaf_size: int = 16):
        self.k, self.leaf_size = k, leaf_size

    def fit(self, x: np.ndarray, y: np.ndarray) -> "KnnClassifier":
        self.tree = KdTree(x.reshape(len(x), -1), self.leaf_size)
        self.labels = np.asarray(y, dtype=np.uint8)
        return self

    def predict(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Labels and the fraction of Up neighbours for each row."""
        x = x.reshape(len(x), -1)
        k = min(self.k, len(self.labels))
        labels, frac = np.zeros(len(x), np.int64), np.zeros(len(x))
        for j, q in enumerate(x):
            labels[j], nb = knn_classify(self.tree, self.labels, q, k)
            frac[j] = sum(self.labels[i] for _, i in nb) / k
        return labels, frac


# --- decision trees --------------------------------------------------------

_TREE_NODE = np.dtype([("feature", "<i8"), ("threshold", "<f8"), ("left", "<i8"), ("right", "<i8"), ("down", "<u8"), ("up", "<u8")])
_TIE_TOL = 1e-9


def _best_split(x: np.ndarray, y: np.ndarray, features: np.ndarray):
    """Best Gini split of (x, y) restricted to ``features``.

    Candidate thresholds are observed values; rows with value <= threshold go
    left. Returns (feature, threshold) or None. Ties go to the lowest feature
    index, then the lowest threshold.
    """
    m = len(y)
    xs = x[:, features]
    order = np.argsort(xs, axis=0, kind="stable")
    vals = np.take_along_axis(xs, order, axis=0)
    ups = np.cumsum(y[order], axis=0)[:-1].astype(np.float64)
    n_l = np.arange(1, m, dtype=np.float64)[:, None]
    n_r = m - n_l
    up_l, up_r = ups, y.sum() - ups
    # maximising sum_child(sum_class count^2 / n_child) minimises weighted Gini
    score = (up_l**2 + (n_l - up_l) ** 2) / n_l + (up_r**2 + (n_r - up_r) ** 2) / n_r
    valid = vals[:-1] < vals[1:]
    if not valid.any():
        return None
    score = np.where(valid, score, -np.inf)
    best = score.max()
    rows, cols = np.nonzero(score >= best - _TIE_TOL * max(1.0, abs(best)))
    cand = sorted((int(features[c]), float(vals[r, c])) for r, c in zip(rows, cols))
    return cand[0]


class DecisionTree:
    """CART classifier with Gini impurity, grown until leaves are pure or too small."""

    def __init__(self, max_features: int | None = None, min_samples_split: int = 2, max_depth: int | None = None):
        self.max_features = max_features
        self.min_samples_split = min_samples_split
        self.max_depth = max_depth

    def fit(self, x: np.ndarray, y: np.ndarray, rng: np.random.Generator | None = None) -> "DecisionTree":
        x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
        y = np.asarray(y, dtype=np.int64)
        d = x.shape[1]
        mf = d if self.max_features is None else min(self.max_features, d)
        nodes: list[list] = []
        stack = [(np.arange(len(y)), 0, -1, 0)]  # (rows, depth, parent, side)
        while stack:
            rows, depth, parent, side = stack.pop()
            me = len(nodes)
            up = int(y[rows].sum())
            nodes.append([-1, 0.0, -1, -1, len(rows) - up, up])
            if parent >= 0:
                nodes[parent][2 + side] = me
            if up in (0, len(rows)) or len(rows) < self.min_samples_split or (self.max_depth is not None and depth >= self.max_depth):
                continue
            xr = x[rows]
            varying = xr.max(axis=0) > xr.min(axis=0)
            if mf >= d:
                feats = np.flatnonzero(varying)
            else:
                # like CART implementations, constant features do not use up the draw
                perm = rng.permutation(d)
                feats = np.sort(perm[varying[perm]][:mf])
            if len(feats) == 0:
                continue
            split = _best_split(xr, y[rows], feats)
            if split is None:
                continue
            f, t = split
            nodes[me][0], nodes[me][1] = f, t
            go_left = xr[:, f] <= t
            # right pushed first so the left subtree is numbered first
            stack.append((rows[~go_left], depth + 1, me, 1))
            stack.append((rows[go_left], depth + 1, me, 0))
        self.n_features = d
        self.nodes = np.array([tuple(n) for n in nodes], dtype=_TREE_NODE)
        return self

    def leaf_of(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
        node = np.zeros(len(x), dtype=np.int64)
        feat = self.nodes["feature"]
        while True:
            active = feat[node] >= 0
            if not active.any():
                return node
            a = np.flatnonzero(active)
            n = node[a]
            left = x[a, feat[n]] <= self.nodes["threshold"][n]
            node[a] = np.where(left, self.nodes["left"][n], self.nodes["right"][n])

    def predict(self, x: np.ndarray) -> np.ndarray:
        leaf = self.nodes[self.leaf_of(x)]
        return (leaf["up"] > leaf["down"]).astype(np.int64)


@dataclass
class Forest:
    trees: list[DecisionTree] = field(default_factory=list)
    seeds: list[tuple[int, int]] = field(default_factory=list)  # (bootstrap, feature subset) per tree
    degenerate: bool = False
    kind = "forest"

    def predict(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Majority labels (tied vote is Down) and the fraction of Up votes."""
        votes = np.stack([t.predict(x) for t in self.trees])
        up = votes.mean(axis=0)
        return (up > 0.5).astype(np.int64), up


def forest_fit(
    x: np.ndarray,
    y: np.ndarray,
    n_trees: int = 100,
    seed: int = 0,
    bootstrap: bool = True,
    max_features: int | str | None = "sqrt",
    min_samples_split: int = 2,
    max_depth: int | None = None,
) -> Forest:
    x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
    y = np.asarray(y, dtype=np.int64)
    n, d = x.shape
    if n < 2:
        raise ContractError(f"forest needs >= 2 samples, got {n}")
    mf = max(1, math.isqrt(d)) if max_features == "sqrt" else max_features
    forest = Forest(degenerate=len(np.unique(y)) < 2)
    if forest.degenerate:
        log.warning("forest fitted on a single class; every tree is one leaf")
    master = np.random.default_rng(seed)
    for _ in range(n_trees):
        b_seed, f_seed = (int(s) for s in master.integers(0, 2**63 - 1, size=2))
        rows = np.random.default_rng(b_seed).integers(0, n, size=n) if bootstrap else np.arange(n)
        tree = DecisionTree(mf, min_samples_split, max_depth).fit(x[rows], y[rows], np.random.default_rng(f_seed))
        forest.trees.append(tree)
        forest.seeds.append((b_seed, f_seed))
    return forest


def forest_predict(forest: Forest, sample: np.ndarray) -> tuple[int, float]:
    """Label and the fraction of trees that voted for it."""
    labels, up = forest.predict(np.asarray(sample)[None])
    label = int(labels[0])
    return label, float(up[0] if label == UP else 1 - up[0])


class ForestClassifier:
    kind = "forest"

    def __init__(self, n_trees: int = 100, seed: int = 0):
        self.n_trees, self.seed = n_trees, seed

    def fit(self, x, y) -> "ForestClassifier":
        self.forest = forest_fit(x, y, self.n_trees, self.seed)
        return self

    def predict(self, x):
        return self.forest.predict(x.reshape(len(x), -1))


# --- CFM1 container -------------------------------------------------------


def _table(arr: np.ndarray) -> bytes:
    schema = ",".join(f"{name}:{arr.dtype[name].kind}{arr.dtype[name].itemsize}" for name in arr.dtype.names).encode()
    return _U64.pack(len(schema)) + schema + _U64.pack(len(arr)) + arr.tobytes()


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data, self.pos, self.what = data, 0, what

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise CheckpointError(f"{self.what}: truncated at byte {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    def table(self, expected: np.dtype) -> np.ndarray:
        schema = self.take(self.u64()).decode()
        want = ",".join(f"{n}:{expected[n].kind}{expected[n].itemsize}" for n in expected.names)
        if schema != want:
            raise CheckpointError(f"{self.what}: record schema {schema!r}, expected {want!r}")
        count = self.u64()
        return np.frombuffer(self.take(count * expected.itemsize), dtype=expected).copy()


def encode_model(model) -> bytes:
    kind = model.kind.encode()
    parts = [MODEL_MAGIC, _U64.pack(len(kind)), kind]
    if model.kind == "forest":
        forest = model.forest if isinstance(model, ForestClassifier) else model
        nf = forest.trees[0].n_features if forest.trees else 0
        parts += [_U64.pack(nf), _U64.pack(len(forest.trees)), _U64.pack(int(forest.degenerate))]
        for tree, (bs, fs) in zip(forest.trees, forest.seeds):
            parts += [_U64.pack(bs), _U64.pack(fs), _table(tree.nodes)]
    elif model.kind == "knn":
        t = model.tree
        n, d = t.points.shape
        parts += [_U64.pack(model.k), _U64.pack(t.leaf_size), _U64.pack(n), _U64.pack(d)]
        parts += [t.points.astype("<f4").tobytes(), model.labels.astype(np.uint8).tobytes(), t.perm.astype("<u8").tobytes()]
        parts.append(_table(t.nodes))
    else:
        raise ContractError(f"cannot serialize model kind {model.kind!r}")
    return b"".join(parts)


def decode_model(data: bytes, what: str = "model"):
    r = _Reader(data, what)
    if r.take(4) != MODEL_MAGIC:
        raise CheckpointError(f"{what}: not a CFM1 model file")
    kind = r.take(r.u64()).decode()
    if kind == "forest":
        nf, nt, degenerate = r.u64(), r.u64(), bool(r.u64())
        forest = Forest(degenerate=degenerate)
        for _ in range(nt):
            seeds = (r.u64(), r.u64())
            tree = DecisionTree()
            tree.n_features = nf
            tree.nodes = r.table(_TREE_NODE)
            forest.trees.append(tree)
            forest.seeds.append(seeds)
        model = ForestClassifier(nt)
        model.forest = forest
    elif kind == "knn":
        k, leaf, n, d = (r.u64() for _ in range(4))
        points = np.frombuffer(r.take(4 * n * d), dtype="<f4").reshape(n, d).astype(np.float32)
        labels = np.frombuffer(r.take(n), dtype=np.uint8).copy()
        perm = np.frombuffer(r.take(8 * n), dtype="<u8").astype(np.int64)
        nodes = r.table(_KD_NODE)
        model = KnnClassifier(k, leaf)
        model.tree = KdTree._restore(points, leaf, nodes, perm)
        model.labels = labels
    else:
        raise CheckpointError(f"{what}: unknown model kind {kind!r}")
    if r.pos != len(data):
        raise CheckpointError(f"{what}: trailing bytes")
    return model


def save_model(model, path: str | Path) -> None:
    Path(path).write_bytes(encode_model(model))


def load_model(path: str | Path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from None
    return decode_model(data, str(path))
