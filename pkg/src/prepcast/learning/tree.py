"""CART regression trees built with numba.

Trees are stored as flat node arrays. Internal nodes send ``x[feature] <=
threshold`` to ``left``; leaves have ``feature == -1`` and carry the mean
training target in ``value``.

Randomness (bootstrap draws, per-node feature order) comes from an inline
SplitMix64 identical to :class:`prepcast.rng.SplitMix64`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..errors import EmptyDatasetError

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S32 = np.uint64(32)

LEAF = -1


@njit(cache=True)
def _next_u64(state):
    state[0] = state[0] + _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _MUL1
    z = (z ^ (z >> _S27)) * _MUL2
    return z ^ (z >> _S31)


@njit(cache=True)
def _below(state, n):
    return np.int64(((_next_u64(state) >> _S32) * np.uint64(n)) >> _S32)


@njit(cache=True)
def _bootstrap(state, n):
    idx = np.empty(n, dtype=np.int64)
    for i in range(n):
        idx[i] = _below(state, n)
    return idx


@njit(cache=True)
def _best_split_on(X, yc, work, start, end, f, min_leaf, xs, ys):
    """Best (score, threshold) for feature ``f``; score -1 when no valid split."""
    m = end - start
    for i in range(m):
        xs[i] = X[work[start + i], f]
    order = np.argsort(xs[:m], kind="mergesort")
    total = 0.0
    for i in range(m):
        ys[i] = yc[work[start + order[i]]]
        total += ys[i]
    best = -1.0
    best_thr = 0.0
    left = 0.0
    for i in range(m - 1):
        left += ys[i]
        n_left = i + 1
        n_right = m - n_left
        if n_left < min_leaf:
            continue
        if n_right < min_leaf:
            break
        lo = xs[order[i]]
        hi = xs[order[i + 1]]
        if not lo < hi:
            continue
        right = total - left
        score = left * left / n_left + right * right / n_right
        if score > best:
            best = score
            thr = 0.5 * (lo + hi)
            if thr >= hi:
                thr = lo
            best_thr = thr
    return best, best_thr


@njit(cache=True)
def _build(X, y, sample, max_depth, min_leaf, n_sub, seed):
    n_features = X.shape[1]
    m_total = sample.shape[0]
    cap = 2 * m_total + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    value = np.zeros(cap, dtype=np.float64)
    n_samples = np.zeros(cap, dtype=np.int64)

    state = np.empty(1, dtype=np.uint64)
    state[0] = seed
    work = sample.copy()
    buf = np.empty(m_total, dtype=np.int64)
    xs = np.empty(m_total, dtype=np.float64)
    ys = np.empty(m_total, dtype=np.float64)
    yc = np.empty(y.shape[0], dtype=np.float64)
    perm = np.empty(n_features, dtype=np.int64)

    # stack of (node, start, end, depth)
    stack = np.empty((cap, 4), dtype=np.int64)
    top = 0
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = m_total
    stack[0, 3] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        m = end - start

        s = 0.0
        y_min = y[work[start]]
        y_max = y_min
        for i in range(start, end):
            v = y[work[i]]
            s += v
            if v < y_min:
                y_min = v
            if v > y_max:
                y_max = v
        mean = s / m
        if y_min == y_max:
            mean = y_min
        elif mean < y_min:
            mean = y_min
        elif mean > y_max:
            mean = y_max
        value[node] = mean
        n_samples[node] = m

        if y_min == y_max or m < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue

        for i in range(start, end):
            yc[work[i]] = y[work[i]] - mean

        for j in range(n_features):
            perm[j] = j
        best_score = -1.0
        best_f = -1
        best_thr = 0.0
        for j in range(n_features):
            if j >= n_sub and best_f >= 0:
                break
            r = j + _below(state, n_features - j)
            tmp = perm[j]
            perm[j] = perm[r]
            perm[r] = tmp
            f = perm[j]
            score, thr = _best_split_on(X, yc, work, start, end, f, min_leaf, xs, ys)
            if score < 0.0:
                continue
            if (score > best_score
                    or (score == best_score and f < best_f)
                    or (score == best_score and f == best_f and thr < best_thr)):
                best_score = score
                best_f = f
                best_thr = thr

        if best_f < 0:
            continue

        # stable partition of work[start:end]
        n_left = 0
        n_right = 0
        for i in range(start, end):
            if X[work[i], best_f] <= best_thr:
                work[start + n_left] = work[i]
                n_left += 1
            else:
                buf[n_right] = work[i]
                n_right += 1
        for i in range(n_right):
            work[start + n_left + i] = buf[i]

        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = left_id
        right[node] = right_id
        # right pushed first so the left subtree is expanded first
        stack[top, 0] = right_id
        stack[top, 1] = start + n_left
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = left_id
        stack[top, 1] = start
        stack[top, 2] = start + n_left
        stack[top, 3] = depth + 1
        top += 1

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes],
            right[:n_nodes], value[:n_nodes], n_samples[:n_nodes])


@njit(cache=True)
def _predict(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0], dtype=np.float64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = 12
    min_leaf: int = 2
    feature_subsample_count: int | None = None  # None: all features


@dataclass(frozen=True, eq=False)
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] != LEAF:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        return _predict(self.feature, self.threshold, self.left, self.right, self.value, X)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=np.float64),
            n_samples=np.asarray(d["n_samples"], dtype=np.int64),
        )

    def check(self) -> None:
        """Raise ValueError unless the arrays form a binary tree rooted at 0."""
        n = self.n_nodes
        arrays = (self.threshold, self.left, self.right, self.value, self.n_samples)
        if n == 0 or any(a.shape != (n,) for a in arrays):
            raise ValueError("node arrays are empty or of unequal length")
        seen = np.zeros(n, dtype=bool)
        stack = [0]
        while stack:
            node = stack.pop()
            if seen[node]:
                raise ValueError(f"node {node} reached twice")
            seen[node] = True
            if self.feature[node] != LEAF:
                for child in (self.left[node], self.right[node]):
                    if not 0 < child < n:
                        raise ValueError(f"node {node} has bad child {child}")
                    stack.append(int(child))
        if not seen.all():
            raise ValueError("unreachable nodes present")


def train_tree(
    X: np.ndarray,
    y: np.ndarray,
    params: TreeParams = TreeParams(),
    seed: int = 0,
    sample: np.ndarray | None = None,
) -> RegressionTree:
    """Grow one CART tree on rows ``sample`` of (X, y) (all rows by default).

    Each node scans a random subset of ``feature_subsample_count`` features
    (continuing through the remaining ones if none of those can split) for
    the midpoint threshold with the largest variance reduction. Ties go to the
    lowest feature index, then the lowest threshold. Growth stops at
    ``max_depth``, when a child would get fewer than ``min_leaf`` rows, or
    when the targets are constant.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyDatasetError("cannot grow a tree on zero rows")
    if y.shape != (X.shape[0],):
        raise ValueError(f"rows/targets mismatch: {X.shape[0]} vs {y.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite feature or target values")
    if sample is None:
        sample = np.arange(X.shape[0], dtype=np.int64)
    sample = np.ascontiguousarray(sample, dtype=np.int64)
    n_sub = params.feature_subsample_count or X.shape[1]
    max_depth = -1 if params.max_depth is None else int(params.max_depth)
    arrays = _build(X, y, sample, max_depth, max(1, int(params.min_leaf)),
                    min(int(n_sub), X.shape[1]), np.uint64(seed))
    return RegressionTree(*(np.array(a) for a in arrays))


def bootstrap_indices(n: int, seed: int) -> tuple[np.ndarray, int]:
    """``n`` draws with replacement from the stream ``seed``; returns (indices, advanced seed)."""
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed)
    idx = _bootstrap(state, n)
    return idx, int(state[0])
