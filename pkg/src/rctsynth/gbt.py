"""Gradient-boosted trees on binned features, logistic loss, from scratch.

Missing values are routed by a learned default direction per split: both
assignments are scored during training and the better one is kept, so tables
with NaN cells feed in directly with no imputation step.
"""

from __future__ import annotations

import numpy as np

_MISSING_BIN = 255


def _bin_features(X: np.ndarray, n_bins: int):
    """Quantile-bin each column; returns (codes, per-column thresholds)."""
    n, p = X.shape
    codes = np.full((n, p), _MISSING_BIN, dtype=np.uint8)
    thresholds = []
    for j in range(p):
        col = X[:, j]
        ok = ~np.isnan(col)
        vals = col[ok]
        if len(vals) == 0:
            thresholds.append(np.empty(0))
            continue
        qs = np.quantile(vals, np.linspace(0, 1, n_bins + 1)[1:-1])
        cuts = np.unique(qs)
        codes[ok, j] = np.searchsorted(cuts, vals, side="left").astype(np.uint8)
        thresholds.append(cuts)
    return codes, thresholds


class GradientBoostedTrees:
    """Depth-limited boosted ensemble with histogram splits.

    Trees are stored flat: node k has children 2k+1 / 2k+2; leaves carry the
    Newton step value for their partition.
    """

    def __init__(self, n_trees: int = 100, depth: int = 3, learning_rate: float = 0.1,
                 n_bins: int = 64, l2: float = 1.0, min_child_hessian: float = 1e-3):
        self.n_trees = n_trees
        self.depth = depth
        self.learning_rate = learning_rate
        self.n_bins = n_bins
        self.l2 = l2
        self.min_child_hessian = min_child_hessian
        self.trees_: list[dict] = []
        self.base_score_ = 0.0
        self.thresholds_: list[np.ndarray] = []

    def fit(self, X: np.ndarray, y: np.ndarray) -> "GradientBoostedTrees":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        n, p = X.shape
        codes, self.thresholds_ = _bin_features(X, self.n_bins)
        ybar = np.clip(y.mean(), 1e-6, 1 - 1e-6)
        self.base_score_ = float(np.log(ybar / (1 - ybar)))
        margin = np.full(n, self.base_score_)
        self.trees_ = []
        n_nodes = 2 ** (self.depth + 1) - 1
        n_internal = 2**self.depth - 1
        for _ in range(self.n_trees):
            prob = 1.0 / (1.0 + np.exp(-margin))
            g = prob - y
            h = np.maximum(prob * (1.0 - prob), 1e-12)
            tree = self._grow(codes, g, h, n_nodes, n_internal)
            self.trees_.append(tree)
            margin += self._tree_margin(tree, codes)
        return self

    def _grow(self, codes, g, h, n_nodes, n_internal):
        n, p = codes.shape
        node = np.zeros(n, dtype=np.int64)
        feat = np.full(n_nodes, -1, dtype=np.int64)
        cut = np.zeros(n_nodes, dtype=np.int64)
        miss_left = np.zeros(n_nodes, dtype=bool)
        value = np.zeros(n_nodes)
        lam = self.l2
        for level in range(self.depth):
            first = 2**level - 1
            count = 2**level
            active = node >= first  # rows at nodes that stopped splitting drop out
            node_a = node[active] - first
            g_a, h_a = g[active], h[active]
            best_gain = np.zeros(count)
            best = [None] * count
            g_tot = np.bincount(node_a, weights=g_a, minlength=count)
            h_tot = np.bincount(node_a, weights=h_a, minlength=count)
            parent_score = g_tot**2 / (h_tot + lam)
            for j in range(p):
                key = node_a * (self.n_bins + 1) + np.minimum(codes[active, j], self.n_bins)
                gh = np.bincount(key, weights=g_a, minlength=count * (self.n_bins + 1))
                hh = np.bincount(key, weights=h_a, minlength=count * (self.n_bins + 1))
                gh = gh.reshape(count, self.n_bins + 1)
                hh = hh.reshape(count, self.n_bins + 1)
                g_miss, h_miss = gh[:, -1], hh[:, -1]
                gl = np.cumsum(gh[:, :-1], axis=1)[:, :-1]  # candidate: bins <= b go left
                hl = np.cumsum(hh[:, :-1], axis=1)[:, :-1]
                g_all = g_tot[:, None]
                h_all = h_tot[:, None]
                for m_left in (False, True):
                    glm = gl + (g_miss[:, None] if m_left else 0.0)
                    hlm = hl + (h_miss[:, None] if m_left else 0.0)
                    grm = g_all - glm
                    hrm = h_all - hlm
                    ok = (hlm > self.min_child_hessian) & (hrm > self.min_child_hessian)
                    gain = np.where(
                        ok,
                        glm**2 / (hlm + lam) + grm**2 / (hrm + lam) - parent_score[:, None],
                        -np.inf,
                    )
                    b = np.argmax(gain, axis=1)
                    gb = gain[np.arange(count), b]
                    for q in range(count):
                        if gb[q] > best_gain[q] + 1e-12:
                            best_gain[q] = gb[q]
                            best[q] = (j, int(b[q]), m_left)
            routed = node.copy()
            for q in range(count):
                idx = first + q
                if best[q] is None:
                    value[idx] = -g_tot[q] / (h_tot[q] + lam)
                    continue
                j, b, m_left = best[q]
                feat[idx] = j
                cut[idx] = b
                miss_left[idx] = m_left
                rows = node == idx
                cj = codes[rows, j]
                go_left = np.where(cj == _MISSING_BIN, m_left, cj <= b)
                routed[rows] = np.where(go_left, 2 * idx + 1, 2 * idx + 2)
            node = routed
        # leaf level; rows stuck at unsplit internal nodes keep that node's value
        first = 2**self.depth - 1
        at_leaf = node >= first
        g_leaf = np.bincount(node[at_leaf] - first, weights=g[at_leaf], minlength=2**self.depth)
        h_leaf = np.bincount(node[at_leaf] - first, weights=h[at_leaf], minlength=2**self.depth)
        value[first:] = -g_leaf / (h_leaf + lam)
        return {"feat": feat, "cut": cut, "miss_left": miss_left, "value": value}

    def _tree_margin(self, tree, codes):
        n = codes.shape[0]
        node = np.zeros(n, dtype=np.int64)
        feat, cut, miss_left = tree["feat"], tree["cut"], tree["miss_left"]
        for _ in range(self.depth):
            j = feat[node]
            splittable = j >= 0
            cj = codes[np.arange(n), np.maximum(j, 0)]
            left = np.where(cj == _MISSING_BIN, miss_left[node], cj <= cut[node])
            nxt = np.where(left, 2 * node + 1, 2 * node + 2)
            node = np.where(splittable, nxt, node)
        return self.learning_rate * tree["value"][node]

    def _codes_for(self, X: np.ndarray) -> np.ndarray:
        n, p = X.shape
        codes = np.full((n, p), _MISSING_BIN, dtype=np.uint8)
        for j in range(p):
            col = X[:, j]
            ok = ~np.isnan(col)
            if len(self.thresholds_[j]):
                codes[ok, j] = np.searchsorted(self.thresholds_[j], col[ok], side="left").astype(np.uint8)
            else:
                codes[ok, j] = 0
        return codes

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        codes = self._codes_for(np.asarray(X, dtype=np.float64))
        margin = np.full(X.shape[0], self.base_score_)
        for tree in self.trees_:
            margin += self._tree_margin(tree, codes)
        return margin

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.decision_function(X)))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision_function(X) > 0.0).astype(np.float64)
