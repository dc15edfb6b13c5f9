"""Native gradient-boosted decision trees.

Trees are grown level-wise with exact greedy splits over presorted feature
orders and second-order leaf weights ``-G / (H + lambda)``. The same builder
serves the logistic classifier being tuned and the squared-error meta-regressor.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from .data import Dataset
from .errors import ContractViolation, DataError, NumericalError
from .space import Configuration

BASE_SCORE_CLAMP = 5.0
MIN_SPLIT_GAIN = 1e-12


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):  # children always have larger ids
            if self.feature[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def leaf_values(self) -> np.ndarray:
        return self.value[self.feature < 0]

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        idx = np.arange(X.shape[0])
        while idx.size:
            f = self.feature[node[idx]]
            inner = f >= 0
            idx, f = idx[inner], f[inner]
            if not idx.size:
                break
            cur = node[idx]
            go_left = X[idx, f] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
        return self.value[node]

    def to_dict(self, i: int = 0) -> dict:
        """Nested-node form used in bundle files."""
        if self.feature[i] < 0:
            return {"leaf": float(self.value[i])}
        return {"feature": int(self.feature[i]), "threshold": float(self.threshold[i]),
                "value": float(self.value[i]),
                "left": self.to_dict(int(self.left[i])), "right": self.to_dict(int(self.right[i]))}

    @classmethod
    def from_dict(cls, doc: dict) -> "Tree":
        feature, threshold, left, right, value = [], [], [], [], []

        def visit(node: dict) -> int:
            i = len(feature)
            feature.append(-1), threshold.append(0.0), left.append(-1), right.append(-1)
            if "leaf" in node:
                value.append(float(node["leaf"]))
                return i
            value.append(float(node.get("value", 0.0)))
            feature[i], threshold[i] = int(node["feature"]), float(node["threshold"])
            left[i] = visit(node["left"])
            right[i] = visit(node["right"])
            return i

        visit(doc)
        return cls(np.array(feature, dtype=np.int64), np.array(threshold, dtype=float),
                   np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                   np.array(value, dtype=float))


def grow_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray, presorted: np.ndarray,
              features: np.ndarray, max_depth: int, reg_lambda: float,
              min_child_weight: float = 1.0) -> Tree:
    """Fit one regression tree to gradient statistics.

    ``presorted`` holds, per column of ``X``, the row order sorting that
    column; only the columns listed in ``features`` are split on. All open
    nodes of a level are handled at once: ``Q[f]`` lists the live rows
    grouped by node and sorted by feature ``f`` inside each group, so
    left-child sums are segment cumulative sums. After a level, a stable
    partition by child label keeps that invariant for the next one.
    """
    n = X.shape[0]
    features = np.sort(np.asarray(features, dtype=np.int64))  # ties resolve to the lowest feature index
    lam = reg_lambda
    feat, thr, lch, rch = [-1], [0.0], [-1], [-1]
    val = [-float(g.sum()) / (float(h.sum()) + lam)]
    F = len(features)
    Xt = np.ascontiguousarray(X[:, features].T)
    Q = np.ascontiguousarray(presorted[:, features].T)
    frow = np.arange(F)[:, None]
    row_label = np.zeros(n, dtype=np.int16)  # label within the current level, -1 once final
    level_nodes = [0]

    for _ in range(max_depth):
        m, nq = len(level_nodes), Q.shape[1]
        if m == 0 or nq < 2:
            break
        rows = Q[0]
        lab = row_label[rows].astype(np.int64)
        counts = np.bincount(lab, minlength=m)
        G = np.bincount(lab, weights=g[rows], minlength=m)
        H = np.bincount(lab, weights=h[rows], minlength=m)
        xq = Xt[frow, Q]
        cg = np.cumsum(g[Q], axis=1)
        ch = np.cumsum(h[Q], axis=1)
        before = np.concatenate([[0], np.cumsum(counts)[:-1]]) - 1  # last position of the previous segment
        baseG = np.where(before >= 0, cg[:, np.maximum(before, 0)], 0.0)
        baseH = np.where(before >= 0, ch[:, np.maximum(before, 0)], 0.0)
        GL = cg - baseG[:, lab]
        HL = ch - baseH[:, lab]
        Gt, Ht = G[lab], H[lab]
        GR, HR = Gt - GL, Ht - HL
        with np.errstate(divide="ignore", invalid="ignore"):  # empty right side with lambda 0; masked below
            gain = GL * GL
            gain /= HL + lam
            right = GR * GR
            right /= HR + lam
            gain += right
            gain -= Gt * Gt / (Ht + lam)
        ok = np.zeros((F, nq), dtype=bool)
        ok[:, :-1] = (lab[:-1] == lab[1:]) & (xq[:, :-1] < xq[:, 1:])
        ok &= HL >= min_child_weight
        ok &= HR >= min_child_weight
        ok &= gain > MIN_SPLIT_GAIN
        gain[~ok] = -np.inf
        col_f = np.argmax(gain, axis=0)
        col_best = gain[col_f, np.arange(nq)]

        # best position per node; ties go to the earliest position, then the lowest feature
        pos = np.lexsort((-col_best, lab))
        first = np.ones(nq, dtype=bool)
        first[1:] = lab[pos][1:] != lab[pos][:-1]
        best_pos = pos[first]

        split_feat = np.full(m, -1, dtype=np.int64)
        split_thr = np.zeros(m)
        left_lab = np.full(m, -1, dtype=np.int64)
        next_level = []
        for k in best_pos:
            if not np.isfinite(col_best[k]):
                continue
            j, c = lab[k], col_f[k]
            node, f, t = level_nodes[j], int(features[c]), float(xq[c, k])
            split_feat[j], split_thr[j] = f, t
            for gs, hs in ((GL[c, k], HL[c, k]), (GR[c, k], HR[c, k])):
                feat.append(-1), thr.append(0.0), lch.append(-1), rch.append(-1)
                val.append(-float(gs) / (float(hs) + lam))
            feat[node], thr[node] = f, t
            lch[node], rch[node] = len(feat) - 2, len(feat) - 1
            left_lab[j] = len(next_level)
            next_level += [len(feat) - 2, len(feat) - 1]

        sf = split_feat[lab]
        splitting = sf >= 0
        new = np.full(nq, -1, dtype=np.int64)
        go_left = X[rows[splitting], sf[splitting]] <= split_thr[lab[splitting]]
        new[splitting] = left_lab[lab[splitting]] + (~go_left)
        row_label[rows] = new
        if not next_level:
            break
        order = np.argsort(row_label[Q], axis=1, kind="stable")
        Q = np.take_along_axis(Q, order, axis=1)[:, int((~splitting).sum()):]
        level_nodes = next_level

    return Tree(np.array(feat, dtype=np.int64), np.array(thr, dtype=float),
                np.array(lch, dtype=np.int64), np.array(rch, dtype=np.int64), np.array(val, dtype=float))


def stream_key(config_id: str) -> int:
    """Stable 64-bit key for a configuration id, independent of Python's hash seed."""
    return int.from_bytes(hashlib.blake2b(str(config_id).encode(), digest_size=8).digest(), "little")


def round_feature_subset(config_id: str, round_index: int, n_cols: int, colsample: float) -> np.ndarray:
    k = min(n_cols, max(1, math.ceil(colsample * n_cols - 1e-12)))
    if k == n_cols:
        return np.arange(n_cols)
    rng = np.random.default_rng([stream_key(config_id), round_index])
    return np.sort(rng.choice(n_cols, size=k, replace=False))


def logistic_loss(labels, probabilities, eps: float = 1e-15) -> float:
    y = np.asarray(labels, dtype=float)
    p = np.asarray(probabilities, dtype=float)
    if y.shape != p.shape:
        raise ContractViolation(f"labels {y.shape} and probabilities {p.shape} differ in length")
    p = np.clip(p, eps, 1 - eps)
    return float(np.mean(-(y * np.log(p) + (1 - y) * np.log1p(-p))))


def _margin(base: float, lr: float, trees: list[Tree], X: np.ndarray) -> np.ndarray:
    m = np.full(X.shape[0], base)
    for t in trees:
        m += lr * t.predict(X)
    return m


@dataclass
class GbdtModel:
    trees: list[Tree]
    base_score: float  # margin (logit) scale
    hyperparams: Configuration
    trained_rounds: int

    @property
    def learning_rate(self) -> float:
        return float(self.hyperparams["learning_rate"])

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return _margin(self.base_score, self.learning_rate, self.trees, X)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return expit(self.decision_function(X))


def _base_score(y: np.ndarray) -> float:
    mean = float(np.mean(y))
    if mean <= 0:
        return -BASE_SCORE_CLAMP
    if mean >= 1:
        return BASE_SCORE_CLAMP
    return float(np.clip(math.log(mean / (1 - mean)), -BASE_SCORE_CLAMP, BASE_SCORE_CLAMP))


class Booster:
    """Incremental logistic boosting for one (configuration, dataset) pair.

    Holds training and validation margins so that training to ``r`` rounds
    after having trained to ``r' < r`` only fits ``r - r'`` new trees.
    """

    def __init__(self, dataset: Dataset, config: Configuration, warm_from: Optional[GbdtModel] = None,
                 min_child_weight: float = 1.0):
        if dataset.train_idx.size == 0:
            raise DataError(f"dataset {dataset.id}: empty train split")
        self.dataset = dataset
        self.config = config
        self.lr = float(config["learning_rate"])
        self.reg_lambda = float(config["lambda"])
        self.max_depth = int(config["max_depth"])
        self.colsample = float(config["colsample_bytree"])
        self.min_child_weight = min_child_weight
        self.tree_fits = 0
        X, Xv = dataset.X_train, dataset.X_val
        if warm_from is not None:
            if dict(warm_from.hyperparams.values) != dict(config.values):
                raise ContractViolation("warm_from model was trained with different hyperparameters")
            self.base_score = warm_from.base_score
            self.trees = list(warm_from.trees)
        else:
            self.base_score = _base_score(dataset.y_train)
            self.trees = []
        self.train_margin = _margin(self.base_score, self.lr, self.trees, X)
        self.val_margin = _margin(self.base_score, self.lr, self.trees, Xv)
        # val_losses[r] = validation loss after r trees; entries before warm start are unknown
        self.val_losses: dict[int, float] = {len(self.trees): self._val_loss()}

    @property
    def rounds(self) -> int:
        return len(self.trees)

    def _val_loss(self) -> float:
        return logistic_loss(self.dataset.y_val, expit(self.val_margin))

    def train_loss(self) -> float:
        return logistic_loss(self.dataset.y_train, expit(self.train_margin))

    def step(self) -> float:
        """Fit one more tree and return the new validation loss."""
        ds = self.dataset
        r = self.rounds
        p = expit(self.train_margin)
        g = p - ds.y_train
        h = p * (1 - p)
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(h))):
            raise NumericalError(f"non-finite gradient at round {r} for config {self.config.id}")
        cols = round_feature_subset(self.config.id, r, ds.n_cols, self.colsample)
        tree = grow_tree(ds.X_train, g, h, ds.presorted(), cols, self.max_depth,
                         self.reg_lambda, self.min_child_weight)
        self.tree_fits += 1
        self.trees.append(tree)
        self.train_margin += self.lr * tree.predict(ds.X_train)
        self.val_margin += self.lr * tree.predict(ds.X_val)
        loss = self._val_loss()
        self.val_losses[r + 1] = loss
        return loss

    def train_to(self, rounds: int) -> None:
        while self.rounds < rounds:
            self.step()

    def model(self) -> GbdtModel:
        return GbdtModel(list(self.trees), self.base_score, self.config, self.rounds)


def gbdt_train(dataset: Dataset, config: Configuration, rounds: int,
               warm_from: Optional[GbdtModel] = None, min_child_weight: float = 1.0) -> GbdtModel:
    if warm_from is not None and rounds < warm_from.trained_rounds:
        raise ContractViolation(f"rounds={rounds} < warm_from.trained_rounds={warm_from.trained_rounds}")
    b = Booster(dataset, config, warm_from, min_child_weight)
    b.train_to(rounds)
    return b.model()


class GbdtRegressor:
    """Squared-error boosting, used as a meta-regressor."""

    kind = "gbdt"

    def __init__(self, n_trees: int = 100, max_depth: int = 3, learning_rate: float = 0.1,
                 reg_lambda: float = 1.0, min_child_weight: float = 1.0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.reg_lambda = reg_lambda
        self.min_child_weight = min_child_weight
        self.base_score = 0.0
        self.trees: list[Tree] = []

    def get_params(self) -> dict:
        return {"n_trees": self.n_trees, "max_depth": self.max_depth, "learning_rate": self.learning_rate,
                "reg_lambda": self.reg_lambda, "min_child_weight": self.min_child_weight}

    def fit(self, X: np.ndarray, y: np.ndarray) -> "GbdtRegressor":
        X = np.ascontiguousarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.base_score = float(np.mean(y))
        presorted = np.argsort(X, axis=0, kind="stable")
        cols = np.arange(X.shape[1])
        pred = np.full(len(y), self.base_score)
        h = np.ones(len(y))
        self.trees = []
        for _ in range(self.n_trees):
            tree = grow_tree(X, pred - y, h, presorted, cols, self.max_depth,
                             self.reg_lambda, self.min_child_weight)
            self.trees.append(tree)
            pred += self.learning_rate * tree.predict(X)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _margin(self.base_score, self.learning_rate, self.trees, np.asarray(X, dtype=float))

    def staged_predict(self, X: np.ndarray, stages) -> dict[int, np.ndarray]:
        """Predictions of the first ``k`` trees for each ``k`` in ``stages``.

        Bit-identical to :meth:`predict` of a model fitted with ``n_trees=k``.
        """
        X = np.asarray(X, dtype=float)
        wanted = set(stages)
        out = {0: np.full(X.shape[0], self.base_score)} if 0 in wanted else {}
        m = np.full(X.shape[0], self.base_score)
        for i, t in enumerate(self.trees, start=1):
            m += self.learning_rate * t.predict(X)
            if i in wanted:
                out[i] = m.copy()
        return out

    def state_dict(self) -> dict:
        return {"base_score": self.base_score, "trees": [t.to_dict() for t in self.trees]}

    def load_state(self, state: dict) -> None:
        self.base_score = float(state["base_score"])
        self.trees = [Tree.from_dict(t) for t in state["trees"]]
